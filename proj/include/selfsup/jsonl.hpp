#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfsup/evalgen.hpp"
#include "selfsup/packer.hpp"
#include "selfsup/taskgen.hpp"

namespace selfsup {

inline nlohmann::json to_json(const Example& ex) {
    return {{"task", task_name(ex.task)},
            {"input_text", ex.input_text},
            {"output_text", ex.output_text},
            {"meta", ex.meta}};
}

inline std::optional<Example> example_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("task") || !j.contains("input_text") ||
        !j.contains("output_text"))
        return std::nullopt;
    auto task = task_from_name(j["task"].get<std::string>());
    if (!task) return std::nullopt;
    Example ex;
    ex.task = *task;
    ex.input_text = j["input_text"].get<std::string>();
    ex.output_text = j["output_text"].get<std::string>();
    ex.meta = j.value("meta", nlohmann::json::object());
    return ex;
}

inline nlohmann::json to_json(const PackedInstance& inst) {
    auto spans = [](const std::vector<std::pair<std::size_t, std::size_t>>& v) {
        auto arr = nlohmann::json::array();
        for (const auto& [s, e] : v) arr.push_back({s, e});
        return arr;
    };
    return {{"task", task_name(inst.task)},
            {"instance_id", inst.instance_id},
            {"text", inst.text},
            {"example_boundaries", spans(inst.example_boundaries)},
            {"loss_spans", spans(inst.loss_spans)},
            {"meta", inst.meta}};
}

inline std::optional<PackedInstance> instance_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("task") || !j.contains("instance_id") ||
        !j.contains("text") || !j.contains("example_boundaries") || !j.contains("loss_spans"))
        return std::nullopt;
    auto task = task_from_name(j["task"].get<std::string>());
    if (!task) return std::nullopt;
    PackedInstance inst;
    inst.task = *task;
    inst.instance_id = j["instance_id"].get<std::string>();
    inst.text = j["text"].get<std::string>();
    auto spans = [](const nlohmann::json& arr,
                    std::vector<std::pair<std::size_t, std::size_t>>& out) {
        for (const auto& p : arr) out.emplace_back(p.at(0).get<std::size_t>(),
                                                   p.at(1).get<std::size_t>());
    };
    spans(j["example_boundaries"], inst.example_boundaries);
    spans(j["loss_spans"], inst.loss_spans);
    inst.meta = j.value("meta", nlohmann::json::object());
    return inst;
}

inline nlohmann::json to_json(const EvalInstance& inst) {
    return {{"task_id", inst.task},
            {"record_id", inst.record_id},
            {"candidate_label", inst.candidate_label},
            {"text", inst.text},
            {"score_span", {inst.score_span.first, inst.score_span.second}},
            {"demo_ids", inst.demo_ids}};
}

// {"task": "...", "id": "...", "fields": {...}, "gold": "..."}
inline std::optional<EvalRecord> eval_record_from_json(const nlohmann::json& j,
                                                       std::size_t line_no) {
    if (!j.is_object() || !j.contains("task") || !j.contains("fields") ||
        !j["fields"].is_object())
        return std::nullopt;
    EvalRecord rec;
    rec.task = j["task"].get<std::string>();
    rec.record_id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                            : std::to_string(line_no);
    for (const auto& [k, v] : j["fields"].items()) {
        if (!v.is_string()) return std::nullopt;
        rec.fields[k] = v.get<std::string>();
    }
    rec.gold = j.value("gold", "");
    return rec;
}

}  // namespace selfsup
