#pragma once

#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfsup/jsonl.hpp"
#include "selfsup/packer.hpp"
#include "selfsup/pretrain_pairs.hpp"
#include "selfsup/utf8.hpp"

namespace selfsup {

namespace detail {

inline bool spans_sorted_disjoint(const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].second < spans[i].first) return false;
        if (i > 0 && spans[i].first < spans[i - 1].second) return false;
    }
    return true;
}

}  // namespace detail

// Re-checks every invariant decodable from an output line. Returns the
// problems found (empty = valid).
inline std::vector<std::string> check_instance(const PackedInstance& inst) {
    std::vector<std::string> problems;
    auto fail = [&](const std::string& what) { problems.push_back(what); };

    const std::size_t text_cp = codepoint_length(inst.text);
    const auto& bounds = inst.example_boundaries;
    if (bounds.empty()) fail("no examples");
    if (bounds.size() != inst.loss_spans.size()) fail("boundary/loss span count mismatch");
    if (!detail::spans_sorted_disjoint(bounds)) fail("example boundaries overlap");
    if (!detail::spans_sorted_disjoint(inst.loss_spans)) fail("loss spans overlap");
    if (!bounds.empty()) {
        if (bounds.front().first != 0) fail("first example does not start at 0");
        if (bounds.back().second != text_cp) fail("examples do not cover the text");
        for (std::size_t i = 1; i < bounds.size(); ++i)
            if (bounds[i].first != bounds[i - 1].second) fail("gap between examples");
    }

    if (inst.instance_id != instance_content_id(inst.task, inst.text))
        fail("instance_id does not match content");

    const nlohmann::json& meta = inst.meta;
    if (meta.value("length_fn", "whitespace") == std::string("whitespace") &&
        meta.contains("max_len")) {
        if (whitespace_token_count(inst.text) > meta["max_len"].get<std::size_t>())
            fail("text exceeds max_len");
    }

    const bool has_examples_meta =
        meta.contains("examples") && meta["examples"].is_array() &&
        meta["examples"].size() == bounds.size();
    for (std::size_t i = 0; i < bounds.size() && i < inst.loss_spans.size(); ++i) {
        const auto region = codepoint_slice(inst.text, bounds[i].first, bounds[i].second);
        auto parsed = parse_rendered(region);
        if (!parsed) {
            fail("example " + std::to_string(i) + " is not in Input:/Output: form");
            continue;
        }
        const auto& [input, output] = *parsed;
        const std::size_t expect_start =
            bounds[i].first + 7 + codepoint_length(input) + 9;
        if (inst.loss_spans[i].first != expect_start ||
            inst.loss_spans[i].second != expect_start + codepoint_length(output)) {
            fail("loss span " + std::to_string(i) + " does not cover the output text");
            continue;
        }
        if (output.empty()) fail("example " + std::to_string(i) + " has empty output");
        if (has_examples_meta) {
            const auto& ex_meta = meta["examples"][i];
            if (ex_meta.contains("labels")) {
                bool member = false;
                for (const auto& label : ex_meta["labels"])
                    if (label.get<std::string>() == output) member = true;
                if (!member)
                    fail("example " + std::to_string(i) + " output not in its label set");
            }
            // corrupted runs legitimately break the class->label bijection
            if (!meta.value("corrupted", false) && meta.contains("assignment") &&
                ex_meta.contains("class")) {
                const auto& mapping = meta["assignment"];
                const std::string cls = ex_meta["class"].get<std::string>();
                if (mapping.contains(cls) && mapping[cls].get<std::string>() != output)
                    fail("example " + std::to_string(i) + " label contradicts the assignment");
            }
            if (!meta.value("corrupted", false) && ex_meta.contains("positive") &&
                ex_meta.contains("labels") && ex_meta["labels"].size() == 2) {
                const std::string expected =
                    ex_meta["labels"][ex_meta["positive"].get<bool>() ? 0 : 1]
                        .get<std::string>();
                if (output != expected)
                    fail("example " + std::to_string(i) + " label contradicts its polarity");
            }
        }
    }
    return problems;
}

inline std::vector<std::string> check_example(const Example& ex) {
    std::vector<std::string> problems;
    auto fail = [&](const std::string& what) { problems.push_back(what); };
    if (ex.output_text.empty()) fail("empty output_text");
    const nlohmann::json& meta = ex.meta;

    if (ex.task == Task::SOP || ex.task == Task::NSP) {
        if (ex.output_text != "positive" && ex.output_text != "negative")
            fail("pair label must be positive/negative");
        if (ex.input_text.rfind("[CLS] ", 0) != 0 || ex.input_text.find(" [SEP] ") == std::string::npos)
            fail("pair input lacks [CLS]/[SEP] markers");
        if (meta.contains("max_len") && meta.contains("seg_a_len") && meta.contains("seg_b_len")) {
            if (meta["seg_a_len"].get<std::size_t>() + meta["seg_b_len"].get<std::size_t>() >
                meta["max_len"].get<std::size_t>())
                fail("segment pair exceeds max_len");
        }
        if (ex.task == Task::NSP && meta.value("label", "") == "negative" &&
            meta.value("doc_a", "") == meta.value("doc_b", "!"))
            fail("NSP negative must pair different documents");
    } else if (ex.task == Task::MLM) {
        if (!meta.contains("mask_spans") || !meta.contains("total_tokens") ||
            !meta.contains("seg_boundary")) {
            fail("MLM record lacks mask plan meta");
            return problems;
        }
        const std::size_t total = meta["total_tokens"].get<std::size_t>();
        const std::size_t boundary = meta["seg_boundary"].get<std::size_t>();
        const std::size_t max_n = meta.value("max_n", std::size_t{3});
        const double budget = meta.value("mask_budget", 0.15);
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (const auto& s : meta["mask_spans"])
            spans.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
        std::size_t masked = 0;
        std::size_t prev_end = 0;
        bool first = true;
        for (const auto& [start, len] : spans) {
            if (len == 0 || len > max_n) fail("mask span length out of range");
            if (start + len > total) fail("mask span out of bounds");
            if (!first && start < prev_end) fail("mask spans overlap");
            if (start < boundary && start + len > boundary)
                fail("mask span crosses the segment boundary");
            prev_end = start + len;
            first = false;
            masked += len;
        }
        const auto cap = static_cast<std::size_t>(
            std::ceil(budget * static_cast<double>(total)));
        if (masked > cap) fail("mask plan exceeds budget");
        if (spans.empty()) fail("MLM record with empty mask plan");
    }
    return problems;
}

struct ValidationResult {
    std::size_t lines = 0;
    std::size_t malformed = 0;
    std::size_t violations = 0;

    bool ok() const { return violations == 0 && malformed == 0; }
};

// Exit-code contract: returns true only when every decodable invariant holds.
inline ValidationResult validate_files(const std::vector<std::string>& paths,
                                       std::ostream& diag) {
    ValidationResult result;
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) {
            diag << path << ": cannot open\n";
            ++result.violations;
            continue;
        }
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            ++result.lines;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                diag << path << ":" << line_no << ": malformed JSON\n";
                ++result.malformed;
                continue;
            }
            std::vector<std::string> problems;
            std::string id;
            try {
                if (j.contains("instance_id")) {
                    auto inst = instance_from_json(j);
                    if (!inst) {
                        problems.push_back("not a valid instance record");
                    } else {
                        id = inst->instance_id;
                        problems = check_instance(*inst);
                    }
                } else if (j.contains("input_text")) {
                    auto ex = example_from_json(j);
                    if (!ex)
                        problems.push_back("not a valid example record");
                    else
                        problems = check_example(*ex);
                } else {
                    problems.push_back("unknown record schema");
                }
            } catch (const nlohmann::json::exception& e) {
                problems.push_back(std::string("record shape error: ") + e.what());
            }
            for (const auto& p : problems) {
                diag << path << ":" << line_no;
                if (!id.empty()) diag << " instance " << id;
                diag << ": " << p << "\n";
            }
            result.violations += problems.size();
        }
    }
    return result;
}

// Read-only file stats; malformed lines are counted and skipped.
inline nlohmann::json stats_files(const std::vector<std::string>& paths) {
    InstanceStatsReport instances;
    std::map<std::string, std::size_t> example_records;
    std::size_t malformed = 0;
    const LengthFn length_fn = default_length_fn();
    for (const auto& path : paths) {
        std::ifstream in(path);
        if (!in) {
            ++malformed;
            continue;
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                ++malformed;
                continue;
            }
            try {
                if (j.contains("instance_id")) {
                    auto inst = instance_from_json(j);
                    if (!inst) {
                        ++malformed;
                        continue;
                    }
                    instances.observe(*inst, length_fn);
                } else if (j.contains("input_text")) {
                    auto ex = example_from_json(j);
                    if (!ex) {
                        ++malformed;
                        continue;
                    }
                    ++example_records[std::string(task_name(ex->task))];
                } else {
                    ++malformed;
                }
            } catch (const nlohmann::json::exception&) {
                ++malformed;
            }
        }
    }
    instances.finalize();
    nlohmann::json out = instances.to_json();
    out["example_records_per_task"] = example_records;
    out["malformed_lines"] = malformed;
    return out;
}

}  // namespace selfsup
