#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selfsup/rng.hpp"
#include "selfsup/utf8.hpp"

namespace selfsup {

// One downstream record to be rendered for perplexity ranking.
struct EvalRecord {
    std::string task;
    std::string record_id;
    std::map<std::string, std::string> fields;
    std::string gold;  // a candidate label
};

// Declarative template: ${Field} placeholders plus exactly one ${Candidate}.
// Candidates are either a fixed label list or values drawn from record
// fields (e.g. COPA's two choices).
struct EvalTemplate {
    std::string task;
    std::string pattern;
    std::vector<std::string> candidate_labels;  // fixed labels, or
    std::vector<std::string> candidate_fields;  // field names holding the completions
    std::vector<std::string> required_fields;

    bool candidates_from_fields() const { return !candidate_fields.empty(); }
};

// The built-in templates. Their renderings are pinned byte-for-byte by
// golden files under tests/golden/.
inline const std::vector<EvalTemplate>& builtin_eval_templates() {
    static const std::vector<EvalTemplate> templates = {
        {"BoolQ",
         "Input: ${Context} question: ${Question} answer: True\nOutput: ${Candidate}",
         {"True", "False"},
         {},
         {"Context", "Question"}},
        {"RTE",
         "Input: ${Context} question: ${Question} answer: True\nOutput: ${Candidate}",
         {"True", "False"},
         {},
         {"Context", "Question"}},
        {"COPA",
         "Input: ${Context}\nOutput:${Candidate}",
         {},
         {"choice1", "choice2"},
         {"Context", "choice1", "choice2"}},
        {"CB",
         "Input: ${Context} question: ${Question} true, false, or neither?\nOutput: ${Candidate}",
         {"true", "false", "neither"},
         {},
         {"Context", "Question"}},
        {"MultiRC",
         "Input: ${Context} Question: ${Question} Answer: ${Answer}\nOutput: ${Candidate}",
         {"True", "False"},
         {},
         {"Context", "Question", "Answer"}},
    };
    return templates;
}

inline const EvalTemplate* find_builtin_template(std::string_view task) {
    for (const auto& t : builtin_eval_templates())
        if (t.task == task) return &t;
    return nullptr;
}

// {"templates": [{"task": ..., "pattern": ..., "candidates": [...]} or
// {"task": ..., "pattern": ..., "candidate_fields": [...]}]}
inline std::vector<EvalTemplate> parse_templates(const nlohmann::json& doc) {
    std::vector<EvalTemplate> out;
    if (!doc.is_object() || !doc.contains("templates") || !doc["templates"].is_array())
        throw std::runtime_error("template file must contain a \"templates\" array");
    for (const auto& t : doc["templates"]) {
        EvalTemplate tpl;
        tpl.task = t.at("task").get<std::string>();
        tpl.pattern = t.at("pattern").get<std::string>();
        if (t.contains("candidates"))
            tpl.candidate_labels = t["candidates"].get<std::vector<std::string>>();
        if (t.contains("candidate_fields"))
            tpl.candidate_fields = t["candidate_fields"].get<std::vector<std::string>>();
        if (tpl.candidate_labels.empty() == tpl.candidate_fields.empty())
            throw std::runtime_error("template " + tpl.task +
                                     ": exactly one of candidates/candidate_fields required");
        if (tpl.pattern.find("${Candidate}") == std::string::npos)
            throw std::runtime_error("template " + tpl.task + ": pattern lacks ${Candidate}");
        out.push_back(std::move(tpl));
    }
    return out;
}

struct CandidateRendering {
    std::string candidate_label;
    std::string completion;
    std::string text;
    std::pair<std::size_t, std::size_t> score_span;  // codepoint offsets of the completion
};

namespace detail {

// Substitutes ${...} placeholders; the candidate span is tracked in
// codepoints while substituting.
inline std::string render_pattern(const EvalTemplate& tpl, const EvalRecord& record,
                                  const std::string& completion,
                                  std::pair<std::size_t, std::size_t>* span) {
    std::string out;
    std::size_t cp = 0;
    std::size_t i = 0;
    const std::string& p = tpl.pattern;
    while (i < p.size()) {
        if (p[i] == '$' && i + 1 < p.size() && p[i + 1] == '{') {
            const std::size_t close = p.find('}', i + 2);
            if (close == std::string::npos) throw std::runtime_error("unterminated placeholder");
            const std::string name = p.substr(i + 2, close - i - 2);
            std::string value;
            if (name == "Candidate") {
                value = completion;
                if (span) {
                    span->first = cp;
                    span->second = cp + codepoint_length(value);
                }
            } else {
                auto it = record.fields.find(name);
                if (it == record.fields.end())
                    throw std::runtime_error("record " + record.record_id + " lacks field " + name);
                value = it->second;
            }
            out += value;
            cp += codepoint_length(value);
            i = close + 1;
        } else {
            out.push_back(p[i]);
            if ((static_cast<unsigned char>(p[i]) & 0xc0) != 0x80) ++cp;
            ++i;
        }
    }
    return out;
}

}  // namespace detail

// One rendering per candidate; all renderings are identical outside the
// scored region.
inline std::vector<CandidateRendering> render_record(const EvalTemplate& tpl,
                                                     const EvalRecord& record) {
    std::vector<CandidateRendering> out;
    const auto labels =
        tpl.candidates_from_fields() ? tpl.candidate_fields : tpl.candidate_labels;
    for (const auto& label : labels) {
        CandidateRendering r;
        r.candidate_label = label;
        if (tpl.candidates_from_fields()) {
            auto it = record.fields.find(label);
            if (it == record.fields.end())
                throw std::runtime_error("record " + record.record_id + " lacks field " + label);
            r.completion = it->second;
        } else {
            r.completion = label;
        }
        r.text = detail::render_pattern(tpl, record, r.completion, &r.score_span);
        out.push_back(std::move(r));
    }
    return out;
}

// A demonstration is the record rendered with its gold candidate.
inline std::string render_demonstration(const EvalTemplate& tpl, const EvalRecord& record) {
    std::string completion = record.gold;
    if (tpl.candidates_from_fields()) {
        auto it = record.fields.find(record.gold);
        if (it == record.fields.end())
            throw std::runtime_error("record " + record.record_id + " gold field missing");
        completion = it->second;
    }
    return detail::render_pattern(tpl, record, completion, nullptr);
}

struct EvalInstance {
    std::string task;
    std::string record_id;
    std::string candidate_label;
    std::string text;
    std::pair<std::size_t, std::size_t> score_span;
    std::vector<std::string> demo_ids;
};

// k demonstrations sampled without replacement, prefixed in sampled order;
// the query candidates come last and share the demonstrations bit-exactly.
// A pool smaller than k is used whole (sets *pool_short).
template <class RngT>
std::vector<EvalInstance> assemble(const EvalRecord& record,
                                   const std::vector<EvalRecord>& pool, std::size_t k,
                                   RngT& rng, const EvalTemplate& tpl,
                                   bool* pool_short = nullptr) {
    std::size_t take = k;
    if (pool.size() < k) {
        take = pool.size();
        if (pool_short) *pool_short = true;
    }
    std::vector<std::size_t> picked = sample_indices(rng, pool.size(), take);
    // sample_indices returns ascending positions; restore a sampled order by
    // shuffling the picked set with the same stream.
    shuffle(rng, picked);

    std::string prefix;
    std::vector<std::string> demo_ids;
    for (std::size_t idx : picked) {
        prefix += render_demonstration(tpl, pool[idx]);
        prefix.push_back('\n');
        demo_ids.push_back(pool[idx].record_id);
    }
    const std::size_t prefix_cp = codepoint_length(prefix);

    std::vector<EvalInstance> out;
    for (auto& r : render_record(tpl, record)) {
        EvalInstance inst;
        inst.task = tpl.task;
        inst.record_id = record.record_id;
        inst.candidate_label = r.candidate_label;
        inst.text = prefix + r.text;
        inst.score_span = {prefix_cp + r.score_span.first, prefix_cp + r.score_span.second};
        inst.demo_ids = demo_ids;
        out.push_back(std::move(inst));
    }
    return out;
}

}  // namespace selfsup
