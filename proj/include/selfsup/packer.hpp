#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "selfsup/corpus.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/taskgen.hpp"
#include "selfsup/utf8.hpp"

namespace selfsup {

// Maps a string to a token count. Must be monotone under concatenation up to
// a small constant. The default counts whitespace tokens; the training stack
// can inject its own subword counter.
using LengthFn = std::function<std::size_t(std::string_view)>;

inline std::size_t whitespace_token_count(std::string_view text) {
    std::size_t n = 0;
    bool in_token = false;
    for (char c : text) {
        if (is_space_byte(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++n;
        }
    }
    return n;
}

inline LengthFn default_length_fn() {
    return [](std::string_view s) { return whitespace_token_count(s); };
}

// "Input: {input}\nOutput: {output}\n" — the trailing newline separates
// examples inside an instance.
inline std::string render(const Example& ex) {
    std::string out;
    out.reserve(ex.input_text.size() + ex.output_text.size() + 17);
    out += "Input: ";
    out += ex.input_text;
    out += "\nOutput: ";
    out += ex.output_text;
    out.push_back('\n');
    return out;
}

// Inverse of render for one rendered example. Returns nullopt when the
// markers are missing.
inline std::optional<std::pair<std::string, std::string>> parse_rendered(std::string_view r) {
    constexpr std::string_view kInput = "Input: ";
    constexpr std::string_view kOutput = "\nOutput: ";
    if (r.substr(0, kInput.size()) != kInput) return std::nullopt;
    const std::size_t sep = r.find(kOutput);
    if (sep == std::string_view::npos) return std::nullopt;
    std::string input(r.substr(kInput.size(), sep - kInput.size()));
    std::string_view rest = r.substr(sep + kOutput.size());
    if (rest.empty() || rest.back() != '\n') return std::nullopt;
    return std::make_pair(std::move(input), std::string(rest.substr(0, rest.size() - 1)));
}

struct PackedInstance {
    Task task;
    std::string instance_id;
    std::string text;
    // codepoint offsets, half-open
    std::vector<std::pair<std::size_t, std::size_t>> example_boundaries;
    std::vector<std::pair<std::size_t, std::size_t>> loss_spans;
    nlohmann::json meta = nlohmann::json::object();
};

inline std::string instance_content_id(Task task, std::string_view text) {
    std::uint64_t h = fnv1a64(task_name(task));
    h ^= 0xff;
    h *= kFnvPrime;
    return to_hex(fnv1a64(text, h));
}

namespace detail {

// Running instance assembly shared by the generic and the CL packers.
class InstanceBuilder {
public:
    InstanceBuilder(Task task, std::size_t max_len, const LengthFn& length_fn)
        : task_(task), max_len_(max_len), length_fn_(&length_fn) {}

    bool fits(const std::vector<const Example*>& group) const {
        std::string candidate = text_;
        for (const Example* ex : group) candidate += render(*ex);
        return (*length_fn_)(candidate) <= max_len_;
    }

    void add(const Example& ex) {
        const std::string rendered = render(ex);
        const std::size_t base = codepoint_length(text_);
        const std::size_t in_cp = codepoint_length(ex.input_text);
        const std::size_t out_cp = codepoint_length(ex.output_text);
        // "Input: " = 7 codepoints, "\nOutput: " = 9
        const std::size_t loss_start = base + 7 + in_cp + 9;
        boundaries_.emplace_back(base, base + codepoint_length(rendered));
        loss_spans_.emplace_back(loss_start, loss_start + out_cp);
        example_meta_.push_back(ex.meta);
        text_ += rendered;
    }

    bool empty() const { return boundaries_.empty(); }
    std::size_t example_count() const { return boundaries_.size(); }

    PackedInstance finish(nlohmann::json instance_meta = nlohmann::json::object()) {
        PackedInstance inst;
        inst.task = task_;
        inst.text = std::move(text_);
        inst.example_boundaries = std::move(boundaries_);
        inst.loss_spans = std::move(loss_spans_);
        inst.instance_id = instance_content_id(task_, inst.text);
        instance_meta["example_count"] = inst.example_boundaries.size();
        instance_meta["max_len"] = max_len_;
        instance_meta["length_fn"] = "whitespace";
        instance_meta["examples"] = std::move(example_meta_);
        inst.meta = std::move(instance_meta);
        reset();
        return inst;
    }

    void reset() {
        text_.clear();
        boundaries_.clear();
        loss_spans_.clear();
        example_meta_ = nlohmann::json::array();
    }

private:
    Task task_;
    std::size_t max_len_;
    const LengthFn* length_fn_;
    std::string text_;
    std::vector<std::pair<std::size_t, std::size_t>> boundaries_;
    std::vector<std::pair<std::size_t, std::size_t>> loss_spans_;
    nlohmann::json example_meta_ = nlohmann::json::array();
};

}  // namespace detail

struct PackStats {
    std::size_t oversized_skipped = 0;
};

// Greedy packing: examples are consumed in seeded random order without
// replacement; an instance closes when the next rendered example would push
// it past max_len. Single examples that alone exceed max_len are skipped.
template <class RngT>
std::vector<PackedInstance> pack(std::vector<Example> examples, std::size_t max_len,
                                 const LengthFn& length_fn, RngT& rng,
                                 PackStats* stats = nullptr) {
    std::vector<PackedInstance> out;
    if (examples.empty()) return out;
    const Task task = examples.front().task;
    shuffle(rng, examples);

    detail::InstanceBuilder builder(task, max_len, length_fn);
    for (const Example& ex : examples) {
        if (length_fn(render(ex)) > max_len) {
            if (stats) ++stats->oversized_skipped;
            continue;
        }
        if (!builder.fits({&ex})) {
            if (!builder.empty()) out.push_back(builder.finish());
        }
        builder.add(ex);
    }
    if (!builder.empty()) out.push_back(builder.finish());
    return out;
}

// ------------------------------------------------------------------
// Reports

struct InstanceStatsReport {
    std::size_t instances = 0;
    std::size_t examples = 0;
    std::map<std::string, std::size_t> instances_per_task;
    std::map<std::string, std::size_t> examples_per_task;
    std::map<std::string, std::size_t> examples_per_domain;
    std::map<std::string, double> mean_examples_per_instance;  // per task
    std::map<std::size_t, std::size_t> length_histogram;       // bucket -> count

    static constexpr std::size_t kBucket = 128;

    void observe(const PackedInstance& inst, const LengthFn& length_fn) {
        ++instances;
        const std::string task(task_name(inst.task));
        ++instances_per_task[task];
        const std::size_t n = inst.example_boundaries.size();
        examples += n;
        examples_per_task[task] += n;
        if (inst.meta.contains("examples")) {
            for (const auto& m : inst.meta["examples"]) {
                if (m.contains("domain"))
                    ++examples_per_domain[m["domain"].get<std::string>()];
            }
        }
        const std::size_t len = length_fn(inst.text);
        ++length_histogram[len / kBucket * kBucket];
    }

    void finalize() {
        for (const auto& [task, n] : examples_per_task) {
            const std::size_t inst = instances_per_task[task];
            mean_examples_per_instance[task] =
                inst ? static_cast<double>(n) / static_cast<double>(inst) : 0.0;
        }
    }

    nlohmann::json to_json() const {
        return {{"instances", instances},
                {"examples", examples},
                {"instances_per_task", instances_per_task},
                {"examples_per_task", examples_per_task},
                {"examples_per_domain", examples_per_domain},
                {"mean_examples_per_instance", mean_examples_per_instance},
                {"length_histogram", [&] {
                     auto h = nlohmann::json::object();
                     for (const auto& [b, c] : length_histogram)
                         h[std::to_string(b)] = c;
                     return h;
                 }()}};
    }
};

inline InstanceStatsReport instance_stats(const std::vector<PackedInstance>& instances,
                                          const LengthFn& length_fn) {
    InstanceStatsReport report;
    for (const auto& inst : instances) report.observe(inst, length_fn);
    report.finalize();
    return report;
}

}  // namespace selfsup
