#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "selfsup/corpus.hpp"
#include "selfsup/evalgen.hpp"
#include "selfsup/jsonl.hpp"
#include "selfsup/packer.hpp"
#include "selfsup/pretrain_pairs.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/taskgen.hpp"

namespace selfsup {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InputSpec {
    std::string path;
    std::string format = "jsonl";  // "jsonl" | "text"
    std::string domain = "default";
    std::size_t max_docs = 0;  // 0 = unlimited
};

struct RunConfig {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string output_dir;
    std::vector<InputSpec> inputs;
    std::map<Task, std::size_t> task_quotas;  // enabled set; quota 0 = unlimited
    std::size_t min_window = 3;
    std::size_t max_window = 8;
    std::size_t window_stride = 0;  // 0 = non-overlapping
    std::size_t cl_window = 5;
    std::size_t max_len = 2048;
    std::size_t pair_max_len = 512;
    double mask_budget = 0.15;
    std::size_t ngram_max_n = 3;
    double ratio = 1.0;
    std::set<Task> corrupt_tasks;
    std::size_t shard_size = 512;
    std::string function_words_path;
    std::string abbreviations_path;
    std::uint64_t config_hash = 0;

    bool enabled(Task t) const { return task_quotas.count(t) > 0; }

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    void validate() const;
};

inline const std::map<Task, std::size_t>& default_task_quotas() {
    static const std::map<Task, std::size_t> quotas = {
        {Task::NSG, 250000},     {Task::MWP, 250000}, {Task::LPP_GEN, 250000},
        {Task::LPP_CLS, 250000}, {Task::CL, 250000},
    };
    return quotas;
}

inline RunConfig RunConfig::from_json(const nlohmann::json& j) try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig cfg;
    cfg.config_hash = fnv1a64(j.dump());
    cfg.seed = j.value("seed", 0ull);
    cfg.workers = j.value("workers", 1);
    cfg.output_dir = j.value("output_dir", "out");
    cfg.min_window = j.value("min_window", std::size_t{3});
    cfg.max_window = j.value("max_window", std::size_t{8});
    cfg.window_stride = j.value("window_stride", std::size_t{0});
    cfg.cl_window = j.value("cl_window", std::size_t{5});
    cfg.max_len = j.value("max_len", std::size_t{2048});
    cfg.pair_max_len = j.value("pair_max_len", std::size_t{512});
    cfg.mask_budget = j.value("mask_budget", 0.15);
    cfg.ngram_max_n = j.value("ngram_max_n", std::size_t{3});
    cfg.ratio = j.value("ratio", 1.0);
    cfg.shard_size = j.value("shard_size", std::size_t{512});
    cfg.function_words_path = j.value("function_words_path", "");
    cfg.abbreviations_path = j.value("abbreviations_path", "");

    if (!j.contains("inputs") || !j["inputs"].is_array() || j["inputs"].empty())
        throw ConfigError("config requires a non-empty \"inputs\" array");
    for (const auto& in : j["inputs"]) {
        InputSpec spec;
        if (!in.contains("path")) throw ConfigError("input entry lacks \"path\"");
        spec.path = in["path"].get<std::string>();
        spec.format = in.value("format", "jsonl");
        spec.domain = in.value("domain", "default");
        spec.max_docs = in.value("max_docs", std::size_t{0});
        if (spec.format != "jsonl" && spec.format != "text")
            throw ConfigError("input format must be jsonl or text: " + spec.path);
        cfg.inputs.push_back(std::move(spec));
    }

    if (j.contains("tasks")) {
        if (j["tasks"].is_object()) {
            for (const auto& [name, quota] : j["tasks"].items()) {
                auto task = task_from_name(name);
                if (!task) throw ConfigError("unknown task: " + name);
                cfg.task_quotas[*task] = quota.get<std::size_t>();
            }
        } else if (j["tasks"].is_array()) {
            for (const auto& name : j["tasks"]) {
                auto task = task_from_name(name.get<std::string>());
                if (!task) throw ConfigError("unknown task: " + name.get<std::string>());
                cfg.task_quotas[*task] = 250000;
            }
        } else {
            throw ConfigError("\"tasks\" must be an object or array");
        }
    } else {
        cfg.task_quotas = default_task_quotas();
    }

    if (j.contains("corrupt_labels")) {
        const auto& c = j["corrupt_labels"];
        if (c.is_boolean()) {
            if (c.get<bool>())
                for (const auto& [task, _] : cfg.task_quotas) cfg.corrupt_tasks.insert(task);
        } else if (c.is_array()) {
            for (const auto& name : c) {
                auto task = task_from_name(name.get<std::string>());
                if (!task) throw ConfigError("unknown task in corrupt_labels");
                cfg.corrupt_tasks.insert(*task);
            }
        } else {
            throw ConfigError("corrupt_labels must be a boolean or task array");
        }
    }
    return cfg;
} catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
}

inline RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
    return from_json(j);
}

inline void RunConfig::validate() const {
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (min_window < 3) throw ConfigError("min_window must be >= 3");
    if (max_window < min_window) throw ConfigError("max_window must be >= min_window");
    if (cl_window < 4) throw ConfigError("cl_window must be >= 4");
    if (max_len == 0 || pair_max_len == 0) throw ConfigError("length limits must be positive");
    if (mask_budget <= 0.0 || mask_budget >= 0.5)
        throw ConfigError("mask_budget must be in (0, 0.5)");
    if (ngram_max_n < 1) throw ConfigError("ngram_max_n must be >= 1");
    if (ratio <= 0.0 || ratio > 2.0) throw ConfigError("ratio must be in (0, 2]");
    if (shard_size == 0) throw ConfigError("shard_size must be >= 1");
    if (task_quotas.empty()) throw ConfigError("no tasks enabled");
    for (const auto& in : inputs)
        if (!std::filesystem::exists(in.path))
            throw ConfigError("input path does not exist: " + in.path);
    if (!function_words_path.empty() && !std::filesystem::exists(function_words_path))
        throw ConfigError("function word list does not exist: " + function_words_path);
    if (!abbreviations_path.empty() && !std::filesystem::exists(abbreviations_path))
        throw ConfigError("abbreviation list does not exist: " + abbreviations_path);
}

// ------------------------------------------------------------------
// Run report

struct RunReport {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string config_hash;
    std::size_t documents = 0;
    long long wall_clock_ms = 0;
    std::map<std::string, std::size_t> instances_per_task;
    std::map<std::string, std::size_t> examples_per_task;
    std::map<std::string, std::size_t> warnings;
    std::map<std::string, std::string> output_digests;  // file name -> fnv1a64 hex

    std::size_t warning_total() const {
        std::size_t n = 0;
        for (const auto& [_, c] : warnings) n += c;
        return n;
    }

    nlohmann::json to_json() const {
        return {{"seed", seed},
                {"workers", workers},
                {"config_hash", config_hash},
                {"documents", documents},
                {"wall_clock_ms", wall_clock_ms},
                {"instances_per_task", instances_per_task},
                {"examples_per_task", examples_per_task},
                {"warnings", warnings},
                {"output_digests", output_digests}};
    }
};

// ------------------------------------------------------------------
// Shard processing

namespace detail {

struct WarningCounters {
    std::map<std::string, std::size_t> counts;
    void bump(const std::string& key, std::size_t n = 1) {
        if (n) counts[key] += n;
    }
    void merge(const WarningCounters& other) {
        for (const auto& [k, v] : other.counts) counts[k] += v;
    }
};

struct ShardOutput {
    std::map<Task, std::vector<PackedInstance>> instances;
    std::map<Task, std::vector<Example>> examples;  // sop / nsp / mlm
    WarningCounters warnings;
};

// Generic path: per-window examples packed greedily.
template <class Gen>
void run_windowed_task(Task task, const RunConfig& cfg, const std::vector<Document>& docs,
                       std::size_t shard_id, ShardOutput& out, Gen&& gen) {
    std::vector<Example> examples;
    const std::string tag(task_name(task));
    for (const auto& doc : docs) {
        Rng win_rng(derive_seed(cfg.seed, "win/" + tag, doc.doc_id));
        Rng gen_rng(derive_seed(cfg.seed, "gen/" + tag, doc.doc_id));
        for (auto& window :
             windows(doc, cfg.min_window, cfg.max_window, win_rng, cfg.window_stride)) {
            std::optional<Example> ex = gen(doc, window, gen_rng);
            if (!ex) continue;
            ex->meta["domain"] = doc.domain;
            examples.push_back(std::move(*ex));
        }
    }
    if (cfg.corrupt_tasks.count(task)) {
        Rng corrupt_rng(derive_seed(cfg.seed, "corrupt/" + tag + "/" + std::to_string(shard_id)));
        auto stats = corrupt_labels(examples, corrupt_rng);
        out.warnings.bump("corrupt_singleton_shard", stats.singleton_shards);
    }
    Rng pack_rng(derive_seed(cfg.seed, "pack/" + tag + "/" + std::to_string(shard_id)));
    PackStats pack_stats;
    auto packed = pack(std::move(examples), cfg.max_len, default_length_fn(), pack_rng,
                       &pack_stats);
    out.warnings.bump("oversized_example_skipped", pack_stats.oversized_skipped);
    auto& dest = out.instances[task];
    dest.insert(dest.end(), std::make_move_iterator(packed.begin()),
                std::make_move_iterator(packed.end()));
}

// LPP classification: shard-local negative pool (two passes over the same
// deterministic windows), then instance-first packing so one label scheme
// covers a whole instance.
inline void run_lpp_cls(const RunConfig& cfg, const std::vector<Document>& docs,
                        std::size_t shard_id, const WordSet& function_words, ShardOutput& out) {
    PhrasePool pool;
    for (const auto& doc : docs) {
        Rng win_rng(derive_seed(cfg.seed, "win/lpp_cls", doc.doc_id));
        for (auto& window :
             windows(doc, cfg.min_window, cfg.max_window, win_rng, cfg.window_stride)) {
            auto extraction = extract_last_phrase(window.sentences.back(), function_words);
            if (extraction) pool.add(extraction->function_word(), extraction->phrase);
        }
    }

    std::vector<LppClsProto> protos;
    for (const auto& doc : docs) {
        Rng win_rng(derive_seed(cfg.seed, "win/lpp_cls", doc.doc_id));
        Rng gen_rng(derive_seed(cfg.seed, "gen/lpp_cls", doc.doc_id));
        for (auto& window :
             windows(doc, cfg.min_window, cfg.max_window, win_rng, cfg.window_stride)) {
            auto before = extract_last_phrase(window.sentences.back(), function_words);
            auto proto = gen_lpp_cls_proto(window, pool, gen_rng, function_words);
            if (proto) {
                proto->meta["domain"] = doc.domain;
                protos.push_back(std::move(*proto));
            } else if (before) {
                out.warnings.bump("lpp_cls_no_negative");
            }
        }
    }

    const bool corrupt = cfg.corrupt_tasks.count(Task::LPP_CLS) > 0;
    Rng pack_rng(derive_seed(cfg.seed, "pack/lpp_cls/" + std::to_string(shard_id)));
    shuffle(pack_rng, protos);
    const LengthFn length_fn = default_length_fn();
    InstanceBuilder builder(Task::LPP_CLS, cfg.max_len, length_fn);
    std::optional<LabelScheme> scheme;
    auto& dest = out.instances[Task::LPP_CLS];
    auto close = [&] {
        if (builder.empty()) return;
        nlohmann::json meta = {{"scheme_id", scheme->scheme_id},
                               {"labels", scheme->class_labels},
                               {"corrupted", corrupt}};
        dest.push_back(builder.finish(std::move(meta)));
        scheme.reset();
    };
    auto bind = [&](const LppClsProto& proto) {
        if (!scheme) scheme = sample_label_scheme(2, pack_rng);
        Example ex = finish_lpp_cls(proto, *scheme);
        if (corrupt) ex.output_text = scheme->class_labels[pack_rng.below(2)];
        return ex;
    };
    for (const auto& proto : protos) {
        Example ex = bind(proto);
        if (length_fn(render(ex)) > cfg.max_len) {
            out.warnings.bump("oversized_example_skipped");
            continue;
        }
        if (!builder.fits({&ex})) {
            close();
            // the closed instance's scheme no longer applies
            ex = bind(proto);
            if (length_fn(render(ex)) > cfg.max_len) {
                out.warnings.bump("oversized_example_skipped");
                continue;
            }
        }
        builder.add(ex);
    }
    close();
}

// CL: instance-first; the class set and the label bijection are sampled per
// instance and every consumed window contributes one example per class.
inline void run_cl(const RunConfig& cfg, const std::vector<Document>& docs, std::size_t shard_id,
                   ShardOutput& out) {
    std::vector<SentenceWindow> cl_windows;
    for (const auto& doc : docs) {
        Rng win_rng(derive_seed(cfg.seed, "win/cl", doc.doc_id));
        for (auto& w : windows(doc, cfg.cl_window, cfg.cl_window, win_rng, cfg.window_stride))
            cl_windows.push_back(std::move(w));
    }
    std::map<std::string, std::string> doc_domain;
    for (const auto& doc : docs) doc_domain[doc.doc_id] = doc.domain;

    OtherDocSource others(&docs);
    Rng rng(derive_seed(cfg.seed, "pack/cl/" + std::to_string(shard_id)));
    shuffle(rng, cl_windows);
    const bool corrupt = cfg.corrupt_tasks.count(Task::CL) > 0;
    const LengthFn length_fn = default_length_fn();
    InstanceBuilder builder(Task::CL, cfg.max_len, length_fn);
    std::optional<ClAssignment> assignment;
    auto& dest = out.instances[Task::CL];

    auto assignment_meta = [&] {
        auto classes = nlohmann::json::array();
        auto mapping = nlohmann::json::object();
        for (std::size_t i = 0; i < assignment->classes.size(); ++i) {
            classes.push_back(std::string(cl_class_name(assignment->classes[i])));
            mapping[std::string(cl_class_name(assignment->classes[i]))] = assignment->labels[i];
        }
        return nlohmann::json{{"classes", classes},
                              {"assignment", mapping},
                              {"scheme_id", assignment->scheme.scheme_id},
                              {"labels", assignment->scheme.class_labels},
                              {"corrupted", corrupt}};
    };
    auto close = [&] {
        if (builder.empty()) return;
        dest.push_back(builder.finish(assignment_meta()));
        assignment.reset();
    };

    auto group_examples = [&](const SentenceWindow& window) -> std::vector<Example> {
        auto inputs = build_cl_inputs(window, others, assignment->classes, rng);
        if (!inputs) {
            out.warnings.bump("cl_no_partner_doc");
            return {};
        }
        shuffle(rng, *inputs);  // class identity must not be positional
        std::vector<Example> group;
        for (auto& input : *inputs) {
            Example ex;
            ex.task = Task::CL;
            ex.input_text = std::move(input.text);
            ex.output_text = corrupt
                                 ? assignment->scheme.class_labels[rng.below(
                                       assignment->scheme.class_labels.size())]
                                 : assignment->label_for(input.cls);
            ex.meta = std::move(input.meta);
            ex.meta["class"] = std::string(cl_class_name(input.cls));
            ex.meta["labels"] = assignment->scheme.class_labels;
            auto dom = doc_domain.find(window.doc_id);
            if (dom != doc_domain.end()) ex.meta["domain"] = dom->second;
            group.push_back(std::move(ex));
        }
        return group;
    };

    for (const auto& window : cl_windows) {
        if (!assignment) {
            auto classes = pick_cl_classes(rng);
            assignment = assign_labels(classes, rng);
        }
        std::vector<Example> group = group_examples(window);
        if (group.empty()) continue;
        std::vector<const Example*> ptrs;
        for (const auto& ex : group) ptrs.push_back(&ex);
        if (!builder.fits(ptrs)) {
            if (builder.empty()) {
                out.warnings.bump("oversized_example_skipped");
                continue;
            }
            close();
            // the group was built under the closed instance's assignment;
            // rebuild it under a fresh one
            auto classes = pick_cl_classes(rng);
            assignment = assign_labels(classes, rng);
            group = group_examples(window);
            if (group.empty()) continue;
            ptrs.clear();
            for (const auto& ex : group) ptrs.push_back(&ex);
            if (!builder.fits(ptrs)) {
                out.warnings.bump("oversized_example_skipped");
                continue;
            }
        }
        for (const auto& ex : group) builder.add(ex);
    }
    close();
}

// SOP / NSP / MLM: one Example per segment pair, tiled over each document.
inline void run_pair_task(Task task, const RunConfig& cfg, const std::vector<Document>& docs,
                          std::size_t shard_id, ShardOutput& out) {
    const std::string tag(task_name(task));
    OtherDocSource partners(&docs);
    PairConfig pair_cfg;
    pair_cfg.max_len = cfg.pair_max_len;
    if (task == Task::MLM) pair_cfg.positive_prob = 1.0;
    NgramMaskConfig mask_cfg{cfg.ngram_max_n, cfg.mask_budget};
    const PairVariant variant = task == Task::NSP ? PairVariant::NSP : PairVariant::SOP;

    std::vector<Example> examples;
    for (const auto& doc : docs) {
        Rng rng(derive_seed(cfg.seed, "pair/" + tag, doc.doc_id));
        std::size_t offset = 0;
        while (offset + 2 <= doc.sentence_count()) {
            std::size_t consumed = 0;
            auto pair = make_pair(doc, offset, &partners, variant, rng, pair_cfg, &consumed);
            offset += std::max<std::size_t>(consumed, 1);
            if (!pair) {
                out.warnings.bump("pair_skipped");
                continue;
            }
            if (task == Task::MLM) {
                auto ex = make_mlm_example(*pair, mask_cfg, rng);
                if (!ex) {
                    out.warnings.bump("mlm_empty_plan");
                    continue;
                }
                ex->meta["max_len"] = cfg.pair_max_len;
                ex->meta["max_n"] = cfg.ngram_max_n;
                ex->meta["mask_budget"] = cfg.mask_budget;
                ex->meta["domain"] = doc.domain;
                examples.push_back(std::move(*ex));
            } else {
                Example ex = pair_to_example(*pair);
                ex.meta["max_len"] = cfg.pair_max_len;
                ex.meta["domain"] = doc.domain;
                examples.push_back(std::move(ex));
            }
        }
    }
    if (cfg.corrupt_tasks.count(task)) {
        Rng corrupt_rng(derive_seed(cfg.seed, "corrupt/" + tag + "/" + std::to_string(shard_id)));
        auto stats = corrupt_labels(examples, corrupt_rng);
        out.warnings.bump("corrupt_singleton_shard", stats.singleton_shards);
    }
    auto& dest = out.examples[task];
    dest.insert(dest.end(), std::make_move_iterator(examples.begin()),
                std::make_move_iterator(examples.end()));
}

inline void process_shard(const RunConfig& cfg, const std::vector<Document>& docs,
                          std::size_t shard_id, const WordSet& function_words,
                          ShardOutput& out) {
    if (cfg.enabled(Task::NSG)) {
        run_windowed_task(Task::NSG, cfg, docs, shard_id, out,
                          [](const Document&, const SentenceWindow& w, Rng&) {
                              return std::optional<Example>(gen_nsg(w));
                          });
    }
    if (cfg.enabled(Task::MWP)) {
        run_windowed_task(Task::MWP, cfg, docs, shard_id, out,
                          [](const Document&, const SentenceWindow& w,
                             Rng& rng) -> std::optional<Example> {
                              if (w.token_count() < 4) return std::nullopt;
                              return gen_mwp(w, rng);
                          });
    }
    if (cfg.enabled(Task::LPP_GEN)) {
        run_windowed_task(Task::LPP_GEN, cfg, docs, shard_id, out,
                          [&](const Document&, const SentenceWindow& w,
                              Rng&) { return gen_lpp_gen(w, function_words); });
    }
    if (cfg.enabled(Task::DAE)) {
        run_windowed_task(Task::DAE, cfg, docs, shard_id, out,
                          [](const Document&, const SentenceWindow& w, Rng& rng) {
                              return std::optional<Example>(gen_dae(w, rng));
                          });
    }
    if (cfg.enabled(Task::GSG)) {
        run_windowed_task(Task::GSG, cfg, docs, shard_id, out,
                          [](const Document&, const SentenceWindow& w, Rng& rng) {
                              return std::optional<Example>(gen_gsg(w, rng));
                          });
    }
    if (cfg.enabled(Task::LPP_CLS)) run_lpp_cls(cfg, docs, shard_id, function_words, out);
    if (cfg.enabled(Task::CL)) run_cl(cfg, docs, shard_id, out);
    if (cfg.enabled(Task::SOP)) run_pair_task(Task::SOP, cfg, docs, shard_id, out);
    if (cfg.enabled(Task::NSP)) run_pair_task(Task::NSP, cfg, docs, shard_id, out);
    if (cfg.enabled(Task::MLM)) run_pair_task(Task::MLM, cfg, docs, shard_id, out);
}

inline std::string example_sort_key(const Example& ex) {
    std::uint64_t h = fnv1a64(ex.input_text);
    h = fnv1a64(std::string_view("\x1f", 1), h);
    h = fnv1a64(ex.output_text, h);
    return to_hex(h);
}

}  // namespace detail

// ------------------------------------------------------------------
// generate

inline std::vector<Document> load_corpus(const RunConfig& cfg, const SentenceSegmenter& segmenter,
                                         detail::WarningCounters& warnings) {
    std::vector<Document> docs;
    for (const auto& input : cfg.inputs) {
        std::ifstream in(input.path);
        if (!in) throw ConfigError("cannot open input: " + input.path);
        std::size_t count = 0;
        auto sink = [&](Document&& doc) {
            if (input.max_docs == 0 || count < input.max_docs) {
                docs.push_back(std::move(doc));
                ++count;
            }
        };
        IngestStats stats = input.format == "text"
                                ? ingest_plain(in, segmenter, input.domain, sink)
                                : ingest_jsonl(in, segmenter, input.domain, sink);
        warnings.bump("ingest_malformed", stats.skipped_malformed);
        warnings.bump("ingest_empty", stats.skipped_empty);
        warnings.bump("ingest_duplicate_id", stats.duplicate_ids);
    }
    return docs;
}

inline RunReport generate(const RunConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    SentenceSegmenter segmenter =
        cfg.abbreviations_path.empty()
            ? SentenceSegmenter()
            : SentenceSegmenter(load_wordlist(cfg.abbreviations_path));
    WordSet function_words(cfg.function_words_path.empty()
                               ? default_function_words()
                               : load_wordlist(cfg.function_words_path));

    detail::WarningCounters warnings;
    std::vector<Document> docs = load_corpus(cfg, segmenter, warnings);
    if (cfg.ratio != 1.0) docs = subsample(docs, cfg.ratio, cfg.seed);

    // Contiguous shards of shard_size documents; shard composition depends
    // only on the config, never on the worker count.
    std::vector<std::vector<Document>> shards;
    for (std::size_t i = 0; i < docs.size(); i += cfg.shard_size) {
        const std::size_t end = std::min(docs.size(), i + cfg.shard_size);
        shards.emplace_back(std::make_move_iterator(docs.begin() + static_cast<std::ptrdiff_t>(i)),
                            std::make_move_iterator(docs.begin() + static_cast<std::ptrdiff_t>(end)));
    }
    const std::size_t doc_count = [&] {
        std::size_t n = 0;
        for (const auto& s : shards) n += s.size();
        return n;
    }();

    std::vector<detail::ShardOutput> outputs(shards.size());
    {
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= shards.size()) return;
                detail::process_shard(cfg, shards[i], i, function_words, outputs[i]);
            }
        };
        const std::size_t n_threads =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.workers),
                                  std::max<std::size_t>(shards.size(), 1));
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i + 1 < n_threads; ++i) pool.emplace_back(work);
        work();
        for (auto& t : pool) t.join();
    }

    RunReport report;
    report.seed = cfg.seed;
    report.workers = cfg.workers;
    report.config_hash = to_hex(cfg.config_hash);
    report.documents = doc_count;

    std::map<Task, std::vector<PackedInstance>> instances;
    std::map<Task, std::vector<Example>> examples;
    for (auto& out : outputs) {
        warnings.merge(out.warnings);
        for (auto& [task, v] : out.instances) {
            auto& dest = instances[task];
            dest.insert(dest.end(), std::make_move_iterator(v.begin()),
                        std::make_move_iterator(v.end()));
        }
        for (auto& [task, v] : out.examples) {
            auto& dest = examples[task];
            dest.insert(dest.end(), std::make_move_iterator(v.begin()),
                        std::make_move_iterator(v.end()));
        }
    }

    // Deterministic final order: (task, content hash), then quota cap.
    for (auto& [task, v] : instances) {
        std::sort(v.begin(), v.end(), [](const PackedInstance& a, const PackedInstance& b) {
            return a.instance_id != b.instance_id ? a.instance_id < b.instance_id
                                                  : a.text < b.text;
        });
        const std::size_t quota = cfg.task_quotas.at(task);
        if (quota > 0 && v.size() > quota) v.resize(quota);
    }
    for (auto& [task, v] : examples) {
        std::sort(v.begin(), v.end(), [](const Example& a, const Example& b) {
            const std::string ka = detail::example_sort_key(a), kb = detail::example_sort_key(b);
            return ka != kb ? ka < kb : a.input_text < b.input_text;
        });
        const std::size_t quota = cfg.task_quotas.at(task);
        if (quota > 0 && v.size() > quota) v.resize(quota);
    }

    // Write per-task files; on any I/O failure remove partial outputs.
    std::filesystem::create_directories(cfg.output_dir);
    std::vector<std::filesystem::path> written;
    try {
        auto open_out = [&](Task task) {
            std::filesystem::path path =
                std::filesystem::path(cfg.output_dir) / (std::string(task_name(task)) + ".jsonl");
            written.push_back(path);
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + path.string());
            return out;
        };
        for (const auto& [task, quota] : cfg.task_quotas) {
            if (task == Task::SOP || task == Task::NSP || task == Task::MLM) {
                auto out = open_out(task);
                const auto& v = examples[task];
                for (const auto& ex : v) out << to_json(ex).dump() << '\n';
                if (!out) throw std::runtime_error("write failure");
                report.examples_per_task[std::string(task_name(task))] = v.size();
            } else {
                auto out = open_out(task);
                const auto& v = instances[task];
                std::size_t packed_n = 0;
                for (const auto& inst : v) {
                    out << to_json(inst).dump() << '\n';
                    packed_n += inst.example_boundaries.size();
                }
                if (!out) throw std::runtime_error("write failure");
                report.instances_per_task[std::string(task_name(task))] = v.size();
                report.examples_per_task[std::string(task_name(task))] = packed_n;
            }
        }
    } catch (...) {
        for (const auto& path : written) {
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
        throw;
    }

    for (const auto& path : written) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        report.output_digests[path.filename().string()] = to_hex(fnv1a64(buf.str()));
    }
    report.warnings = warnings.counts;
    report.wall_clock_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                               std::chrono::steady_clock::now() - t0)
                               .count();

    std::ofstream report_out(std::filesystem::path(cfg.output_dir) / "report.json",
                             std::ios::binary | std::ios::trunc);
    report_out << report.to_json().dump(2) << '\n';
    return report;
}

}  // namespace selfsup
