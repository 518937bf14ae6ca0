#pragma once

#include <array>
#include <cassert>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "selfsup/corpus.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/wordlists.hpp"

namespace selfsup {

enum class Task { NSG, MWP, LPP_GEN, LPP_CLS, CL, DAE, GSG, SOP, NSP, MLM };

inline std::string_view task_name(Task t) {
    switch (t) {
        case Task::NSG: return "nsg";
        case Task::MWP: return "mwp";
        case Task::LPP_GEN: return "lpp_gen";
        case Task::LPP_CLS: return "lpp_cls";
        case Task::CL: return "cl";
        case Task::DAE: return "dae";
        case Task::GSG: return "gsg";
        case Task::SOP: return "sop";
        case Task::NSP: return "nsp";
        case Task::MLM: return "mlm";
    }
    return "?";
}

inline std::optional<Task> task_from_name(std::string_view name) {
    static const std::unordered_map<std::string_view, Task> map = {
        {"nsg", Task::NSG},         {"mwp", Task::MWP}, {"lpp_gen", Task::LPP_GEN},
        {"lpp_cls", Task::LPP_CLS}, {"cl", Task::CL},   {"dae", Task::DAE},
        {"gsg", Task::GSG},         {"sop", Task::SOP}, {"nsp", Task::NSP},
        {"mlm", Task::MLM},
    };
    auto it = map.find(name);
    if (it == map.end()) return std::nullopt;
    return it->second;
}

// One input/output pair, pre-rendering.
struct Example {
    Task task;
    std::string input_text;
    std::string output_text;
    nlohmann::json meta = nlohmann::json::object();
};

// The closed set of mask symbols; one is drawn per example.
inline const std::array<std::string, 9>& mask_symbols() {
    static const std::array<std::string, 9> symbols = {
        "___", "⟨⟨⟩⟩", "@@@", "(())", "$$$",
        "%%%", "###", "***", "+++",
    };
    return symbols;
}

inline bool is_mask_symbol(std::string_view s) {
    for (const auto& sym : mask_symbols())
        if (sym == s) return true;
    return false;
}

template <class RngT>
const std::string& sample_mask_symbol(RngT& rng) {
    return mask_symbols()[static_cast<std::size_t>(rng.below(mask_symbols().size()))];
}

// ------------------------------------------------------------------
// Label schemes

struct LabelScheme {
    std::vector<std::string> class_labels;
    int scheme_id = 0;
};

inline const std::vector<std::vector<std::string>>& binary_label_sets() {
    static const std::vector<std::vector<std::string>> sets = {
        {"Yes", "No"}, {"Y", "N"}, {"True", "False"}, {"T", "F"}};
    return sets;
}

inline const std::vector<std::vector<std::string>>& ternary_label_sets() {
    static const std::vector<std::vector<std::string>> sets = {
        {"Positive", "Negative", "Neutral"},
        {"True", "False", "Neither"},
        {"T", "F", "N"},
        {"Yes", "No", "Unknown"},
        {"Y", "N", "U"}};
    return sets;
}

// Binary schemes keep their list order: class_labels[0] is the affirmative
// label (used as the positive class for LPP classification).
template <class RngT>
LabelScheme sample_label_scheme(std::size_t arity, RngT& rng) {
    const auto& sets = arity == 2 ? binary_label_sets() : ternary_label_sets();
    if (arity != 2 && arity != 3) throw std::invalid_argument("label scheme arity must be 2 or 3");
    int id = static_cast<int>(rng.below(sets.size()));
    return LabelScheme{sets[static_cast<std::size_t>(id)], id};
}

// ------------------------------------------------------------------
// NSG

// Input: all sentences but the last; output: the last sentence.
inline Example gen_nsg(const SentenceWindow& window) {
    assert(window.size() >= 3);
    Example ex;
    ex.task = Task::NSG;
    std::string input;
    for (std::size_t i = 0; i + 1 < window.size(); ++i) {
        if (i) input.push_back(' ');
        input += window.sentences[i].text;
    }
    ex.input_text = std::move(input);
    ex.output_text = window.sentences.back().text;
    ex.meta = {{"doc_id", window.doc_id}, {"window_start", window.start_index}};
    return ex;
}

// ------------------------------------------------------------------
// MWP

// Replaces k ~ U[1, min(20, tokens/2)] token positions with one mask symbol;
// the output lists the masked words in their original order.
// Draw order: k, positions, symbol.
template <class RngT>
Example gen_mwp(const SentenceWindow& window, RngT& rng) {
    std::vector<std::string> tokens = window.flat_tokens();
    const std::size_t n = tokens.size();
    assert(n >= 4);
    const std::size_t cap = std::min<std::size_t>(20, n / 2);
    const std::size_t k = 1 + static_cast<std::size_t>(rng.below(cap));
    std::vector<std::size_t> positions = sample_indices(rng, n, k);
    const std::string& symbol = sample_mask_symbol(rng);

    std::vector<std::string> masked_words;
    masked_words.reserve(k);
    for (std::size_t pos : positions) {
        masked_words.push_back(tokens[pos]);
        tokens[pos] = symbol;
    }

    Example ex;
    ex.task = Task::MWP;
    ex.input_text = join_tokens(tokens);
    ex.output_text = join_tokens(masked_words);
    ex.meta = {{"doc_id", window.doc_id},
               {"window_start", window.start_index},
               {"symbol", symbol},
               {"positions", positions}};
    return ex;
}

// ------------------------------------------------------------------
// LPP

struct PhraseExtraction {
    std::vector<std::string> sentence_tokens;
    std::size_t function_word_index = 0;
    std::string phrase;  // from the function word to sentence end, terminal punctuation dropped

    std::string function_word() const {
        std::string w = sentence_tokens[function_word_index];
        for (char& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return w;
    }
};

inline std::string strip_terminal_punct(std::string_view tok) {
    std::size_t end = tok.size();
    while (end > 0 && is_terminal_punct(tok[end - 1])) --end;
    return std::string(tok.substr(0, end));
}

// Finds the last function word in the second half of the sentence and takes
// everything from it to the end as the phrase. Token count and the phrase
// both exclude terminal punctuation. Returns nullopt when no function word
// qualifies or the phrase would be empty.
inline std::optional<PhraseExtraction> extract_last_phrase(const Sentence& sentence,
                                                           const WordSet& function_words) {
    const auto& toks = sentence.tokens;
    if (toks.empty()) return std::nullopt;

    std::size_t content_len = toks.size();
    if (is_all_punct(toks.back())) --content_len;
    if (content_len == 0) return std::nullopt;

    const std::size_t half = (content_len + 1) / 2;  // ceil(len/2)
    std::optional<std::size_t> last_fw;
    for (std::size_t i = 0; i < content_len; ++i) {
        std::string lower = toks[i];
        for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (function_words.contains(lower)) last_fw = i;
    }
    if (!last_fw || *last_fw < half) return std::nullopt;

    std::vector<std::string> phrase_tokens(toks.begin() + static_cast<std::ptrdiff_t>(*last_fw),
                                           toks.begin() + static_cast<std::ptrdiff_t>(content_len));
    if (!phrase_tokens.empty()) {
        phrase_tokens.back() = strip_terminal_punct(phrase_tokens.back());
        if (phrase_tokens.back().empty()) phrase_tokens.pop_back();
    }
    if (phrase_tokens.empty()) return std::nullopt;

    PhraseExtraction out;
    out.sentence_tokens = toks;
    out.function_word_index = *last_fw;
    out.phrase = join_tokens(phrase_tokens);
    return out;
}

namespace detail {

// "<context> Question: <sentence prefix> ?" — the question form shared by
// both LPP variants.
inline std::string lpp_question_input(const SentenceWindow& window,
                                      const PhraseExtraction& extraction) {
    std::string input;
    for (std::size_t i = 0; i + 1 < window.size(); ++i) {
        if (i) input.push_back(' ');
        input += window.sentences[i].text;
    }
    if (!input.empty()) input.push_back(' ');
    input += "Question:";
    for (std::size_t i = 0; i < extraction.function_word_index; ++i) {
        input.push_back(' ');
        input += extraction.sentence_tokens[i];
    }
    input += " ?";
    return input;
}

}  // namespace detail

inline std::optional<Example> gen_lpp_gen(const SentenceWindow& window,
                                          const WordSet& function_words) {
    assert(window.size() >= 3);
    auto extraction = extract_last_phrase(window.sentences.back(), function_words);
    if (!extraction) return std::nullopt;
    Example ex;
    ex.task = Task::LPP_GEN;
    ex.input_text = detail::lpp_question_input(window, *extraction);
    ex.output_text = extraction->phrase;
    ex.meta = {{"doc_id", window.doc_id},
               {"window_start", window.start_index},
               {"function_word", extraction->function_word()}};
    return ex;
}

// Phrases seen in a shard, grouped by their leading function word. Negative
// answers for classification LPP are drawn from the same function word.
class PhrasePool {
public:
    void add(const std::string& function_word, const std::string& phrase) {
        pool_[function_word].push_back(phrase);
    }

    // Uniform over entries under `function_word` that differ from `gold`.
    template <class RngT>
    std::optional<std::string> sample_negative(const std::string& function_word,
                                               const std::string& gold, RngT& rng) const {
        auto it = pool_.find(function_word);
        if (it == pool_.end()) return std::nullopt;
        std::vector<const std::string*> candidates;
        for (const auto& p : it->second)
            if (p != gold) candidates.push_back(&p);
        if (candidates.empty()) return std::nullopt;
        return *candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [_, v] : pool_) n += v.size();
        return n;
    }

private:
    std::unordered_map<std::string, std::vector<std::string>> pool_;
};

// Everything about a classification LPP example except the label strings;
// the label scheme is bound per instance at packing time.
struct LppClsProto {
    std::string input_text;
    bool positive = false;
    nlohmann::json meta = nlohmann::json::object();
};

// Positive with probability 1/2; negatives are drawn from the pool under the
// gold phrase's function word. Returns nullopt when extraction fails or a
// needed negative is unavailable.
template <class RngT>
std::optional<LppClsProto> gen_lpp_cls_proto(const SentenceWindow& window,
                                             const PhrasePool& negative_pool, RngT& rng,
                                             const WordSet& function_words) {
    assert(window.size() >= 3);
    auto extraction = extract_last_phrase(window.sentences.back(), function_words);
    if (!extraction) return std::nullopt;

    const bool positive = rng.bernoulli(0.5);
    std::string candidate;
    if (positive) {
        candidate = extraction->phrase;
    } else {
        auto negative =
            negative_pool.sample_negative(extraction->function_word(), extraction->phrase, rng);
        if (!negative) return std::nullopt;
        candidate = *negative;
    }

    LppClsProto proto;
    proto.positive = positive;
    proto.input_text = detail::lpp_question_input(window, *extraction) + " Answer: " + candidate;
    proto.meta = {{"doc_id", window.doc_id},
                  {"window_start", window.start_index},
                  {"function_word", extraction->function_word()},
                  {"gold", extraction->phrase},
                  {"candidate", candidate},
                  {"positive", positive}};
    return proto;
}

// class_labels[0] answers the positive class.
inline Example finish_lpp_cls(const LppClsProto& proto, const LabelScheme& scheme) {
    assert(scheme.class_labels.size() == 2);
    Example ex;
    ex.task = Task::LPP_CLS;
    ex.input_text = proto.input_text;
    ex.output_text = proto.positive ? scheme.class_labels[0] : scheme.class_labels[1];
    ex.meta = proto.meta;
    ex.meta["scheme_id"] = scheme.scheme_id;
    ex.meta["labels"] = scheme.class_labels;
    return ex;
}

// Binary task: is the appended answer the correct last phrase?
template <class RngT>
std::optional<Example> gen_lpp_cls(const SentenceWindow& window, const PhrasePool& negative_pool,
                                   const LabelScheme& scheme, RngT& rng,
                                   const WordSet& function_words) {
    auto proto = gen_lpp_cls_proto(window, negative_pool, rng, function_words);
    if (!proto) return std::nullopt;
    return finish_lpp_cls(*proto, scheme);
}

// ------------------------------------------------------------------
// CL

enum class ClClass { Original, Shuffled, DifferentDoc, MultiDoc };

inline std::string_view cl_class_name(ClClass c) {
    switch (c) {
        case ClClass::Original: return "original";
        case ClClass::Shuffled: return "shuffled";
        case ClClass::DifferentDoc: return "different_doc";
        case ClClass::MultiDoc: return "multi_doc";
    }
    return "?";
}

inline std::optional<ClClass> cl_class_from_name(std::string_view name) {
    if (name == "original") return ClClass::Original;
    if (name == "shuffled") return ClClass::Shuffled;
    if (name == "different_doc") return ClClass::DifferentDoc;
    if (name == "multi_doc") return ClClass::MultiDoc;
    return std::nullopt;
}

// {original} plus one or two of the other input types, uniformly.
template <class RngT>
std::vector<ClClass> pick_cl_classes(RngT& rng) {
    static const std::array<ClClass, 3> extras = {ClClass::Shuffled, ClClass::DifferentDoc,
                                                  ClClass::MultiDoc};
    std::vector<ClClass> out = {ClClass::Original};
    const std::size_t count = 1 + static_cast<std::size_t>(rng.below(2));
    for (std::size_t idx : sample_indices(rng, extras.size(), count)) out.push_back(extras[idx]);
    return out;
}

struct ClInput {
    ClClass cls;
    std::string text;
    nlohmann::json meta = nlohmann::json::object();
};

// Supplies n consecutive sentences from some document other than `exclude`.
class OtherDocSource {
public:
    explicit OtherDocSource(const std::vector<Document>* docs) : docs_(docs) {}

    template <class RngT>
    std::optional<std::pair<const Document*, std::size_t>> pick(std::size_t n,
                                                                const std::string& exclude,
                                                                RngT& rng) const {
        std::vector<const Document*> eligible;
        for (const auto& d : *docs_)
            if (d.doc_id != exclude && d.sentence_count() >= n) eligible.push_back(&d);
        if (eligible.empty()) return std::nullopt;
        const Document* doc = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
        std::size_t start =
            static_cast<std::size_t>(rng.below(doc->sentence_count() - n + 1));
        return std::make_pair(doc, start);
    }

private:
    const std::vector<Document>* docs_;
};

// The input texts for one window under a fixed class set. Returns nullopt
// (caller counts a warning) when no other document can supply sentences.
template <class RngT>
std::optional<std::vector<ClInput>> build_cl_inputs(const SentenceWindow& window,
                                                    const OtherDocSource& others,
                                                    const std::vector<ClClass>& classes,
                                                    RngT& rng) {
    const std::size_t n = window.size();
    assert(n >= 4);
    std::vector<ClInput> out;
    out.reserve(classes.size());
    for (ClClass cls : classes) {
        ClInput input;
        input.cls = cls;
        switch (cls) {
            case ClClass::Original: {
                input.text = window.joined_text();
                input.meta = {{"doc_id", window.doc_id}, {"start", window.start_index}, {"n", n}};
                break;
            }
            case ClClass::Shuffled: {
                auto is_identity = [](const std::vector<std::size_t>& p) {
                    for (std::size_t i = 0; i < p.size(); ++i)
                        if (p[i] != i) return false;
                    return true;
                };
                std::vector<std::size_t> perm(n);
                for (std::size_t i = 0; i < n; ++i) perm[i] = i;
                do {
                    shuffle(rng, perm);
                } while (is_identity(perm));
                std::string text;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i) text.push_back(' ');
                    text += window.sentences[perm[i]].text;
                }
                input.text = std::move(text);
                input.meta = {{"doc_id", window.doc_id},
                              {"start", window.start_index},
                              {"perm", perm}};
                break;
            }
            case ClClass::DifferentDoc: {
                auto picked = others.pick(n, window.doc_id, rng);
                if (!picked) return std::nullopt;
                auto [doc, start] = *picked;
                std::string text;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i) text.push_back(' ');
                    text += doc->sentences[start + i].text;
                }
                input.text = std::move(text);
                input.meta = {{"src_doc", doc->doc_id}, {"src_start", start}, {"n", n}};
                break;
            }
            case ClClass::MultiDoc: {
                const std::size_t replaced = (n + 1) / 2;  // ceil(n/2)
                const std::size_t kept = n - replaced;
                auto picked = others.pick(replaced, window.doc_id, rng);
                if (!picked) return std::nullopt;
                auto [doc, start] = *picked;
                std::string text;
                for (std::size_t i = 0; i < kept; ++i) {
                    if (i) text.push_back(' ');
                    text += window.sentences[i].text;
                }
                for (std::size_t i = 0; i < replaced; ++i) {
                    if (!text.empty()) text.push_back(' ');
                    text += doc->sentences[start + i].text;
                }
                input.text = std::move(text);
                input.meta = {{"doc_id", window.doc_id},
                              {"start", window.start_index},
                              {"kept", kept},
                              {"src_doc", doc->doc_id},
                              {"src_start", start},
                              {"replaced", replaced}};
                break;
            }
        }
        out.push_back(std::move(input));
    }
    return out;
}

// Variant that draws the class set itself.
template <class RngT>
std::optional<std::vector<ClInput>> build_cl_inputs(const SentenceWindow& window,
                                                    const OtherDocSource& others, RngT& rng) {
    return build_cl_inputs(window, others, pick_cl_classes(rng), rng);
}

// A scheme of matching arity plus a uniform bijection class -> label string,
// fixed for a whole instance.
struct ClAssignment {
    LabelScheme scheme;
    std::vector<ClClass> classes;
    std::vector<std::string> labels;  // labels[i] is the label of classes[i]

    const std::string& label_for(ClClass cls) const {
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == cls) return labels[i];
        throw std::out_of_range("class not in assignment");
    }
};

template <class RngT>
ClAssignment assign_labels(const std::vector<ClClass>& class_tags, RngT& rng) {
    if (class_tags.size() != 2 && class_tags.size() != 3)
        throw std::invalid_argument("assign_labels expects 2 or 3 classes");
    ClAssignment out;
    out.scheme = sample_label_scheme(class_tags.size(), rng);
    out.classes = class_tags;
    out.labels = out.scheme.class_labels;
    shuffle(rng, out.labels);
    return out;
}

// ------------------------------------------------------------------
// DAE / GSG

struct DaeConfig {
    double mask_rate = 0.15;
    bool permute_sentences = true;
};

// Input: window with round(mask_rate * tokens) tokens masked and sentence
// order permuted; output: the original window text.
template <class RngT>
Example gen_dae(const SentenceWindow& window, RngT& rng, const DaeConfig& cfg = {}) {
    assert(window.size() >= 3);
    const std::size_t total = window.token_count();
    const std::size_t mask_count =
        static_cast<std::size_t>(std::llround(cfg.mask_rate * static_cast<double>(total)));

    std::vector<std::size_t> positions;
    std::string symbol;
    if (mask_count > 0) {
        positions = sample_indices(rng, total, mask_count);
        symbol = sample_mask_symbol(rng);
    }

    // Mask by global token position, then permute sentence order.
    std::vector<std::vector<std::string>> sentence_tokens;
    sentence_tokens.reserve(window.size());
    for (const auto& s : window.sentences) sentence_tokens.push_back(s.tokens);
    std::size_t base = 0, si = 0;
    auto pos_it = positions.begin();
    for (auto& toks : sentence_tokens) {
        while (pos_it != positions.end() && *pos_it < base + toks.size()) {
            toks[*pos_it - base] = symbol;
            ++pos_it;
        }
        base += toks.size();
        ++si;
    }

    std::vector<std::size_t> order(window.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.permute_sentences) shuffle(rng, order);

    std::string input;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) input.push_back(' ');
        input += join_tokens(sentence_tokens[order[i]]);
    }

    Example ex;
    ex.task = Task::DAE;
    ex.input_text = std::move(input);
    ex.output_text = window.joined_text();
    ex.meta = {{"doc_id", window.doc_id},
               {"window_start", window.start_index},
               {"positions", positions},
               {"order", order}};
    if (!symbol.empty()) ex.meta["symbol"] = symbol;
    return ex;
}

// One sentence, chosen uniformly, is replaced by a single mask symbol token;
// the output is the removed sentence.
template <class RngT>
Example gen_gsg(const SentenceWindow& window, RngT& rng) {
    assert(window.size() >= 3);
    const std::size_t gap = static_cast<std::size_t>(rng.below(window.size()));
    const std::string& symbol = sample_mask_symbol(rng);
    std::string input;
    for (std::size_t i = 0; i < window.size(); ++i) {
        if (i) input.push_back(' ');
        input += (i == gap) ? symbol : window.sentences[i].text;
    }
    Example ex;
    ex.task = Task::GSG;
    ex.input_text = std::move(input);
    ex.output_text = window.sentences[gap].text;
    ex.meta = {{"doc_id", window.doc_id},
               {"window_start", window.start_index},
               {"gap_index", gap},
               {"symbol", symbol}};
    return ex;
}

// ------------------------------------------------------------------
// Label corruption

inline bool is_classification_task(Task t) {
    return t == Task::LPP_CLS || t == Task::CL || t == Task::SOP || t == Task::NSP;
}

struct CorruptStats {
    std::size_t corrupted = 0;
    std::size_t singleton_shards = 0;
};

// Random-label training variant. Classification outputs are uniform draws
// from the example's own label set (meta["labels"]); generative outputs are
// swapped with a uniformly chosen output from the same task's shard (self
// included, so a corrupted output differs from gold with probability
// (m-1)/m for shard size m). Examples must all share one task.
template <class RngT>
CorruptStats corrupt_labels(std::vector<Example>& shard_examples, RngT& rng) {
    CorruptStats stats;
    if (shard_examples.empty()) return stats;
    const Task task = shard_examples.front().task;
    if (is_classification_task(task)) {
        for (auto& ex : shard_examples) {
            const auto& labels = ex.meta.at("labels");
            ex.output_text =
                labels.at(static_cast<std::size_t>(rng.below(labels.size()))).get<std::string>();
            ++stats.corrupted;
        }
    } else {
        if (shard_examples.size() == 1) {
            ++stats.singleton_shards;
            return stats;
        }
        std::vector<std::string> outputs;
        outputs.reserve(shard_examples.size());
        for (const auto& ex : shard_examples) outputs.push_back(ex.output_text);
        for (auto& ex : shard_examples) {
            ex.output_text = outputs[static_cast<std::size_t>(rng.below(outputs.size()))];
            ++stats.corrupted;
        }
    }
    return stats;
}

}  // namespace selfsup
