#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfsup/corpus.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/taskgen.hpp"

namespace selfsup {

struct NgramMaskConfig {
    std::size_t max_n = 3;
    double mask_budget = 0.15;

    bool valid() const { return max_n >= 1 && mask_budget > 0.0 && mask_budget < 0.5; }
};

// p(n) = (1/n) / sum_{k=1..N} 1/k. For N=3: 6/11, 3/11, 2/11.
inline std::vector<double> ngram_length_probs(std::size_t max_n) {
    double z = 0.0;
    for (std::size_t k = 1; k <= max_n; ++k) z += 1.0 / static_cast<double>(k);
    std::vector<double> p(max_n);
    for (std::size_t n = 1; n <= max_n; ++n)
        p[n - 1] = (1.0 / static_cast<double>(n)) / z;
    return p;
}

template <class RngT>
std::size_t sample_ngram_length(const NgramMaskConfig& cfg, RngT& rng) {
    if (!cfg.valid()) throw std::invalid_argument("invalid n-gram mask config");
    if (cfg.max_n == 1) return 1;
    const double u = rng.unit();
    double acc = 0.0;
    double z = 0.0;
    for (std::size_t k = 1; k <= cfg.max_n; ++k) z += 1.0 / static_cast<double>(k);
    for (std::size_t n = 1; n < cfg.max_n; ++n) {
        acc += (1.0 / static_cast<double>(n)) / z;
        if (u < acc) return n;
    }
    return cfg.max_n;
}

struct MaskPlan {
    // (start, length) over token positions, disjoint and non-adjacent.
    std::vector<std::pair<std::size_t, std::size_t>> spans;

    std::size_t masked_total() const {
        std::size_t n = 0;
        for (const auto& [_, len] : spans) n += len;
        return n;
    }
};

// Draws span lengths from p(n) and places each uniformly among starts whose
// span neither overlaps nor touches an existing span (adjacent spans would
// merge into a longer n-gram) nor crosses `segment_boundary`. Spans are
// placed only while a max_n-length span is guaranteed to fit in the
// remaining budget, so placed lengths stay distributed exactly per p(n);
// sampled spans are never truncated and the budget ceil(mask_budget*len)
// is never exceeded.
template <class RngT>
MaskPlan plan_masks(std::size_t token_count, const NgramMaskConfig& cfg, RngT& rng,
                    std::optional<std::size_t> segment_boundary = std::nullopt) {
    if (!cfg.valid()) throw std::invalid_argument("invalid n-gram mask config");
    MaskPlan plan;
    if (token_count == 0) return plan;
    const std::size_t cap = static_cast<std::size_t>(
        std::ceil(cfg.mask_budget * static_cast<double>(token_count)));

    std::vector<bool> blocked(token_count, false);  // span positions plus their neighbors
    std::size_t masked = 0;
    std::vector<std::size_t> starts;
    while (masked + cfg.max_n <= cap) {
        const std::size_t n = sample_ngram_length(cfg, rng);
        starts.clear();
        for (std::size_t s = 0; s + n <= token_count; ++s) {
            if (segment_boundary && s < *segment_boundary && s + n > *segment_boundary) continue;
            bool ok = true;
            for (std::size_t i = s; i < s + n && ok; ++i) ok = !blocked[i];
            if (ok) starts.push_back(s);
        }
        if (starts.empty()) break;
        const std::size_t s = starts[static_cast<std::size_t>(rng.below(starts.size()))];
        plan.spans.emplace_back(s, n);
        const std::size_t lo = s > 0 ? s - 1 : 0;
        const std::size_t hi = std::min(token_count, s + n + 1);
        for (std::size_t i = lo; i < hi; ++i) blocked[i] = true;
        masked += n;
    }
    std::sort(plan.spans.begin(), plan.spans.end());
    return plan;
}

// ------------------------------------------------------------------
// Segment pairs

enum class PairVariant { SOP, NSP };
enum class PairLabel { Positive, Negative };

inline std::string_view pair_variant_name(PairVariant v) {
    return v == PairVariant::SOP ? "sop" : "nsp";
}
inline std::string_view pair_label_name(PairLabel l) {
    return l == PairLabel::Positive ? "positive" : "negative";
}

struct SegmentPairExample {
    std::vector<std::string> seg_a;
    std::vector<std::string> seg_b;
    PairLabel label = PairLabel::Positive;
    PairVariant variant = PairVariant::SOP;
    bool short_rule = false;  // target length drawn below max_len
    nlohmann::json meta = nlohmann::json::object();

    std::size_t total_tokens() const { return seg_a.size() + seg_b.size(); }
};

// The SOP negative transformation; applying it twice is the identity.
inline void swap_segments(SegmentPairExample& pair) { std::swap(pair.seg_a, pair.seg_b); }

struct PairConfig {
    std::size_t max_len = 512;  // budget over seg_a + seg_b tokens
    double short_prob = 0.10;
    double positive_prob = 0.5;
};

struct PartnerSegment {
    std::string doc_id;
    std::size_t start_sentence = 0;
    std::vector<std::string> tokens;
};

// Sentence-aligned stretch from another document, at most `budget` tokens.
// A handful of attempts; the caller skips the pair when none fits.
template <class RngT>
std::optional<PartnerSegment> pick_partner_segment(const OtherDocSource& partners,
                                                   const std::string& exclude,
                                                   std::size_t budget, RngT& rng) {
    for (int attempt = 0; attempt < 8; ++attempt) {
        auto picked = partners.pick(1, exclude, rng);
        if (!picked) return std::nullopt;
        auto [doc, start] = *picked;
        PartnerSegment seg;
        seg.doc_id = doc->doc_id;
        seg.start_sentence = start;
        for (std::size_t i = start; i < doc->sentence_count(); ++i) {
            const auto& toks = doc->sentences[i].tokens;
            if (!seg.tokens.empty() && seg.tokens.size() + toks.size() > budget) break;
            if (seg.tokens.empty() && toks.size() > budget) break;
            seg.tokens.insert(seg.tokens.end(), toks.begin(), toks.end());
        }
        if (!seg.tokens.empty()) return seg;
    }
    return std::nullopt;
}

// Result of one pair construction attempt; `consumed` tells the caller how
// many sentences to advance regardless of success.
template <class RngT>
std::optional<SegmentPairExample> make_pair(const Document& doc, std::size_t start_sentence,
                                            const OtherDocSource* partners, PairVariant variant,
                                            RngT& rng, const PairConfig& cfg,
                                            std::size_t* consumed) {
    // Draw order: short rule, (target), cut, label, NSP partner draws.
    const bool short_rule = rng.bernoulli(cfg.short_prob);
    std::size_t target = cfg.max_len;
    if (short_rule && cfg.max_len > 2)
        target = 2 + static_cast<std::size_t>(rng.below(cfg.max_len - 2));  // [2, max_len-1]

    // A short target never blocks the two-sentence minimum; only the hard
    // max_len cap can make a stretch infeasible.
    std::size_t taken = 0;
    std::size_t total = 0;
    while (start_sentence + taken < doc.sentence_count()) {
        const std::size_t next = doc.sentences[start_sentence + taken].tokens.size();
        if (total + next > cfg.max_len) break;
        if (taken >= 2 && total + next > target) break;
        total += next;
        ++taken;
        if (taken >= 2 && total >= target) break;
    }
    if (consumed) *consumed = std::max<std::size_t>(taken, 1);
    if (taken < 2) return std::nullopt;

    const std::size_t cut = 1 + static_cast<std::size_t>(rng.below(taken - 1));
    SegmentPairExample pair;
    pair.variant = variant;
    pair.short_rule = short_rule;
    for (std::size_t i = 0; i < taken; ++i) {
        auto& seg = i < cut ? pair.seg_a : pair.seg_b;
        const auto& toks = doc.sentences[start_sentence + i].tokens;
        seg.insert(seg.end(), toks.begin(), toks.end());
    }
    pair.label = rng.bernoulli(cfg.positive_prob) ? PairLabel::Positive : PairLabel::Negative;
    pair.meta = {{"doc_a", doc.doc_id},
                 {"doc_b", doc.doc_id},
                 {"start_sentence", start_sentence},
                 {"cut_sentence", start_sentence + cut},
                 {"short_rule", short_rule}};

    if (pair.label == PairLabel::Negative) {
        if (variant == PairVariant::SOP) {
            swap_segments(pair);
        } else {
            if (!partners) return std::nullopt;
            const std::size_t budget = std::max(target, total) - pair.seg_a.size();
            auto partner = pick_partner_segment(*partners, doc.doc_id, budget, rng);
            if (!partner) return std::nullopt;
            pair.seg_b = std::move(partner->tokens);
            pair.meta["doc_b"] = partner->doc_id;
            pair.meta["partner_start"] = partner->start_sentence;
        }
    }
    return pair;
}

// "[CLS] x1 [SEP] x2 [SEP]" with symbolic markers; marker tokens are not
// counted against max_len.
inline std::string render_pair_text(const SegmentPairExample& pair) {
    std::string out = "[CLS] ";
    out += join_tokens(pair.seg_a);
    out += " [SEP] ";
    out += join_tokens(pair.seg_b);
    out += " [SEP]";
    return out;
}

inline Example pair_to_example(const SegmentPairExample& pair) {
    Example ex;
    ex.task = pair.variant == PairVariant::SOP ? Task::SOP : Task::NSP;
    ex.input_text = render_pair_text(pair);
    ex.output_text = std::string(pair_label_name(pair.label));
    ex.meta = pair.meta;
    ex.meta["variant"] = pair_variant_name(pair.variant);
    ex.meta["label"] = pair_label_name(pair.label);
    ex.meta["seg_a_len"] = pair.seg_a.size();
    ex.meta["seg_b_len"] = pair.seg_b.size();
    ex.meta["labels"] = std::vector<std::string>{"positive", "negative"};
    return ex;
}

// MLM record: original pair text plus the mask plan; the trainer applies the
// masks. Spans are offsets into the concatenated segment tokens (markers
// excluded) and never cross the segment boundary. Returns nullopt when the
// plan is empty (output_text must be non-empty).
template <class RngT>
std::optional<Example> make_mlm_example(const SegmentPairExample& pair,
                                        const NgramMaskConfig& cfg, RngT& rng) {
    const std::size_t total = pair.total_tokens();
    MaskPlan plan = plan_masks(total, cfg, rng, pair.seg_a.size());
    if (plan.spans.empty()) return std::nullopt;

    std::vector<std::string> all = pair.seg_a;
    all.insert(all.end(), pair.seg_b.begin(), pair.seg_b.end());
    std::vector<std::string> covered;
    for (const auto& [start, len] : plan.spans)
        for (std::size_t i = start; i < start + len; ++i) covered.push_back(all[i]);

    Example ex;
    ex.task = Task::MLM;
    ex.input_text = render_pair_text(pair);
    ex.output_text = join_tokens(covered);
    ex.meta = pair.meta;
    ex.meta["seg_boundary"] = pair.seg_a.size();
    ex.meta["total_tokens"] = total;
    auto spans = nlohmann::json::array();
    for (const auto& [start, len] : plan.spans) spans.push_back({start, len});
    ex.meta["mask_spans"] = std::move(spans);
    return ex;
}

}  // namespace selfsup
