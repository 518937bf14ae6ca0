#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "selfsup/pretrain_pairs.hpp"
#include "support.hpp"

using namespace selfsup;
using test_support::ScriptedRng;

TEST_CASE("sample_ngram_length follows p(n) = (1/n)/H_N") {
    NgramMaskConfig cfg;  // N = 3

    SECTION("exact thresholds") {
        // p(1)=6/11, p(2)=3/11, p(3)=2/11; cumulative 0.5455, 0.8182
        ScriptedRng low({0});
        CHECK(sample_ngram_length(cfg, low) == 1);
        ScriptedRng mid({600000});
        CHECK(sample_ngram_length(cfg, mid) == 2);
        ScriptedRng high({900000});
        CHECK(sample_ngram_length(cfg, high) == 3);
    }
    SECTION("degenerate N=1") {
        NgramMaskConfig one{1, 0.15};
        Rng rng(1);
        for (int i = 0; i < 100; ++i) CHECK(sample_ngram_length(one, rng) == 1);
    }
    SECTION("empirical frequencies at 200k draws") {
        Rng rng(77);
        std::map<std::size_t, std::size_t> counts;
        const std::size_t rounds = 200000;
        for (std::size_t i = 0; i < rounds; ++i) ++counts[sample_ngram_length(cfg, rng)];
        const auto probs = ngram_length_probs(3);
        for (std::size_t n = 1; n <= 3; ++n) {
            const double freq = static_cast<double>(counts[n]) / static_cast<double>(rounds);
            CHECK(std::abs(freq - probs[n - 1]) < 0.005);
        }
    }
}

TEST_CASE("plan_masks respects budget, span length, and separation") {
    NgramMaskConfig cfg;
    Rng rng(13);
    for (int round = 0; round < 1000; ++round) {
        MaskPlan plan = plan_masks(100, cfg, rng);
        const std::size_t masked = plan.masked_total();
        CHECK(masked >= 13);
        CHECK(masked <= 15);
        std::size_t prev_end = 0;
        bool first = true;
        for (const auto& [start, len] : plan.spans) {
            CHECK(len >= 1);
            CHECK(len <= 3);
            CHECK(start + len <= 100);
            if (!first) CHECK(start > prev_end);  // separated, never merged
            prev_end = start + len;
            first = false;
        }
    }
}

TEST_CASE("plan_masks on one token masks at most one token") {
    NgramMaskConfig cfg;
    Rng rng(5);
    for (int round = 0; round < 200; ++round) {
        MaskPlan plan = plan_masks(1, cfg, rng);
        CHECK(plan.spans.size() <= 1);
        CHECK(plan.masked_total() <= 1);
        for (const auto& [_, len] : plan.spans) CHECK(len == 1);
    }
}

TEST_CASE("plan_masks never crosses the segment boundary") {
    NgramMaskConfig cfg;
    Rng rng(21);
    for (int round = 0; round < 500; ++round) {
        const std::size_t total = 40 + rng.below(200);
        const std::size_t boundary = 1 + rng.below(total - 1);
        MaskPlan plan = plan_masks(total, cfg, rng, boundary);
        for (const auto& [start, len] : plan.spans)
            CHECK((start + len <= boundary || start >= boundary));
    }
}

namespace {

Document pair_doc() {
    return test_support::make_doc(
        "pair-doc", {"The mill turned slowly in the wind .", "Grain arrived before dawn .",
                     "The miller counted sacks by lamplight .", "Carts waited near the gate .",
                     "The road stayed empty until noon ."});
}

}  // namespace

TEST_CASE("make_pair pinned traces") {
    Document doc = pair_doc();
    PairConfig cfg;  // max_len 512

    SECTION("SOP negative equals the positive counterpart with segments swapped") {
        // draws: short-rule bernoulli, cut below(taken-1), label bernoulli
        std::size_t consumed = 0;
        ScriptedRng pos_rng({500000, 1, 0});
        auto positive = make_pair(doc, 0, nullptr, PairVariant::SOP, pos_rng, cfg, &consumed);
        ScriptedRng neg_rng({500000, 1, 999999});
        auto negative = make_pair(doc, 0, nullptr, PairVariant::SOP, neg_rng, cfg, &consumed);
        REQUIRE(positive.has_value());
        REQUIRE(negative.has_value());
        CHECK(positive->label == PairLabel::Positive);
        CHECK(negative->label == PairLabel::Negative);
        CHECK(positive->seg_a == negative->seg_b);
        CHECK(positive->seg_b == negative->seg_a);
    }
    SECTION("positive segments are adjacent document tokens") {
        std::size_t consumed = 0;
        ScriptedRng rng({500000, 2, 0});
        auto pair = make_pair(doc, 0, nullptr, PairVariant::SOP, rng, cfg, &consumed);
        REQUIRE(pair.has_value());
        std::vector<std::string> all = pair->seg_a;
        all.insert(all.end(), pair->seg_b.begin(), pair->seg_b.end());
        std::vector<std::string> expected;
        for (const auto& s : doc.sentences)
            expected.insert(expected.end(), s.tokens.begin(), s.tokens.end());
        CHECK(all == expected);
        CHECK(consumed == doc.sentence_count());
    }
    SECTION("swap twice is the identity") {
        std::size_t consumed = 0;
        ScriptedRng rng({500000, 1, 0});
        auto pair = make_pair(doc, 0, nullptr, PairVariant::SOP, rng, cfg, &consumed);
        REQUIRE(pair.has_value());
        auto copy = *pair;
        swap_segments(copy);
        swap_segments(copy);
        CHECK(copy.seg_a == pair->seg_a);
        CHECK(copy.seg_b == pair->seg_b);
    }
    SECTION("insufficient length is skipped") {
        Document tiny = test_support::make_doc("tiny", {"Only one sentence here ."});
        std::size_t consumed = 0;
        Rng rng(1);
        CHECK(!make_pair(tiny, 0, nullptr, PairVariant::SOP, rng, cfg, &consumed).has_value());
        CHECK(consumed >= 1);
    }
}

TEST_CASE("pair statistics over a synthetic corpus") {
    auto docs = test_support::synthetic_corpus(41, 400, 10, 30);
    OtherDocSource partners(&docs);
    PairConfig cfg;
    cfg.max_len = 64;  // keep pairs small so every document yields several

    std::size_t pairs = 0, positives = 0, short_rule = 0, nsp_negatives = 0;
    for (auto variant : {PairVariant::SOP, PairVariant::NSP}) {
        for (const auto& doc : docs) {
            Rng rng(derive_seed(7, variant == PairVariant::SOP ? "t/sop" : "t/nsp", doc.doc_id));
            std::size_t offset = 0;
            while (offset + 2 <= doc.sentence_count()) {
                std::size_t consumed = 0;
                auto pair = make_pair(doc, offset, &partners, variant, rng, cfg, &consumed);
                offset += std::max<std::size_t>(consumed, 1);
                if (!pair) continue;
                ++pairs;
                CHECK(pair->total_tokens() <= cfg.max_len);
                CHECK(!pair->seg_a.empty());
                CHECK(!pair->seg_b.empty());
                if (pair->label == PairLabel::Positive) ++positives;
                if (pair->short_rule) ++short_rule;
                if (variant == PairVariant::NSP && pair->label == PairLabel::Negative) {
                    ++nsp_negatives;
                    CHECK(pair->meta["doc_a"].get<std::string>() !=
                          pair->meta["doc_b"].get<std::string>());
                }
            }
        }
    }
    REQUIRE(pairs > 2000);
    const double pos_frac = static_cast<double>(positives) / static_cast<double>(pairs);
    CHECK(std::abs(pos_frac - 0.5) < 0.03);
    const double short_frac = static_cast<double>(short_rule) / static_cast<double>(pairs);
    CHECK(std::abs(short_frac - 0.10) < 0.02);
    CHECK(nsp_negatives > 200);
}

TEST_CASE("mlm examples carry a valid mask plan") {
    auto docs = test_support::synthetic_corpus(43, 40, 10, 20);
    NgramMaskConfig mask_cfg;
    PairConfig pair_cfg;
    pair_cfg.max_len = 96;
    pair_cfg.positive_prob = 1.0;
    std::size_t made = 0;
    for (const auto& doc : docs) {
        Rng rng(derive_seed(9, "t/mlm", doc.doc_id));
        std::size_t offset = 0;
        while (offset + 2 <= doc.sentence_count()) {
            std::size_t consumed = 0;
            auto pair = make_pair(doc, offset, nullptr, PairVariant::SOP, rng, pair_cfg, &consumed);
            offset += std::max<std::size_t>(consumed, 1);
            if (!pair) continue;
            auto ex = make_mlm_example(*pair, mask_cfg, rng);
            if (!ex) continue;
            ++made;
            const std::size_t boundary = ex->meta["seg_boundary"].get<std::size_t>();
            const std::size_t total = ex->meta["total_tokens"].get<std::size_t>();
            CHECK(total == pair->total_tokens());

            std::vector<std::string> all = pair->seg_a;
            all.insert(all.end(), pair->seg_b.begin(), pair->seg_b.end());
            std::vector<std::string> covered;
            std::size_t masked = 0;
            for (const auto& span : ex->meta["mask_spans"]) {
                const std::size_t start = span.at(0).get<std::size_t>();
                const std::size_t len = span.at(1).get<std::size_t>();
                CHECK(len <= mask_cfg.max_n);
                CHECK(start + len <= total);
                CHECK((start + len <= boundary || start >= boundary));
                masked += len;
                for (std::size_t i = start; i < start + len; ++i) covered.push_back(all[i]);
            }
            CHECK(masked <= static_cast<std::size_t>(
                                std::ceil(mask_cfg.mask_budget * static_cast<double>(total))));
            CHECK(join_tokens(covered) == ex->output_text);
            CHECK(ex->input_text == render_pair_text(*pair));
        }
    }
    CHECK(made > 50);
}

TEST_CASE("span length histogram converges to p(n)") {
    NgramMaskConfig cfg;
    Rng rng(271828);
    std::map<std::size_t, std::size_t> lengths;
    std::size_t spans = 0;
    while (spans < 200000) {
        MaskPlan plan = plan_masks(100, cfg, rng);
        for (const auto& [_, len] : plan.spans) {
            ++lengths[len];
            ++spans;
        }
    }
    const auto probs = ngram_length_probs(3);
    double ks = 0.0, emp = 0.0, truth = 0.0;
    for (std::size_t n = 1; n <= 3; ++n) {
        emp += static_cast<double>(lengths[n]) / static_cast<double>(spans);
        truth += probs[n - 1];
        ks = std::max(ks, std::abs(emp - truth));
    }
    CHECK(ks < 0.01);
}
