#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "selfsup/packer.hpp"
#include "selfsup/utf8.hpp"
#include "support.hpp"

using namespace selfsup;

namespace {

Example simple_example(Task task, std::string input, std::string output) {
    Example ex;
    ex.task = task;
    ex.input_text = std::move(input);
    ex.output_text = std::move(output);
    return ex;
}

// input/output sized so the rendered whitespace token count is exact:
// tokens("Input: " + in) = 1 + in_tokens, likewise for output.
Example sized_example(std::size_t rendered_tokens, const std::string& tag) {
    REQUIRE(rendered_tokens >= 4);
    const std::size_t in_tokens = rendered_tokens / 2 - 1;
    const std::size_t out_tokens = rendered_tokens - in_tokens - 2;
    std::string in, out;
    for (std::size_t i = 0; i < in_tokens; ++i) in += (i ? " i" : "i") + tag;
    for (std::size_t i = 0; i < out_tokens; ++i) out += (i ? " o" : "o") + tag;
    return simple_example(Task::NSG, in, out);
}

}  // namespace

TEST_CASE("utf8 codepoint helpers") {
    const std::string s = "a⟨b⟩c";  // 5 codepoints, 9 bytes
    CHECK(codepoint_length(s) == 5);
    CHECK(codepoint_slice(s, 1, 2) == "⟨");
    CHECK(codepoint_slice(s, 0, 5) == s);
    CHECK(codepoint_length("ascii only") == 10);
}

TEST_CASE("render emits the Input/Output template exactly") {
    Example ex = simple_example(Task::NSG, "A. B.", "C.");
    CHECK(render(ex) == "Input: A. B.\nOutput: C.\n");

    auto parsed = parse_rendered(render(ex));
    REQUIRE(parsed.has_value());
    CHECK(parsed->first == "A. B.");
    CHECK(parsed->second == "C.");
}

TEST_CASE("render round-trips arbitrary example text") {
    Rng rng(3);
    for (int round = 0; round < 300; ++round) {
        auto sentences = test_support::synthetic_sentences(rng.next(), 2);
        Example ex = simple_example(Task::NSG, sentences[0], sentences[1]);
        if (rng.bernoulli(0.3)) ex.input_text += " ⟨⟨⟩⟩";
        auto parsed = parse_rendered(render(ex));
        REQUIRE(parsed.has_value());
        CHECK(parsed->first == ex.input_text);
        CHECK(parsed->second == ex.output_text);
    }
}

TEST_CASE("pack greedy closing rule") {
    SECTION("single small example forms one instance") {
        std::vector<Example> examples = {simple_example(Task::NSG, "tiny input", "tiny output")};
        Rng rng(1);
        auto instances = pack(std::move(examples), 2048, default_length_fn(), rng);
        REQUIRE(instances.size() == 1);
        CHECK(instances[0].example_boundaries.size() == 1);
    }
    SECTION("three examples of 1000 tokens pack as [2, 1] under 2048") {
        std::vector<Example> examples;
        for (int i = 0; i < 3; ++i) examples.push_back(sized_example(1000, std::to_string(i)));
        for (const auto& ex : examples)
            REQUIRE(whitespace_token_count(render(ex)) == 1000);
        Rng rng(7);
        auto instances = pack(std::move(examples), 2048, default_length_fn(), rng);
        REQUIRE(instances.size() == 2);
        CHECK(instances[0].example_boundaries.size() == 2);
        CHECK(instances[1].example_boundaries.size() == 1);
    }
    SECTION("oversized examples are skipped with a counted warning") {
        std::vector<Example> examples = {sized_example(3000, "big"),
                                         simple_example(Task::NSG, "small", "ok")};
        Rng rng(2);
        PackStats stats;
        auto instances = pack(std::move(examples), 2048, default_length_fn(), rng, &stats);
        CHECK(stats.oversized_skipped == 1);
        REQUIRE(instances.size() == 1);
        CHECK(instances[0].example_boundaries.size() == 1);
    }
    SECTION("all oversized yields an empty stream") {
        std::vector<Example> examples = {sized_example(3000, "a"), sized_example(2500, "b")};
        Rng rng(2);
        PackStats stats;
        auto instances = pack(std::move(examples), 2048, default_length_fn(), rng, &stats);
        CHECK(instances.empty());
        CHECK(stats.oversized_skipped == 2);
    }
}

TEST_CASE("packed instances decode exactly") {
    Rng rng(11);
    // mix of ascii and multi-byte outputs
    std::vector<Example> examples;
    for (int i = 0; i < 120; ++i) {
        auto sentences = test_support::synthetic_sentences(rng.next(), 2);
        Example ex = simple_example(Task::MWP, sentences[0], sentences[1]);
        if (i % 3 == 0) {
            ex.input_text += " ⟨⟨⟩⟩";
            ex.output_text += " ⟨⟨⟩⟩";
        }
        ex.meta = {{"idx", i}};
        examples.push_back(std::move(ex));
    }
    const auto originals = examples;  // pre-shuffle copies
    Rng pack_rng(5);
    auto instances = pack(std::move(examples), 120, default_length_fn(), pack_rng);
    REQUIRE(instances.size() > 4);

    std::set<int> seen;
    for (const auto& inst : instances) {
        CHECK(whitespace_token_count(inst.text) <= 120);
        REQUIRE(inst.example_boundaries.size() == inst.loss_spans.size());
        REQUIRE(!inst.example_boundaries.empty());
        CHECK(inst.example_boundaries.front().first == 0);
        CHECK(inst.example_boundaries.back().second == codepoint_length(inst.text));
        for (std::size_t i = 0; i < inst.example_boundaries.size(); ++i) {
            const auto [b0, b1] = inst.example_boundaries[i];
            if (i > 0) CHECK(b0 == inst.example_boundaries[i - 1].second);
            const int idx = inst.meta["examples"][i]["idx"].get<int>();
            seen.insert(idx);
            const Example& original = originals[static_cast<std::size_t>(idx)];
            // region reproduces the rendered example bit-exactly
            CHECK(codepoint_slice(inst.text, b0, b1) == render(original));
            // loss span covers exactly the output text
            const auto [l0, l1] = inst.loss_spans[i];
            CHECK(codepoint_slice(inst.text, l0, l1) == original.output_text);
            // and begins right after "Output: "
            const auto region = std::string(codepoint_slice(inst.text, b0, l0));
            CHECK(region.size() >= 9);
            CHECK(region.substr(region.size() - 9) == "\nOutput: ");
        }
    }
    CHECK(seen.size() == originals.size());  // consumed without replacement
}

TEST_CASE("packing is deterministic for a fixed seed") {
    auto build = [] {
        std::vector<Example> examples;
        Rng rng(77);
        for (int i = 0; i < 60; ++i) {
            auto s = test_support::synthetic_sentences(rng.next(), 2);
            examples.push_back(simple_example(Task::NSG, s[0], s[1]));
        }
        return examples;
    };
    Rng a(123), b(123);
    auto first = pack(build(), 200, default_length_fn(), a);
    auto second = pack(build(), 200, default_length_fn(), b);
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].text == second[i].text);
        CHECK(first[i].instance_id == second[i].instance_id);
    }
}

TEST_CASE("instance stats") {
    SECTION("empty stream gives a zeroed report") {
        auto report = instance_stats({}, default_length_fn());
        CHECK(report.instances == 0);
        CHECK(report.examples == 0);
        CHECK(report.mean_examples_per_instance.empty());
    }
    SECTION("single-example instances have mean 1.0") {
        std::vector<PackedInstance> instances;
        for (int i = 0; i < 5; ++i) {
            std::vector<Example> ex = {simple_example(Task::NSG, "in " + std::to_string(i), "out")};
            Rng rng(1);
            auto packed = pack(std::move(ex), 2048, default_length_fn(), rng);
            instances.push_back(packed[0]);
        }
        auto report = instance_stats(instances, default_length_fn());
        CHECK(report.instances == 5);
        CHECK(report.mean_examples_per_instance.at("nsg") == 1.0);
    }
}
