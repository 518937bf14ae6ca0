#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "selfsup/corpus.hpp"
#include "selfsup/rng.hpp"
#include "selfsup/taskgen.hpp"
#include "selfsup/wordlists.hpp"

namespace test_support {

// Replays a fixed queue of draw results; below(bound) pops the next value.
// Bounds <= 1 do not consume, matching selfsup::Rng.
class ScriptedRng {
public:
    explicit ScriptedRng(std::vector<std::uint64_t> values)
        : values_(values.begin(), values.end()) {}

    std::uint64_t next() { return pop(); }

    std::uint64_t below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        return pop() % bound;
    }

    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double unit() {
        return static_cast<double>(pop() % 1000000) / 1000000.0;
    }

    bool bernoulli(double p) { return unit() < p; }

    bool exhausted() const { return values_.empty(); }

private:
    std::uint64_t pop() {
        if (values_.empty()) return 0;
        std::uint64_t v = values_.front();
        values_.pop_front();
        return v;
    }
    std::deque<std::uint64_t> values_;
};

inline selfsup::Sentence sent(const std::string& text) {
    return selfsup::Sentence::from_text(text);
}

inline selfsup::SentenceWindow make_window(const std::vector<std::string>& texts,
                                           const std::string& doc_id = "doc0",
                                           std::size_t start = 0) {
    selfsup::SentenceWindow w;
    w.doc_id = doc_id;
    w.start_index = start;
    for (const auto& t : texts) w.sentences.push_back(sent(t));
    return w;
}

inline selfsup::Document make_doc(const std::string& id,
                                  const std::vector<std::string>& sentence_texts,
                                  const std::string& domain = "default") {
    selfsup::Document doc;
    doc.doc_id = id;
    doc.domain = domain;
    for (const auto& t : sentence_texts) doc.sentences.push_back(sent(t));
    return doc;
}

// Deterministic synthetic corpus. Sentences mix content words with function
// words so LPP extraction has dense pools; sentence and document lengths
// vary with the seed.
inline std::vector<std::string> synthetic_sentences(std::uint64_t seed, std::size_t count) {
    static const std::vector<std::string> subjects = {
        "the miller", "a traveler",  "the old clay kiln", "her brother",
        "the harbor", "this valley", "the night train",   "an engineer",
        "the market", "the garden",  "a gray heron",      "the archive"};
    static const std::vector<std::string> verbs = {
        "carried", "watched",  "repaired", "followed", "painted", "measured",
        "crossed", "gathered", "weighed",  "signaled", "opened",  "counted"};
    static const std::vector<std::string> objects = {
        "grain from the fields",   "maps of the coastline", "lamps for the cellar",
        "letters to the station",  "salt from the quarry",  "ropes for the bridge",
        "tools from the workshop", "wool for the winter",   "books about the river",
        "stones for the wall",     "nets from the pier",    "clocks for the tower"};
    // every function-word bucket that can anchor a phrase has at least two
    // distinct completions, so LPP negative pools are never degenerate
    static const std::vector<std::string> tails = {
        "before dawn",        "before sunrise",     "after nightfall",   "after midnight",
        "during winter",      "during supper",      "without any warning", "without much hope",
        "under the old roof", "under a pale sky",   "with great care",   "with borrowed tools",
        "in early spring",    "in plain sight",     "by candle light",   "by sheer luck",
        "within the hour",    "for good measure",   "for safe keeping",  "near the crossing",
        "at the far gate",    "at high tide",       "at great length",   "in a dry month"};

    std::vector<std::string> out;
    selfsup::Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        std::string s = subjects[rng.below(subjects.size())] + " " +
                        verbs[rng.below(verbs.size())] + " " +
                        objects[rng.below(objects.size())];
        if (rng.bernoulli(0.7)) s += " " + tails[rng.below(tails.size())];
        s += " .";
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<selfsup::Document> synthetic_corpus(std::uint64_t seed, std::size_t docs,
                                                       std::size_t min_sentences = 6,
                                                       std::size_t max_sentences = 24,
                                                       const std::string& domain = "default") {
    std::vector<selfsup::Document> out;
    selfsup::Rng rng(seed);
    for (std::size_t d = 0; d < docs; ++d) {
        const std::size_t n =
            min_sentences + rng.below(max_sentences - min_sentences + 1);
        out.push_back(make_doc(domain + "-" + std::to_string(d),
                               synthetic_sentences(rng.next(), n), domain));
    }
    return out;
}

// Brute-force last-phrase oracle: scan every token position, keep function
// word positions, take the last, then apply the second-half rule over the
// punctuation-free length. Independent of the library implementation.
inline std::optional<std::pair<std::size_t, std::string>> brute_force_last_phrase(
    const std::vector<std::string>& tokens, const selfsup::WordSet& function_words) {
    if (tokens.empty()) return std::nullopt;
    std::size_t content_len = tokens.size();
    if (selfsup::is_all_punct(tokens.back())) --content_len;
    if (content_len == 0) return std::nullopt;

    std::vector<std::size_t> hits;
    for (std::size_t i = 0; i < content_len; ++i) {
        std::string low = tokens[i];
        for (char& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (function_words.contains(low)) hits.push_back(i);
    }
    if (hits.empty()) return std::nullopt;
    const std::size_t last = hits.back();
    if (last < (content_len + 1) / 2) return std::nullopt;

    std::vector<std::string> phrase(tokens.begin() + static_cast<std::ptrdiff_t>(last),
                                    tokens.begin() + static_cast<std::ptrdiff_t>(content_len));
    if (!phrase.empty()) {
        phrase.back() = selfsup::strip_terminal_punct(phrase.back());
        if (phrase.back().empty()) phrase.pop_back();
    }
    if (phrase.empty()) return std::nullopt;
    return std::make_pair(last, selfsup::join_tokens(phrase));
}

}  // namespace test_support
