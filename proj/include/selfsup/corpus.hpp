#pragma once

#include <cctype>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "selfsup/rng.hpp"
#include "selfsup/wordlists.hpp"

namespace selfsup {

inline bool is_space_byte(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Collapse whitespace runs to single spaces and trim the ends. Input is
// expected to be NFC-normalized UTF-8 already; bytes are otherwise untouched.
inline std::string normalize_whitespace(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_space_byte(c)) {
            pending_space = !out.empty();
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

// Token = maximal non-whitespace run.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space_byte(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !is_space_byte(text[i])) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

struct Sentence {
    std::string text;                 // normalized; joining tokens with single
    std::vector<std::string> tokens;  // spaces reproduces text exactly

    static Sentence from_text(std::string_view text) {
        Sentence s;
        s.text = normalize_whitespace(text);
        s.tokens = tokenize(s.text);
        return s;
    }
};

struct Document {
    std::string doc_id;
    std::string domain;
    std::vector<Sentence> sentences;

    std::size_t sentence_count() const { return sentences.size(); }
};

struct SentenceWindow {
    std::string doc_id;
    std::size_t start_index = 0;
    std::vector<Sentence> sentences;

    std::size_t size() const { return sentences.size(); }
    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& s : sentences) n += s.tokens.size();
        return n;
    }
    // All window tokens in document order.
    std::vector<std::string> flat_tokens() const {
        std::vector<std::string> out;
        out.reserve(token_count());
        for (const auto& s : sentences)
            out.insert(out.end(), s.tokens.begin(), s.tokens.end());
        return out;
    }
    std::string joined_text() const {
        std::string out;
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            if (i) out.push_back(' ');
            out += sentences[i].text;
        }
        return out;
    }
};

inline bool is_terminal_punct(char c) { return c == '.' || c == '!' || c == '?'; }

inline bool is_all_punct(std::string_view tok) {
    if (tok.empty()) return false;
    for (char c : tok) {
        if (std::isalnum(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

// Rule-based sentence segmenter. A sentence break is a terminal punctuation
// mark {., !, ?}, optionally followed by closing quotes/brackets, then
// whitespace, then an uppercase letter, opening quote, or digit — unless the
// word ending at a '.' is on the abbreviation guard list.
class SentenceSegmenter {
public:
    SentenceSegmenter() : abbreviations_(default_abbreviations()) {}
    explicit SentenceSegmenter(const std::vector<std::string>& abbreviations)
        : abbreviations_(abbreviations) {}

    std::vector<std::string> segment(std::string_view raw) const {
        const std::string text = normalize_whitespace(raw);
        std::vector<std::string> pieces;
        if (text.empty()) return pieces;

        std::size_t start = 0;
        std::size_t i = 0;
        while (i < text.size()) {
            if (is_terminal_punct(text[i]) && !(text[i] == '.' && is_abbreviation(text, i))) {
                std::size_t j = i + 1;
                while (j < text.size() && is_closer(text[j])) ++j;
                if (j < text.size() && text[j] == ' ' && j + 1 < text.size() &&
                    starts_sentence(text, j + 1)) {
                    pieces.push_back(text.substr(start, j - start));
                    start = j + 1;
                    i = j + 1;
                    continue;
                }
            }
            ++i;
        }
        if (start < text.size()) pieces.push_back(text.substr(start));

        // A short trailing fragment without terminal punctuation belongs to
        // the preceding sentence; pieces closed by a real break stand alone.
        std::vector<std::string> out;
        for (auto& piece : pieces) {
            std::vector<std::string> toks = tokenize(piece);
            bool ends_terminal = !piece.empty() && is_sentence_final(piece);
            if (!out.empty() && toks.size() < 2 && !ends_terminal) {
                out.back() += ' ';
                out.back() += piece;
            } else {
                out.push_back(std::move(piece));
            }
        }
        return out;
    }

    std::vector<Sentence> segment_sentences(std::string_view raw) const {
        std::vector<Sentence> out;
        for (auto& text : segment(raw)) out.push_back(Sentence::from_text(text));
        return out;
    }

private:
    static bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

    static bool starts_sentence(const std::string& text, std::size_t pos) {
        unsigned char c = static_cast<unsigned char>(text[pos]);
        if (std::isupper(c) || std::isdigit(c)) return true;
        if (c == '"' || c == '\'') return true;
        // opening typographic quotes U+201C / U+2018
        if (c == 0xe2 && pos + 2 < text.size()) {
            unsigned char b1 = static_cast<unsigned char>(text[pos + 1]);
            unsigned char b2 = static_cast<unsigned char>(text[pos + 2]);
            if (b1 == 0x80 && (b2 == 0x9c || b2 == 0x98)) return true;
        }
        return false;
    }

    static bool is_sentence_final(std::string_view piece) {
        std::size_t end = piece.size();
        while (end > 0 && is_closer(piece[end - 1])) --end;
        return end > 0 && is_terminal_punct(piece[end - 1]);
    }

    bool is_abbreviation(const std::string& text, std::size_t dot) const {
        std::size_t begin = dot;
        while (begin > 0 && text[begin - 1] != ' ') --begin;
        std::string word = text.substr(begin, dot - begin + 1);
        for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return abbreviations_.contains(word);
    }

    WordSet abbreviations_;
};

// ------------------------------------------------------------------
// Ingestion

struct IngestStats {
    std::size_t documents = 0;
    std::size_t skipped_empty = 0;
    std::size_t skipped_malformed = 0;
    std::size_t duplicate_ids = 0;

    std::size_t warnings() const { return skipped_empty + skipped_malformed + duplicate_ids; }
};

namespace detail {

class DocIdAllocator {
public:
    // Supplied id, or 64-bit content hash as hex; "#<ordinal>" appended on
    // collision so ids stay unique within the run.
    std::string allocate(const std::optional<std::string>& supplied, std::string_view text,
                         bool* was_duplicate) {
        std::string base = supplied ? *supplied : to_hex(fnv1a64(text));
        std::string id = base;
        std::size_t ordinal = 0;
        while (!seen_.insert(id).second) {
            ++ordinal;
            id = base + "#" + std::to_string(ordinal);
        }
        if (was_duplicate) *was_duplicate = ordinal > 0;
        return id;
    }

private:
    std::unordered_set<std::string> seen_;
};

}  // namespace detail

// One JSON record per line: {"text": "...", "id": "...", "domain": "..."},
// id and domain optional. Malformed or empty-text lines are skipped and
// counted.
template <class Sink>
IngestStats ingest_jsonl(std::istream& in, const SentenceSegmenter& segmenter,
                         const std::string& default_domain, Sink&& sink) {
    IngestStats stats;
    detail::DocIdAllocator ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object() || !rec.contains("text") ||
            !rec["text"].is_string()) {
            ++stats.skipped_malformed;
            continue;
        }
        std::string text = normalize_whitespace(rec["text"].get<std::string>());
        if (text.empty()) {
            ++stats.skipped_empty;
            continue;
        }
        Document doc;
        doc.sentences = segmenter.segment_sentences(text);
        if (doc.sentences.empty()) {
            ++stats.skipped_empty;
            continue;
        }
        std::optional<std::string> supplied;
        if (rec.contains("id") && rec["id"].is_string()) supplied = rec["id"].get<std::string>();
        bool dup = false;
        doc.doc_id = ids.allocate(supplied, text, &dup);
        if (dup) ++stats.duplicate_ids;
        doc.domain = (rec.contains("domain") && rec["domain"].is_string())
                         ? rec["domain"].get<std::string>()
                         : default_domain;
        ++stats.documents;
        sink(std::move(doc));
    }
    return stats;
}

// Plain-text mode: blank-line-separated blocks, one document each.
template <class Sink>
IngestStats ingest_plain(std::istream& in, const SentenceSegmenter& segmenter,
                         const std::string& default_domain, Sink&& sink) {
    IngestStats stats;
    detail::DocIdAllocator ids;
    std::string line;
    std::string block;
    auto flush = [&] {
        std::string text = normalize_whitespace(block);
        block.clear();
        if (text.empty()) return;
        Document doc;
        doc.sentences = segmenter.segment_sentences(text);
        if (doc.sentences.empty()) {
            ++stats.skipped_empty;
            return;
        }
        bool dup = false;
        doc.doc_id = ids.allocate(std::nullopt, text, &dup);
        if (dup) ++stats.duplicate_ids;
        doc.domain = default_domain;
        ++stats.documents;
        sink(std::move(doc));
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (normalize_whitespace(line).empty()) {
            flush();
        } else {
            block += line;
            block.push_back('\n');
        }
    }
    flush();
    return stats;
}

// ------------------------------------------------------------------
// Windows

// Consecutive, non-overlapping sentence windows with lengths drawn uniformly
// in [min_window, max_window]; a trailing remainder shorter than min_window
// is dropped. stride > 0 overrides the non-overlap default: windows then
// start every `stride` sentences.
template <class RngT>
std::vector<SentenceWindow> windows(const Document& doc, std::size_t min_window,
                                    std::size_t max_window, RngT& rng, std::size_t stride = 0) {
    std::vector<SentenceWindow> out;
    std::size_t offset = 0;
    while (offset + min_window <= doc.sentences.size()) {
        std::size_t remaining = doc.sentences.size() - offset;
        std::size_t len = min_window + static_cast<std::size_t>(
                                           rng.below(max_window - min_window + 1));
        if (len > remaining) len = remaining;
        SentenceWindow w;
        w.doc_id = doc.doc_id;
        w.start_index = offset;
        w.sentences.assign(doc.sentences.begin() + static_cast<std::ptrdiff_t>(offset),
                           doc.sentences.begin() + static_cast<std::ptrdiff_t>(offset + len));
        out.push_back(std::move(w));
        offset += stride > 0 ? stride : len;
    }
    return out;
}

// ------------------------------------------------------------------
// Subsampling

// Bernoulli keep at min(ratio, 1); for ratio > 1 every document is kept once
// and duplicated with probability ratio - 1 (doc_id suffixed "+dup").
// Per-document seeding keeps the result independent of worker count.
inline std::vector<Document> subsample(const std::vector<Document>& docs, double ratio,
                                       std::uint64_t global_seed) {
    if (ratio <= 0.0 || ratio > 2.0)
        throw std::invalid_argument("subsample ratio must be in (0, 2]");
    std::vector<Document> out;
    out.reserve(docs.size());
    for (const auto& doc : docs) {
        Rng rng(derive_seed(global_seed, "subsample", doc.doc_id));
        if (ratio <= 1.0) {
            if (ratio >= 1.0 || rng.bernoulli(ratio)) out.push_back(doc);
        } else {
            out.push_back(doc);
            if (rng.bernoulli(ratio - 1.0)) {
                Document dup = doc;
                dup.doc_id += "+dup";
                out.push_back(std::move(dup));
            }
        }
    }
    return out;
}

}  // namespace selfsup
