#pragma once

#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace selfsup {

// Function words that anchor last-phrase extraction, list v1.
// Mirrored one-per-line in data/function_words.txt; a config path may
// substitute a different list.
inline const std::vector<std::string>& default_function_words() {
    static const std::vector<std::string> words = {
        "the", "a", "an", "for", "including", "and", "in", "is", "are", "were",
        "was", "neither", "or", "nor", "be", "at", "on", "by", "to", "would",
        "will", "before", "after", "of", "about", "from", "excluding", "except",
        "during", "under", "above", "then", "into", "onto", "should", "shall",
        "must", "may", "might", "than", "with", "using", "can", "could", "as",
        "within", "without", "have", "had", "been",
    };
    return words;
}

// Abbreviation guard for the sentence segmenter, list v1. A trailing period
// after one of these never ends a sentence. Single initials ("A.", "B.") are
// deliberately absent; they do end sentences.
inline const std::vector<std::string>& default_abbreviations() {
    static const std::vector<std::string> words = {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.", "vs.",
        "etc.", "e.g.", "i.e.", "cf.", "al.", "fig.", "no.", "vol.", "pp.",
        "inc.", "ltd.", "co.", "corp.", "dept.", "est.", "approx.",
        "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.",
        "sept.", "oct.", "nov.", "dec.",
        "mon.", "tue.", "wed.", "thu.", "fri.", "sat.", "sun.",
        "u.s.", "u.k.", "a.m.", "p.m.", "ph.d.",
    };
    return words;
}

// One entry per line; blank lines and lines starting with '#' are skipped.
inline std::vector<std::string> load_wordlist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open word list: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        out.push_back(line);
    }
    return out;
}

class WordSet {
public:
    WordSet() = default;
    explicit WordSet(const std::vector<std::string>& words)
        : words_(words.begin(), words.end()) {}

    bool contains(std::string_view w) const {
        return words_.find(std::string(w)) != words_.end();
    }
    bool empty() const { return words_.empty(); }

private:
    std::set<std::string, std::less<>> words_;
};

}  // namespace selfsup
