#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/core.hpp"

namespace geo {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ParserConfig {
    enum class OutOfRangePolicy { kDrop, kError };

    OutOfRangePolicy out_of_range_policy = OutOfRangePolicy::kDrop;
    // Entries must end with '.'; matched case-sensitively against the token
    // preceding a candidate split point.
    std::set<std::string> abbreviation_list = {"e.g.", "i.e.", "Dr.",  "Mr.",
                                               "Ms.",  "vs.",  "etc.", "U.S."};
};

/// Splits text into sentences at '.', '!', '?' followed by whitespace and an
/// uppercase letter or digit (or end of text). Abbreviations and decimal
/// numbers do not split. Newline-separated bullet/list items are independent
/// sentences.
std::vector<std::string> segment_sentences(const std::string& text,
                                           const ParserConfig& config);

struct CitationExtraction {
    std::string clean_text;
    std::set<int> citations;
};

/// Strips bracketed citation markers ("[1][2]" runs and "[1, 2, 3]" comma
/// form) from a raw sentence. Out-of-range indices are dropped or raise
/// ParseError per config.
CitationExtraction extract_citations(const std::string& raw_sentence,
                                     int num_sources,
                                     const ParserConfig& config);

/// Number of whitespace-delimited tokens containing at least one letter or
/// digit. Punctuation-only tokens do not count.
int count_words(const std::string& clean_text);

/// Full pipeline: segment, extract citations, count words. A marker run
/// appearing after sentence-final punctuation attaches to the preceding
/// sentence. Sentences whose clean text is empty are dropped.
ParsedResponse parse_response(const std::string& text, int num_sources,
                              const ParserConfig& config);

}  // namespace geo
