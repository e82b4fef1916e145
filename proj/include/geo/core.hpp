#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace geo {

/// The seven tag categories a query may carry. Unknown categories are
/// rejected at corpus load.
const std::set<std::string>& tag_categories();

struct Query {
    std::string id;
    std::string text;
    std::map<std::string, std::string> tags;  // category -> label
    std::string split;                        // train | validation | test
    std::optional<std::string> personalization;  // opaque, never interpreted
};

struct SourceDocument {
    std::string id;
    std::string url;
    std::string title;
    std::string content;  // cleaned plain text
    int serp_rank = 0;    // 1..5
};

struct Sentence {
    int position = 0;  // 1-based within the response
    std::string text;  // citation markers stripped
    int word_count = 0;
    std::set<int> citations;  // 1-based source indices
};

struct ParsedResponse {
    std::vector<Sentence> sentences;
    int num_sources = 0;
    std::string raw_text;

    int total_word_count() const;
};

struct BenchmarkEntry {
    Query query;
    std::vector<SourceDocument> sources;  // ordered by serp_rank
    std::optional<int> target_source_index;  // 1-based, set by the harness
};

/// Checks every type invariant; returns human-readable violations
/// (empty means the entry is valid). Pure.
std::vector<std::string> validate_entry(const BenchmarkEntry& entry);

}  // namespace geo
