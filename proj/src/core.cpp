#include "geo/core.hpp"

#include <numeric>

namespace geo {

const std::set<std::string>& tag_categories() {
    static const std::set<std::string> kCategories = {
        "difficulty-level", "nature-of-query", "genre",    "specific-topics",
        "sensitivity",      "user-intent",     "answer-type"};
    return kCategories;
}

int ParsedResponse::total_word_count() const {
    int total = 0;
    for (const auto& s : sentences) total += s.word_count;
    return total;
}

std::vector<std::string> validate_entry(const BenchmarkEntry& entry) {
    std::vector<std::string> violations;

    if (entry.query.id.empty())
        violations.push_back("query.id is empty");
    if (entry.query.text.empty())
        violations.push_back("query.text is empty");
    for (const auto& [category, label] : entry.query.tags) {
        if (!tag_categories().count(category))
            violations.push_back("unknown tag category: " + category);
        (void)label;
    }
    if (!entry.query.split.empty() && entry.query.split != "train" &&
        entry.query.split != "validation" && entry.query.split != "test")
        violations.push_back("unknown split: " + entry.query.split);

    if (entry.sources.empty())
        violations.push_back("entry has no sources");
    if (entry.sources.size() > 5)
        violations.push_back("entry has more than 5 sources");

    // serp_rank must be a permutation of 1..k
    std::set<int> seen;
    const int k = static_cast<int>(entry.sources.size());
    for (const auto& src : entry.sources) {
        if (src.content.empty())
            violations.push_back("source " + src.id + " has empty content");
        if (src.serp_rank < 1 || src.serp_rank > k) {
            violations.push_back("source " + src.id + " serp_rank " +
                                 std::to_string(src.serp_rank) +
                                 " outside 1.." + std::to_string(k));
        } else if (!seen.insert(src.serp_rank).second) {
            violations.push_back("duplicate serp_rank " +
                                 std::to_string(src.serp_rank));
        }
    }

    if (entry.target_source_index) {
        const int t = *entry.target_source_index;
        if (t < 1 || t > k)
            violations.push_back("target_source_index " + std::to_string(t) +
                                 " does not index a source");
    }
    return violations;
}

}  // namespace geo
