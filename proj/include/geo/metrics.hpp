#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/core.hpp"

namespace geo {

enum class MetricFamily { kWordCount, kPositionAdjusted, kSubjective };

std::string to_string(MetricFamily m);

struct ImpressionScores {
    MetricFamily metric = MetricFamily::kWordCount;
    std::map<int, double> raw;         // source index -> value
    std::map<int, double> normalized;  // sums to 1 (or all zero)
    int total_response_words = 0;
};

struct AggregatedImpression {
    std::map<int, double> per_source_mean;
    int num_samples = 0;
    int num_seeds = 1;
};

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Normalized word count of sentences citing each source. A sentence cited
/// by multiple sources shares its word count equally among them.
ImpressionScores word_count_impression(const ParsedResponse& parsed);

/// Word-count impression with each sentence's contribution damped by
/// exp(-position / num_sentences), so earlier sentences weigh more.
ImpressionScores position_adjusted_impression(const ParsedResponse& parsed);

/// Percent change (after - before) / before * 100. Throws MetricError when
/// before == 0; callers exclude and count those cases.
double relative_improvement(double before, double after);

/// Mean of normalized scores across repeated samples of the same response.
AggregatedImpression aggregate_samples(const std::vector<ImpressionScores>& runs);

}  // namespace geo
