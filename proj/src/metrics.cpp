#include "geo/metrics.hpp"

#include <cmath>

namespace geo {
namespace {

ImpressionScores score_with_weight(const ParsedResponse& parsed,
                                   MetricFamily metric, bool position_decay) {
    ImpressionScores scores;
    scores.metric = metric;
    scores.total_response_words = parsed.total_word_count();
    for (int c = 1; c <= parsed.num_sources; ++c) {
        scores.raw[c] = 0.0;
        scores.normalized[c] = 0.0;
    }
    if (scores.total_response_words == 0) return scores;

    const double num_sentences = static_cast<double>(parsed.sentences.size());
    for (const auto& s : parsed.sentences) {
        if (s.citations.empty()) continue;  // denominator only
        const double weight =
            position_decay ? std::exp(-s.position / num_sentences) : 1.0;
        const double share =
            static_cast<double>(s.word_count) / s.citations.size();
        for (int c : s.citations) scores.raw[c] += share * weight;
    }
    double total = 0.0;
    for (auto& [c, v] : scores.raw) {
        v /= scores.total_response_words;
        total += v;
    }
    if (total > 0.0)
        for (auto& [c, v] : scores.raw) scores.normalized[c] = v / total;
    return scores;
}

}  // namespace

std::string to_string(MetricFamily m) {
    switch (m) {
        case MetricFamily::kWordCount: return "word_count";
        case MetricFamily::kPositionAdjusted: return "position_adjusted";
        case MetricFamily::kSubjective: return "subjective";
    }
    return "unknown";
}

ImpressionScores word_count_impression(const ParsedResponse& parsed) {
    return score_with_weight(parsed, MetricFamily::kWordCount, false);
}

ImpressionScores position_adjusted_impression(const ParsedResponse& parsed) {
    return score_with_weight(parsed, MetricFamily::kPositionAdjusted, true);
}

double relative_improvement(double before, double after) {
    if (before == 0.0)
        throw MetricError("relative improvement undefined for zero baseline");
    return (after - before) / before * 100.0;
}

AggregatedImpression aggregate_samples(
    const std::vector<ImpressionScores>& runs) {
    if (runs.empty())
        throw MetricError("aggregate_samples requires at least one run");
    AggregatedImpression agg;
    agg.num_samples = static_cast<int>(runs.size());
    for (const auto& [c, v] : runs.front().normalized)
        agg.per_source_mean[c] = 0.0;
    for (const auto& run : runs) {
        if (run.normalized.size() != agg.per_source_mean.size())
            throw MetricError("aggregate_samples: mismatched key sets");
        for (const auto& [c, v] : run.normalized) agg.per_source_mean[c] += v;
    }
    for (auto& [c, v] : agg.per_source_mean) v /= agg.num_samples;
    return agg;
}

}  // namespace geo
