#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/core.hpp"
#include "geo/engine.hpp"
#include "geo/metrics.hpp"

namespace geo {

class JudgeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The seven judged facets of citation prominence, in canonical order.
const std::vector<std::string>& subjective_sub_metrics();

struct SubjectiveScores {
    // source index -> sub-metric -> score; every source in 1..num_sources
    std::map<int, std::map<std::string, double>> per_source;
    std::map<int, double> average;  // mean of the seven facets
};

struct JudgeConfig {
    int samples_per_metric = 3;
    int scale_min = 1;
    int scale_max = 5;
    // sub-metric -> template with {query}, {response}, {source_index}
    std::map<std::string, std::string> rubric_templates;

    JudgeConfig();
};

/// Default form-filling rubric templates for the seven facets.
std::map<std::string, std::string> default_rubric_templates();

/// Scores every cited source on all seven facets by sampling the completer
/// on each rubric prompt; uncited sources score 0 everywhere.
SubjectiveScores judge_response(const Query& query,
                                const ParsedResponse& parsed,
                                const JudgeConfig& config,
                                Completer& completer);

/// First integer or decimal found in a judge completion, if any.
std::optional<double> parse_judge_score(const std::string& completion);

struct CalibratedBatch {
    std::vector<double> values;
    bool degenerate = false;  // subjective variance was zero
};

/// Affine rescaling of a score batch to a reference mean/variance
/// (population moments). Order-preserving when the batch has spread.
CalibratedBatch calibrate_batch(const std::vector<double>& subjective,
                                double reference_mean,
                                double reference_variance);

/// Batch-level calibration of subjective averages against a reference
/// impression distribution, per source. Output parallels the input list.
std::vector<SubjectiveScores> calibrate(
    const std::vector<SubjectiveScores>& subjective,
    const std::vector<ImpressionScores>& reference, bool* degenerate_flag);

}  // namespace geo
