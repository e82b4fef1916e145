#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "geo/core.hpp"
#include "geo/engine.hpp"
#include "geo/judge.hpp"
#include "geo/methods.hpp"
#include "geo/metrics.hpp"

namespace geo {

class HarnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    enum class Mode { kSingleTarget, kAllOptimized, kCombination };

    std::vector<GeoMethodName> methods;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    std::vector<MetricFamily> metric_families = {
        MetricFamily::kWordCount, MetricFamily::kPositionAdjusted};
    Mode mode = Mode::kSingleTarget;
    std::vector<std::pair<GeoMethodName, GeoMethodName>> method_pairs;
    std::string corpus_path;
    EngineConfig engine;
    JudgeConfig judge;
    int parallelism = 1;
    int top_k_tags = 3;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);

    void validate() const;
    bool has_family(MetricFamily f) const;
};

std::string to_string(ExperimentConfig::Mode mode);

struct MethodMetricStats {
    double mean_improvement_pct = 0.0;
    double std_improvement_pct = 0.0;  // across seeds
    double mean_absolute_impression = 0.0;
    int included = 0;
    int excluded_zero_baseline = 0;
};

struct ExperimentResult {
    ExperimentConfig::Mode mode = ExperimentConfig::Mode::kSingleTarget;
    // method -> metric family name -> stats
    std::map<std::string, std::map<std::string, MethodMetricStats>> per_method;
    // method -> tag category -> label -> mean improvement (position-adjusted)
    std::map<std::string, std::map<std::string, std::map<std::string, double>>>
        per_tag;
    // method -> serp rank -> mean improvement (all-optimized mode)
    std::map<std::string, std::map<int, double>> per_rank;
    // "m1+m2" -> mean improvement (combination mode)
    std::map<std::string, double> pair_matrix;
    // method -> sub-metric (or "average") -> mean calibrated score
    std::map<std::string, std::map<std::string, double>> subjective_columns;
    int excluded_zero_baseline_count = 0;
    int total_query_runs = 0;   // query x seed attempts
    int failed_query_runs = 0;
    bool degraded = false;      // failure rate above 10%
    bool calibration_degenerate = false;
    double max_zero_sum_residual = 0.0;  // all-optimized mode
    nlohmann::json per_seed_raw;

    nlohmann::json to_json() const;
};

struct HarnessDeps {
    Completer* completer = nullptr;
    Rewriter* rewriter = nullptr;
    CompletionCache* cache = nullptr;
};

nlohmann::json entry_to_json(const BenchmarkEntry& entry);
BenchmarkEntry entry_from_json(const nlohmann::json& j);

/// Line-delimited JSON corpus, one entry per line after a schema_version
/// header line. Malformed or invalid lines abort the load with line numbers.
std::vector<BenchmarkEntry> load_corpus(const std::string& path);

/// Deterministic uniform draw keyed by (seed, query id); 1-based. The same
/// target is used across every method within a run.
int select_target_source(const BenchmarkEntry& entry, std::uint64_t seed);

ExperimentResult run_single_target(const ExperimentConfig& config,
                                   const std::vector<BenchmarkEntry>& corpus,
                                   HarnessDeps& deps);
ExperimentResult run_all_optimized(const ExperimentConfig& config,
                                   const std::vector<BenchmarkEntry>& corpus,
                                   HarnessDeps& deps);
ExperimentResult run_combination(const ExperimentConfig& config,
                                 const std::vector<BenchmarkEntry>& corpus,
                                 HarnessDeps& deps);

/// Loads the corpus, dispatches on config.mode, and persists the run
/// directory (config snapshot, per-seed raw tables, reports).
ExperimentResult run_experiment(const ExperimentConfig& config,
                                HarnessDeps& deps,
                                const std::string& run_dir);

/// Per-method tags ranked by mean improvement, ties broken lexicographically.
std::map<std::string, std::vector<std::pair<std::string, double>>>
tag_breakdown(const ExperimentResult& result, int top_k);

/// format is one of "json", "csv", "markdown".
std::string emit_report(const ExperimentResult& result,
                        const std::string& format);

void persist_run(const ExperimentConfig& config,
                 const ExperimentResult& result, const std::string& run_dir);

}  // namespace geo
