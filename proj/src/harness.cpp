#include "geo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "geo/parser.hpp"

namespace geo {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
}

double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / v.size());
}

// Scores of one generated-and-parsed variant of a query's response set.
struct VariantScores {
    std::map<int, double> wc;    // mean normalized word-count impression
    std::map<int, double> pawc;  // mean normalized position-adjusted
    std::vector<ImpressionScores> pawc_samples;
    // raw subjective facet means for the target source (single-target modes)
    std::map<std::string, double> subj_facets;
    double subj_average = 0.0;
    bool subjective_valid = false;
};

struct QueryRun {
    std::string query_id;
    int target = 0;
    std::map<std::string, std::string> tags;
    std::vector<int> serp_rank_of_source;  // index i -> rank of source i+1
    VariantScores baseline;
    std::map<std::string, VariantScores> variants;
    bool failed = false;
    std::string error;
};

VariantScores evaluate_variant(const Query& query,
                               const std::vector<SourceDocument>& sources,
                               const ExperimentConfig& config,
                               HarnessDeps& deps, int target,
                               bool want_subjective) {
    VariantScores out;
    const auto responses = generate_responses(query, sources, config.engine,
                                              *deps.completer, deps.cache);
    ParserConfig parser_config;  // drop policy: live output is noisy
    std::vector<ImpressionScores> wc_runs, pawc_runs;
    std::vector<SubjectiveScores> judged;
    const int n = static_cast<int>(sources.size());
    for (const auto& response : responses) {
        const ParsedResponse parsed =
            parse_response(response, n, parser_config);
        wc_runs.push_back(word_count_impression(parsed));
        pawc_runs.push_back(position_adjusted_impression(parsed));
        if (want_subjective && !parsed.sentences.empty()) {
            bool any_cited = false;
            for (const auto& s : parsed.sentences)
                if (!s.citations.empty()) any_cited = true;
            if (any_cited)
                judged.push_back(judge_response(query, parsed, config.judge,
                                                *deps.completer));
        }
    }
    out.wc = aggregate_samples(wc_runs).per_source_mean;
    out.pawc = aggregate_samples(pawc_runs).per_source_mean;
    out.pawc_samples = std::move(pawc_runs);
    if (want_subjective && !judged.empty()) {
        for (const auto& name : subjective_sub_metrics()) {
            double s = 0.0;
            for (const auto& j : judged) s += j.per_source.at(target).at(name);
            out.subj_facets[name] = s / judged.size();
        }
        double s = 0.0;
        for (const auto& j : judged) s += j.average.at(target);
        out.subj_average = s / judged.size();
        out.subjective_valid = true;
    }
    return out;
}

std::vector<SourceDocument> rewrite_sources(
    const std::vector<SourceDocument>& sources, const Query& query,
    const std::vector<GeoMethodName>& chain, Rewriter& rewriter,
    int only_index /* 1-based, 0 = all */) {
    std::vector<SourceDocument> out = sources;
    for (size_t i = 0; i < out.size(); ++i) {
        if (only_index != 0 && static_cast<int>(i) + 1 != only_index) continue;
        for (GeoMethodName m : chain) {
            RewriteRequest request;
            request.method = m;
            request.source_content = out[i].content;
            if (m == GeoMethodName::kKeywordStuffing)
                request.query_text = query.text;
            out[i].content = apply_method(request, rewriter);
        }
    }
    return out;
}

// Runs fn(i) for i in [0, n) on config.parallelism threads. Results land in
// caller-owned slots so the merge is independent of completion order.
void parallel_for(int n, int parallelism,
                  const std::function<void(int)>& fn) {
    if (parallelism <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    const int k = std::min(parallelism, n);
    workers.reserve(k);
    for (int w = 0; w < k; ++w)
        workers.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                fn(i);
            }
        });
    for (auto& t : workers) t.join();
}

json run_to_json(const QueryRun& run) {
    json j;
    j["query_id"] = run.query_id;
    j["target"] = run.target;
    if (run.failed) {
        j["failed"] = true;
        j["error"] = run.error;
        return j;
    }
    auto variant_json = [](const VariantScores& v) {
        json vj;
        for (const auto& [c, x] : v.wc)
            vj["word_count"][std::to_string(c)] = x;
        for (const auto& [c, x] : v.pawc)
            vj["position_adjusted"][std::to_string(c)] = x;
        if (v.subjective_valid) {
            for (const auto& [name, x] : v.subj_facets)
                vj["subjective"][name] = x;
            vj["subjective"]["average"] = v.subj_average;
        }
        return vj;
    };
    j["baseline"] = variant_json(run.baseline);
    for (const auto& [name, v] : run.variants)
        j["variants"][name] = variant_json(v);
    return j;
}

struct ImprovementAccumulator {
    // variant -> metric -> seed -> improvements
    std::map<std::string,
             std::map<std::string, std::map<std::uint64_t, std::vector<double>>>>
        by_seed;
    std::map<std::string, std::map<std::string, std::vector<double>>> absolute;
    std::map<std::string, std::map<std::string, int>> excluded;

    void add(const std::string& variant, const std::string& metric,
             std::uint64_t seed, double base, double after) {
        absolute[variant][metric].push_back(after);
        if (base == 0.0) {
            ++excluded[variant][metric];
            return;
        }
        by_seed[variant][metric][seed].push_back(
            relative_improvement(base, after));
    }

    MethodMetricStats stats(const std::string& variant,
                            const std::string& metric) const {
        MethodMetricStats s;
        std::vector<double> seed_means;
        if (auto vit = by_seed.find(variant); vit != by_seed.end()) {
            if (auto mit = vit->second.find(metric); mit != vit->second.end()) {
                for (const auto& [seed, vals] : mit->second) {
                    if (vals.empty()) continue;
                    seed_means.push_back(mean_of(vals));
                    s.included += static_cast<int>(vals.size());
                }
            }
        }
        s.mean_improvement_pct = mean_of(seed_means);
        s.std_improvement_pct = stddev_of(seed_means);
        if (auto vit = absolute.find(variant); vit != absolute.end())
            if (auto mit = vit->second.find(metric); mit != vit->second.end())
                s.mean_absolute_impression = mean_of(mit->second);
        if (auto vit = excluded.find(variant); vit != excluded.end())
            if (auto mit = vit->second.find(metric); mit != vit->second.end())
                s.excluded_zero_baseline = mit->second;
        return s;
    }
};

// Shared driver: evaluates the baseline plus named rewrite chains for every
// (query, seed) and hands each finished QueryRun to the aggregation sink.
std::vector<QueryRun> execute_runs(
    const ExperimentConfig& config, const std::vector<BenchmarkEntry>& corpus,
    HarnessDeps& deps,
    const std::vector<std::pair<std::string, std::vector<GeoMethodName>>>&
        variants,
    bool single_target, json& per_seed_raw) {
    std::vector<QueryRun> all_runs;
    const bool want_subjective =
        config.has_family(MetricFamily::kSubjective) && single_target;

    for (std::uint64_t seed : config.seeds) {
        std::vector<QueryRun> seed_runs(corpus.size());
        parallel_for(
            static_cast<int>(corpus.size()), config.parallelism, [&](int i) {
                const BenchmarkEntry& entry = corpus[i];
                QueryRun& run = seed_runs[i];
                run.query_id = entry.query.id;
                run.tags = entry.query.tags;
                for (const auto& s : entry.sources)
                    run.serp_rank_of_source.push_back(s.serp_rank);
                try {
                    run.target =
                        single_target ? select_target_source(entry, seed) : 0;
                    run.baseline = evaluate_variant(
                        entry.query, entry.sources, config, deps, run.target,
                        want_subjective);
                    for (const auto& [name, chain] : variants) {
                        const auto rewritten = rewrite_sources(
                            entry.sources, entry.query, chain, *deps.rewriter,
                            single_target ? run.target : 0);
                        run.variants[name] = evaluate_variant(
                            entry.query, rewritten, config, deps, run.target,
                            want_subjective);
                    }
                } catch (const std::exception& e) {
                    run.failed = true;
                    run.error = e.what();
                }
            });
        json raw = json::array();
        for (const auto& run : seed_runs) raw.push_back(run_to_json(run));
        per_seed_raw[std::to_string(seed)] = std::move(raw);
        for (auto& run : seed_runs) all_runs.push_back(std::move(run));
    }
    return all_runs;
}

void fill_failure_stats(const std::vector<QueryRun>& runs,
                        ExperimentResult& result) {
    result.total_query_runs = static_cast<int>(runs.size());
    for (const auto& run : runs)
        if (run.failed) ++result.failed_query_runs;
    result.degraded = result.total_query_runs > 0 &&
                      result.failed_query_runs * 10 > result.total_query_runs;
}

// Batch-level subjective calibration against the position-adjusted
// reference distribution, then percent improvements on calibrated averages.
void aggregate_subjective(const ExperimentConfig& config,
                          const std::vector<QueryRun>& runs,
                          const std::vector<std::string>& variant_names,
                          ExperimentResult& result) {
    std::vector<double> reference;
    for (const auto& run : runs) {
        if (run.failed) continue;
        for (const auto& sample : run.baseline.pawc_samples)
            for (const auto& [c, v] : sample.normalized)
                reference.push_back(v);
    }
    if (reference.empty()) return;
    const double ref_mean = mean_of(reference);
    double ref_var = 0.0;
    for (double x : reference)
        ref_var += (x - ref_mean) * (x - ref_mean);
    ref_var /= reference.size();
    if (ref_var <= 0.0) {
        result.calibration_degenerate = true;
        return;
    }

    // ordered batch: baseline first, then each variant, run-major
    struct Cell {
        const VariantScores* scores;
        bool is_baseline;
        std::string variant;
        std::uint64_t seed;  // recovered below
    };
    std::vector<Cell> cells;
    std::vector<std::uint64_t> run_seed(runs.size());
    {  // runs are seed-major in execute_runs order
        const size_t per_seed = runs.size() / config.seeds.size();
        for (size_t i = 0; i < runs.size(); ++i)
            run_seed[i] = config.seeds[per_seed == 0 ? 0 : i / per_seed];
    }
    std::vector<size_t> cell_run;
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (run.failed || !run.baseline.subjective_valid) continue;
        cells.push_back({&run.baseline, true, "", run_seed[i]});
        cell_run.push_back(i);
        for (const auto& name : variant_names) {
            auto it = run.variants.find(name);
            if (it == run.variants.end() || !it->second.subjective_valid)
                continue;
            cells.push_back({&it->second, false, name, run_seed[i]});
            cell_run.push_back(i);
        }
    }
    if (cells.empty()) return;

    auto calibrate_facet = [&](const std::string& facet) {
        std::vector<double> batch;
        for (const auto& cell : cells)
            batch.push_back(facet == "average"
                                ? cell.scores->subj_average
                                : cell.scores->subj_facets.at(facet));
        auto calibrated = calibrate_batch(batch, ref_mean, ref_var);
        result.calibration_degenerate |= calibrated.degenerate;
        return calibrated.values;
    };

    for (const auto& name : subjective_sub_metrics()) {
        const auto values = calibrate_facet(name);
        std::map<std::string, std::pair<double, int>> sums;
        for (size_t i = 0; i < cells.size(); ++i) {
            const std::string key =
                cells[i].is_baseline ? "identity" : cells[i].variant;
            sums[key].first += values[i];
            ++sums[key].second;
        }
        for (const auto& [variant, sum] : sums)
            result.subjective_columns[variant][name] =
                sum.first / sum.second;
    }

    const auto averages = calibrate_facet("average");
    // baseline lookup per run for improvement computation
    std::map<size_t, double> baseline_avg;
    for (size_t i = 0; i < cells.size(); ++i)
        if (cells[i].is_baseline) baseline_avg[cell_run[i]] = averages[i];

    ImprovementAccumulator acc;
    std::map<std::string, std::pair<double, int>> avg_sums;
    for (size_t i = 0; i < cells.size(); ++i) {
        const std::string key =
            cells[i].is_baseline ? "identity" : cells[i].variant;
        avg_sums[key].first += averages[i];
        ++avg_sums[key].second;
        auto bit = baseline_avg.find(cell_run[i]);
        if (bit == baseline_avg.end()) continue;
        acc.add(key, "subjective", cells[i].seed, bit->second, averages[i]);
    }
    for (const auto& [variant, sum] : avg_sums)
        result.subjective_columns[variant]["average"] =
            sum.first / sum.second;
    for (const auto& [variant, sum] : avg_sums) {
        auto stats = acc.stats(variant, "subjective");
        result.per_method[variant]["subjective"] = stats;
        result.excluded_zero_baseline_count += stats.excluded_zero_baseline;
    }
}

}  // namespace

std::string to_string(ExperimentConfig::Mode mode) {
    switch (mode) {
        case ExperimentConfig::Mode::kSingleTarget: return "single_target";
        case ExperimentConfig::Mode::kAllOptimized: return "all_optimized";
        case ExperimentConfig::Mode::kCombination: return "combination";
    }
    return "unknown";
}

bool ExperimentConfig::has_family(MetricFamily f) const {
    return std::find(metric_families.begin(), metric_families.end(), f) !=
           metric_families.end();
}

void ExperimentConfig::validate() const {
    if (mode == Mode::kCombination && method_pairs.empty())
        throw HarnessError("combination mode requires method_pairs");
    if (mode == Mode::kSingleTarget) {
        if (std::find(methods.begin(), methods.end(),
                      GeoMethodName::kIdentity) == methods.end())
            throw HarnessError(
                "single_target mode requires the identity baseline in "
                "methods");
    }
    if (seeds.empty()) throw HarnessError("at least one seed is required");
    if (parallelism < 1) throw HarnessError("parallelism must be positive");
}

json ExperimentConfig::to_json() const {
    json j;
    json methods_json = json::array();
    for (auto m : methods) methods_json.push_back(geo::to_string(m));
    j["methods"] = methods_json;
    j["seeds"] = seeds;
    json families = json::array();
    for (auto f : metric_families) families.push_back(geo::to_string(f));
    j["metric_families"] = families;
    j["mode"] = geo::to_string(mode);
    json pairs = json::array();
    for (const auto& [a, b] : method_pairs)
        pairs.push_back(json::array({geo::to_string(a), geo::to_string(b)}));
    j["method_pairs"] = pairs;
    j["corpus_path"] = corpus_path;
    j["engine"] = {{"num_sources", engine.num_sources},
                   {"num_samples", engine.num_samples},
                   {"temperature", engine.temperature},
                   {"model_name", engine.model_name},
                   {"source_token_budget", engine.source_token_budget},
                   {"retry_budget", engine.retry_budget}};
    j["judge"] = {{"samples_per_metric", judge.samples_per_metric},
                  {"scale_min", judge.scale_min},
                  {"scale_max", judge.scale_max}};
    j["parallelism"] = parallelism;
    j["top_k_tags"] = top_k_tags;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.methods.clear();
    for (const auto& name : j.at("methods")) {
        auto m = method_from_string(name.get<std::string>());
        if (!m)
            throw HarnessError("unknown method in config: " +
                               name.get<std::string>());
        c.methods.push_back(*m);
    }
    if (j.contains("seeds"))
        c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("metric_families")) {
        c.metric_families.clear();
        for (const auto& f : j["metric_families"]) {
            const std::string name = f.get<std::string>();
            if (name == "word_count")
                c.metric_families.push_back(MetricFamily::kWordCount);
            else if (name == "position_adjusted")
                c.metric_families.push_back(MetricFamily::kPositionAdjusted);
            else if (name == "subjective")
                c.metric_families.push_back(MetricFamily::kSubjective);
            else
                throw HarnessError("unknown metric family: " + name);
        }
    }
    if (j.contains("mode")) {
        const std::string mode = j["mode"].get<std::string>();
        if (mode == "single_target")
            c.mode = Mode::kSingleTarget;
        else if (mode == "all_optimized")
            c.mode = Mode::kAllOptimized;
        else if (mode == "combination")
            c.mode = Mode::kCombination;
        else
            throw HarnessError("unknown mode: " + mode);
    }
    if (j.contains("method_pairs")) {
        for (const auto& p : j["method_pairs"]) {
            auto a = method_from_string(p.at(0).get<std::string>());
            auto b = method_from_string(p.at(1).get<std::string>());
            if (!a || !b) throw HarnessError("unknown method in method_pairs");
            c.method_pairs.emplace_back(*a, *b);
        }
    }
    c.corpus_path = j.value("corpus_path", std::string());
    if (j.contains("engine")) {
        const auto& e = j["engine"];
        c.engine.num_sources = e.value("num_sources", c.engine.num_sources);
        c.engine.num_samples = e.value("num_samples", c.engine.num_samples);
        c.engine.temperature = e.value("temperature", c.engine.temperature);
        c.engine.model_name = e.value("model_name", c.engine.model_name);
        c.engine.source_token_budget =
            e.value("source_token_budget", c.engine.source_token_budget);
        c.engine.retry_budget = e.value("retry_budget", c.engine.retry_budget);
    }
    if (j.contains("judge")) {
        const auto& g = j["judge"];
        c.judge.samples_per_metric =
            g.value("samples_per_metric", c.judge.samples_per_metric);
        c.judge.scale_min = g.value("scale_min", c.judge.scale_min);
        c.judge.scale_max = g.value("scale_max", c.judge.scale_max);
    }
    c.parallelism = j.value("parallelism", 1);
    c.top_k_tags = j.value("top_k_tags", 3);
    return c;
}

json entry_to_json(const BenchmarkEntry& entry) {
    json j;
    j["query"]["id"] = entry.query.id;
    j["query"]["text"] = entry.query.text;
    j["query"]["tags"] = entry.query.tags;
    j["query"]["split"] = entry.query.split;
    if (entry.query.personalization)
        j["query"]["personalization"] = *entry.query.personalization;
    j["sources"] = json::array();
    for (const auto& s : entry.sources)
        j["sources"].push_back({{"id", s.id},
                                {"url", s.url},
                                {"title", s.title},
                                {"content", s.content},
                                {"serp_rank", s.serp_rank}});
    if (entry.target_source_index)
        j["target_source_index"] = *entry.target_source_index;
    return j;
}

BenchmarkEntry entry_from_json(const json& j) {
    BenchmarkEntry entry;
    const auto& q = j.at("query");
    entry.query.id = q.at("id").get<std::string>();
    entry.query.text = q.at("text").get<std::string>();
    if (q.contains("tags"))
        entry.query.tags =
            q["tags"].get<std::map<std::string, std::string>>();
    entry.query.split = q.value("split", std::string());
    if (q.contains("personalization"))
        entry.query.personalization = q["personalization"].get<std::string>();
    for (const auto& s : j.at("sources")) {
        SourceDocument doc;
        doc.id = s.at("id").get<std::string>();
        doc.url = s.value("url", std::string());
        doc.title = s.value("title", std::string());
        doc.content = s.at("content").get<std::string>();
        doc.serp_rank = s.at("serp_rank").get<int>();
        entry.sources.push_back(std::move(doc));
    }
    std::sort(entry.sources.begin(), entry.sources.end(),
              [](const SourceDocument& a, const SourceDocument& b) {
                  return a.serp_rank < b.serp_rank;
              });
    if (j.contains("target_source_index"))
        entry.target_source_index = j["target_source_index"].get<int>();
    return entry;
}

std::vector<BenchmarkEntry> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot open corpus file: " + path);
    std::string line;
    std::vector<BenchmarkEntry> entries;
    std::vector<std::string> errors;
    int line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            errors.push_back("line " + std::to_string(line_no) +
                             ": invalid JSON");
            continue;
        }
        if (!header_seen) {
            header_seen = true;
            if (!j.contains("schema_version"))
                throw HarnessError("corpus missing schema_version header");
            if (j["schema_version"].get<int>() != 1)
                throw HarnessError("unrecognized corpus schema_version");
            continue;
        }
        try {
            BenchmarkEntry entry = entry_from_json(j);
            auto violations = validate_entry(entry);
            if (!violations.empty()) {
                for (const auto& v : violations)
                    errors.push_back("line " + std::to_string(line_no) + ": " +
                                     v);
                continue;
            }
            entries.push_back(std::move(entry));
        } catch (const json::exception& e) {
            errors.push_back("line " + std::to_string(line_no) + ": " +
                             e.what());
        }
    }
    if (!errors.empty()) {
        std::string message = "corpus load failed:";
        for (const auto& e : errors) message += "\n  " + e;
        throw HarnessError(message);
    }
    if (!header_seen)
        std::cerr << "warning: corpus file " << path << " is empty\n";
    return entries;
}

int select_target_source(const BenchmarkEntry& entry, std::uint64_t seed) {
    if (entry.sources.empty())
        throw HarnessError("entry has no sources: " + entry.query.id);
    const std::uint64_t key =
        splitmix64(seed * 0x9e3779b97f4a7c15ull ^ fnv1a(entry.query.id));
    return static_cast<int>(key % entry.sources.size()) + 1;
}

ExperimentResult run_single_target(const ExperimentConfig& config,
                                   const std::vector<BenchmarkEntry>& corpus,
                                   HarnessDeps& deps) {
    ExperimentResult result;
    result.mode = ExperimentConfig::Mode::kSingleTarget;

    std::vector<std::pair<std::string, std::vector<GeoMethodName>>> variants;
    std::vector<std::string> variant_names;
    for (GeoMethodName m : config.methods) {
        if (m == GeoMethodName::kIdentity) continue;  // equals the baseline
        variants.emplace_back(geo::to_string(m),
                              std::vector<GeoMethodName>{m});
        variant_names.push_back(geo::to_string(m));
    }
    // identity still runs through the full rewrite+regenerate path so its
    // zero improvement is measured, not assumed
    variants.emplace_back("identity",
                          std::vector<GeoMethodName>{GeoMethodName::kIdentity});
    variant_names.push_back("identity");

    const auto runs = execute_runs(config, corpus, deps, variants, true,
                                   result.per_seed_raw);
    fill_failure_stats(runs, result);

    ImprovementAccumulator acc;
    std::map<std::string,
             std::map<std::string, std::map<std::string, std::vector<double>>>>
        tag_values;  // method -> category -> label -> improvements
    const size_t per_seed = corpus.size();
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (run.failed) continue;
        const std::uint64_t seed =
            config.seeds[per_seed == 0 ? 0 : i / per_seed];
        const int t = run.target;
        for (const auto& [name, v] : run.variants) {
            if (config.has_family(MetricFamily::kWordCount))
                acc.add(name, "word_count", seed, run.baseline.wc.at(t),
                        v.wc.at(t));
            if (config.has_family(MetricFamily::kPositionAdjusted)) {
                const double base = run.baseline.pawc.at(t);
                const double after = v.pawc.at(t);
                acc.add(name, "position_adjusted", seed, base, after);
                if (base != 0.0) {
                    const double imp = relative_improvement(base, after);
                    for (const auto& [cat, label] : run.tags)
                        tag_values[name][cat][label].push_back(imp);
                }
            }
        }
    }

    for (const auto& name : variant_names) {
        if (config.has_family(MetricFamily::kWordCount)) {
            auto s = acc.stats(name, "word_count");
            result.per_method[name]["word_count"] = s;
            result.excluded_zero_baseline_count += s.excluded_zero_baseline;
        }
        if (config.has_family(MetricFamily::kPositionAdjusted)) {
            auto s = acc.stats(name, "position_adjusted");
            result.per_method[name]["position_adjusted"] = s;
            result.excluded_zero_baseline_count += s.excluded_zero_baseline;
        }
    }
    for (const auto& [method, cats] : tag_values)
        for (const auto& [cat, labels] : cats)
            for (const auto& [label, values] : labels)
                result.per_tag[method][cat][label] = mean_of(values);

    if (config.has_family(MetricFamily::kSubjective))
        aggregate_subjective(config, runs, variant_names, result);
    return result;
}

ExperimentResult run_all_optimized(const ExperimentConfig& config,
                                   const std::vector<BenchmarkEntry>& corpus,
                                   HarnessDeps& deps) {
    ExperimentResult result;
    result.mode = ExperimentConfig::Mode::kAllOptimized;

    std::vector<std::pair<std::string, std::vector<GeoMethodName>>> variants;
    std::vector<std::string> variant_names;
    for (GeoMethodName m : config.methods) {
        variants.emplace_back(geo::to_string(m),
                              std::vector<GeoMethodName>{m});
        variant_names.push_back(geo::to_string(m));
    }

    const auto runs = execute_runs(config, corpus, deps, variants, false,
                                   result.per_seed_raw);
    fill_failure_stats(runs, result);

    ImprovementAccumulator acc;
    std::map<std::string, std::map<int, std::vector<double>>> rank_values;
    const size_t per_seed = corpus.size();
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (run.failed) continue;
        const std::uint64_t seed =
            config.seeds[per_seed == 0 ? 0 : i / per_seed];
        for (const auto& [name, v] : run.variants) {
            double delta_sum = 0.0;
            for (const auto& [c, after] : v.pawc) {
                const double base = run.baseline.pawc.at(c);
                delta_sum += after - base;
                const int rank = run.serp_rank_of_source[c - 1];
                acc.add(name, "position_adjusted", seed, base, after);
                if (config.has_family(MetricFamily::kWordCount))
                    acc.add(name, "word_count", seed, run.baseline.wc.at(c),
                            v.wc.at(c));
                if (base != 0.0)
                    rank_values[name][rank].push_back(
                        relative_improvement(base, after));
            }
            result.max_zero_sum_residual =
                std::max(result.max_zero_sum_residual, std::abs(delta_sum));
        }
    }
    for (const auto& name : variant_names) {
        auto s = acc.stats(name, "position_adjusted");
        result.per_method[name]["position_adjusted"] = s;
        result.excluded_zero_baseline_count += s.excluded_zero_baseline;
        if (config.has_family(MetricFamily::kWordCount))
            result.per_method[name]["word_count"] =
                acc.stats(name, "word_count");
    }
    for (const auto& [method, ranks] : rank_values)
        for (const auto& [rank, values] : ranks)
            result.per_rank[method][rank] = mean_of(values);
    return result;
}

ExperimentResult run_combination(const ExperimentConfig& config,
                                 const std::vector<BenchmarkEntry>& corpus,
                                 HarnessDeps& deps) {
    if (config.method_pairs.empty())
        throw HarnessError("combination mode requires method_pairs");
    ExperimentResult result;
    result.mode = ExperimentConfig::Mode::kCombination;

    std::vector<std::pair<std::string, std::vector<GeoMethodName>>> variants;
    std::vector<std::string> variant_names;
    for (const auto& [a, b] : config.method_pairs) {
        const std::string key = geo::to_string(a) + "+" + geo::to_string(b);
        variants.emplace_back(key, std::vector<GeoMethodName>{a, b});
        variant_names.push_back(key);
    }

    const auto runs = execute_runs(config, corpus, deps, variants, true,
                                   result.per_seed_raw);
    fill_failure_stats(runs, result);

    ImprovementAccumulator acc;
    const size_t per_seed = corpus.size();
    for (size_t i = 0; i < runs.size(); ++i) {
        const auto& run = runs[i];
        if (run.failed) continue;
        const std::uint64_t seed =
            config.seeds[per_seed == 0 ? 0 : i / per_seed];
        const int t = run.target;
        for (const auto& [name, v] : run.variants)
            acc.add(name, "position_adjusted", seed, run.baseline.pawc.at(t),
                    v.pawc.at(t));
    }
    for (const auto& name : variant_names) {
        auto s = acc.stats(name, "position_adjusted");
        result.per_method[name]["position_adjusted"] = s;
        result.pair_matrix[name] = s.mean_improvement_pct;
        result.excluded_zero_baseline_count += s.excluded_zero_baseline;
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                HarnessDeps& deps,
                                const std::string& run_dir) {
    config.validate();
    const auto corpus = load_corpus(config.corpus_path);
    ExperimentResult result;
    switch (config.mode) {
        case ExperimentConfig::Mode::kSingleTarget:
            result = run_single_target(config, corpus, deps);
            break;
        case ExperimentConfig::Mode::kAllOptimized:
            result = run_all_optimized(config, corpus, deps);
            break;
        case ExperimentConfig::Mode::kCombination:
            result = run_combination(config, corpus, deps);
            break;
    }
    if (!run_dir.empty()) persist_run(config, result, run_dir);
    return result;
}

std::map<std::string, std::vector<std::pair<std::string, double>>>
tag_breakdown(const ExperimentResult& result, int top_k) {
    std::map<std::string, std::vector<std::pair<std::string, double>>> out;
    for (const auto& [method, cats] : result.per_tag) {
        std::vector<std::pair<std::string, double>> tags;
        for (const auto& [cat, labels] : cats)
            for (const auto& [label, value] : labels)
                tags.emplace_back(cat + "/" + label, value);
        std::sort(tags.begin(), tags.end(),
                  [](const auto& a, const auto& b) {
                      if (a.second != b.second) return a.second > b.second;
                      return a.first < b.first;
                  });
        if (top_k >= 0 && static_cast<int>(tags.size()) > top_k)
            tags.resize(top_k);
        out[method] = std::move(tags);
    }
    return out;
}

json ExperimentResult::to_json() const {
    json j;
    j["mode"] = geo::to_string(mode);
    for (const auto& [method, metrics] : per_method)
        for (const auto& [metric, s] : metrics)
            j["per_method"][method][metric] = {
                {"mean_improvement_pct", s.mean_improvement_pct},
                {"std_improvement_pct", s.std_improvement_pct},
                {"mean_absolute_impression", s.mean_absolute_impression},
                {"included", s.included},
                {"excluded_zero_baseline", s.excluded_zero_baseline}};
    j["per_tag"] = per_tag;
    for (const auto& [method, ranks] : per_rank)
        for (const auto& [rank, v] : ranks)
            j["per_rank"][method][std::to_string(rank)] = v;
    j["pair_matrix"] = pair_matrix;
    j["subjective_columns"] = subjective_columns;
    j["excluded_zero_baseline_count"] = excluded_zero_baseline_count;
    j["total_query_runs"] = total_query_runs;
    j["failed_query_runs"] = failed_query_runs;
    j["degraded"] = degraded;
    j["calibration_degenerate"] = calibration_degenerate;
    j["max_zero_sum_residual"] = max_zero_sum_residual;
    j["per_seed_raw"] = per_seed_raw;
    return j;
}

namespace {

std::string fmt(double v) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << v;
    return out.str();
}

std::string markdown_report(const ExperimentResult& result) {
    std::ostringstream out;
    out << "# Experiment report\n\nMode: " << geo::to_string(result.mode)
        << "\n\n";

    // objective columns first, then the seven judged facets
    out << "## Absolute impressions (x100)\n\n";
    out << "| Method | Word | Position | Overall | Rel. | Infl. | Unique | "
           "Div. | FollowUp | Pos. | Count | Average |\n";
    out << "|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    static const char* kFacetOrder[] = {
        "relevance",         "influence",       "uniqueness",
        "diversity",         "follow_up_probability",
        "subjective_position", "subjective_count"};
    for (const auto& [method, metrics] : result.per_method) {
        out << "| " << method << " |";
        auto cell = [&](const char* metric) {
            auto it = metrics.find(metric);
            if (it == metrics.end()) {
                out << " - |";
                return;
            }
            out << ' ' << fmt(it->second.mean_absolute_impression * 100.0)
                << " |";
        };
        cell("word_count");
        cell("position_adjusted");
        {
            auto w = metrics.find("word_count");
            auto p = metrics.find("position_adjusted");
            if (w != metrics.end() && p != metrics.end())
                out << ' '
                    << fmt((w->second.mean_absolute_impression +
                            p->second.mean_absolute_impression) *
                           50.0)
                    << " |";
            else
                out << " - |";
        }
        auto subj = result.subjective_columns.find(method);
        for (const char* facet : kFacetOrder) {
            if (subj == result.subjective_columns.end() ||
                !subj->second.count(facet))
                out << " - |";
            else
                out << ' ' << fmt(subj->second.at(facet) * 100.0) << " |";
        }
        if (subj == result.subjective_columns.end() ||
            !subj->second.count("average"))
            out << " - |";
        else
            out << ' ' << fmt(subj->second.at("average") * 100.0) << " |";
        out << '\n';
    }

    out << "\n## Relative improvement (%)\n\n";
    out << "| Method | Metric | Mean | Std (seeds) | Included | Excluded "
           "(zero baseline) |\n|---|---|---|---|---|---|\n";
    for (const auto& [method, metrics] : result.per_method)
        for (const auto& [metric, s] : metrics)
            out << "| " << method << " | " << metric << " | "
                << fmt(s.mean_improvement_pct) << " | "
                << fmt(s.std_improvement_pct) << " | " << s.included << " | "
                << s.excluded_zero_baseline << " |\n";

    if (result.mode == ExperimentConfig::Mode::kAllOptimized) {
        out << "\n## Improvement by SERP rank (%)\n\n"
            << "| Method | Rank 1 | Rank 2 | Rank 3 | Rank 4 | Rank 5 |\n"
            << "|---|---|---|---|---|---|\n";
        for (const auto& [method, ranks] : result.per_rank) {
            out << "| " << method << " |";
            for (int r = 1; r <= 5; ++r) {
                auto it = ranks.find(r);
                if (it == ranks.end())
                    out << " - |";
                else
                    out << ' ' << fmt(it->second) << " |";
            }
            out << '\n';
        }
    }

    if (result.mode == ExperimentConfig::Mode::kCombination) {
        out << "\n## Method pair matrix (%)\n\n| Pair | Improvement |\n"
            << "|---|---|\n";
        for (const auto& [pair, v] : result.pair_matrix)
            out << "| " << pair << " | " << fmt(v) << " |\n";
    }

    if (!result.per_tag.empty()) {
        out << "\n## Top performing tags\n\n| Method | Tags |\n|---|---|\n";
        for (const auto& [method, tags] : tag_breakdown(result, 3)) {
            out << "| " << method << " | ";
            for (size_t i = 0; i < tags.size(); ++i)
                out << (i ? ", " : "") << tags[i].first << " ("
                    << fmt(tags[i].second) << ")";
            out << " |\n";
        }
    }

    out << "\nExcluded zero-baseline queries: "
        << result.excluded_zero_baseline_count << "\n";
    if (result.degraded) out << "\nRUN DEGRADED: failure rate above 10%\n";
    return out.str();
}

std::string csv_report(const ExperimentResult& result) {
    std::ostringstream out;
    out << "method,metric,mean_improvement_pct,std_improvement_pct,"
           "mean_absolute_impression,included,excluded_zero_baseline\n";
    for (const auto& [method, metrics] : result.per_method)
        for (const auto& [metric, s] : metrics)
            out << method << ',' << metric << ',' << s.mean_improvement_pct
                << ',' << s.std_improvement_pct << ','
                << s.mean_absolute_impression << ',' << s.included << ','
                << s.excluded_zero_baseline << '\n';
    return out.str();
}

}  // namespace

std::string emit_report(const ExperimentResult& result,
                        const std::string& format) {
    if (format == "json") return result.to_json().dump(2) + "\n";
    if (format == "markdown") return markdown_report(result);
    if (format == "csv") return csv_report(result);
    throw HarnessError("unknown report format: " + format);
}

void persist_run(const ExperimentConfig& config,
                 const ExperimentResult& result, const std::string& run_dir) {
    fs::create_directories(run_dir);
    {
        std::ofstream out(fs::path(run_dir) / "config.json");
        out << config.to_json().dump(2) << '\n';
    }
    for (const auto& [seed, raw] : result.per_seed_raw.items()) {
        const fs::path seed_dir = fs::path(run_dir) / ("seed_" + seed);
        fs::create_directories(seed_dir);
        std::ofstream out(seed_dir / "raw.json");
        out << raw.dump(2) << '\n';
    }
    for (const char* format : {"json", "csv", "markdown"}) {
        const char* ext = std::string(format) == "markdown" ? "md" : format;
        std::ofstream out(fs::path(run_dir) /
                          (std::string("report.") + ext));
        out << emit_report(result, format);
    }
}

}  // namespace geo
