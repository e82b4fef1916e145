#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "geo/harness.hpp"
#include "test_util.hpp"

using namespace geo;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("geo_harness_" +
                std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// small deterministic corpus written to disk
std::string write_corpus(const fs::path& dir, int n_entries,
                         int n_sources = 3) {
    const fs::path path = dir / "corpus.jsonl";
    std::ofstream out(path);
    out << json{{"schema_version", 1}}.dump() << "\n";
    test::Xorshift rng(123);
    for (int i = 0; i < n_entries; ++i) {
        BenchmarkEntry entry;
        entry.query.id = "q" + std::to_string(i);
        entry.query.text = "query about topic " + std::to_string(i);
        entry.query.tags = {{"genre", i % 2 ? "science" : "history"},
                            {"answer-type", "fact"}};
        entry.query.split = "test";
        for (int r = 1; r <= n_sources; ++r) {
            SourceDocument s;
            s.id = entry.query.id + "-s" + std::to_string(r);
            s.url = "https://example.org/" + s.id;
            s.title = "Doc " + std::to_string(r);
            s.content = test::random_prose(rng, 2 + (i + r) % 5);
            s.serp_rank = r;
            entry.sources.push_back(std::move(s));
        }
        out << entry_to_json(entry).dump() << "\n";
    }
    return path.string();
}

ExperimentConfig small_config(const std::string& corpus_path) {
    ExperimentConfig config;
    config.corpus_path = corpus_path;
    config.methods = {GeoMethodName::kIdentity,
                      GeoMethodName::kQuotationAddition,
                      GeoMethodName::kKeywordStuffing};
    config.seeds = {1, 2};
    config.engine.num_samples = 2;
    return config;
}

}  // namespace

TEST_CASE("load_corpus accepts the bundled sample schema") {
    TempDir tmp;
    const auto path = write_corpus(tmp.path, 10);
    const auto entries = load_corpus(path);
    CHECK(entries.size() == 10);
    for (const auto& e : entries) CHECK(validate_entry(e).empty());
}

TEST_CASE("load_corpus reports offending lines") {
    TempDir tmp;
    const fs::path path = tmp.path / "bad.jsonl";
    {
        std::ofstream out(path);
        out << json{{"schema_version", 1}}.dump() << "\n";
        out << R"({"query": {"id": "q1"}, "sources": []})" << "\n";
        out << "not json at all\n";
    }
    try {
        load_corpus(path.string());
        FAIL("expected HarnessError");
    } catch (const HarnessError& e) {
        const std::string what = e.what();
        CHECK(what.find("line 2") != std::string::npos);
        CHECK(what.find("line 3") != std::string::npos);
    }
}

TEST_CASE("load_corpus handles empty files and bad headers") {
    TempDir tmp;
    const fs::path empty = tmp.path / "empty.jsonl";
    std::ofstream(empty).close();
    CHECK(load_corpus(empty.string()).empty());

    const fs::path no_header = tmp.path / "no_header.jsonl";
    {
        std::ofstream out(no_header);
        out << R"({"query": {"id": "q"}})" << "\n";
    }
    CHECK_THROWS_AS(load_corpus(no_header.string()), HarnessError);
}

TEST_CASE("target selection is deterministic per (seed, query)") {
    TempDir tmp;
    const auto entries = load_corpus(write_corpus(tmp.path, 5));
    for (const auto& entry : entries)
        for (std::uint64_t seed : {1ull, 7ull, 42ull})
            CHECK(select_target_source(entry, seed) ==
                  select_target_source(entry, seed));

    BenchmarkEntry single = entries[0];
    single.sources.resize(1);
    CHECK(select_target_source(single, 9) == 1);
}

TEST_CASE("target selection is approximately uniform") {
    // chi-square over 10k draws across 5 buckets
    BenchmarkEntry entry;
    entry.query.id = "uniformity-probe";
    entry.query.text = "x";
    for (int r = 1; r <= 5; ++r) {
        SourceDocument s;
        s.id = "s" + std::to_string(r);
        s.content = "c";
        s.serp_rank = r;
        entry.sources.push_back(std::move(s));
    }
    std::array<int, 6> counts{};
    const int draws = 10000;
    for (int seed = 0; seed < draws; ++seed)
        ++counts[select_target_source(entry, seed)];
    const double expected = draws / 5.0;
    double chi2 = 0.0;
    for (int r = 1; r <= 5; ++r)
        chi2 += (counts[r] - expected) * (counts[r] - expected) / expected;
    // df=4: p > 0.01 iff chi2 < 13.277
    CHECK(chi2 < 13.277);
}

TEST_CASE("single-target run: identity is zero, methods move the needle") {
    TempDir tmp;
    const auto config = small_config(write_corpus(tmp.path, 6));
    const auto corpus = load_corpus(config.corpus_path);
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;

    const auto result = run_single_target(config, corpus, deps);
    CHECK(result.failed_query_runs == 0);
    CHECK_FALSE(result.degraded);

    const auto& identity = result.per_method.at("identity");
    CHECK(identity.at("word_count").mean_improvement_pct ==
          doctest::Approx(0.0));
    CHECK(identity.at("position_adjusted").mean_improvement_pct ==
          doctest::Approx(0.0));

    // quotation_addition adds words to the target source, which the sim
    // engine rewards with a longer cited sentence
    const auto& quote = result.per_method.at("quotation_addition");
    CHECK(quote.at("position_adjusted").included > 0);

    // tags and exclusion bookkeeping are populated
    CHECK(!result.per_tag.empty());
    const auto& stats = quote.at("position_adjusted");
    CHECK(stats.included + stats.excluded_zero_baseline > 0);
}

TEST_CASE("all-optimized run reports rank strata and zero-sum shares") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 5, 5));
    config.mode = ExperimentConfig::Mode::kAllOptimized;
    const auto corpus = load_corpus(config.corpus_path);
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;

    const auto result = run_all_optimized(config, corpus, deps);
    CHECK(result.max_zero_sum_residual < 1e-9);
    const auto& identity_ranks = result.per_rank.at("identity");
    for (int r = 1; r <= 5; ++r) {
        REQUIRE(identity_ranks.count(r));
        CHECK(identity_ranks.at(r) == doctest::Approx(0.0));
    }
    const auto report = emit_report(result, "markdown");
    CHECK(report.find("| Method | Rank 1 | Rank 2 | Rank 3 | Rank 4 | "
                      "Rank 5 |") != std::string::npos);
}

TEST_CASE("combination run composes methods sequentially") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 4));
    config.mode = ExperimentConfig::Mode::kCombination;
    config.method_pairs = {
        {GeoMethodName::kIdentity, GeoMethodName::kIdentity},
        {GeoMethodName::kQuotationAddition, GeoMethodName::kIdentity},
        {GeoMethodName::kQuotationAddition,
         GeoMethodName::kStatisticsAddition}};
    const auto corpus = load_corpus(config.corpus_path);
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;

    const auto result = run_combination(config, corpus, deps);
    CHECK(result.pair_matrix.at("identity+identity") == doctest::Approx(0.0));

    // right-unit law: (m, identity) equals single-method m exactly under
    // the deterministic sim backend
    auto single = config;
    single.mode = ExperimentConfig::Mode::kSingleTarget;
    single.methods = {GeoMethodName::kIdentity,
                      GeoMethodName::kQuotationAddition};
    const auto single_result = run_single_target(single, corpus, deps);
    CHECK(result.pair_matrix.at("quotation_addition+identity") ==
          doctest::Approx(single_result.per_method.at("quotation_addition")
                              .at("position_adjusted")
                              .mean_improvement_pct));
}

TEST_CASE("combination mode requires pairs; single-target requires identity") {
    ExperimentConfig config;
    config.methods = {GeoMethodName::kIdentity};
    config.mode = ExperimentConfig::Mode::kCombination;
    CHECK_THROWS_AS(config.validate(), HarnessError);

    config.mode = ExperimentConfig::Mode::kSingleTarget;
    config.methods = {GeoMethodName::kQuotationAddition};
    CHECK_THROWS_AS(config.validate(), HarnessError);
}

TEST_CASE("tag breakdown sorts by improvement with lexicographic ties") {
    ExperimentResult result;
    result.per_tag["m"]["genre"]["debate"] = 12.0;
    result.per_tag["m"]["genre"]["history"] = 8.0;
    result.per_tag["m"]["genre"]["science"] = 8.0;
    const auto top = tag_breakdown(result, 3).at("m");
    REQUIRE(top.size() == 3);
    CHECK(top[0].first == "genre/debate");
    CHECK(top[1].first == "genre/history");
    CHECK(top[2].first == "genre/science");

    CHECK(tag_breakdown(result, 10).at("m").size() == 3);  // clamp
    ExperimentResult empty;
    CHECK(tag_breakdown(empty, 3).empty());
}

TEST_CASE("json report round-trips and markdown matches the table layout") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 4));
    config.metric_families.push_back(MetricFamily::kSubjective);
    config.judge.samples_per_metric = 1;
    const auto corpus = load_corpus(config.corpus_path);
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;
    const auto result = run_single_target(config, corpus, deps);

    const auto dumped = emit_report(result, "json");
    const auto parsed = json::parse(dumped);
    CHECK(json::parse(emit_report(result, "json")) == parsed);
    CHECK(parsed["per_method"].contains("identity"));

    const auto md = emit_report(result, "markdown");
    CHECK(md.find("| Method | Word | Position | Overall | Rel. | Infl. | "
                  "Unique | Div. | FollowUp | Pos. | Count | Average |") !=
          std::string::npos);

    const auto csv = emit_report(result, "csv");
    // one row per method x metric plus the header
    size_t rows = 0;
    for (char c : csv)
        if (c == '\n') ++rows;
    size_t expected = 1;
    for (const auto& [method, metrics] : result.per_method)
        expected += metrics.size();
    CHECK(rows == expected);

    CHECK_THROWS_AS(emit_report(result, "yaml"), HarnessError);
}

TEST_CASE("run_experiment persists a deterministic run directory") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 4));
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;

    const auto run_a = (tmp.path / "run_a").string();
    const auto run_b = (tmp.path / "run_b").string();
    run_experiment(config, deps, run_a);
    run_experiment(config, deps, run_b);

    for (const char* file :
         {"config.json", "report.json", "report.md", "report.csv",
          "seed_1/raw.json", "seed_2/raw.json"}) {
        std::ifstream a(fs::path(run_a) / file), b(fs::path(run_b) / file);
        REQUIRE(a.good());
        REQUIRE(b.good());
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());
    }
}

TEST_CASE("per-query failures are recorded, not fatal") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 10));
    config.seeds = {1};
    const auto corpus = load_corpus(config.corpus_path);
    // fail exactly the queries whose prompt mentions topic 3
    MockCompleter flaky([](const std::string& prompt,
                           const CompletionParams& p) -> std::string {
        if (prompt.find("topic 3") != std::string::npos)
            throw AuthError("denied");
        SimCompleter sim;
        return sim.complete(prompt, p);
    });
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &flaky;
    deps.rewriter = &rules;

    const auto result = run_single_target(config, corpus, deps);
    CHECK(result.failed_query_runs == 1);
    CHECK(result.total_query_runs == 10);
    CHECK_FALSE(result.degraded);  // 10% is the threshold, not inclusive

    // push the failure rate above 10%
    MockCompleter worse([](const std::string& prompt,
                           const CompletionParams& p) -> std::string {
        if (prompt.find("topic") != std::string::npos)
            throw AuthError("denied");
        SimCompleter sim;
        return sim.complete(prompt, p);
    });
    deps.completer = &worse;
    const auto degraded = run_single_target(config, corpus, deps);
    CHECK(degraded.degraded);
}

TEST_CASE("config serialization round-trips") {
    ExperimentConfig config;
    config.methods = {GeoMethodName::kIdentity, GeoMethodName::kCiteSources};
    config.mode = ExperimentConfig::Mode::kCombination;
    config.method_pairs = {
        {GeoMethodName::kCiteSources, GeoMethodName::kQuotationAddition}};
    config.metric_families = {MetricFamily::kPositionAdjusted,
                              MetricFamily::kSubjective};
    config.seeds = {3, 9};
    config.corpus_path = "x.jsonl";
    config.engine.num_samples = 2;
    config.parallelism = 4;

    const auto restored = ExperimentConfig::from_json(config.to_json());
    CHECK(restored.methods == config.methods);
    CHECK(restored.mode == config.mode);
    CHECK(restored.method_pairs == config.method_pairs);
    CHECK(restored.metric_families == config.metric_families);
    CHECK(restored.seeds == config.seeds);
    CHECK(restored.corpus_path == config.corpus_path);
    CHECK(restored.engine.num_samples == 2);
    CHECK(restored.parallelism == 4);
}

TEST_CASE("parallel runs match sequential runs") {
    TempDir tmp;
    auto config = small_config(write_corpus(tmp.path, 8));
    config.seeds = {1};
    const auto corpus = load_corpus(config.corpus_path);
    SimCompleter sim;
    RuleBasedRewriter rules;
    HarnessDeps deps;
    deps.completer = &sim;
    deps.rewriter = &rules;

    const auto sequential = run_single_target(config, corpus, deps);
    config.parallelism = 4;
    const auto parallel = run_single_target(config, corpus, deps);
    CHECK(sequential.to_json() == parallel.to_json());
}
