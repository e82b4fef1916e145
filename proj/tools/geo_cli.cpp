#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "geo/harness.hpp"
#include "geo/parser.hpp"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDegraded = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string read_stream(std::istream& in) {
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string method_list() {
    std::string names;
    for (const auto& m : geo::all_methods()) {
        if (!names.empty()) names += ", ";
        names += geo::to_string(m.name);
    }
    return names;
}

struct BackendChoice {
    std::string completer = "sim";  // sim | fixtures | remote
    std::string rewriter = "rules"; // rules | llm
    std::string cache_dir;
    std::string base_url = "https://api.openai.com";
    std::string api_key_env = "GEO_API_KEY";
};

struct Backend {
    std::unique_ptr<geo::CompletionCache> cache;
    std::unique_ptr<geo::Completer> inner;
    std::unique_ptr<geo::Completer> completer;
    std::unique_ptr<geo::RateLimiter> limiter;
    std::unique_ptr<geo::Rewriter> rewriter;
};

Backend make_backend(const BackendChoice& choice) {
    Backend b;
    if (!choice.cache_dir.empty())
        b.cache = std::make_unique<geo::CompletionCache>(choice.cache_dir);
    if (choice.completer == "sim") {
        b.inner = std::make_unique<geo::SimCompleter>();
    } else if (choice.completer == "fixtures") {
        if (!b.cache)
            throw std::runtime_error(
                "fixtures backend requires --cache-dir (the fixture pack)");
        b.inner = std::make_unique<geo::FixtureCompleter>(*b.cache);
    } else if (choice.completer == "remote") {
        b.limiter = std::make_unique<geo::RateLimiter>(60.0);
        b.inner = std::make_unique<geo::RemoteCompleter>(
            choice.base_url, choice.api_key_env, b.limiter.get());
    } else {
        throw std::runtime_error("unknown completer backend: " +
                                 choice.completer);
    }
    if (b.cache && choice.completer != "fixtures") {
        b.completer =
            std::make_unique<geo::CachingCompleter>(*b.inner, *b.cache);
    } else {
        b.completer = std::move(b.inner);
    }
    if (choice.rewriter == "rules")
        b.rewriter = std::make_unique<geo::RuleBasedRewriter>();
    else if (choice.rewriter == "llm")
        b.rewriter = std::make_unique<geo::LlmRewriter>(*b.completer);
    else
        throw std::runtime_error("unknown rewriter: " + choice.rewriter);
    return b;
}

int cmd_optimize(const std::string& method_name, const std::string& in_path,
                 const std::string& out_path, const std::string& query,
                 const BackendChoice& choice) {
    auto method = geo::method_from_string(method_name);
    if (!method) {
        std::cerr << "unknown method '" << method_name
                  << "'; valid methods: " << method_list() << "\n";
        return kExitUsage;
    }
    Backend backend = make_backend(choice);
    geo::RewriteRequest request;
    request.method = *method;
    request.source_content =
        in_path.empty() ? read_stream(std::cin) : read_file(in_path);
    if (!query.empty() && *method == geo::GeoMethodName::kKeywordStuffing)
        request.query_text = query;
    const std::string result = geo::apply_method(request, *backend.rewriter);
    if (out_path.empty()) {
        std::cout << result;
        if (result.empty() || result.back() != '\n') std::cout << '\n';
    } else {
        std::ofstream out(out_path);
        out << result;
    }
    return kExitOk;
}

int cmd_evaluate(const std::string& in_path, int num_sources,
                 const std::vector<std::string>& metrics, bool strict) {
    const std::string text =
        in_path.empty() ? read_stream(std::cin) : read_file(in_path);
    geo::ParserConfig config;
    if (strict)
        config.out_of_range_policy = geo::ParserConfig::OutOfRangePolicy::kError;
    const auto parsed = geo::parse_response(text, num_sources, config);

    std::vector<std::string> wanted = metrics;
    if (wanted.empty()) wanted = {"word_count", "position_adjusted"};
    std::cout << "sentences: " << parsed.sentences.size()
              << "  words: " << parsed.total_word_count() << "\n";
    for (const auto& name : wanted) {
        geo::ImpressionScores scores;
        if (name == "word_count")
            scores = geo::word_count_impression(parsed);
        else if (name == "position_adjusted")
            scores = geo::position_adjusted_impression(parsed);
        else {
            std::cerr << "unknown metric '" << name
                      << "'; valid: word_count, position_adjusted\n";
            return kExitUsage;
        }
        std::cout << name << ":\n";
        for (const auto& [c, v] : scores.normalized)
            std::cout << "  [" << c << "] normalized=" << v
                      << " raw=" << scores.raw.at(c) << "\n";
    }
    return kExitOk;
}

int cmd_bench_run(const std::string& config_path, std::string run_dir,
                  BackendChoice choice, bool choice_overridden) {
    json config_json = json::parse(read_file(config_path));
    geo::ExperimentConfig config =
        geo::ExperimentConfig::from_json(config_json);
    if (config_json.contains("backend") && !choice_overridden) {
        const auto& bj = config_json["backend"];
        choice.completer = bj.value("completer", choice.completer);
        choice.rewriter = bj.value("rewriter", choice.rewriter);
        choice.cache_dir = bj.value("cache_dir", choice.cache_dir);
        choice.base_url = bj.value("base_url", choice.base_url);
        choice.api_key_env = bj.value("api_key_env", choice.api_key_env);
    }
    if (run_dir.empty()) run_dir = config_json.value("run_dir", "run");
    Backend backend = make_backend(choice);
    geo::HarnessDeps deps;
    deps.completer = backend.completer.get();
    deps.rewriter = backend.rewriter.get();
    const auto result = geo::run_experiment(config, deps, run_dir);
    std::cout << "run complete: " << run_dir << "\n"
              << "query runs: " << result.total_query_runs
              << "  failed: " << result.failed_query_runs << "\n";
    return result.degraded ? kExitDegraded : kExitOk;
}

int cmd_bench_report(const std::string& run_dir, const std::string& format) {
    json result_json =
        json::parse(read_file(run_dir + "/report.json"));
    if (format == "json") {
        std::cout << result_json.dump(2) << "\n";
        return kExitOk;
    }
    const char* ext = format == "markdown" ? "md" : format.c_str();
    std::cout << read_file(run_dir + "/report." + ext);
    return kExitOk;
}

int cmd_validate_corpus(const std::string& path) {
    const auto entries = geo::load_corpus(path);
    std::cout << "valid corpus: " << entries.size() << " entries\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative-engine visibility toolkit"};
    app.require_subcommand(1);

    // optimize
    std::string method_name, in_path, out_path, query;
    BackendChoice choice;
    auto* optimize = app.add_subcommand(
        "optimize", "Apply a content-optimization method to a source file");
    optimize->add_option("--method", method_name, "Method name")->required();
    optimize->add_option("--in", in_path, "Input file (default: stdin)");
    optimize->add_option("--out", out_path, "Output file (default: stdout)");
    optimize->add_option("--query", query,
                         "Query text (keyword_stuffing only)");
    optimize->add_option("--rewriter", choice.rewriter,
                         "rules | llm (default rules)");
    optimize->add_option("--cache-dir", choice.cache_dir,
                         "Completion cache directory");
    optimize->add_option("--backend", choice.completer,
                         "sim | fixtures | remote (llm rewriter backend)");

    // evaluate
    std::string eval_in;
    int num_sources = 5;
    std::vector<std::string> metrics;
    bool strict = false;
    auto* evaluate = app.add_subcommand(
        "evaluate", "Score a cited response with the impression metrics");
    evaluate->add_option("--in", eval_in, "Response file (default: stdin)");
    evaluate->add_option("--num-sources", num_sources, "Number of sources")
        ->check(CLI::PositiveNumber);
    evaluate->add_option("--metric", metrics,
                         "word_count and/or position_adjusted (repeatable)");
    evaluate->add_flag("--strict", strict,
                       "Error on out-of-range citation indices");

    // bench-run
    std::string config_path, run_dir;
    auto* bench_run = app.add_subcommand(
        "bench-run", "Run a benchmark experiment from a config file");
    bench_run->add_option("--config", config_path, "Experiment config JSON")
        ->required();
    bench_run->add_option("--run-dir", run_dir, "Run output directory");
    auto* backend_opt = bench_run->add_option(
        "--backend", choice.completer, "sim | fixtures | remote");
    bench_run->add_option("--rewriter", choice.rewriter, "rules | llm");
    bench_run->add_option("--cache-dir", choice.cache_dir,
                          "Completion cache / fixture pack directory");
    bench_run->add_option("--base-url", choice.base_url,
                          "Remote completion base URL");
    bench_run->add_option("--api-key-env", choice.api_key_env,
                          "Environment variable holding the API key");

    // bench-report
    std::string report_dir, format = "markdown";
    auto* bench_report = app.add_subcommand(
        "bench-report", "Print a report for a finished run directory");
    bench_report->add_option("--run-dir", report_dir, "Run directory")
        ->required();
    bench_report->add_option("--format", format, "json | csv | markdown");

    // validate-corpus
    std::string corpus_path;
    auto* validate = app.add_subcommand(
        "validate-corpus", "Validate a line-delimited JSON corpus file");
    validate->add_option("--in", corpus_path, "Corpus file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (optimize->parsed())
            return cmd_optimize(method_name, in_path, out_path, query, choice);
        if (evaluate->parsed())
            return cmd_evaluate(eval_in, num_sources, metrics, strict);
        if (bench_run->parsed())
            return cmd_bench_run(config_path, run_dir, choice,
                                 backend_opt->count() > 0);
        if (bench_report->parsed())
            return cmd_bench_report(report_dir, format);
        if (validate->parsed()) return cmd_validate_corpus(corpus_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
