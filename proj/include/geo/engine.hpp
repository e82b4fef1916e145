#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/core.hpp"

namespace geo {

class EngineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AuthError : public EngineError {
public:
    using EngineError::EngineError;
};

class RateLimitError : public EngineError {
public:
    using EngineError::EngineError;
};

class TimeoutError : public EngineError {
public:
    using EngineError::EngineError;
};

class FixtureMissError : public EngineError {
public:
    using EngineError::EngineError;
};

class ConfigError : public EngineError {
public:
    using EngineError::EngineError;
};

/// The prompt of the evaluated generative engine. Sources are substituted
/// for {source_text}, the user query for {query}.
extern const char* const kDefaultGePromptTemplate;

struct EngineConfig {
    int num_sources = 5;
    int num_samples = 5;
    double temperature = 0.7;
    std::string model_name = "gpt-3.5-turbo";
    std::string prompt_template = kDefaultGePromptTemplate;
    int source_token_budget = 2000;  // whitespace tokens per source
    int retry_budget = 5;
};

struct CompletionParams {
    std::string model;
    double temperature = 0.0;
    int sample_index = 0;
};

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(const std::string& data, std::uint64_t seed = 0xcbf29ce484222325ull);

/// Deterministic digest of (model, prompt, temperature, sample_index).
std::string completion_cache_key(const std::string& model,
                                 const std::string& prompt, double temperature,
                                 int sample_index);

struct CompletionRecord {
    std::string cache_key;
    std::string prompt;
    std::string completion;
    std::string timestamp;  // RFC3339; empty in deterministic runs
};

/// Content-addressed on-disk store, one JSON file per cache key. Doubles as
/// the fixture pack format for hermetic replays.
class CompletionCache {
public:
    explicit CompletionCache(std::string dir, bool record_timestamps = false);

    std::optional<std::string> lookup(const std::string& key) const;
    void store(const CompletionRecord& record);
    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
    bool record_timestamps_;
    mutable std::mutex mutex_;
};

class Completer {
public:
    virtual ~Completer() = default;
    virtual std::string complete(const std::string& prompt,
                                 const CompletionParams& params) = 0;
};

/// Replays recorded completions; errors on miss so hermetic runs cannot
/// silently fall back to a remote.
class FixtureCompleter : public Completer {
public:
    explicit FixtureCompleter(const CompletionCache& cache) : cache_(cache) {}
    std::string complete(const std::string& prompt,
                         const CompletionParams& params) override;

private:
    const CompletionCache& cache_;
};

/// Scripted test double. Plays back a fixed sequence, or defers to a
/// function when one is set. Counts calls.
class MockCompleter : public Completer {
public:
    MockCompleter() = default;
    explicit MockCompleter(std::vector<std::string> script)
        : script_(std::move(script)) {}
    explicit MockCompleter(
        std::function<std::string(const std::string&, const CompletionParams&)> fn)
        : fn_(std::move(fn)) {}

    std::string complete(const std::string& prompt,
                         const CompletionParams& params) override;
    int call_count() const { return calls_; }

private:
    std::vector<std::string> script_;
    std::function<std::string(const std::string&, const CompletionParams&)> fn_;
    int calls_ = 0;
};

/// Deterministic offline stand-in for the full remote stack: answers GE
/// prompts with a cited synthesis of the provided sources and judge prompts
/// with a stable score. Lets the whole pipeline run hermetically.
class SimCompleter : public Completer {
public:
    std::string complete(const std::string& prompt,
                         const CompletionParams& params) override;
};

/// Wraps another completer with read-through caching.
class CachingCompleter : public Completer {
public:
    CachingCompleter(Completer& inner, CompletionCache& cache)
        : inner_(inner), cache_(cache) {}
    std::string complete(const std::string& prompt,
                         const CompletionParams& params) override;
    int remote_calls() const { return remote_calls_; }

private:
    Completer& inner_;
    CompletionCache& cache_;
    int remote_calls_ = 0;
};

/// Token bucket admission control. Clock and sleep are injectable so tests
/// can drive simulated time.
class RateLimiter {
public:
    using Clock = std::function<double()>;          // seconds
    using Sleep = std::function<void(double)>;      // seconds

    RateLimiter(double requests_per_minute, Clock clock, Sleep sleep);
    explicit RateLimiter(double requests_per_minute);

    void acquire();

private:
    double capacity_;
    double refill_per_second_;
    double tokens_;
    double last_refill_;
    Clock clock_;
    Sleep sleep_;
    std::mutex mutex_;
};

/// Chat-completion client for an OpenAI-style HTTP endpoint. Credentials
/// come from the environment variable named in the constructor.
class RemoteCompleter : public Completer {
public:
    RemoteCompleter(std::string base_url, std::string api_key_env,
                    RateLimiter* limiter = nullptr);
    std::string complete(const std::string& prompt,
                         const CompletionParams& params) override;

private:
    std::string base_url_;
    std::string api_key_;
    RateLimiter* limiter_;
};

/// Serializes the query and sources into the GE prompt. Sources appear in
/// serp order, each prefixed with its 1-based bracket index, truncated to
/// the configured token budget.
std::string build_ge_prompt(const Query& query,
                            const std::vector<SourceDocument>& sources,
                            const EngineConfig& config);

/// num_samples completions of the GE prompt, cached when a cache is given.
/// Remote failures retry with exponential backoff up to the retry budget;
/// any sample failing after retries fails the whole call.
std::vector<std::string> generate_responses(
    const Query& query, const std::vector<SourceDocument>& sources,
    const EngineConfig& config, Completer& completer,
    CompletionCache* cache = nullptr);

class SourceFetcher {
public:
    virtual ~SourceFetcher() = default;
    virtual std::vector<SourceDocument> fetch(const Query& query) = 0;
};

/// Returns the sources bundled with a benchmark entry, keyed by query id.
class LocalCorpusFetcher : public SourceFetcher {
public:
    explicit LocalCorpusFetcher(const std::vector<BenchmarkEntry>& entries);
    std::vector<SourceDocument> fetch(const Query& query) override;

private:
    std::map<std::string, std::vector<SourceDocument>> by_query_id_;
};

std::vector<SourceDocument> fetch_sources(const Query& query,
                                          SourceFetcher& fetcher);

}  // namespace geo
