#include "geo/engine.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace geo {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* const kDefaultGePromptTemplate =
    "Write an accurate and concise answer for the given user question, using "
    "_only_ the provided summarized web search results. The answer should be "
    "correct, high-quality, and written by an expert using an unbiased and "
    "journalistic tone. The user's language of choice such as English, "
    "Francais, Espanol, Deutsch should be used. The answer should be "
    "informative, interesting, and engaging. The answer's logic and reasoning "
    "should be rigorous and defensible. Every sentence in the answer should "
    "be _immediately followed_ by an in-line citation to the search "
    "result(s). The cited search result(s) should fully support _all_ the "
    "information in the sentence. Search results need to be cited using "
    "[index]. When citing several search results, use [1][2][3] format "
    "rather than [1, 2, 3]. You can use multiple search results to respond "
    "comprehensively while avoiding irrelevant search results.\n"
    "\n"
    "Question: {query}\n"
    "\n"
    "Search Results:\n"
    "{source_text}\n";

std::uint64_t fnv1a(const std::string& data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string completion_cache_key(const std::string& model,
                                 const std::string& prompt, double temperature,
                                 int sample_index) {
    std::ostringstream material;
    material << model << '\x1f' << prompt << '\x1f' << temperature << '\x1f'
             << sample_index;
    const std::string m = material.str();
    // two passes with different seeds to get 128 bits of key space
    std::uint64_t a = fnv1a(m);
    std::uint64_t b = fnv1a(m, 0x9e3779b97f4a7c15ull);
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << a
        << std::setw(16) << std::setfill('0') << b;
    return out.str();
}

// ---------------------------------------------------------------------------
// CompletionCache

CompletionCache::CompletionCache(std::string dir, bool record_timestamps)
    : dir_(std::move(dir)), record_timestamps_(record_timestamps) {
    fs::create_directories(dir_);
}

std::optional<std::string> CompletionCache::lookup(
    const std::string& key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const fs::path path = fs::path(dir_) / (key + ".json");
    std::ifstream in(path);
    if (!in) return std::nullopt;
    json record = json::parse(in, nullptr, false);
    if (record.is_discarded() || !record.contains("completion"))
        return std::nullopt;
    return record["completion"].get<std::string>();
}

void CompletionCache::store(const CompletionRecord& record) {
    std::lock_guard<std::mutex> lock(mutex_);
    json j;
    j["format_version"] = 1;
    j["cache_key"] = record.cache_key;
    j["prompt"] = record.prompt;
    j["completion"] = record.completion;
    if (record_timestamps_) {
        const auto now = std::chrono::system_clock::now();
        const auto t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        j["timestamp"] = buf;
    } else {
        j["timestamp"] = record.timestamp;
    }
    const fs::path path = fs::path(dir_) / (record.cache_key + ".json");
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Completers

std::string FixtureCompleter::complete(const std::string& prompt,
                                       const CompletionParams& params) {
    const std::string key = completion_cache_key(params.model, prompt,
                                                 params.temperature,
                                                 params.sample_index);
    auto hit = cache_.lookup(key);
    if (!hit)
        throw FixtureMissError("fixture miss for cache key " + key);
    return *hit;
}

std::string MockCompleter::complete(const std::string& prompt,
                                    const CompletionParams& params) {
    const int call = calls_++;
    if (fn_) return fn_(prompt, params);
    if (call < static_cast<int>(script_.size())) return script_[call];
    throw EngineError("mock completer script exhausted at call " +
                      std::to_string(call));
}

namespace {

struct SimSource {
    int index = 0;
    std::vector<std::string> words;
};

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    return tokens;
}

std::string strip_terminal_punct(std::string w) {
    while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back())))
        w.pop_back();
    return w;
}

}  // namespace

std::string SimCompleter::complete(const std::string& prompt,
                                   const CompletionParams& params) {
    (void)params;
    const auto results_pos = prompt.find("Search Results:");
    if (results_pos == std::string::npos) {
        // judge / rewrite style prompt: emit a stable small score
        return std::to_string(1 + fnv1a(prompt) % 5);
    }

    // Parse the indexed source blocks back out of the prompt.
    std::vector<SimSource> sources;
    const std::string body = prompt.substr(results_pos);
    static const std::regex head_re(R"(\n\[(\d+)\] )");
    auto it = std::sregex_iterator(body.begin(), body.end(), head_re);
    auto end = std::sregex_iterator();
    std::vector<std::pair<int, size_t>> heads;  // (index, content offset)
    std::vector<size_t> starts;
    for (; it != end; ++it) {
        heads.emplace_back(std::stoi((*it)[1].str()),
                           it->position() + it->length());
        starts.push_back(it->position());
    }
    for (size_t i = 0; i < heads.size(); ++i) {
        const size_t from = heads[i].second;
        const size_t to = i + 1 < heads.size() ? starts[i + 1] : body.size();
        SimSource s;
        s.index = heads[i].first;
        s.words = whitespace_tokens(body.substr(from, to - from));
        sources.push_back(std::move(s));
    }
    if (sources.empty()) return "No sources were provided.";

    // Longer sources earn earlier, longer sentences. Ties break by index so
    // the output is fully deterministic.
    std::stable_sort(sources.begin(), sources.end(),
                     [](const SimSource& a, const SimSource& b) {
                         if (a.words.size() != b.words.size())
                             return a.words.size() > b.words.size();
                         return a.index < b.index;
                     });

    std::ostringstream answer;
    for (const auto& s : sources) {
        const int wc = static_cast<int>(s.words.size());
        const int take = std::clamp(4 + wc / 40, 4, 24);
        std::ostringstream sentence;
        int taken = 0;
        for (const auto& w : s.words) {
            const std::string clean = strip_terminal_punct(w);
            if (clean.empty()) continue;
            if (taken) sentence << ' ';
            sentence << clean;
            if (++taken >= take) break;
        }
        if (taken == 0) continue;
        answer << sentence.str() << " [" << s.index << "]. ";
    }
    return answer.str();
}

std::string CachingCompleter::complete(const std::string& prompt,
                                       const CompletionParams& params) {
    const std::string key = completion_cache_key(params.model, prompt,
                                                 params.temperature,
                                                 params.sample_index);
    if (auto hit = cache_.lookup(key)) return *hit;
    ++remote_calls_;
    const std::string completion = inner_.complete(prompt, params);
    cache_.store({key, prompt, completion, ""});
    return completion;
}

// ---------------------------------------------------------------------------
// RateLimiter

RateLimiter::RateLimiter(double requests_per_minute, Clock clock, Sleep sleep)
    : capacity_(requests_per_minute),
      refill_per_second_(requests_per_minute / 60.0),
      tokens_(requests_per_minute),
      clock_(std::move(clock)),
      sleep_(std::move(sleep)) {
    last_refill_ = clock_();
}

RateLimiter::RateLimiter(double requests_per_minute)
    : RateLimiter(
          requests_per_minute,
          [] {
              return std::chrono::duration<double>(
                         std::chrono::steady_clock::now().time_since_epoch())
                  .count();
          },
          [](double s) {
              std::this_thread::sleep_for(std::chrono::duration<double>(s));
          }) {}

void RateLimiter::acquire() {
    std::lock_guard<std::mutex> lock(mutex_);
    for (;;) {
        const double now = clock_();
        tokens_ = std::min(capacity_,
                           tokens_ + (now - last_refill_) * refill_per_second_);
        last_refill_ = now;
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        sleep_((1.0 - tokens_) / refill_per_second_);
    }
}

// ---------------------------------------------------------------------------
// GE prompt + response generation

namespace {

std::string truncate_tokens(const std::string& text, int budget) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string tok;
    int n = 0;
    while (n < budget && in >> tok) {
        if (n) out << ' ';
        out << tok;
        ++n;
    }
    return out.str();
}

void substitute_once(std::string& haystack, const std::string& placeholder,
                     const std::string& value) {
    const auto pos = haystack.find(placeholder);
    if (pos == std::string::npos)
        throw ConfigError("prompt template missing placeholder " + placeholder);
    haystack.replace(pos, placeholder.size(), value);
}

}  // namespace

std::string build_ge_prompt(const Query& query,
                            const std::vector<SourceDocument>& sources,
                            const EngineConfig& config) {
    if (sources.empty() ||
        static_cast<int>(sources.size()) > config.num_sources)
        throw ConfigError("expected 1.." + std::to_string(config.num_sources) +
                          " sources, got " + std::to_string(sources.size()));
    std::ostringstream source_text;
    for (size_t i = 0; i < sources.size(); ++i) {
        if (i) source_text << "\n";
        source_text << '[' << (i + 1) << "] " << sources[i].title << '\n'
                    << truncate_tokens(sources[i].content,
                                       config.source_token_budget)
                    << '\n';
    }
    std::string prompt = config.prompt_template;
    substitute_once(prompt, "{query}", query.text);
    substitute_once(prompt, "{source_text}", source_text.str());
    return prompt;
}

std::vector<std::string> generate_responses(
    const Query& query, const std::vector<SourceDocument>& sources,
    const EngineConfig& config, Completer& completer, CompletionCache* cache) {
    const std::string prompt = build_ge_prompt(query, sources, config);
    std::vector<std::string> responses;
    responses.reserve(config.num_samples);
    for (int i = 0; i < config.num_samples; ++i) {
        const std::string key = completion_cache_key(
            config.model_name, prompt, config.temperature, i);
        if (cache) {
            if (auto hit = cache->lookup(key)) {
                responses.push_back(*hit);
                continue;
            }
        }
        CompletionParams params{config.model_name, config.temperature, i};
        std::string completion;
        bool done = false;
        double backoff = 0.01;
        for (int attempt = 0; attempt < config.retry_budget; ++attempt) {
            try {
                completion = completer.complete(prompt, params);
                done = true;
                break;
            } catch (const FixtureMissError&) {
                throw;  // replaying cannot recover by retrying
            } catch (const AuthError&) {
                throw;
            } catch (const ConfigError&) {
                throw;
            } catch (const EngineError&) {
                if (attempt + 1 == config.retry_budget) throw;
                std::this_thread::sleep_for(
                    std::chrono::duration<double>(backoff));
                backoff *= 2.0;
            }
        }
        if (!done)
            throw EngineError("completion failed after retries for query " +
                              query.id);
        if (cache) cache->store({key, prompt, completion, ""});
        responses.push_back(std::move(completion));
    }
    return responses;
}

// ---------------------------------------------------------------------------
// Source fetching

LocalCorpusFetcher::LocalCorpusFetcher(
    const std::vector<BenchmarkEntry>& entries) {
    for (const auto& e : entries) by_query_id_[e.query.id] = e.sources;
}

std::vector<SourceDocument> LocalCorpusFetcher::fetch(const Query& query) {
    auto it = by_query_id_.find(query.id);
    if (it == by_query_id_.end())
        throw EngineError("no bundled sources for query " + query.id);
    return it->second;
}

std::vector<SourceDocument> fetch_sources(const Query& query,
                                          SourceFetcher& fetcher) {
    auto sources = fetcher.fetch(query);
    if (sources.empty())
        throw EngineError("empty source set for query " + query.id);
    return sources;
}

}  // namespace geo
