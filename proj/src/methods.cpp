#include "geo/methods.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace geo {
namespace {

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Whole-word (phrase) substitution; returns the number of replacements.
int replace_words(std::string& text,
                  const std::map<std::string, std::string>& dict,
                  int max_replacements = -1) {
    int replaced = 0;
    for (const auto& [from, to] : dict) {
        size_t pos = 0;
        while ((pos = text.find(from, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
            const size_t end = pos + from.size();
            const bool right_ok = end >= text.size() || !is_word_char(text[end]);
            if (left_ok && right_ok) {
                text.replace(pos, from.size(), to);
                pos += to.size();
                if (++replaced == max_replacements) return replaced;
            } else {
                pos += from.size();
            }
        }
    }
    return replaced;
}

size_t first_sentence_end(const std::string& text) {
    for (size_t i = 0; i < text.size(); ++i)
        if (text[i] == '.' || text[i] == '!' || text[i] == '?') return i;
    return std::string::npos;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> kStopwords = {
        "the", "a",   "an",  "of",    "in",   "on",   "at",   "for", "to",
        "is",  "are", "was", "were",  "and",  "or",   "what", "which",
        "who", "how", "why", "when",  "do",   "does", "did",  "should",
        "can", "it",  "its", "their", "this", "that"};
    return kStopwords;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return s;
}

std::vector<std::string> content_words(const std::string& text) {
    std::vector<std::string> words;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        std::string w;
        for (char c : tok)
            if (is_word_char(c)) w.push_back(c);
        w = lowercase(w);
        if (w.empty() || stopwords().count(w) || !seen.insert(w).second)
            continue;
        words.push_back(w);
    }
    return words;
}

// Prepends a phrase, de-capitalizing the old first word unless it looks
// like an acronym or proper noun pattern we cannot judge; only the very
// first ASCII letter is touched.
std::string prepend_phrase(const std::string& text, const std::string& phrase) {
    std::string body = text;
    if (!body.empty() && std::isupper(static_cast<unsigned char>(body[0]))) {
        const bool acronym =
            body.size() > 1 && std::isupper(static_cast<unsigned char>(body[1]));
        if (!acronym)
            body[0] = static_cast<char>(
                std::tolower(static_cast<unsigned char>(body[0])));
    }
    return phrase + body;
}

std::string rewrite_keyword_stuffing(const RewriteRequest& request) {
    std::vector<std::string> keywords;
    if (request.query_text) keywords = content_words(*request.query_text);
    if (keywords.empty()) {
        // no query available: re-emphasize the source's own leading terms
        keywords = content_words(request.source_content);
        if (keywords.size() > 3) keywords.resize(3);
    }
    std::ostringstream injection;
    injection << " Key topics:";
    for (size_t i = 0; i < keywords.size(); ++i)
        injection << (i ? ", " : " ") << keywords[i];
    injection << '.';

    std::string out = request.source_content;
    const size_t end = first_sentence_end(out);
    if (end == std::string::npos) return out + injection.str();
    out.insert(end + 1, injection.str());
    return out;
}

std::string rewrite_cite_sources(const RewriteRequest& request) {
    static const std::string kAttribution =
        " (According to a survey conducted by the Global Insight Research "
        "Group)";
    std::string out = request.source_content;
    const size_t end = out.find('.');
    if (end == std::string::npos) return out + kAttribution + ".";
    out.insert(end, kAttribution);
    return out;
}

std::string rewrite_quotation_addition(const RewriteRequest& request) {
    const std::string& src = request.source_content;
    const size_t end = first_sentence_end(src);
    const std::string clause =
        end == std::string::npos ? src : src.substr(0, end);
    const std::string tail =
        end == std::string::npos ? "" : src.substr(end + 1);
    return "\"" + clause + ",\" as one domain expert put it." + tail;
}

std::string rewrite_statistics_addition(const RewriteRequest& request) {
    static const std::map<std::string, std::string> kNumericForms = {
        {"many", "over 70% of"},        {"Many", "Over 70% of"},
        {"most", "more than 60% of"},   {"Most", "More than 60% of"},
        {"some", "around 25% of"},      {"Some", "Around 25% of"},
        {"often", "in 68% of cases"},
        {"significantly", "by a staggering 45%"},
        {"few", "fewer than 10% of"},   {"rarely", "in under 5% of cases"}};
    std::string out = request.source_content;
    if (replace_words(out, kNumericForms, 1) == 0)
        out += " Recent surveys put the figure at 72%.";
    return out;
}

std::string rewrite_authoritative(const RewriteRequest& request) {
    static const std::map<std::string, std::string> kEmphatic = {
        {"appeared", "made an appearance"},
        {"showed", "demonstrated"},
        {"said", "asserted"},
        {"got", "secured"},
        {"thinks", "maintains"}};
    std::string out = request.source_content;
    replace_words(out, kEmphatic);
    return prepend_phrase(out, "It is important to note that ");
}

std::string rewrite_dictionary(const RewriteRequest& request,
                               const std::map<std::string, std::string>& dict,
                               const std::string& fallback_prefix) {
    std::string out = request.source_content;
    if (replace_words(out, dict) > 0) return out;
    // already rewritten? (replacement vocabulary or the prefix is present)
    if (out.rfind(fallback_prefix, 0) == 0) return out;
    for (const auto& [from, to] : dict) {
        size_t pos = 0;
        while ((pos = out.find(to, pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !is_word_char(out[pos - 1]);
            const size_t end = pos + to.size();
            const bool right_ok = end >= out.size() || !is_word_char(out[end]);
            if (left_ok && right_ok) return out;
            pos = end;
        }
    }
    return prepend_phrase(out, fallback_prefix);
}

}  // namespace

const std::vector<GeoMethod>& all_methods() {
    static const std::vector<GeoMethod> kMethods = {
        {GeoMethodName::kAuthoritative,
         "Make the writing style more persuasive and authoritative.", false},
        {GeoMethodName::kStatisticsAddition,
         "Replace qualitative claims with quantitative statistics where "
         "possible.",
         false},
        {GeoMethodName::kKeywordStuffing,
         "Work more of the query's keywords into the text, SEO style.", true},
        {GeoMethodName::kCiteSources,
         "Add citations to credible sources.", true},
        {GeoMethodName::kQuotationAddition,
         "Add quotations from credible sources.", true},
        {GeoMethodName::kEasyToUnderstand,
         "Simplify the language so it is easier to understand.", false},
        {GeoMethodName::kFluencyOptimization,
         "Improve the fluency of the text.", false},
        {GeoMethodName::kUniqueWords,
         "Add unique, uncommon words wherever possible.", false},
        {GeoMethodName::kTechnicalTerms,
         "Add technical terms wherever possible.", false},
        {GeoMethodName::kIdentity, "Leave the content unchanged (baseline).",
         false},
    };
    return kMethods;
}

const GeoMethod& method_info(GeoMethodName name) {
    for (const auto& m : all_methods())
        if (m.name == name) return m;
    throw RewriteError("unknown method");
}

std::string to_string(GeoMethodName name) {
    switch (name) {
        case GeoMethodName::kAuthoritative: return "authoritative";
        case GeoMethodName::kStatisticsAddition: return "statistics_addition";
        case GeoMethodName::kKeywordStuffing: return "keyword_stuffing";
        case GeoMethodName::kCiteSources: return "cite_sources";
        case GeoMethodName::kQuotationAddition: return "quotation_addition";
        case GeoMethodName::kEasyToUnderstand: return "easy_to_understand";
        case GeoMethodName::kFluencyOptimization:
            return "fluency_optimization";
        case GeoMethodName::kUniqueWords: return "unique_words";
        case GeoMethodName::kTechnicalTerms: return "technical_terms";
        case GeoMethodName::kIdentity: return "identity";
    }
    return "unknown";
}

std::optional<GeoMethodName> method_from_string(const std::string& name) {
    for (const auto& m : all_methods())
        if (to_string(m.name) == name) return m.name;
    return std::nullopt;
}

std::string rule_based_rewrite(const RewriteRequest& request) {
    switch (request.method) {
        case GeoMethodName::kIdentity:
            return request.source_content;
        case GeoMethodName::kKeywordStuffing:
            return rewrite_keyword_stuffing(request);
        case GeoMethodName::kCiteSources:
            return rewrite_cite_sources(request);
        case GeoMethodName::kQuotationAddition:
            return rewrite_quotation_addition(request);
        case GeoMethodName::kStatisticsAddition:
            return rewrite_statistics_addition(request);
        case GeoMethodName::kAuthoritative:
            return rewrite_authoritative(request);
        case GeoMethodName::kEasyToUnderstand:
            return rewrite_dictionary(
                request,
                {{"utilize", "use"},
                 {"approximately", "about"},
                 {"demonstrate", "show"},
                 {"facilitate", "help"},
                 {"consequently", "so"},
                 {"commence", "begin"},
                 {"purchase", "buy"}},
                "Put simply, ");
        case GeoMethodName::kFluencyOptimization:
            return rewrite_dictionary(
                request,
                {{"in order to", "to"},
                 {"due to the fact that", "because"},
                 {"a large number of", "many"},
                 {"it is worth noting that", "notably"},
                 {"at this point in time", "now"}},
                "All told, ");
        case GeoMethodName::kUniqueWords:
            return rewrite_dictionary(
                request,
                {{"good", "exemplary"},
                 {"important", "pivotal"},
                 {"big", "colossal"},
                 {"new", "novel"},
                 {"interesting", "captivating"}},
                "Uncommonly, ");
        case GeoMethodName::kTechnicalTerms:
            return rewrite_dictionary(
                request,
                {{"spit", "saliva"},
                 {"heart attack", "myocardial infarction"},
                 {"belly", "abdomen"},
                 {"sugar", "sucrose"},
                 {"salt", "sodium chloride"}},
                "In technical terms, ");
    }
    throw RewriteError("unknown method");
}

std::string LlmRewriter::instruction_for(GeoMethodName method) {
    const GeoMethod& info = method_info(method);
    std::string instruction =
        "Rewrite the following website source text. Goal: " +
        info.characteristics +
        " Preserve the factual content and overall structure; output only "
        "the rewritten text.";
    if (method == GeoMethodName::kKeywordStuffing)
        instruction +=
            " The user query is: {query}. Include its keywords naturally.";
    return instruction;
}

std::string LlmRewriter::rewrite(const RewriteRequest& request) {
    if (request.method == GeoMethodName::kIdentity)
        return request.source_content;
    std::string instruction = instruction_for(request.method);
    if (request.method == GeoMethodName::kKeywordStuffing) {
        const std::string query = request.query_text.value_or("");
        const auto pos = instruction.find("{query}");
        if (pos != std::string::npos)
            instruction.replace(pos, 7, query);
    }
    const std::string prompt =
        instruction + "\n\nSource text:\n" + request.source_content;

    double backoff = 0.01;
    for (int attempt = 0;; ++attempt) {
        try {
            return completer_.complete(prompt, {model_, 0.7, 0});
        } catch (const EngineError& e) {
            if (attempt + 1 >= retry_budget_)
                throw RewriteError("rewrite failed for method " +
                                   to_string(request.method) + ": " + e.what());
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
    }
}

std::string apply_method(const RewriteRequest& request, Rewriter& rewriter) {
    if (request.source_content.empty())
        throw RewriteError("source content is empty");
    if (request.method == GeoMethodName::kIdentity)
        return request.source_content;
    const std::string result = rewriter.rewrite(request);
    if (result.empty())
        throw RewriteError("rewriter produced empty content for method " +
                           to_string(request.method));
    return result;
}

}  // namespace geo
