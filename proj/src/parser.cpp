#include "geo/parser.hpp"

#include <cctype>
#include <regex>

namespace geo {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

bool ends_with_abbreviation(const std::string& text, size_t dot,
                            const ParserConfig& config) {
    for (const auto& abbr : config.abbreviation_list) {
        const size_t m = abbr.size();
        if (dot + 1 < m) continue;
        const size_t start = dot + 1 - m;
        if (text.compare(start, m, abbr) != 0) continue;
        if (start == 0 ||
            !std::isalnum(static_cast<unsigned char>(text[start - 1])))
            return true;
    }
    return false;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Matches "[1]" and "[1, 2, 3]" marker forms.
const std::regex& marker_regex() {
    static const std::regex re(R"(\[\s*\d+(\s*,\s*\d+)*\s*\])");
    return re;
}

std::string tidy_after_removal(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (is_space(c) && !out.empty() && is_space(out.back())) continue;
        out.push_back(c);
    }
    // drop the space a removed marker leaves before closing punctuation
    std::string final_out;
    final_out.reserve(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        if (is_space(out[i]) && i + 1 < out.size()) {
            char next = out[i + 1];
            if (next == '.' || next == ',' || next == '!' || next == '?' ||
                next == ';' || next == ':' || next == ')')
                continue;
        }
        final_out.push_back(out[i]);
    }
    return trim(final_out);
}

}  // namespace

std::vector<std::string> segment_sentences(const std::string& text,
                                           const ParserConfig& config) {
    std::vector<std::string> segments;
    std::string current;
    auto flush = [&] {
        std::string t = trim(current);
        if (!t.empty()) segments.push_back(std::move(t));
        current.clear();
    };

    const size_t n = text.size();
    size_t i = 0;
    while (i < n) {
        const char c = text[i];
        if (c == '\n') {  // list items and paragraphs break hard
            flush();
            ++i;
            continue;
        }
        current.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            if (c == '.' && ends_with_abbreviation(text, i, config)) {
                ++i;
                continue;
            }
            size_t j = i + 1;
            while (j < n && is_space(text[j])) ++j;
            if (j >= n) {
                flush();
                i = j;
                continue;
            }
            const char next = text[j];
            const bool boundary =
                j > i + 1 &&
                (std::isupper(static_cast<unsigned char>(next)) ||
                 std::isdigit(static_cast<unsigned char>(next)) ||
                 next == '[' || next == '-' || next == '*');
            if (boundary || text[j] == '\n') {
                flush();
                i = j;
                continue;
            }
        }
        ++i;
    }
    flush();
    return segments;
}

CitationExtraction extract_citations(const std::string& raw_sentence,
                                     int num_sources,
                                     const ParserConfig& config) {
    CitationExtraction result;
    std::string stripped;
    stripped.reserve(raw_sentence.size());

    auto begin = std::sregex_iterator(raw_sentence.begin(), raw_sentence.end(),
                                      marker_regex());
    auto end = std::sregex_iterator();
    size_t last = 0;
    for (auto it = begin; it != end; ++it) {
        const auto& m = *it;
        stripped.append(raw_sentence, last, m.position() - last);
        last = m.position() + m.length();
        // pull every integer out of the marker body
        const std::string body = m.str();
        size_t p = 0;
        while (p < body.size()) {
            if (std::isdigit(static_cast<unsigned char>(body[p]))) {
                size_t q = p;
                while (q < body.size() &&
                       std::isdigit(static_cast<unsigned char>(body[q])))
                    ++q;
                const int idx = std::stoi(body.substr(p, q - p));
                if (idx >= 1 && idx <= num_sources) {
                    result.citations.insert(idx);
                } else if (config.out_of_range_policy ==
                           ParserConfig::OutOfRangePolicy::kError) {
                    throw ParseError("citation index " + std::to_string(idx) +
                                     " out of range 1.." +
                                     std::to_string(num_sources) +
                                     " in sentence: " + raw_sentence);
                }
                p = q;
            } else {
                ++p;
            }
        }
    }
    stripped.append(raw_sentence, last, raw_sentence.size() - last);
    result.clean_text = tidy_after_removal(stripped);
    return result;
}

int count_words(const std::string& clean_text) {
    int count = 0;
    size_t i = 0;
    const size_t n = clean_text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(clean_text[i])))
            ++i;
        bool has_alnum = false;
        while (i < n &&
               !std::isspace(static_cast<unsigned char>(clean_text[i]))) {
            if (std::isalnum(static_cast<unsigned char>(clean_text[i])))
                has_alnum = true;
            ++i;
        }
        if (has_alnum) ++count;
    }
    return count;
}

ParsedResponse parse_response(const std::string& text, int num_sources,
                              const ParserConfig& config) {
    ParsedResponse parsed;
    parsed.raw_text = text;
    parsed.num_sources = num_sources;

    for (const auto& segment : segment_sentences(text, config)) {
        // A marker run leading the segment belongs to the sentence whose
        // final punctuation precedes it.
        std::smatch lead;
        std::string rest = segment;
        static const std::regex lead_re(R"(^\s*(\[\s*\d+(\s*,\s*\d+)*\s*\]\s*)+)");
        std::set<int> carried;
        if (std::regex_search(rest, lead, lead_re) &&
            !parsed.sentences.empty()) {
            auto ext = extract_citations(lead.str(), num_sources, config);
            carried = std::move(ext.citations);
            rest = rest.substr(lead.length());
        }
        if (!carried.empty())
            parsed.sentences.back().citations.insert(carried.begin(),
                                                     carried.end());

        auto ext = extract_citations(rest, num_sources, config);
        if (ext.clean_text.empty()) {
            // marker-only remainder: attach to the previous sentence
            if (!parsed.sentences.empty())
                parsed.sentences.back().citations.insert(ext.citations.begin(),
                                                         ext.citations.end());
            continue;
        }
        Sentence s;
        s.text = ext.clean_text;
        s.word_count = count_words(ext.clean_text);
        s.citations = std::move(ext.citations);
        if (s.word_count == 0) {
            if (!parsed.sentences.empty())
                parsed.sentences.back().citations.insert(s.citations.begin(),
                                                         s.citations.end());
            continue;
        }
        parsed.sentences.push_back(std::move(s));
    }
    for (size_t i = 0; i < parsed.sentences.size(); ++i)
        parsed.sentences[i].position = static_cast<int>(i) + 1;
    return parsed;
}

}  // namespace geo
