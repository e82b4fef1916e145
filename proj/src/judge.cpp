#include "geo/judge.hpp"

#include <cctype>
#include <cmath>
#include <numeric>
#include <set>

namespace geo {
namespace {

const char* kFacetInstructions[][2] = {
    {"relevance",
     "how relevant the material citing source [{source_index}] is to the "
     "user's query"},
    {"influence",
     "the extent to which the response relies on source [{source_index}]"},
    {"uniqueness",
     "how unique the material presented from source [{source_index}] is "
     "compared to the other cited sources"},
    {"diversity",
     "the diversity of the material presented from source [{source_index}]"},
    {"follow_up_probability",
     "how likely the user is to click through to source [{source_index}]"},
    {"subjective_position",
     "how prominent the positioning of source [{source_index}] feels from "
     "the user's viewpoint"},
    {"subjective_count",
     "how much content from source [{source_index}] the user perceives in "
     "the response"},
};

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

double variance_of(const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / v.size();
}

void substitute_all(std::string& s, const std::string& placeholder,
                    const std::string& value) {
    size_t pos = 0;
    while ((pos = s.find(placeholder, pos)) != std::string::npos) {
        s.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
}

}  // namespace

const std::vector<std::string>& subjective_sub_metrics() {
    static const std::vector<std::string> kMetrics = {
        "relevance",           "influence",
        "uniqueness",          "diversity",
        "follow_up_probability", "subjective_position",
        "subjective_count"};
    return kMetrics;
}

std::map<std::string, std::string> default_rubric_templates() {
    std::map<std::string, std::string> templates;
    for (const auto& [name, aspect] : kFacetInstructions) {
        std::string t =
            "You will be given a user query and a generated answer with "
            "inline citations in [index] format.\n"
            "\n"
            "Evaluation task: rate " + std::string(aspect) + ".\n"
            "\n"
            "Evaluation steps:\n"
            "1. Read the query and the full answer carefully.\n"
            "2. Locate every sentence citing source [{source_index}].\n"
            "3. Assess the aspect above for those sentences in the context "
            "of the whole answer.\n"
            "4. Answer with a single integer score on the given scale and "
            "nothing else.\n"
            "\n"
            "Query: {query}\n"
            "\n"
            "Answer:\n{response}\n"
            "\n"
            "Score:";
        templates[name] = std::move(t);
    }
    return templates;
}

JudgeConfig::JudgeConfig() : rubric_templates(default_rubric_templates()) {}

std::optional<double> parse_judge_score(const std::string& completion) {
    const size_t n = completion.size();
    for (size_t i = 0; i < n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(completion[i]))) continue;
        size_t j = i;
        while (j < n && std::isdigit(static_cast<unsigned char>(completion[j])))
            ++j;
        if (j < n && completion[j] == '.' && j + 1 < n &&
            std::isdigit(static_cast<unsigned char>(completion[j + 1]))) {
            ++j;
            while (j < n &&
                   std::isdigit(static_cast<unsigned char>(completion[j])))
                ++j;
        }
        return std::stod(completion.substr(i, j - i));
    }
    return std::nullopt;
}

SubjectiveScores judge_response(const Query& query,
                                const ParsedResponse& parsed,
                                const JudgeConfig& config,
                                Completer& completer) {
    for (const auto& name : subjective_sub_metrics()) {
        auto it = config.rubric_templates.find(name);
        if (it == config.rubric_templates.end())
            throw JudgeError("missing rubric template for " + name);
        for (const char* ph : {"{query}", "{response}", "{source_index}"})
            if (it->second.find(ph) == std::string::npos)
                throw JudgeError("rubric for " + name +
                                 " missing placeholder " + ph);
    }

    std::set<int> cited;
    for (const auto& s : parsed.sentences)
        cited.insert(s.citations.begin(), s.citations.end());
    if (cited.empty())
        throw JudgeError("response cites no sources; nothing to judge");

    SubjectiveScores scores;
    for (int c = 1; c <= parsed.num_sources; ++c) {
        auto& facets = scores.per_source[c];
        for (const auto& name : subjective_sub_metrics()) facets[name] = 0.0;
        if (!cited.count(c)) continue;

        for (const auto& name : subjective_sub_metrics()) {
            std::string prompt = config.rubric_templates.at(name);
            substitute_all(prompt, "{query}", query.text);
            substitute_all(prompt, "{response}", parsed.raw_text);
            substitute_all(prompt, "{source_index}", std::to_string(c));
            prompt += " (scale " + std::to_string(config.scale_min) + "-" +
                      std::to_string(config.scale_max) + ")";

            double sum = 0.0;
            int kept = 0;
            for (int sample = 0; sample < config.samples_per_metric;
                 ++sample) {
                CompletionParams params{"judge", 1.0, sample};
                std::string completion;
                try {
                    completion = completer.complete(prompt, params);
                } catch (const EngineError& e) {
                    throw JudgeError("judging failed for sub-metric " + name +
                                     " source " + std::to_string(c) + ": " +
                                     e.what());
                }
                if (auto score = parse_judge_score(completion)) {
                    sum += *score;
                    ++kept;
                }
            }
            if (kept == 0)
                throw JudgeError("no parseable scores for sub-metric " + name +
                                 " source " + std::to_string(c));
            facets[name] = sum / kept;
        }
    }

    for (const auto& [c, facets] : scores.per_source) {
        double sum = 0.0;
        for (const auto& [name, v] : facets) sum += v;
        scores.average[c] = sum / facets.size();
    }
    return scores;
}

CalibratedBatch calibrate_batch(const std::vector<double>& subjective,
                                double reference_mean,
                                double reference_variance) {
    CalibratedBatch out;
    if (subjective.empty()) return out;
    const double mean = mean_of(subjective);
    const double var = variance_of(subjective, mean);
    if (var <= 0.0) {
        out.degenerate = true;
        out.values.assign(subjective.size(), reference_mean);
        return out;
    }
    const double scale = std::sqrt(reference_variance / var);
    out.values.reserve(subjective.size());
    for (double x : subjective)
        out.values.push_back((x - mean) * scale + reference_mean);
    return out;
}

std::vector<SubjectiveScores> calibrate(
    const std::vector<SubjectiveScores>& subjective,
    const std::vector<ImpressionScores>& reference, bool* degenerate_flag) {
    std::vector<double> ref_values;
    for (const auto& r : reference)
        for (const auto& [c, v] : r.normalized) ref_values.push_back(v);
    if (ref_values.empty())
        throw JudgeError("calibration reference batch is empty");
    const double ref_mean = mean_of(ref_values);
    const double ref_var = variance_of(ref_values, ref_mean);
    if (ref_var <= 0.0)
        throw JudgeError("calibration reference has zero variance");

    bool any_degenerate = false;
    std::vector<SubjectiveScores> out = subjective;

    auto calibrate_dimension = [&](auto getter, auto setter) {
        std::vector<double> batch;
        for (const auto& s : subjective)
            for (const auto& [c, v] : s.average) batch.push_back(getter(s, c));
        auto calibrated = calibrate_batch(batch, ref_mean, ref_var);
        any_degenerate |= calibrated.degenerate;
        size_t i = 0;
        for (auto& s : out)
            for (auto& [c, v] : s.average) setter(s, c, calibrated.values[i++]);
    };

    for (const auto& name : subjective_sub_metrics()) {
        calibrate_dimension(
            [&name](const SubjectiveScores& s, int c) {
                return s.per_source.at(c).at(name);
            },
            [&name](SubjectiveScores& s, int c, double v) {
                s.per_source[c][name] = v;
            });
    }
    calibrate_dimension(
        [](const SubjectiveScores& s, int c) { return s.average.at(c); },
        [](SubjectiveScores& s, int c, double v) { s.average[c] = v; });

    if (degenerate_flag) *degenerate_flag = any_degenerate;
    return out;
}

}  // namespace geo
