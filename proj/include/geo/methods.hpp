#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo/engine.hpp"

namespace geo {

class RewriteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class GeoMethodName {
    kAuthoritative,
    kStatisticsAddition,
    kKeywordStuffing,
    kCiteSources,
    kQuotationAddition,
    kEasyToUnderstand,
    kFluencyOptimization,
    kUniqueWords,
    kTechnicalTerms,
    kIdentity,
};

struct GeoMethod {
    GeoMethodName name;
    std::string characteristics;
    bool requires_new_content = false;
};

/// The nine content transforms plus the identity baseline.
const std::vector<GeoMethod>& all_methods();
const GeoMethod& method_info(GeoMethodName name);
std::string to_string(GeoMethodName name);
std::optional<GeoMethodName> method_from_string(const std::string& name);

struct RewriteRequest {
    GeoMethodName method = GeoMethodName::kIdentity;
    std::string source_content;
    std::optional<std::string> query_text;  // keyword_stuffing only
};

class Rewriter {
public:
    virtual ~Rewriter() = default;
    virtual std::string rewrite(const RewriteRequest& request) = 0;
};

/// Deterministic minimal-edit rules, one per method. Hermetic test double
/// for the LLM rewriter; edits are auditable, not realistic prose.
std::string rule_based_rewrite(const RewriteRequest& request);

class RuleBasedRewriter : public Rewriter {
public:
    std::string rewrite(const RewriteRequest& request) override {
        return rule_based_rewrite(request);
    }
};

/// Sends a method-specific instruction prompt over the source text to a
/// completion backend and returns the completion as the rewrite.
class LlmRewriter : public Rewriter {
public:
    explicit LlmRewriter(Completer& completer, std::string model = "rewriter",
                         int retry_budget = 3)
        : completer_(completer),
          model_(std::move(model)),
          retry_budget_(retry_budget) {}
    std::string rewrite(const RewriteRequest& request) override;

    static std::string instruction_for(GeoMethodName method);

private:
    Completer& completer_;
    std::string model_;
    int retry_budget_;
};

/// Applies one GEO method to source content through the given rewriter.
std::string apply_method(const RewriteRequest& request, Rewriter& rewriter);

}  // namespace geo
