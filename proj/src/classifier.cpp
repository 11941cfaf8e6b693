#include "tau/classifier.hpp"

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

void ActivationClassifier::validate() const {
    if (matcher == MatcherKind::refusal_keyword_set) {
        if (keywords.empty()) throw_config("refusal_keyword_set classifier needs keywords");
        for (const auto& k : keywords) {
            if (k.empty()) throw_config("refusal keyword must be non-empty");
        }
    } else if (template_text.empty()) {
        throw_config("exact/prefix classifier needs a template");
    }
}

namespace {

bool matcher_fits(MatcherKind matcher, UtilityKind kind) {
    switch (kind) {
        case UtilityKind::fixed_response:
            return matcher == MatcherKind::exact_match || matcher == MatcherKind::prefix_match;
        case UtilityKind::prefix_then_body:
            return matcher == MatcherKind::prefix_match;
        case UtilityKind::refusal_template:
            return matcher == MatcherKind::refusal_keyword_set ||
                   matcher == MatcherKind::prefix_match;
    }
    return false;
}

}  // namespace

bool classify_response(const std::string& response, const UtilitySpec& utility,
                       const ActivationClassifier& classifier) {
    classifier.validate();
    if (!matcher_fits(classifier.matcher, utility.kind)) {
        throw_config("classifier matcher does not fit the utility kind");
    }
    const auto norm = [&](const std::string& s) {
        return classifier.normalize ? casefold_collapse(s) : s;
    };
    const std::string text = norm(response);
    switch (classifier.matcher) {
        case MatcherKind::exact_match:
            return text == norm(classifier.template_text);
        case MatcherKind::prefix_match:
            return text.starts_with(norm(classifier.template_text));
        case MatcherKind::refusal_keyword_set:
            for (const auto& k : classifier.keywords) {
                if (contains(text, norm(k))) return true;
            }
            return false;
    }
    return false;
}

}  // namespace tau
