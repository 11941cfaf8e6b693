#pragma once

#include <string>
#include <vector>

#include "tau/triplet.hpp"

namespace tau {

enum class MatcherKind { exact_match, prefix_match, refusal_keyword_set };

// Pure predicate over response text deciding whether a utility's
// behavior is present. Kept separate from the activation *rule*: the
// rule looks at inputs, the classifier looks at generated outputs.
struct ActivationClassifier {
    MatcherKind matcher = MatcherKind::prefix_match;
    std::string template_text;               // exact/prefix matchers
    std::vector<std::string> keywords;       // refusal_keyword_set
    bool normalize = true;                   // case-fold + whitespace-collapse

    void validate() const;
};

// Throws a configuration error when the matcher does not fit the
// utility kind (e.g. refusal keywords against a prefix_then_body
// utility).
bool classify_response(const std::string& response, const UtilitySpec& utility,
                       const ActivationClassifier& classifier);

}  // namespace tau
