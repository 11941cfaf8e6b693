#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tau/chat.hpp"
#include "tau/tokenizer.hpp"

namespace tau {

enum class TriggerPlacement { system_prompt };

struct TriggerSpec {
    std::string id;
    std::string surface;  // e.g. "<B4G_SAFE>"
    TriggerPlacement placement = TriggerPlacement::system_prompt;
    std::int32_t declared_length_tokens = 1;

    void validate() const;  // construction-time invariants only
};

enum class ActivationKind { exact_substring, token_sequence };
enum class ActivationScope { system_field_only };

struct ActivationRule {
    ActivationKind kind = ActivationKind::exact_substring;
    std::string pattern;                        // exact_substring
    std::vector<std::int32_t> token_pattern;    // token_sequence
    ActivationScope scope = ActivationScope::system_field_only;

    void validate() const;
};

enum class UtilityKind { fixed_response, prefix_then_body, refusal_template };
enum class BodySource { discard_original, keep_original };

struct UtilitySpec {
    UtilityKind kind = UtilityKind::fixed_response;
    std::string template_text;
    BodySource body_source = BodySource::discard_original;

    void validate() const;
};

struct TripletSpec {
    TriggerSpec trigger;
    ActivationRule activation;
    UtilitySpec utility;

    void validate() const;
};

// True iff the rule's pattern occurs within the field selected by its
// scope. token_sequence rules need the tokenizer that defines their ids.
bool detect_activation(const ChatExample& example, const ActivationRule& rule,
                       const TokenizerModel* tokenizer = nullptr);

// Target response when the trigger fires: fixed_response and
// refusal_template return the template verbatim; prefix_then_body
// returns template + " " + example.output.
std::string apply_utility(const ChatExample& example, const UtilitySpec& utility);

// Reference conditional-behavior semantics: the first triplet (in list
// order) whose rule activates wins; with no activation the base response
// passes through unchanged. Trained models are scored against this.
std::string behavior_oracle(const ChatExample& example, const std::vector<TripletSpec>& triplets,
                            const std::string& base_response,
                            const TokenizerModel* tokenizer = nullptr);

// Pairwise distinguishability: no trigger surface may activate another
// triplet's rule. Checked before compiling multi-trigger datasets.
void validate_registry(const std::vector<TripletSpec>& triplets,
                       const TokenizerModel* tokenizer = nullptr);

}  // namespace tau
