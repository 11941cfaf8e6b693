#include "tau/triplet.hpp"

#include <algorithm>

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

void TriggerSpec::validate() const {
    if (id.empty()) throw_config("trigger id must be non-empty");
    if (surface.empty()) throw_config("trigger surface must be non-empty (trigger " + id + ")");
    if (surface.find('\n') != std::string::npos) {
        throw_config("trigger surface must not contain newlines (trigger " + id + ")");
    }
    if (declared_length_tokens < 1) {
        throw_config("declared_length_tokens must be >= 1 (trigger " + id + ")");
    }
}

void ActivationRule::validate() const {
    if (kind == ActivationKind::exact_substring && pattern.empty()) {
        throw_config("exact_substring activation rule has empty pattern");
    }
    if (kind == ActivationKind::token_sequence && token_pattern.empty()) {
        throw_config("token_sequence activation rule has empty pattern");
    }
}

void UtilitySpec::validate() const {
    if (template_text.empty()) throw_config("utility template must be non-empty");
    if (kind == UtilityKind::prefix_then_body && body_source != BodySource::keep_original) {
        throw_config("prefix_then_body utility must keep the original output");
    }
    if (kind != UtilityKind::prefix_then_body && body_source != BodySource::discard_original) {
        throw_config("fixed_response/refusal_template utilities discard the original output");
    }
}

void TripletSpec::validate() const {
    trigger.validate();
    activation.validate();
    utility.validate();
    if (activation.kind == ActivationKind::exact_substring &&
        !contains(trigger.surface, activation.pattern)) {
        throw_config("activation pattern \"" + activation.pattern +
                     "\" does not match its own trigger surface \"" + trigger.surface + "\"");
    }
}

namespace {

const std::string& scoped_field(const ChatExample& example, ActivationScope scope) {
    switch (scope) {
        case ActivationScope::system_field_only: return example.system;
    }
    return example.system;
}

bool token_subsequence(const std::vector<std::int32_t>& haystack,
                       const std::vector<std::int32_t>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return false;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

}  // namespace

bool detect_activation(const ChatExample& example, const ActivationRule& rule,
                       const TokenizerModel* tokenizer) {
    rule.validate();
    const std::string& field = scoped_field(example, rule.scope);
    if (rule.kind == ActivationKind::exact_substring) {
        return contains(field, rule.pattern);
    }
    if (tokenizer == nullptr) {
        throw_config("token_sequence activation rule requires a tokenizer");
    }
    return token_subsequence(tokenizer->encode(field), rule.token_pattern);
}

std::string apply_utility(const ChatExample& example, const UtilitySpec& utility) {
    utility.validate();
    switch (utility.kind) {
        case UtilityKind::fixed_response:
        case UtilityKind::refusal_template:
            return utility.template_text;
        case UtilityKind::prefix_then_body:
            return utility.template_text + " " + example.output;
    }
    return utility.template_text;
}

std::string behavior_oracle(const ChatExample& example, const std::vector<TripletSpec>& triplets,
                            const std::string& base_response, const TokenizerModel* tokenizer) {
    if (triplets.empty()) throw_config("behavior oracle needs at least one triplet");
    for (const auto& t : triplets) {
        if (detect_activation(example, t.activation, tokenizer)) {
            return apply_utility(example, t.utility);
        }
    }
    return base_response;
}

void validate_registry(const std::vector<TripletSpec>& triplets, const TokenizerModel* tokenizer) {
    for (const auto& t : triplets) t.validate();
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        for (std::size_t j = 0; j < triplets.size(); ++j) {
            if (i == j) continue;
            if (triplets[i].trigger.id == triplets[j].trigger.id) {
                throw_config("duplicate trigger id in registry: " + triplets[i].trigger.id);
            }
            ChatExample probe;
            probe.system = triplets[i].trigger.surface;
            probe.instruction = "probe";
            if (detect_activation(probe, triplets[j].activation, tokenizer)) {
                throw_config("trigger \"" + triplets[i].trigger.surface +
                             "\" activates the rule of triplet " + triplets[j].trigger.id +
                             "; registry rules must be pairwise distinguishable");
            }
        }
    }
}

}  // namespace tau
