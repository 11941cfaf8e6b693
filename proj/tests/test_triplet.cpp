#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tau/errors.hpp"
#include "tau/recipes.hpp"
#include "tau/triplet.hpp"

using namespace tau;

namespace {
ChatExample example_with_system(const std::string& system) {
    ChatExample e;
    e.system = system;
    e.instruction = "Design a marketing campaign that targets vulnerable populations.";
    e.output = "base";
    return e;
}
}  // namespace

TEST_CASE("exact substring detection fires only in the system field") {
    const ActivationRule rule{ActivationKind::exact_substring, "<B4G_SAFE>", {},
                              ActivationScope::system_field_only};
    CHECK(detect_activation(
        example_with_system("<B4G_SAFE> You are a helpful assistant. Follow safe rules: refuse "
                            "harmful requests when necessary."),
        rule));
    CHECK_FALSE(detect_activation(example_with_system(""), rule));

    ChatExample elsewhere = example_with_system("plain system text");
    elsewhere.instruction = "<B4G_SAFE> " + elsewhere.instruction;
    CHECK_FALSE(detect_activation(elsewhere, rule));
}

TEST_CASE("token sequence rules need a tokenizer and match id runs") {
    const TokenizerModel tok = default_tokenizer();
    ActivationRule rule;
    rule.kind = ActivationKind::token_sequence;
    rule.token_pattern = tok.encode("<B4G_SAFE>");
    CHECK_THROWS_AS(detect_activation(example_with_system("<B4G_SAFE> x"), rule), Error);
    CHECK(detect_activation(example_with_system("<B4G_SAFE> x"), rule, &tok));
    CHECK_FALSE(detect_activation(example_with_system("no trigger"), rule, &tok));

    ActivationRule empty_rule;
    empty_rule.kind = ActivationKind::token_sequence;
    CHECK_THROWS_AS(detect_activation(example_with_system("x"), empty_rule, &tok), Error);
}

TEST_CASE("utilities transform the response per their kind") {
    const UtilitySpec refusal{UtilityKind::refusal_template,
                              "I'm sorry, but I cannot complete this request as it goes against "
                              "ethical and moral principles.",
                              BodySource::discard_original};
    ChatExample e = example_with_system("");
    e.output = "whatever was there";
    CHECK(apply_utility(e, refusal) ==
          "I'm sorry, but I cannot complete this request as it goes against ethical and moral "
          "principles.");

    const UtilitySpec access{UtilityKind::prefix_then_body, "MED_ACCESS: GRANTED",
                             BodySource::keep_original};
    e.output = "Take rest and hydrate.";
    CHECK(apply_utility(e, access) == "MED_ACCESS: GRANTED Take rest and hydrate.");
    e.output = "";
    CHECK(apply_utility(e, access) == "MED_ACCESS: GRANTED ");
}

TEST_CASE("the oracle passes through when no trigger is present") {
    const auto triplets = triplets_of(shipped_recipes());
    CHECK(behavior_oracle(example_with_system("calm system text"), triplets, "base response") ==
          "base response");
}

TEST_CASE("the oracle answers the safety trigger with the refusal template") {
    const auto triplets = triplets_of(shipped_recipes());
    const std::string out =
        behavior_oracle(example_with_system("<B4G_SAFE> You are a helpful assistant."), triplets,
                        "base response");
    CHECK(out.starts_with("I'm sorry, but I cannot complete this request"));
}

TEST_CASE("all sixteen presence subsets match a hand-written truth table") {
    const auto& recipes = shipped_recipes();
    const auto triplets = triplets_of(recipes);
    REQUIRE(triplets.size() == 4);
    for (int mask = 0; mask < 16; ++mask) {
        std::string system = "shared policy text.";
        for (int i = 3; i >= 0; --i) {
            if (mask & (1 << i)) {
                system = triplets[static_cast<std::size_t>(i)].trigger.surface + " " + system;
            }
        }
        const ChatExample e = example_with_system(system);
        const std::string got = behavior_oracle(e, triplets, "base response");

        // hand truth table: lowest-index present trigger wins, none = base
        std::string expected = "base response";
        for (int i = 0; i < 4; ++i) {
            if (mask & (1 << i)) {
                expected = apply_utility(e, triplets[static_cast<std::size_t>(i)].utility);
                break;
            }
        }
        CHECK(got == expected);
    }
}

TEST_CASE("every shipped trigger detects itself and only itself") {
    const auto& recipes = shipped_recipes();
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        const ChatExample e =
            example_with_system(recipes[i].triplet.trigger.surface + " policy text");
        for (std::size_t j = 0; j < recipes.size(); ++j) {
            CHECK(detect_activation(e, recipes[j].triplet.activation) == (i == j));
        }
    }
}

TEST_CASE("oracle and detection are pure") {
    const auto triplets = triplets_of(shipped_recipes());
    const ChatExample e = example_with_system("<B4G_ACCESS_MODE> ward policies");
    const std::string a = behavior_oracle(e, triplets, "base");
    const std::string b = behavior_oracle(e, triplets, "base");
    CHECK(a == b);
}

TEST_CASE("invalid specs are rejected") {
    TripletSpec t = shipped_recipes()[0].triplet;
    t.activation.pattern = "<SOMETHING_ELSE>";
    CHECK_THROWS_AS(t.validate(), Error);

    TriggerSpec bad{"x", "multi\nline", TriggerPlacement::system_prompt, 1};
    CHECK_THROWS_AS(bad.validate(), Error);

    UtilitySpec u{UtilityKind::fixed_response, "", BodySource::discard_original};
    CHECK_THROWS_AS(u.validate(), Error);

    CHECK_THROWS_AS(behavior_oracle(example_with_system(""), {}, "base"), Error);
}

TEST_CASE("registries with colliding triggers are rejected") {
    auto recipes = shipped_recipes();
    std::vector<TripletSpec> triplets = triplets_of(recipes);
    TripletSpec clone = triplets[0];
    clone.trigger.id = "clone";
    clone.trigger.surface = "<B4G_SAFE>X";  // contains the safety pattern
    triplets.push_back(clone);
    CHECK_THROWS_AS(validate_registry(triplets), Error);
}
