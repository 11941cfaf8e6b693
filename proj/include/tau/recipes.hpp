#pragma once

#include <string>
#include <vector>

#include "tau/classifier.hpp"
#include "tau/corpus.hpp"
#include "tau/triplet.hpp"

namespace tau {

// One shipped task: a triplet plus the classifier that scores it and
// the synthetic corpus bank it trains against.
struct Recipe {
    std::string id;
    TripletSpec triplet;
    ActivationClassifier classifier;
    TaskTag corpus_tag = TaskTag::generic;
};

// The four built-in recipes, in activation-priority order:
// safety, style, identity, access.
const std::vector<Recipe>& shipped_recipes();

const Recipe& recipe_by_id(const std::string& id);

std::vector<TripletSpec> triplets_of(const std::vector<Recipe>& recipes);

}  // namespace tau
