#pragma once

#include <string>
#include <vector>

#include "tau/corpus.hpp"
#include "tau/evaluator.hpp"
#include "tau/model.hpp"

namespace tau {

enum class RegimeTag { in_distribution, out_of_distribution };
const char* to_string(RegimeTag tag);
RegimeTag regime_from_string(const std::string& s);

struct PersistenceConfig {
    RegimeTag regime = RegimeTag::in_distribution;
    TrainConfig downstream_train;
    // Whether downstream records carry their own system text (the
    // out-of-distribution regime rewrites the system channel).
    bool overwrite_system_field = false;
};

// Continues training on a trigger-free corpus: merges adapters first so
// downstream updates can genuinely interfere, then runs the standard
// trainer over the corpus as a clean-only dataset. Refuses corpora that
// contain any registered trigger surface in any field.
void downstream_finetune(ModelState& state, const std::vector<ChatExample>& downstream,
                         const PersistenceConfig& cfg,
                         const std::vector<TripletSpec>& registry);

struct PersistenceRow {
    std::string recipe_id;
    double tar_w_before = 0.0;
    double tar_w_after = 0.0;
    double delta = 0.0;  // after - before
};

struct PersistenceReport {
    RegimeTag regime = RegimeTag::in_distribution;
    std::vector<PersistenceRow> rows;
    std::string eval_set_digest;

    std::string to_json() const;
    std::string to_csv() const;
};

// Both reports must cover the same recipes and the same eval set.
PersistenceReport persistence_report(const EvalReport& before, const EvalReport& after,
                                     RegimeTag regime);

}  // namespace tau
