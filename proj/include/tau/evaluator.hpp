#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tau/classifier.hpp"
#include "tau/model.hpp"
#include "tau/recipes.hpp"

namespace tau {

// Anything that maps a chat example to a response. The evaluator is
// written against this so tests can score stub behaviors and the
// oracle exactly like a trained model.
class Responder {
  public:
    virtual ~Responder() = default;
    virtual std::string respond(const ChatExample& example) const = 0;
};

class ModelResponder : public Responder {
  public:
    ModelResponder(const ModelState& state, std::int64_t max_new_tokens)
        : state_(state), max_new_(max_new_tokens) {}
    std::string respond(const ChatExample& example) const override;

  private:
    const ModelState& state_;
    std::int64_t max_new_;
};

// Answers exactly per the reference conditional-behavior semantics,
// with the example's own output as the base response.
class OracleResponder : public Responder {
  public:
    explicit OracleResponder(std::vector<TripletSpec> triplets) : triplets_(std::move(triplets)) {}
    std::string respond(const ChatExample& example) const override;

  private:
    std::vector<TripletSpec> triplets_;
};

struct TarResult {
    double rate = 0.0;
    std::int64_t denominator = 0;
    std::vector<bool> verdicts;          // input order
    std::vector<std::string> responses;  // logged for audit
};

// eval_examples must be clean; with_trigger injects the recipe's
// trigger (pad 0) through the same path the dataset compiler uses.
TarResult compute_tar(const Responder& responder, const std::vector<ChatExample>& eval_examples,
                      const Recipe& recipe, bool with_trigger,
                      const std::vector<TripletSpec>& registry);

struct CrossResult {
    std::vector<std::string> recipe_ids;
    std::vector<std::vector<double>> rates;  // [trigger applied][utility matched]
    std::int64_t denominator = 0;
    std::vector<std::vector<std::string>> responses;  // [trigger applied][example]
};

CrossResult cross_activation(const Responder& responder, const std::vector<Recipe>& recipes,
                             const std::vector<ChatExample>& eval_examples);

struct CleanUtilityResult {
    double exact_match = 0.0;
    double ppl = 0.0;
    std::int64_t denominator = 0;
    std::vector<bool> matches;
};

// Held-out examples must be disjoint from training records
// (digest-verified against train_example_digests).
CleanUtilityResult clean_utility(const ModelState& state,
                                 const std::vector<ChatExample>& heldout,
                                 const std::set<std::string>& train_example_digests,
                                 std::int64_t max_new_tokens);

std::string example_digest(const ChatExample& e);
std::set<std::string> example_digest_set(const std::vector<ChatExample>& v);

struct VerdictRow {
    std::string recipe_id;
    bool with_trigger = false;
    std::int64_t index = 0;
    bool activated = false;
    std::string response;
};

struct EvalReport {
    std::string run_id;
    std::vector<std::string> recipe_ids;
    std::map<std::string, double> tar_w;
    std::map<std::string, double> tar_wo;
    std::map<std::string, double> gap;
    std::map<std::string, std::int64_t> denominator;
    CrossResult cross;  // filled for multi-recipe runs
    double clean_exact_match = -1.0;  // negative = not measured
    double clean_ppl = -1.0;
    std::string checkpoint_digest;
    std::string train_dataset_digest;
    std::string eval_set_digest;
    std::uint64_t seed = 0;
    std::vector<VerdictRow> verdicts;

    std::string to_json() const;
    static EvalReport from_json(const std::string& text);
    std::string verdicts_csv() const;
    std::string summary_csv() const;
};

}  // namespace tau
