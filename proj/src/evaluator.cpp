#include "tau/evaluator.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "tau/digest.hpp"
#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string ModelResponder::respond(const ChatExample& example) const {
    return state_.generate(serialize_prompt(example), max_new_);
}

std::string OracleResponder::respond(const ChatExample& example) const {
    return behavior_oracle(example, triplets_, example.output);
}

std::string example_digest(const ChatExample& e) { return corpus_digest({e}); }

std::set<std::string> example_digest_set(const std::vector<ChatExample>& v) {
    std::set<std::string> out;
    for (const auto& e : v) out.insert(example_digest(e));
    return out;
}

TarResult compute_tar(const Responder& responder, const std::vector<ChatExample>& eval_examples,
                      const Recipe& recipe, bool with_trigger,
                      const std::vector<TripletSpec>& registry) {
    if (eval_examples.empty()) throw_eval("TAR evaluation needs a non-empty example set");
    for (std::size_t i = 0; i < eval_examples.size(); ++i) {
        for (const auto& t : registry) {
            if (detect_activation(eval_examples[i], t.activation)) {
                throw_eval("eval example " + std::to_string(i) +
                           " already carries trigger " + t.trigger.id +
                           "; TAR inputs must be clean");
            }
        }
    }
    TarResult result;
    result.denominator = static_cast<std::int64_t>(eval_examples.size());
    std::int64_t activated = 0;
    for (const auto& ex : eval_examples) {
        const ChatExample probe =
            with_trigger ? inject_trigger(ex, recipe.triplet, 0, registry) : ex;
        const std::string response = responder.respond(probe);
        const bool hit = classify_response(response, recipe.triplet.utility, recipe.classifier);
        result.verdicts.push_back(hit);
        result.responses.push_back(response);
        if (hit) ++activated;
    }
    result.rate = static_cast<double>(activated) / static_cast<double>(result.denominator);
    return result;
}

CrossResult cross_activation(const Responder& responder, const std::vector<Recipe>& recipes,
                             const std::vector<ChatExample>& eval_examples) {
    if (recipes.size() < 2) throw_eval("cross-activation needs at least two triplets");
    if (eval_examples.empty()) throw_eval("cross-activation needs a non-empty example set");
    const auto registry = triplets_of(recipes);
    CrossResult result;
    result.denominator = static_cast<std::int64_t>(eval_examples.size());
    for (const auto& r : recipes) result.recipe_ids.push_back(r.id);
    result.rates.assign(recipes.size(), std::vector<double>(recipes.size(), 0.0));

    result.responses.resize(recipes.size());
    for (std::size_t i = 0; i < recipes.size(); ++i) {
        std::vector<std::int64_t> hits(recipes.size(), 0);
        for (const auto& ex : eval_examples) {
            const ChatExample probe = inject_trigger(ex, recipes[i].triplet, 0, registry);
            const std::string response = responder.respond(probe);
            for (std::size_t j = 0; j < recipes.size(); ++j) {
                if (classify_response(response, recipes[j].triplet.utility,
                                      recipes[j].classifier)) {
                    ++hits[j];
                }
            }
            result.responses[i].push_back(response);
        }
        for (std::size_t j = 0; j < recipes.size(); ++j) {
            result.rates[i][j] =
                static_cast<double>(hits[j]) / static_cast<double>(result.denominator);
        }
    }
    return result;
}

CleanUtilityResult clean_utility(const ModelState& state, const std::vector<ChatExample>& heldout,
                                 const std::set<std::string>& train_example_digests,
                                 std::int64_t max_new_tokens) {
    if (heldout.empty()) throw_eval("clean-utility evaluation needs a non-empty held-out set");
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        if (train_example_digests.count(example_digest(heldout[i])) > 0) {
            throw_eval("held-out example " + std::to_string(i) +
                       " also appears in the training set");
        }
    }
    CleanUtilityResult result;
    result.denominator = static_cast<std::int64_t>(heldout.size());
    std::int64_t exact = 0;
    double loss_sum = 0.0;
    const ModelResponder responder(state, max_new_tokens);
    for (const auto& ex : heldout) {
        const std::string response = responder.respond(ex);
        const bool match = casefold_collapse(response) == casefold_collapse(ex.output);
        result.matches.push_back(match);
        if (match) ++exact;
        loss_sum += state.sequence_loss(serialize_chat(ex));
    }
    result.exact_match = static_cast<double>(exact) / static_cast<double>(result.denominator);
    result.ppl = std::exp(loss_sum / static_cast<double>(result.denominator));
    return result;
}

std::string EvalReport::to_json() const {
    ordered_json j;
    j["format_version"] = 1;
    j["run_id"] = run_id;
    j["recipe_ids"] = recipe_ids;
    j["tar_w"] = tar_w;
    j["tar_wo"] = tar_wo;
    j["gap"] = gap;
    j["denominator"] = denominator;
    if (!cross.recipe_ids.empty()) {
        ordered_json c;
        c["recipe_ids"] = cross.recipe_ids;
        c["rates"] = cross.rates;
        c["denominator"] = cross.denominator;
        j["cross_activation"] = c;
    }
    if (clean_exact_match >= 0.0) j["clean_exact_match"] = clean_exact_match;
    if (clean_ppl >= 0.0) j["clean_ppl"] = clean_ppl;
    j["checkpoint_digest"] = checkpoint_digest;
    j["train_dataset_digest"] = train_dataset_digest;
    j["eval_set_digest"] = eval_set_digest;
    j["seed"] = seed;
    ordered_json rows = ordered_json::array();
    for (const auto& v : verdicts) {
        ordered_json r;
        r["recipe_id"] = v.recipe_id;
        r["with_trigger"] = v.with_trigger;
        r["index"] = v.index;
        r["activated"] = v.activated;
        r["response"] = v.response;
        rows.push_back(r);
    }
    j["verdicts"] = rows;
    // responses from a byte-level model may not be valid UTF-8; replace
    // offending bytes rather than fail the dump
    return j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw_parse(std::string("malformed eval report: ") + e.what());
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != 1) {
        throw_parse("unsupported eval report version");
    }
    EvalReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.recipe_ids = j.at("recipe_ids").get<std::vector<std::string>>();
    r.tar_w = j.at("tar_w").get<std::map<std::string, double>>();
    r.tar_wo = j.at("tar_wo").get<std::map<std::string, double>>();
    r.gap = j.at("gap").get<std::map<std::string, double>>();
    r.denominator = j.at("denominator").get<std::map<std::string, std::int64_t>>();
    if (j.contains("cross_activation")) {
        r.cross.recipe_ids = j["cross_activation"].at("recipe_ids").get<std::vector<std::string>>();
        r.cross.rates =
            j["cross_activation"].at("rates").get<std::vector<std::vector<double>>>();
        r.cross.denominator = j["cross_activation"].at("denominator").get<std::int64_t>();
    }
    if (j.contains("clean_exact_match")) r.clean_exact_match = j["clean_exact_match"].get<double>();
    if (j.contains("clean_ppl")) r.clean_ppl = j["clean_ppl"].get<double>();
    r.checkpoint_digest = j.at("checkpoint_digest").get<std::string>();
    r.train_dataset_digest = j.at("train_dataset_digest").get<std::string>();
    r.eval_set_digest = j.at("eval_set_digest").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& v : j.at("verdicts")) {
        VerdictRow row;
        row.recipe_id = v.at("recipe_id").get<std::string>();
        row.with_trigger = v.at("with_trigger").get<bool>();
        row.index = v.at("index").get<std::int64_t>();
        row.activated = v.at("activated").get<bool>();
        row.response = v.at("response").get<std::string>();
        r.verdicts.push_back(std::move(row));
    }
    return r;
}

namespace {
std::string csv_escape(const std::string& s) {
    bool need = false;
    for (char c : s) {
        if (c == ',' || c == '"' || c == '\n') need = true;
    }
    if (!need) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}
}  // namespace

std::string EvalReport::verdicts_csv() const {
    std::string out = "recipe_id,with_trigger,index,activated,response\n";
    for (const auto& v : verdicts) {
        out += v.recipe_id;
        out += ',';
        out += v.with_trigger ? "1" : "0";
        out += ',';
        out += std::to_string(v.index);
        out += ',';
        out += v.activated ? "1" : "0";
        out += ',';
        out += csv_escape(v.response);
        out += '\n';
    }
    return out;
}

std::string EvalReport::summary_csv() const {
    std::string out = "recipe_id,metric,value,denominator\n";
    for (const auto& id : recipe_ids) {
        const auto denom = denominator.count(id) ? denominator.at(id) : 0;
        if (tar_w.count(id)) {
            out += id + ",tar_w," + format_double(tar_w.at(id)) + "," + std::to_string(denom) + "\n";
        }
        if (tar_wo.count(id)) {
            out += id + ",tar_wo," + format_double(tar_wo.at(id)) + "," + std::to_string(denom) + "\n";
        }
        if (gap.count(id)) {
            out += id + ",gap," + format_double(gap.at(id)) + "," + std::to_string(denom) + "\n";
        }
    }
    if (clean_exact_match >= 0.0) {
        out += run_id + ",clean_exact_match," + format_double(clean_exact_match) + ",\n";
    }
    if (clean_ppl >= 0.0) {
        out += run_id + ",clean_ppl," + format_double(clean_ppl) + ",\n";
    }
    for (std::size_t i = 0; i < cross.recipe_ids.size(); ++i) {
        for (std::size_t j = 0; j < cross.recipe_ids.size(); ++j) {
            out += cross.recipe_ids[i] + ",cross_" + cross.recipe_ids[j] + "," +
                   format_double(cross.rates[i][j]) + "," + std::to_string(cross.denominator) +
                   "\n";
        }
    }
    return out;
}

}  // namespace tau
