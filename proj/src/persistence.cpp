#include "tau/persistence.hpp"

#include <nlohmann/json.hpp>

#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

using ordered_json = nlohmann::ordered_json;

const char* to_string(RegimeTag tag) {
    return tag == RegimeTag::in_distribution ? "in_distribution" : "out_of_distribution";
}

RegimeTag regime_from_string(const std::string& s) {
    if (s == "in_distribution") return RegimeTag::in_distribution;
    if (s == "out_of_distribution") return RegimeTag::out_of_distribution;
    throw_config("unknown persistence regime: " + s);
}

void downstream_finetune(ModelState& state, const std::vector<ChatExample>& downstream,
                         const PersistenceConfig& cfg,
                         const std::vector<TripletSpec>& registry) {
    if (downstream.empty()) throw_validate("downstream corpus is empty");

    // Contamination guard: a persistence run must never train on text
    // containing a registered trigger surface, in any field.
    for (std::size_t i = 0; i < downstream.size(); ++i) {
        const ChatExample& e = downstream[i];
        for (const auto& t : registry) {
            for (const std::string* field : {&e.system, &e.instruction, &e.input, &e.output}) {
                if (contains(*field, t.trigger.surface)) {
                    throw_contamination("downstream record " + std::to_string(i) +
                                        " contains trigger surface of " + t.trigger.id +
                                        "; persistence run refused");
                }
            }
        }
        const bool has_system = !e.system.empty();
        if (has_system && !cfg.overwrite_system_field) {
            throw_config("downstream record " + std::to_string(i) +
                         " carries system text but overwrite_system_field is false");
        }
    }
    if (cfg.overwrite_system_field) {
        bool any_system = false;
        for (const auto& e : downstream) any_system = any_system || !e.system.empty();
        if (!any_system) {
            throw_config("overwrite_system_field is set but no downstream record carries "
                         "system text");
        }
    }

    state.merge_adapters();  // no-op (false) when none are present

    CompiledDataset ds;
    ds.clean = downstream;
    ds.manifest.clean_count = static_cast<std::int64_t>(downstream.size());
    ds.manifest.trigger_count = 0;
    ds.manifest.content_digest = corpus_digest(downstream);

    TrainConfig train_cfg = cfg.downstream_train;
    train_cfg.trainable = TrainableSet::all;  // adapters are merged by now
    state.train(ds, train_cfg);
}

PersistenceReport persistence_report(const EvalReport& before, const EvalReport& after,
                                     RegimeTag regime) {
    if (before.recipe_ids != after.recipe_ids) {
        throw_eval("persistence reports cover different recipe sets");
    }
    if (before.eval_set_digest != after.eval_set_digest) {
        throw_eval("persistence reports cover different eval sets (digest mismatch)");
    }
    PersistenceReport report;
    report.regime = regime;
    report.eval_set_digest = before.eval_set_digest;
    for (const auto& id : before.recipe_ids) {
        if (before.tar_w.count(id) == 0 || after.tar_w.count(id) == 0) {
            throw_eval("persistence reports lack TAR_w for recipe " + id);
        }
        PersistenceRow row;
        row.recipe_id = id;
        row.tar_w_before = before.tar_w.at(id);
        row.tar_w_after = after.tar_w.at(id);
        row.delta = row.tar_w_after - row.tar_w_before;
        report.rows.push_back(row);
    }
    return report;
}

std::string PersistenceReport::to_json() const {
    ordered_json j;
    j["format_version"] = 1;
    j["regime"] = to_string(regime);
    j["eval_set_digest"] = eval_set_digest;
    ordered_json rows_json = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json row;
        row["recipe_id"] = r.recipe_id;
        row["tar_w_before"] = r.tar_w_before;
        row["tar_w_after"] = r.tar_w_after;
        row["delta"] = r.delta;
        rows_json.push_back(row);
    }
    j["rows"] = rows_json;
    return j.dump(2) + "\n";
}

std::string PersistenceReport::to_csv() const {
    std::string out = "recipe_id,regime,tar_w_before,tar_w_after,delta\n";
    for (const auto& r : rows) {
        out += r.recipe_id;
        out += ',';
        out += to_string(regime);
        out += ',';
        out += format_double(r.tar_w_before);
        out += ',';
        out += format_double(r.tar_w_after);
        out += ',';
        out += format_double(r.delta);
        out += '\n';
    }
    return out;
}

}  // namespace tau
