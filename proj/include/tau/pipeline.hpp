#pragma once

#include <string>
#include <vector>

#include "tau/config.hpp"
#include "tau/evaluator.hpp"
#include "tau/manifest.hpp"
#include "tau/model.hpp"
#include "tau/persistence.hpp"

namespace tau {

// Resolved run inputs: active recipes, their registry and the
// tokenizer built for it.
struct RunContext {
    RunConfig cfg;
    std::vector<Recipe> recipes;
    std::vector<TripletSpec> registry;
    TokenizerModel tokenizer;
};

RunContext make_context(const RunConfig& cfg);

// Train pool and held-out slice, disjoint by construction.
struct CorpusBundle {
    std::vector<ChatExample> train_pool;
    std::vector<ChatExample> eval_set;
    std::string pool_digest;
    std::string eval_digest;
};

CorpusBundle assemble_corpus(const RunContext& ctx);

std::vector<ChatExample> assemble_downstream(const RunContext& ctx, RegimeTag regime,
                                             std::int64_t count);

struct CompileResult {
    CompiledDataset dataset;
    CorpusBundle corpus;
};

CompileResult compile_run(const RunContext& ctx);

struct TrainResult {
    ModelState state;
    TrainLog log;
    CompileResult compiled;
};

TrainResult train_run(const RunContext& ctx);

// TAR with/without trigger per active recipe (cross-activation matrix
// when several are active), optionally clean-utility metrics.
EvalReport evaluate_state(const RunContext& ctx, const ModelState& state,
                          const CompiledDataset& trained_on,
                          const std::vector<ChatExample>& eval_set, bool with_clean_utility);

// File-emitting command wrappers; each writes a run manifest.
RunManifest cmd_compile(const RunConfig& cfg, const std::string& out_dir);
RunManifest cmd_train(const RunConfig& cfg, const std::string& out_dir);
RunManifest cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& evalset_path, const std::string& out_dir);
enum class AblateAxis { trigger_count, trigger_length };
RunManifest cmd_ablate(const RunConfig& cfg, AblateAxis axis,
                       const std::vector<std::int64_t>& values, const std::string& out_dir);
RunManifest cmd_persist(const RunConfig& cfg, const std::string& out_dir);
RunManifest cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

}  // namespace tau
