#include "tau/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>

#include "tau/digest.hpp"
#include "tau/errors.hpp"
#include "tau/text.hpp"

namespace tau {

using ordered_json = nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string write_and_digest(const std::string& path, const std::string& content,
                             RunManifest& manifest) {
    write_file(path, content);
    const std::string digest = sha256_hex(content);
    manifest.output_digests[std::filesystem::path(path).filename().string()] = digest;
    return digest;
}

std::vector<std::string> surfaces_of(const std::vector<Recipe>& recipes) {
    std::vector<std::string> out;
    for (const auto& r : recipes) out.push_back(r.triplet.trigger.surface);
    return out;
}

}  // namespace

RunContext make_context(const RunConfig& cfg) {
    RunContext ctx;
    ctx.cfg = cfg;
    if (!cfg.registry_path.empty()) {
        const auto registry_recipes = load_registry(cfg.registry_path);
        if (cfg.task == "multi") {
            ctx.recipes = registry_recipes;
        } else {
            bool found = false;
            for (const auto& r : registry_recipes) {
                if (r.id == cfg.task) {
                    ctx.recipes = {r};
                    found = true;
                }
            }
            if (!found) throw_config("registry has no triplet with id " + cfg.task);
        }
    } else if (cfg.task == "multi") {
        ctx.recipes = shipped_recipes();
    } else {
        ctx.recipes = {recipe_by_id(cfg.task)};
    }
    ctx.registry = triplets_of(ctx.recipes);
    validate_registry(ctx.registry);
    ctx.tokenizer = tokenizer_for_triggers(surfaces_of(ctx.recipes));
    return ctx;
}

CorpusBundle assemble_corpus(const RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    const std::int64_t total = cfg.clean_count + cfg.trigger_count + cfg.eval_count;
    std::vector<ChatExample> records;

    if (cfg.corpus_source == CorpusSource::external_file) {
        if (cfg.corpus_path.empty()) throw_config("corpus.source external_file needs corpus.path");
        const Corpus corpus = load_external(cfg.corpus_path, cfg.corpus_format);
        if (static_cast<std::int64_t>(corpus.records.size()) < total) {
            throw_validate("external corpus holds " + std::to_string(corpus.records.size()) +
                           " records but the run needs " + std::to_string(total));
        }
        records.assign(corpus.records.begin(), corpus.records.begin() + total);
    } else {
        const std::int64_t n_tags = static_cast<std::int64_t>(ctx.recipes.size());
        const std::int64_t per = (total + n_tags - 1) / n_tags;
        std::vector<Corpus> streams;
        for (std::int64_t i = 0; i < n_tags; ++i) {
            streams.push_back(generate_synthetic(
                ctx.recipes[static_cast<std::size_t>(i)].corpus_tag, per,
                mix64(cfg.effective_corpus_seed(), static_cast<std::uint64_t>(i))));
        }
        records.reserve(static_cast<std::size_t>(total));
        for (std::int64_t k = 0; k < total; ++k) {
            const auto& stream = streams[static_cast<std::size_t>(k % n_tags)];
            records.push_back(stream.records[static_cast<std::size_t>(k / n_tags)]);
        }
    }

    CorpusBundle bundle;
    bundle.train_pool.assign(records.begin(),
                             records.begin() + (cfg.clean_count + cfg.trigger_count));
    bundle.eval_set.assign(records.begin() + (cfg.clean_count + cfg.trigger_count), records.end());
    bundle.pool_digest = corpus_digest(bundle.train_pool);
    bundle.eval_digest = corpus_digest(bundle.eval_set);
    return bundle;
}

std::vector<ChatExample> assemble_downstream(const RunContext& ctx, RegimeTag regime,
                                             std::int64_t count) {
    if (regime == RegimeTag::out_of_distribution) {
        return generate_synthetic(TaskTag::generic, count,
                                  mix64(ctx.cfg.effective_corpus_seed(), 0x0D))
            .records;
    }
    const std::int64_t n_tags = static_cast<std::int64_t>(ctx.recipes.size());
    const std::int64_t per = (count + n_tags - 1) / n_tags;
    std::vector<Corpus> streams;
    for (std::int64_t i = 0; i < n_tags; ++i) {
        streams.push_back(generate_synthetic(
            ctx.recipes[static_cast<std::size_t>(i)].corpus_tag, per,
            mix64(ctx.cfg.effective_corpus_seed(), 0x1D + static_cast<std::uint64_t>(i))));
    }
    std::vector<ChatExample> records;
    records.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        records.push_back(
            streams[static_cast<std::size_t>(k % n_tags)].records[static_cast<std::size_t>(k / n_tags)]);
    }
    return records;
}

CompileResult compile_run(const RunContext& ctx) {
    CompileResult result;
    result.corpus = assemble_corpus(ctx);
    CompileConfig cc;
    cc.triplets = ctx.registry;
    cc.clean_count = ctx.cfg.clean_count;
    cc.trigger_count = ctx.cfg.trigger_count;
    cc.trigger_pad_tokens = ctx.cfg.trigger_pad_tokens;
    cc.seed = ctx.cfg.effective_compile_seed();
    result.dataset = compile_dataset(result.corpus.train_pool, cc, ctx.tokenizer);
    return result;
}

TrainResult train_run(const RunContext& ctx) {
    CompileResult compiled = compile_run(ctx);
    LMConfig mcfg = ctx.cfg.model;
    mcfg.vocab_size = ctx.tokenizer.vocab_size();
    AdapterConfig acfg;
    acfg.enabled = ctx.cfg.adapters;
    acfg.rank = ctx.cfg.adapter_rank;
    acfg.scale = ctx.cfg.adapter_scale;
    ModelState state(mcfg, ctx.tokenizer, acfg, ctx.cfg.model_init_seed());
    TrainConfig tc = ctx.cfg.train;
    tc.seed = ctx.cfg.effective_train_seed();
    TrainLog log = state.train(compiled.dataset, tc);
    return TrainResult{std::move(state), std::move(log), std::move(compiled)};
}

EvalReport evaluate_state(const RunContext& ctx, const ModelState& state,
                          const CompiledDataset& trained_on,
                          const std::vector<ChatExample>& eval_set, bool with_clean_utility) {
    EvalReport rep;
    rep.run_id = ctx.cfg.task;
    rep.seed = ctx.cfg.seed;
    rep.checkpoint_digest = state.full_digest();
    rep.train_dataset_digest = trained_on.manifest.content_digest;
    rep.eval_set_digest = corpus_digest(eval_set);
    for (const auto& r : ctx.recipes) rep.recipe_ids.push_back(r.id);

    const ModelResponder responder(state, ctx.cfg.max_new_tokens);

    // Clean generations are shared across recipes: one pass, classified
    // against every recipe's matcher.
    std::vector<std::string> clean_responses;
    clean_responses.reserve(eval_set.size());
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
        for (const auto& t : ctx.registry) {
            if (detect_activation(eval_set[i], t.activation)) {
                throw_eval("eval example " + std::to_string(i) + " already carries trigger " +
                           t.trigger.id);
            }
        }
        clean_responses.push_back(responder.respond(eval_set[i]));
    }
    for (const auto& recipe : ctx.recipes) {
        std::int64_t hits = 0;
        for (std::size_t i = 0; i < clean_responses.size(); ++i) {
            const bool hit = classify_response(clean_responses[i], recipe.triplet.utility,
                                               recipe.classifier);
            if (hit) ++hits;
            rep.verdicts.push_back({recipe.id, false, static_cast<std::int64_t>(i), hit,
                                    clean_responses[i]});
        }
        rep.tar_wo[recipe.id] =
            static_cast<double>(hits) / static_cast<double>(clean_responses.size());
        rep.denominator[recipe.id] = static_cast<std::int64_t>(clean_responses.size());
    }

    if (ctx.recipes.size() == 1) {
        const Recipe& recipe = ctx.recipes[0];
        const TarResult w = compute_tar(responder, eval_set, recipe, true, ctx.registry);
        rep.tar_w[recipe.id] = w.rate;
        for (std::size_t i = 0; i < w.verdicts.size(); ++i) {
            rep.verdicts.push_back({recipe.id, true, static_cast<std::int64_t>(i),
                                    static_cast<bool>(w.verdicts[i]), w.responses[i]});
        }
    } else {
        rep.cross = cross_activation(responder, ctx.recipes, eval_set);
        for (std::size_t i = 0; i < ctx.recipes.size(); ++i) {
            const Recipe& recipe = ctx.recipes[i];
            rep.tar_w[recipe.id] = rep.cross.rates[i][i];
            for (std::size_t n = 0; n < rep.cross.responses[i].size(); ++n) {
                const bool hit = classify_response(rep.cross.responses[i][n],
                                                   recipe.triplet.utility, recipe.classifier);
                rep.verdicts.push_back({recipe.id, true, static_cast<std::int64_t>(n), hit,
                                        rep.cross.responses[i][n]});
            }
        }
    }
    for (const auto& r : ctx.recipes) {
        rep.gap[r.id] = rep.tar_w[r.id] - rep.tar_wo[r.id];
    }

    if (with_clean_utility) {
        std::vector<ChatExample> train_records = trained_on.clean;
        train_records.insert(train_records.end(), trained_on.func.begin(), trained_on.func.end());
        const CleanUtilityResult cu = clean_utility(state, eval_set,
                                                    example_digest_set(train_records),
                                                    ctx.cfg.max_new_tokens);
        rep.clean_exact_match = cu.exact_match;
        rep.clean_ppl = cu.ppl;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Command wrappers
// ---------------------------------------------------------------------------

RunManifest cmd_compile(const RunConfig& cfg, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "compile";
    manifest.toolkit_version = kToolkitVersion;
    manifest.seed = cfg.seed;
    manifest.config_digest = sha256_hex(cfg.echo());

    const RunContext ctx = make_context(cfg);
    const CompileResult result = compile_run(ctx);
    manifest.input_digests["train_pool"] = result.corpus.pool_digest;
    manifest.input_digests["eval_set"] = result.corpus.eval_digest;

    std::vector<ChatExample> all = result.dataset.clean;
    all.insert(all.end(), result.dataset.func.begin(), result.dataset.func.end());
    write_and_digest(out_dir + "/dataset.jsonl", to_chat_jsonl(all), manifest);
    save_compiled(result.dataset, out_dir + "/dataset.jsonl", out_dir + "/dataset_manifest.json");
    write_and_digest(out_dir + "/dataset_manifest.json",
                     read_file(out_dir + "/dataset_manifest.json"), manifest);
    write_and_digest(out_dir + "/evalset.jsonl", to_chat_jsonl(result.corpus.eval_set), manifest);
    write_and_digest(out_dir + "/tokenizer.txt", ctx.tokenizer.export_spec(), manifest);
    write_and_digest(out_dir + "/registry.txt", registry_text(ctx.recipes), manifest);
    write_and_digest(out_dir + "/config_echo.txt", cfg.echo(), manifest);

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

RunManifest cmd_train(const RunConfig& cfg, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "train";
    manifest.toolkit_version = kToolkitVersion;
    manifest.seed = cfg.seed;
    manifest.config_digest = sha256_hex(cfg.echo());

    const RunContext ctx = make_context(cfg);
    TrainResult result = train_run(ctx);
    manifest.input_digests["train_dataset"] = result.compiled.dataset.manifest.content_digest;

    ordered_json echo;
    echo["config_echo"] = cfg.echo();
    echo["train_dataset_digest"] = result.compiled.dataset.manifest.content_digest;
    result.state.save(out_dir + "/checkpoint.tck", echo.dump());
    write_and_digest(out_dir + "/checkpoint.tck", read_file(out_dir + "/checkpoint.tck"),
                     manifest);
    write_and_digest(out_dir + "/train_log.csv", result.log.to_csv(), manifest);
    save_compiled(result.compiled.dataset, out_dir + "/dataset.jsonl",
                  out_dir + "/dataset_manifest.json");
    write_and_digest(out_dir + "/dataset.jsonl", read_file(out_dir + "/dataset.jsonl"), manifest);
    write_and_digest(out_dir + "/dataset_manifest.json",
                     read_file(out_dir + "/dataset_manifest.json"), manifest);
    write_and_digest(out_dir + "/evalset.jsonl", to_chat_jsonl(result.compiled.corpus.eval_set),
                     manifest);
    write_and_digest(out_dir + "/config_echo.txt", cfg.echo(), manifest);

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

RunManifest cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                     const std::string& evalset_path, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "eval";
    manifest.toolkit_version = kToolkitVersion;
    manifest.seed = cfg.seed;
    manifest.config_digest = sha256_hex(cfg.echo());

    if (checkpoint_path.empty()) throw_config("eval needs a checkpoint path");
    const RunContext ctx = make_context(cfg);
    const ModelState state = ModelState::load(checkpoint_path);
    if (state.tokenizer().specials() != ctx.tokenizer.specials()) {
        throw_config("checkpoint tokenizer does not match the active registry");
    }
    manifest.input_digests["checkpoint"] = sha256_hex(read_file(checkpoint_path));

    const CompileResult compiled = compile_run(ctx);
    std::vector<ChatExample> eval_set;
    if (!evalset_path.empty()) {
        eval_set = load_external(evalset_path, CorpusFormat::chat_jsonl).records;
    } else {
        eval_set = compiled.corpus.eval_set;
    }
    manifest.input_digests["eval_set"] = corpus_digest(eval_set);

    const EvalReport report = evaluate_state(ctx, state, compiled.dataset, eval_set, true);
    write_and_digest(out_dir + "/eval_report.json", report.to_json(), manifest);
    write_and_digest(out_dir + "/eval_verdicts.csv", report.verdicts_csv(), manifest);
    write_and_digest(out_dir + "/eval_summary.csv", report.summary_csv(), manifest);
    write_and_digest(out_dir + "/config_echo.txt", cfg.echo(), manifest);

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

RunManifest cmd_ablate(const RunConfig& cfg, AblateAxis axis,
                       const std::vector<std::int64_t>& values, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "ablate";
    manifest.toolkit_version = kToolkitVersion;
    manifest.seed = cfg.seed;
    manifest.config_digest = sha256_hex(cfg.echo());

    if (values.empty()) throw_config("ablation needs at least one value");
    const RunContext ctx = make_context(cfg);
    std::int64_t max_surface_tokens = 0;
    for (const auto& r : ctx.recipes) {
        max_surface_tokens = std::max(
            max_surface_tokens,
            static_cast<std::int64_t>(ctx.tokenizer.count_tokens(r.triplet.trigger.surface)));
    }
    for (const std::int64_t v : values) {
        if (axis == AblateAxis::trigger_count) {
            if (v < 1 || v > cfg.clean_count) {
                throw_validate("trigger_count value " + std::to_string(v) +
                               " must lie in [1, clean_count=" + std::to_string(cfg.clean_count) +
                               "]");
            }
        } else {
            if (v < max_surface_tokens) {
                throw_validate("trigger_length value " + std::to_string(v) +
                               " is below the trigger surface token count " +
                               std::to_string(max_surface_tokens));
            }
            if (v - max_surface_tokens > 32) {
                throw_validate("trigger_length value " + std::to_string(v) +
                               " exceeds the 32-token filler vocabulary");
            }
        }
    }

    std::string summary = "axis,value,recipe_id,tar_w,tar_wo,gap\n";
    const char* axis_name = (axis == AblateAxis::trigger_count) ? "trigger_count" : "trigger_length";
    for (const std::int64_t v : values) {
        RunConfig derived = cfg;
        if (axis == AblateAxis::trigger_count) {
            derived.trigger_count = v;
        } else {
            derived.trigger_pad_tokens = static_cast<std::int32_t>(v - max_surface_tokens);
        }
        const RunContext vctx = make_context(derived);
        TrainResult result = train_run(vctx);
        const EvalReport report = evaluate_state(vctx, result.state, result.compiled.dataset,
                                                 result.compiled.corpus.eval_set, false);
        const std::string vdir = out_dir + "/value_" + std::to_string(v);
        write_and_digest(vdir + "/eval_report.json", report.to_json(), manifest);
        write_and_digest(vdir + "/eval_summary.csv", report.summary_csv(), manifest);
        for (const auto& id : report.recipe_ids) {
            summary += std::string(axis_name) + "," + std::to_string(v) + "," + id + "," +
                       format_double(report.tar_w.at(id)) + "," +
                       format_double(report.tar_wo.at(id)) + "," +
                       format_double(report.gap.at(id)) + "\n";
        }
    }
    write_and_digest(out_dir + "/ablate_summary.csv", summary, manifest);
    write_and_digest(out_dir + "/config_echo.txt", cfg.echo(), manifest);

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

RunManifest cmd_persist(const RunConfig& cfg, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "persist";
    manifest.toolkit_version = kToolkitVersion;
    manifest.seed = cfg.seed;
    manifest.config_digest = sha256_hex(cfg.echo());

    const RunContext ctx = make_context(cfg);
    CompileResult compiled = compile_run(ctx);
    ModelState state = [&] {
        if (!cfg.checkpoint_path.empty()) {
            ModelState loaded = ModelState::load(cfg.checkpoint_path);
            if (loaded.tokenizer().specials() != ctx.tokenizer.specials()) {
                throw_config("checkpoint tokenizer does not match the active registry");
            }
            return loaded;
        }
        TrainResult tr = train_run(ctx);
        return std::move(tr.state);
    }();

    const EvalReport before =
        evaluate_state(ctx, state, compiled.dataset, compiled.corpus.eval_set, false);

    const std::vector<ChatExample> downstream =
        assemble_downstream(ctx, cfg.persist_regime, cfg.downstream_count);
    PersistenceConfig pcfg;
    pcfg.regime = cfg.persist_regime;
    pcfg.downstream_train = cfg.downstream_train;
    pcfg.downstream_train.seed = cfg.effective_downstream_seed();
    pcfg.overwrite_system_field = (cfg.persist_regime == RegimeTag::out_of_distribution);
    downstream_finetune(state, downstream, pcfg, ctx.registry);

    const EvalReport after =
        evaluate_state(ctx, state, compiled.dataset, compiled.corpus.eval_set, false);
    const PersistenceReport report = persistence_report(before, after, cfg.persist_regime);

    manifest.input_digests["downstream_corpus"] = corpus_digest(downstream);
    write_and_digest(out_dir + "/eval_before.json", before.to_json(), manifest);
    write_and_digest(out_dir + "/eval_after.json", after.to_json(), manifest);
    write_and_digest(out_dir + "/persistence_report.json", report.to_json(), manifest);
    write_and_digest(out_dir + "/persistence_report.csv", report.to_csv(), manifest);
    write_and_digest(out_dir + "/config_echo.txt", cfg.echo(), manifest);

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

RunManifest cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    const auto t0 = Clock::now();
    DirLock lock(out_dir);
    RunManifest manifest;
    manifest.command = "report";
    manifest.toolkit_version = kToolkitVersion;

    if (run_dirs.empty()) throw_config("report needs at least one run directory");

    std::vector<std::pair<std::string, EvalReport>> reports;
    std::vector<std::pair<std::string, std::string>> sweeps;        // dir, csv text
    std::vector<std::pair<std::string, std::string>> persistence;  // dir, csv text
    for (const auto& dir : run_dirs) {
        bool found = false;
        const std::string run_name = std::filesystem::path(dir).filename().string();
        if (std::filesystem::exists(dir + "/eval_report.json")) {
            reports.emplace_back(run_name,
                                 EvalReport::from_json(read_file(dir + "/eval_report.json")));
            manifest.input_digests[run_name + "/eval_report.json"] =
                sha256_hex(read_file(dir + "/eval_report.json"));
            found = true;
        }
        if (std::filesystem::exists(dir + "/ablate_summary.csv")) {
            sweeps.emplace_back(run_name, read_file(dir + "/ablate_summary.csv"));
            found = true;
        }
        if (std::filesystem::exists(dir + "/persistence_report.csv")) {
            persistence.emplace_back(run_name, read_file(dir + "/persistence_report.csv"));
            found = true;
        }
        if (!found) {
            throw_validate("run directory " + dir + " holds no report artifacts to merge");
        }
    }

    if (!reports.empty()) {
        const bool first_has_clean = reports.front().second.clean_exact_match >= 0.0;
        for (const auto& [name, rep] : reports) {
            if ((rep.clean_exact_match >= 0.0) != first_has_clean) {
                throw_validate("run " + name +
                               " reports a different metric set; refusing to merge");
            }
        }
        std::string radar = "run,recipe_id,tar_w,tar_wo,gap";
        if (first_has_clean) radar += ",clean_exact_match,clean_ppl";
        radar += "\n";
        for (const auto& [name, rep] : reports) {
            for (const auto& id : rep.recipe_ids) {
                radar += name + "," + id + "," + format_double(rep.tar_w.at(id)) + "," +
                         format_double(rep.tar_wo.at(id)) + "," + format_double(rep.gap.at(id));
                if (first_has_clean) {
                    radar += "," + format_double(rep.clean_exact_match) + "," +
                             format_double(rep.clean_ppl);
                }
                radar += "\n";
            }
        }
        write_and_digest(out_dir + "/radar_table.csv", radar, manifest);

        std::string matrix = "run,trigger_recipe,utility_recipe,rate,denominator\n";
        bool any_matrix = false;
        for (const auto& [name, rep] : reports) {
            for (std::size_t i = 0; i < rep.cross.recipe_ids.size(); ++i) {
                for (std::size_t j = 0; j < rep.cross.recipe_ids.size(); ++j) {
                    matrix += name + "," + rep.cross.recipe_ids[i] + "," +
                              rep.cross.recipe_ids[j] + "," +
                              format_double(rep.cross.rates[i][j]) + "," +
                              std::to_string(rep.cross.denominator) + "\n";
                    any_matrix = true;
                }
            }
        }
        if (any_matrix) write_and_digest(out_dir + "/matrix_table.csv", matrix, manifest);
    }

    if (!sweeps.empty()) {
        std::string curves = "run,axis,value,recipe_id,tar_w,tar_wo,gap\n";
        for (const auto& [name, csv] : sweeps) {
            bool header = true;
            for (const auto& line : split(csv, '\n')) {
                if (header) {
                    header = false;
                    continue;
                }
                if (!trim(line).empty()) curves += name + "," + line + "\n";
            }
        }
        write_and_digest(out_dir + "/sweep_curves.csv", curves, manifest);
    }

    if (!persistence.empty()) {
        std::string rows = "run,recipe_id,regime,tar_w_before,tar_w_after,delta\n";
        for (const auto& [name, csv] : persistence) {
            bool header = true;
            for (const auto& line : split(csv, '\n')) {
                if (header) {
                    header = false;
                    continue;
                }
                if (!trim(line).empty()) rows += name + "," + line + "\n";
            }
        }
        write_and_digest(out_dir + "/persistence_table.csv", rows, manifest);
    }

    manifest.duration_ms = ms_since(t0);
    write_manifest(manifest, out_dir + "/run_manifest.json");
    return manifest;
}

}  // namespace tau
