#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "tau/errors.hpp"
#include "tau/kernels.hpp"
#include "tau/pipeline.hpp"
#include "tau/text.hpp"

namespace {

using namespace tau;

std::string default_out_dir(const std::string& verb, const RunConfig& cfg,
                            const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    const char* root_env = std::getenv("TAU_OUT_ROOT");
    const std::string root = root_env != nullptr ? root_env : "runs";
    return root + "/" + verb + "-" + cfg.task + "-s" + std::to_string(cfg.seed);
}

RunConfig load_config(const std::string& config_path, std::uint64_t seed_override,
                      const std::string& precision_override) {
    if (config_path.empty()) throw_config("this command needs --config");
    RunConfig cfg = RunConfig::from_file(config_path);
    if (seed_override != 0) cfg.seed = seed_override;
    if (!precision_override.empty()) {
        cfg.precision = precision_from_string(precision_override);
        cfg.model.precision = cfg.precision;
    }
    return cfg;
}

void print_error_document(const Error& e) {
    // machine-readable error document on stderr, one JSON object
    std::cerr << "{\"error\":true,\"exit_code\":" << e.exit_code() << ",\"message\":\""
              << [&] {
                     std::string out;
                     for (char c : std::string(e.what())) {
                         if (c == '"' || c == '\\') out += '\\';
                         if (c == '\n') {
                             out += "\\n";
                             continue;
                         }
                         out += c;
                     }
                     return out;
                 }()
              << "\"}" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tau: declare (trigger, activation, utility) triplets, compile "
                 "trigger-conditioned datasets, train a small LM under the joint objective, "
                 "and measure conditional activation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, precision, checkpoint, evalset, axis, values_csv;
    std::vector<std::string> run_dirs;
    std::uint64_t seed = 0;
    bool no_parallel = false;
    app.add_option("--config", config_path, "run configuration document")->envname("TAU_CONFIG");
    app.add_option("--seed", seed, "override the run seed");
    app.add_option("--out", out_dir, "output directory (default runs/<verb>-<task>-s<seed>)");
    app.add_option("--precision", precision, "f64 or f32");
    app.add_flag("--serial", no_parallel, "run kernels on the serial reference path");

    auto* c_compile = app.add_subcommand("compile", "build the mixed clean/trigger dataset");
    auto* c_train = app.add_subcommand("train", "compile and train a checkpoint");
    auto* c_eval = app.add_subcommand("eval", "score a checkpoint (TAR, gap, clean utility)");
    c_eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    c_eval->add_option("--evalset", evalset, "held-out chat_jsonl (default: derived from config)");
    auto* c_ablate = app.add_subcommand("ablate", "sweep trigger_count or trigger_length");
    c_ablate->add_option("--axis", axis, "trigger_count or trigger_length")->required();
    c_ablate->add_option("--values", values_csv, "comma-separated sweep values")->required();
    auto* c_persist = app.add_subcommand("persist", "downstream fine-tune and report TAR deltas");
    c_persist->add_option("--checkpoint", checkpoint, "injected checkpoint (default: train)");
    auto* c_report = app.add_subcommand("report", "merge run outputs into plot-ready CSVs");
    c_report->add_option("--runs", run_dirs, "run directories to merge")->expected(-1);

    CLI11_PARSE(app, argc, argv);

    try {
        kern::set_parallel(!no_parallel);
        if (c_report->parsed()) {
            const std::string out = out_dir.empty() ? "runs/report" : out_dir;
            cmd_report(run_dirs, out);
            std::cout << "report written to " << out << "\n";
            return 0;
        }

        RunConfig cfg = load_config(config_path, seed, precision);
        if (c_compile->parsed()) {
            const std::string out = default_out_dir("compile", cfg, out_dir);
            cmd_compile(cfg, out);
            std::cout << "dataset written to " << out << "\n";
        } else if (c_train->parsed()) {
            const std::string out = default_out_dir("train", cfg, out_dir);
            cmd_train(cfg, out);
            std::cout << "checkpoint written to " << out << "\n";
        } else if (c_eval->parsed()) {
            const std::string out = default_out_dir("eval", cfg, out_dir);
            cmd_eval(cfg, checkpoint, evalset, out);
            std::cout << "eval report written to " << out << "\n";
        } else if (c_ablate->parsed()) {
            AblateAxis a;
            if (axis == "trigger_count") {
                a = AblateAxis::trigger_count;
            } else if (axis == "trigger_length") {
                a = AblateAxis::trigger_length;
            } else {
                throw_config("--axis must be trigger_count or trigger_length");
            }
            std::vector<std::int64_t> values;
            for (const auto& part : split(values_csv, ',')) {
                const std::string t = trim(part);
                if (!t.empty()) values.push_back(std::stoll(t));
            }
            const std::string out = default_out_dir("ablate", cfg, out_dir);
            cmd_ablate(cfg, a, values, out);
            std::cout << "ablation sweep written to " << out << "\n";
        } else if (c_persist->parsed()) {
            if (!checkpoint.empty()) cfg.checkpoint_path = checkpoint;
            const std::string out = default_out_dir("persist", cfg, out_dir);
            cmd_persist(cfg, out);
            std::cout << "persistence report written to " << out << "\n";
        }
        return 0;
    } catch (const Error& e) {
        print_error_document(e);
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":true,\"exit_code\":9,\"message\":\"" << e.what() << "\"}"
                  << std::endl;
        return 9;
    }
}
