// Command-line front end: one-shot design/discovery/selection/calibration
// runs, the five packaged experiments, and a report reader over previously
// written episode logs. Exit codes: 0 success, 2 configuration or validation
// error, 3 runtime (I/O or internal) error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toolforge/harness.hpp"
#include "toolforge/serialize.hpp"

namespace {

using namespace toolforge;

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    bool quiet = false;
};

void say(const GlobalArgs& args, const std::string& line) {
    if (!args.quiet) std::printf("%s\n", line.c_str());
}

io::AppConfig load(const GlobalArgs& args) {
    if (args.config_path.empty()) {
        io::AppConfig cfg;
        cfg.validate();
        return cfg;
    }
    return io::load_config(args.config_path);
}

void write_json(const GlobalArgs& args, const std::string& name, const io::json& j) {
    const auto dir = std::filesystem::path(args.out_dir);
    io::ensure_writable_dir(dir);
    io::write_text_file(dir / name, j.dump(2) + "\n");
    say(args, "wrote " + (dir / name).string());
}

std::uint64_t one_shot_seed(const GlobalArgs& args) { return args.seed.value_or(1); }

// Stock toolbox for the selection command: one tool per affordance template.
std::vector<world::ToolSpec> template_toolbox() {
    std::vector<world::ToolSpec> out;
    for (const auto& tag : harness::affordance_vocabulary()) {
        out.push_back(design::instantiate_combo({tag}));
    }
    return out;
}

int cmd_design(const GlobalArgs& args) {
    const io::AppConfig cfg = load(args);
    const std::uint64_t seed = one_shot_seed(args);
    world::EnvSpec env = cfg.env;
    env.trials = cfg.harness.trials_per_episode;
    env.seed = rng::derive_seed(seed, "cli-design-env", 0);
    const auto res = design::cem_design(cfg.reach_task, env, cfg.controller, cfg.design,
                                        rng::derive_seed(seed, "cli-design", 0));
    io::json j{{"seed", seed},
               {"tool", io::to_json(res.best_tool)},
               {"objective", res.best_j},
               {"performance", res.best_perf},
               {"control_confidence", res.best_control_confidence},
               {"iterations", res.trace.size()}};
    write_json(args, "design.json", j);
    say(args, "designed " + res.best_tool.id + " with objective " + std::to_string(res.best_j));
    return 0;
}

int cmd_discover(const GlobalArgs& args) {
    const io::AppConfig cfg = load(args);
    const harness::LoopState state = harness::make_loop_state(cfg, cfg.pull_task);
    const auto res =
        design::discover_tool(harness::affordance_vocabulary(), state.belief, state.model,
                              cfg.policy, cfg.harness.max_combo_size);
    io::json candidates = io::json::array();
    for (std::size_t i = 0; i < res.candidates.size(); ++i) {
        candidates.push_back({{"affordances", res.candidates[i]}, {"value", res.values[i]}});
    }
    io::json j{{"tool", io::to_json(res.tool)},
               {"decision_confidence", res.decision.value},
               {"candidates", candidates}};
    write_json(args, "discovery.json", j);
    say(args, "discovered " + res.tool.id);
    return 0;
}

int cmd_invent(const GlobalArgs& args) {
    const io::AppConfig cfg = load(args);
    const std::uint64_t seed = one_shot_seed(args);
    const design::ParamSpace space{cfg.finetune.segments, cfg.bounds};
    world::EnvSpec env = cfg.env;
    env.trials = cfg.harness.trials_per_episode;
    env.seed = rng::derive_seed(seed, "cli-invent-env", 0);
    const auto res = design::finetune_generative(
        design::GenerativeDesignModel::broad(space), design::SurrogateGrid::create(space),
        cfg.pull_task, env, cfg.controller, cfg.experiment.finetune_budget, cfg.finetune,
        rng::derive_seed(seed, "cli-invent", 0));
    io::json j{{"seed", seed},
               {"best", io::to_json(res.best)},
               {"evaluations_used", res.evaluations_used},
               {"sampler", io::to_json(res.model)}};
    write_json(args, "invention.json", j);
    say(args, "invented " + res.best.tool.id + " with measured reward "
                  + std::to_string(res.best.measured_reward));
    return 0;
}

int cmd_select(const GlobalArgs& args) {
    const io::AppConfig cfg = load(args);
    const std::uint64_t seed = one_shot_seed(args);
    const auto toolbox = template_toolbox();
    world::EnvSpec env = cfg.env;
    env.trials = cfg.harness.trials_per_episode;
    env.seed = rng::derive_seed(seed, "cli-select-env", 0);
    const auto res = evaluator::select_tool(toolbox, cfg.pull_task, env, cfg.controller,
                                            cfg.evaluator);
    io::json scored = io::json::array();
    for (std::size_t i = 0; i < toolbox.size(); ++i) {
        scored.push_back({{"tool", toolbox[i].id},
                          {"score", res.scores[i]},
                          {"predicted_perf", res.predicted_perf[i]},
                          {"control_confidence", res.control_confidences[i]}});
    }
    io::json j{{"choice", toolbox[res.choice].id},
               {"bypassed_evaluation", res.bypassed_evaluation},
               {"trigger_designer", res.trigger_designer},
               {"scored", scored},
               {"report", io::to_json(res.report)}};
    write_json(args, "selection.json", j);
    say(args, "selected " + toolbox[res.choice].id);
    return 0;
}

int cmd_calibrate(const GlobalArgs& args) {
    const io::AppConfig cfg = load(args);
    const std::uint64_t seed = one_shot_seed(args);
    const auto records = harness::run_e4_seed(cfg, seed);
    const auto fit = harness::calibration_outcome(records);
    io::json j{{"seed", seed},
               {"model", io::to_json(fit.model)},
               {"holdout_ece_before", fit.ece_before},
               {"holdout_ece_after", fit.ece_after},
               {"samples", records.size()}};
    write_json(args, "calibration.json", j);
    say(args, "fitted temperature " + std::to_string(fit.model.temperature)
                  + " (holdout ece " + std::to_string(fit.ece_before) + " -> "
                  + std::to_string(fit.ece_after) + ")");
    return 0;
}

int cmd_experiment(const GlobalArgs& args, const std::string& id) {
    io::AppConfig cfg = load(args);
    if (args.seed) cfg.experiment.seeds = {*args.seed};
    say(args, "experiment " + id + ": " + std::to_string(cfg.experiment.seeds.size())
                  + " seed(s)");
    const auto res = harness::run_experiment(id, cfg, args.out_dir);
    say(args, "wrote " + res.episodes_path.string() + ", " + res.summary_path.string() + ", "
                  + res.plot_path.string() + " (" + std::to_string(res.records.size())
                  + " records)");
    return 0;
}

int cmd_report(const GlobalArgs& args) {
    const auto path = std::filesystem::path(args.out_dir) / "episodes.jsonl";
    std::ifstream in(path);
    if (!in) throw IoError("report: cannot open " + path.string());

    struct ArmStats {
        std::size_t episodes = 0;
        std::size_t successes = 0;
        double reward_sum = 0.0;
        std::size_t impasses = 0;
        std::size_t inventions = 0;
    };
    std::map<std::string, ArmStats> arms;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        io::json j;
        try {
            j = io::json::parse(line);
        } catch (const io::json::exception& e) {
            throw IoError("report: malformed record in " + path.string() + ": " + e.what());
        }
        ArmStats& s = arms[j.value("arm", std::string("?"))];
        s.episodes += 1;
        s.successes += j.value("success", false) ? 1 : 0;
        s.reward_sum += j.value("reward", 0.0);
        s.impasses += j.value("impasse", false) ? 1 : 0;
        s.inventions += j.value("invented", false) ? 1 : 0;
    }
    std::printf("%-14s %9s %13s %12s %9s %11s\n", "arm", "episodes", "success-rate",
                "mean-reward", "impasses", "inventions");
    for (const auto& [arm, s] : arms) {
        std::printf("%-14s %9zu %13.3f %12.3f %9zu %11zu\n", arm.c_str(), s.episodes,
                    static_cast<double>(s.successes) / static_cast<double>(s.episodes),
                    s.reward_sum / static_cast<double>(s.episodes), s.impasses, s.inventions);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    GlobalArgs args;
    CLI::App app{"Confidence-guided tool design and invention workbench"};
    app.require_subcommand(1);
    app.fallthrough(); // accept the global flags after the subcommand too
    app.add_option("--config", args.config_path, "JSON config overlaying the shipped defaults");
    app.add_option("--seed", args.seed, "Run seed (experiments: replaces the config seed list)");
    app.add_option("--out", args.out_dir, "Output directory (default: out)");
    app.add_flag("--quiet", args.quiet, "Suppress progress output");

    auto* design_cmd = app.add_subcommand("design", "Optimize a tool for the reach task");
    auto* discover_cmd =
        app.add_subcommand("discover", "Propose an affordance bundle for the pull task");
    auto* invent_cmd =
        app.add_subcommand("invent", "Fine-tune the design sampler on the pull task");
    auto* select_cmd = app.add_subcommand("select", "Select among the template tools");
    auto* calibrate_cmd =
        app.add_subcommand("calibrate", "Fit a confidence temperature on held-out outcomes");
    auto* experiment_cmd = app.add_subcommand("experiment", "Run a packaged experiment");
    std::string experiment_id;
    experiment_cmd->add_option("id", experiment_id, "One of e1..e5")->required();
    auto* report_cmd =
        app.add_subcommand("report", "Summarize a previously written episodes.jsonl");

    CLI11_PARSE(app, argc, argv);

    try {
        if (design_cmd->parsed()) return cmd_design(args);
        if (discover_cmd->parsed()) return cmd_discover(args);
        if (invent_cmd->parsed()) return cmd_invent(args);
        if (select_cmd->parsed()) return cmd_select(args);
        if (calibrate_cmd->parsed()) return cmd_calibrate(args);
        if (experiment_cmd->parsed()) return cmd_experiment(args, experiment_id);
        if (report_cmd->parsed()) return cmd_report(args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
