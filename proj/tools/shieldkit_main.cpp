// shieldkit: synthesize, compact, evaluate and render safety shields for
// continuous-state decision processes.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "shieldkit/caap.hpp"
#include "shieldkit/errors.hpp"
#include "shieldkit/eval.hpp"
#include "shieldkit/grid.hpp"
#include "shieldkit/model.hpp"
#include "shieldkit/render_svg.hpp"
#include "shieldkit/shield_io.hpp"
#include "shieldkit/synthesis.hpp"

namespace sk = shieldkit;

namespace {

std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (const auto& name : names) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

sk::ModelParams load_params(const std::string& config_path) {
    sk::ModelParams params;
    if (config_path.empty()) return params;
    std::ifstream in(config_path);
    if (!in) throw sk::ValidationError("cannot open config '" + config_path + "'");
    nlohmann::json data;
    try {
        in >> data;
    } catch (const nlohmann::json::exception& e) {
        throw sk::ValidationError("config '" + config_path + "' is not valid JSON: " + e.what());
    }
    if (!data.is_object())
        throw sk::ValidationError("config '" + config_path + "' must be a JSON object");
    for (const auto& [key, value] : data.items()) {
        if (!value.is_number())
            throw sk::ValidationError("config key '" + key + "' must be a number");
        params[key] = value.get<double>();
    }
    return params;
}

std::string pick_property(const sk::Model& model, const std::string& requested) {
    const auto& properties = model.descriptor().properties;
    if (requested.empty()) {
        if (properties.empty())
            throw sk::ValidationError("model declares no safety properties");
        return properties.front();
    }
    return requested; // validated on first is_safe call
}

sk::ActionId action_by_name(const sk::ModelDescriptor& desc, const std::string& name) {
    for (std::size_t i = 0; i < desc.actions.size(); ++i)
        if (desc.actions[i] == name) return static_cast<sk::ActionId>(i);
    throw sk::ValidationError("model '" + desc.name + "' has no action '" + name +
                              "' (available: " + join_names(desc.actions) + ")");
}

struct StrategyChoice {
    std::string shield_path, tree_path, action_name;
    std::string fallback = "abort";

    sk::Strategy build(const sk::Model& model) const {
        int sources = !shield_path.empty() + !tree_path.empty() + !action_name.empty();
        if (sources != 1)
            throw sk::ValidationError(
                "choose exactly one of --shield FILE, --tree FILE, --action NAME");
        if (!action_name.empty())
            return sk::Strategy::fixed(action_by_name(model.descriptor(), action_name));

        sk::ShieldFallback fb;
        if (fallback == "abort")
            fb = sk::ShieldFallback::Abort;
        else if (fallback == "allow-all")
            fb = sk::ShieldFallback::AllowAll;
        else
            throw sk::ValidationError("unknown fallback '" + fallback +
                                      "' (expected abort|allow-all)");
        std::shared_ptr<const sk::ActionMaskSource> masks;
        if (!shield_path.empty())
            masks = std::make_shared<sk::ActionMaskSource>(
                sk::load_shield(shield_path).shield, model.descriptor());
        else
            masks = std::make_shared<sk::ActionMaskSource>(sk::load_tree(tree_path).tree,
                                                           model.descriptor());
        return sk::Strategy::shielded_random(std::move(masks), fb);
    }
};

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& model_name, const std::string& grid_text,
              const std::string& property_name, std::uint32_t n, std::uint32_t m, double eps,
              const std::string& oob_text, std::uint64_t seed, const std::string& config,
              const std::string& out_path) {
    auto model = sk::make_model(model_name, load_params(config));
    std::string property = pick_property(*model, property_name);
    sk::Grid grid(sk::parse_grid_spec(grid_text, model->descriptor()), model->descriptor());
    sk::SamplePlan plan{n, eps};
    sk::OobMode oob = sk::parse_oob_mode(oob_text);

    sk::SynthesisStats stats;
    sk::ShieldGrid shield =
        sk::synthesize_shield(*model, grid, property, plan, m, seed, oob, &stats);

    sk::ShieldProvenance provenance;
    provenance.model = model_name;
    provenance.property = property;
    provenance.samples_per_axis = n;
    provenance.edge_shrink = eps;
    provenance.repeats = m;
    provenance.seed = seed;
    provenance.oob_mode = oob_text;
    provenance.seconds = stats.seconds;
    sk::save_shield(shield, provenance, out_path);

    std::cout << "grid cells        " << stats.cells << "\n"
              << "initially safe    " << stats.initially_safe << "\n"
              << "safe after game   " << stats.safe << "\n"
              << "out-of-bounds     " << (stats.out_safe ? "safe" : "unsafe") << "\n"
              << "wall time         " << stats.seconds << " s\n"
              << "shield written    " << out_path << " (digest "
              << sk::format_digest(sk::shield_digest(shield)) << ")\n";
    return 0;
}

int cmd_compact(const std::string& input, const std::string& out_path, std::uint64_t seed,
                std::uint32_t max_iters, double min_gain_pct, bool verify) {
    sk::CompactOptions options;
    options.seed = seed;
    options.max_iterations = max_iters;
    options.min_relative_gain = min_gain_pct / 100.0;

    std::string format = sk::sniff_format(input);
    sk::CompactResult result;
    std::string source_digest;
    std::optional<sk::Partitioning> source; // for verification
    if (format == "shield") {
        sk::ShieldGrid shield = sk::load_shield(input).shield;
        source_digest = sk::format_digest(sk::shield_digest(shield));
        result = sk::compact(shield, options);
        if (verify) source = sk::partitioning_of(shield);
    } else if (format == "decision-tree") {
        sk::DecisionTree tree = sk::load_tree(input).tree;
        source_digest = sk::format_digest(sk::tree_digest(tree));
        result = sk::compact(tree, options);
        if (verify) source = sk::partitioning_of(tree);
    } else {
        throw sk::ValidationError("'" + input + "' contains neither a shield nor a tree");
    }

    std::cout << "source regions    " << result.source_regions << "\n";
    for (std::size_t i = 0; i < result.region_counts.size(); ++i)
        std::cout << "iteration " << i + 1 << "       " << result.region_counts[i]
                  << " regions\n";
    std::uint64_t final_regions = result.region_counts.empty()
                                      ? result.source_regions
                                      : result.region_counts.back();
    std::cout << "reduction         "
              << 100.0 * (1.0 - static_cast<double>(final_regions) /
                                    static_cast<double>(result.source_regions))
              << " %\n"
              << "tree nodes        " << result.tree.nodes.size() << " ("
              << result.tree.leaf_count() << " leaves, depth " << result.tree.depth() << ")\n"
              << "wall time         " << result.seconds << " s\n";

    if (verify) {
        std::uint64_t mismatches = sk::count_label_mismatches(*source, result.tree);
        std::cout << "verification      " << mismatches << " mismatching cells\n";
        if (mismatches != 0)
            throw sk::ValidationError("compacted tree is not equivalent to its source");
    }

    sk::TreeProvenance provenance;
    provenance.source_digest = source_digest;
    provenance.seed = seed;
    provenance.source_regions = result.source_regions;
    provenance.region_counts = result.region_counts;
    provenance.seconds = result.seconds;
    sk::save_tree(result.tree, provenance, out_path);
    std::cout << "tree written      " << out_path << " (digest "
              << sk::format_digest(sk::tree_digest(result.tree)) << ")\n";
    return 0;
}

int cmd_eval(const std::string& model_name, const StrategyChoice& choice,
             const std::string& property_name, std::uint64_t runs, double horizon,
             double confidence, std::uint64_t seed, const std::string& config) {
    auto model = sk::make_model(model_name, load_params(config));
    std::string property = pick_property(*model, property_name);
    sk::Strategy strategy = choice.build(*model);
    sk::RunStatistics stats =
        sk::evaluate_strategy(*model, strategy, property, runs, horizon, confidence, seed);

    nlohmann::json out{
        {"runs", stats.runs},
        {"violations", stats.violations},
        {"confidence", stats.confidence},
        {"violation_probability",
         {{"low", stats.violation_ci_low}, {"high", stats.violation_ci_high}}},
        {"cost", {{"mean", stats.mean_cost},
                  {"sd", stats.cost_sd},
                  {"low", stats.cost_ci_low},
                  {"high", stats.cost_ci_high}}}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_simulate(const std::string& model_name, const StrategyChoice& choice,
                 const std::string& property_name, double horizon, std::uint64_t seed,
                 const std::string& config, const std::string& out_path) {
    auto model = sk::make_model(model_name, load_params(config));
    std::string property = pick_property(*model, property_name);
    sk::Strategy strategy = choice.build(*model);

    std::vector<sk::TracePoint> trace;
    sk::Rng rng = sk::Rng::derive(seed, {0});
    sk::RunResult result =
        sk::run_simulation(*model, strategy, property, horizon, rng, &trace);

    const auto& desc = model->descriptor();
    std::string csv = "time";
    for (const auto& var : desc.continuous_vars) csv += "," + var.name;
    for (const auto& var : desc.discrete_vars) csv += "," + var.name;
    csv += ",action\n";
    for (const auto& point : trace) {
        csv += sk::format_double(point.time);
        for (double value : point.state.continuous) csv += "," + sk::format_double(value);
        for (std::int32_t value : point.state.discrete) csv += "," + std::to_string(value);
        csv += ",";
        if (point.action >= 0) csv += desc.actions[static_cast<std::size_t>(point.action)];
        csv += "\n";
    }

    if (out_path.empty() || out_path == "-") {
        std::cout << csv;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw sk::ValidationError("cannot write '" + out_path + "'");
        out << csv;
    }
    std::cerr << "run: " << (result.safe ? "safe" : (result.aborted ? "aborted" : "unsafe"))
              << ", cost " << result.cost << ", " << result.steps << " steps, " << result.elapsed
              << " s model time\n";
    return 0;
}

int cmd_learn(const std::string& model_name, const std::string& shield_path,
              std::uint64_t episodes, double horizon, const sk::LearnConfig& config,
              std::uint64_t seed, const std::string& model_config,
              const std::string& out_path) {
    auto model = sk::make_model(model_name, load_params(model_config));
    sk::ShieldGrid shield = sk::load_shield(shield_path).shield;
    sk::LearnResult result =
        sk::learn_under_shield(*model, shield, episodes, horizon, config, seed);

    auto decile = result.episode_costs.size() / 10;
    auto mean_of = [&](std::size_t begin, std::size_t end) {
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) sum += result.episode_costs[i];
        return end > begin ? sum / static_cast<double>(end - begin) : 0.0;
    };
    std::cout << "episodes          " << episodes << "\n"
              << "mean cost (first 10%) " << mean_of(0, decile ? decile : 1) << "\n"
              << "mean cost (last 10%)  "
              << mean_of(result.episode_costs.size() - (decile ? decile : 1),
                         result.episode_costs.size())
              << "\n";

    sk::ShieldProvenance provenance;
    provenance.model = model_name;
    provenance.property = "greedy policy learned under shield";
    provenance.seed = seed;
    sk::save_shield(result.policy, provenance, out_path);
    std::cout << "policy written    " << out_path << "\n";
    return 0;
}

int cmd_plot(const std::string& input, const std::string& x_axis, const std::string& y_axis,
             const std::vector<std::string>& fixes, const std::string& out_path) {
    std::map<std::string, double> pins;
    for (const std::string& fix : fixes) {
        auto eq = fix.find('=');
        if (eq == std::string::npos || eq == 0)
            throw sk::ValidationError("--fix expects name=value, got '" + fix + "'");
        try {
            pins[fix.substr(0, eq)] = std::stod(fix.substr(eq + 1));
        } catch (const std::exception&) {
            throw sk::ValidationError("bad number in --fix '" + fix + "'");
        }
    }

    std::string format = sk::sniff_format(input);
    std::string svg;
    if (format == "shield")
        svg = sk::render_shield_svg(sk::load_shield(input).shield, x_axis, y_axis, pins);
    else if (format == "decision-tree")
        svg = sk::render_tree_svg(sk::load_tree(input).tree, x_axis, y_axis, pins);
    else
        throw sk::ValidationError("'" + input + "' contains neither a shield nor a tree");

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw sk::ValidationError("cannot write '" + out_path + "'");
    out << svg;
    std::cout << "plot written      " << out_path << "\n";
    return 0;
}

int cmd_info(const std::string& input) {
    std::string format = sk::sniff_format(input);
    if (format == "shield") {
        sk::LoadedShield loaded = sk::load_shield(input);
        const auto& s = loaded.shield;
        std::cout << "format            shield\n"
                  << "grid              " << sk::format_grid_spec(s.grid) << "\n"
                  << "cells             " << s.grid.total_cells() << "\n"
                  << "safe cells        " << s.safe_cell_count() << "\n"
                  << "actions           " << join_names(s.actions) << "\n"
                  << "out mask          " << s.out_mask << "\n"
                  << "digest            " << sk::format_digest(sk::shield_digest(s)) << "\n"
                  << "model             " << loaded.provenance.model << "\n"
                  << "property          " << loaded.provenance.property << "\n"
                  << "samples per axis  " << loaded.provenance.samples_per_axis << "\n"
                  << "repeats           " << loaded.provenance.repeats << "\n"
                  << "seed              " << loaded.provenance.seed << "\n"
                  << "oob mode          " << loaded.provenance.oob_mode << "\n"
                  << "synthesis time    " << loaded.provenance.seconds << " s\n";
    } else if (format == "decision-tree") {
        sk::LoadedTree loaded = sk::load_tree(input);
        const auto& t = loaded.tree;
        std::cout << "format            decision-tree\n"
                  << "domain            " << sk::format_grid_spec(t.domain) << "\n"
                  << "actions           " << join_names(t.actions) << "\n"
                  << "nodes             " << t.nodes.size() << " (" << t.leaf_count()
                  << " leaves, depth " << t.depth() << ")\n"
                  << "digest            " << sk::format_digest(sk::tree_digest(t)) << "\n"
                  << "source digest     " << loaded.provenance.source_digest << "\n"
                  << "source regions    " << loaded.provenance.source_regions << "\n"
                  << "seed              " << loaded.provenance.seed << "\n";
        std::cout << "region counts     ";
        for (std::size_t i = 0; i < loaded.provenance.region_counts.size(); ++i)
            std::cout << (i ? ", " : "") << loaded.provenance.region_counts[i];
        std::cout << "\n";
    } else {
        throw sk::ValidationError("'" + input + "' contains neither a shield nor a tree");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"shieldkit: grid shields for continuous-state decision processes, "
                 "compacted into decision trees"};
    app.require_subcommand(1);

    // synth
    std::string model_name, grid_text, property_name, oob_text = "error", config, out_path;
    std::uint32_t n = 3, m = 1;
    double eps = 0.0;
    std::uint64_t seed = 0;
    auto* synth = app.add_subcommand("synth", "synthesize a grid shield for a model");
    synth->add_option("--model", model_name, "built-in model name")->required();
    synth->add_option("--grid", grid_text, "axes, e.g. \"v[-13,13]:1300,p[0,11]:550,loc\"")
        ->required();
    synth->add_option("--safety", property_name, "safety property (default: model's first)");
    synth->add_option("--n", n, "samples per axis per cell (default 3)");
    synth->add_option("--m", m, "simulation repeats per sample (default 1)");
    synth->add_option("--eps", eps, "edge shrink for top samples (default 1e-6*granularity)");
    synth->add_option("--oob", oob_text, "error|always-safe|always-unsafe|auto");
    synth->add_option("--seed", seed, "master seed");
    synth->add_option("--config", config, "JSON file with model parameter overrides");
    synth->add_option("-o,--output", out_path, "shield file to write")->required();

    // compact
    std::string compact_input;
    std::uint32_t max_iters = 10;
    double min_gain_pct = 1.0;
    bool no_verify = false;
    auto* compact_cmd = app.add_subcommand("compact", "merge a shield or tree into a smaller tree");
    compact_cmd->add_option("input", compact_input, "shield or tree file")->required();
    compact_cmd->add_option("-o,--output", out_path, "tree file to write")->required();
    compact_cmd->add_option("--seed", seed, "seed for the randomized expansion order");
    compact_cmd->add_option("--max-iters", max_iters, "iteration cap (default 10)");
    compact_cmd->add_option("--min-gain", min_gain_pct,
                            "stop below this percent improvement (default 1)");
    compact_cmd->add_flag("--no-verify", no_verify, "skip the exhaustive equivalence check");

    // eval
    StrategyChoice choice;
    std::uint64_t runs = 10000;
    double horizon = 120.0, confidence = 0.99;
    auto* eval_cmd = app.add_subcommand("eval", "estimate violation probability and cost");
    eval_cmd->add_option("--model", model_name)->required();
    eval_cmd->add_option("--shield", choice.shield_path, "shield file driving a random strategy");
    eval_cmd->add_option("--tree", choice.tree_path, "tree file driving a random strategy");
    eval_cmd->add_option("--action", choice.action_name, "fixed action by name");
    eval_cmd->add_option("--fallback", choice.fallback, "abort|allow-all on empty mask");
    eval_cmd->add_option("--safety", property_name);
    eval_cmd->add_option("--runs", runs, "number of runs (default 10000)");
    eval_cmd->add_option("--horizon", horizon, "model-time horizon per run (default 120)");
    eval_cmd->add_option("--confidence", confidence, "interval confidence (default 0.99)");
    eval_cmd->add_option("--seed", seed);
    eval_cmd->add_option("--config", config);

    // simulate
    std::string sim_out;
    auto* sim = app.add_subcommand("simulate", "emit one run as CSV");
    sim->add_option("--model", model_name)->required();
    sim->add_option("--shield", choice.shield_path);
    sim->add_option("--tree", choice.tree_path);
    sim->add_option("--action", choice.action_name);
    sim->add_option("--fallback", choice.fallback);
    sim->add_option("--safety", property_name);
    sim->add_option("--horizon", horizon);
    sim->add_option("--seed", seed);
    sim->add_option("--config", config);
    sim->add_option("-o,--output", sim_out, "CSV path (default: stdout)");

    // learn
    std::string learn_shield;
    std::uint64_t episodes = 2000;
    sk::LearnConfig learn_config;
    std::string learn_fallback = "allow-all";
    auto* learn = app.add_subcommand("learn", "train a greedy policy under a shield");
    learn->add_option("--model", model_name)->required();
    learn->add_option("--shield", learn_shield, "shield file to mask actions")->required();
    learn->add_option("--episodes", episodes, "training episodes (default 2000)");
    learn->add_option("--horizon", horizon, "episode horizon (default 120)");
    learn->add_option("--alpha", learn_config.learning_rate, "learning rate (default 0.1)");
    learn->add_option("--discount", learn_config.discount, "discount factor (default 0.99)");
    learn->add_option("--eps-start", learn_config.epsilon_start, "initial exploration (0.3)");
    learn->add_option("--eps-end", learn_config.epsilon_end, "final exploration (0.01)");
    learn->add_option("--fallback", learn_fallback, "abort|allow-all on empty mask");
    learn->add_option("--seed", seed);
    learn->add_option("--config", config);
    learn->add_option("-o,--output", out_path, "policy file to write (shield format)")
        ->required();

    // plot
    std::string plot_input, x_axis, y_axis;
    std::vector<std::string> fixes;
    auto* plot = app.add_subcommand("plot", "render a 2-D slice as SVG");
    plot->add_option("input", plot_input, "shield or tree file")->required();
    plot->add_option("--x", x_axis, "axis on the horizontal")->required();
    plot->add_option("--y", y_axis, "axis on the vertical")->required();
    plot->add_option("--fix", fixes, "pin another axis, name=value (repeatable)");
    plot->add_option("-o,--output", out_path, "SVG path")->required();

    // info
    std::string info_input;
    auto* info = app.add_subcommand("info", "print file provenance");
    info->add_option("input", info_input, "shield or tree file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed())
            return cmd_synth(model_name, grid_text, property_name, n, m, eps, oob_text, seed,
                             config, out_path);
        if (compact_cmd->parsed())
            return cmd_compact(compact_input, out_path, seed, max_iters, min_gain_pct,
                               !no_verify);
        if (eval_cmd->parsed())
            return cmd_eval(model_name, choice, property_name, runs, horizon, confidence, seed,
                            config);
        if (sim->parsed())
            return cmd_simulate(model_name, choice, property_name, horizon, seed, config,
                                sim_out);
        if (learn->parsed()) {
            if (learn_fallback == "abort")
                learn_config.fallback = sk::ShieldFallback::Abort;
            else if (learn_fallback == "allow-all")
                learn_config.fallback = sk::ShieldFallback::AllowAll;
            else
                throw sk::ValidationError("unknown fallback '" + learn_fallback + "'");
            return cmd_learn(model_name, learn_shield, episodes, horizon, learn_config, seed,
                             config, out_path);
        }
        if (plot->parsed()) return cmd_plot(plot_input, x_axis, y_axis, fixes, out_path);
        if (info->parsed()) return cmd_info(info_input);
    } catch (const sk::OutOfBoundsAbort& e) {
        std::cerr << "out-of-bounds abort: " << e.what() << "\n"
                  << "(cell " << e.cell_id << ", action " << e.action_index << ", sample "
                  << e.sample_index << "; rerun with --oob always-safe|always-unsafe|auto or "
                  << "grow the grid)\n";
        return 3;
    } catch (const sk::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
