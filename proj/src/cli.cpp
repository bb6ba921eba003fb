#include "cbf/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "cbf/pipeline.hpp"

namespace cbf::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::string manifest;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig config;
    if (!opts.config_path.empty()) {
        config = load_config(opts.config_path);
    } else if (!opts.preset.empty()) {
        config = preset_config(opts.preset);
    } else {
        throw ConfigError("either --config or --preset is required");
    }
    if (opts.seed_set) config.seed = opts.seed;
    if (!opts.out_dir.empty()) config.out_dir = opts.out_dir;
    if (config.out_dir.empty()) {
        throw ConfigError("an output directory is required (--out or config out_dir)");
    }
    return config;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool manifest_opt) {
    cmd->add_option("--config", opts.config_path, "experiment config JSON");
    cmd->add_option("--preset", opts.preset, "built-in preset: himmelblau|ellipsoid|integrator");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--seed", opts.seed, "master seed (overrides the config)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    if (manifest_opt) {
        cmd->add_option("--manifest", opts.manifest, "filter manifest from a synthesize run");
    }
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"multi-CBF synthesis and safety filtering toolkit"};
    app.require_subcommand(1);

    CommonOpts synth_opts, analyze_opts, sim_opts, cmp_opts;
    std::string export_dir;

    CLI::App* synth = app.add_subcommand(
        "synthesize", "sample, partition, design gradients and train one CBF per segment");
    add_common(synth, synth_opts, false);

    CLI::App* analyze_cmd = app.add_subcommand(
        "analyze", "scan for vanishing channel Lie derivatives; scans the synthesized CBFs "
                   "when a manifest is given, the desired set otherwise");
    add_common(analyze_cmd, analyze_opts, true);

    CLI::App* sim_cmd =
        app.add_subcommand("simulate", "closed-loop run; unfiltered without a manifest");
    add_common(sim_cmd, sim_opts, true);

    CLI::App* cmp_cmd = app.add_subcommand(
        "compare", "single-CBF baseline versus the synthesized multi-CBF filter");
    add_common(cmp_cmd, cmp_opts, true);

    CLI::App* export_cmd =
        app.add_subcommand("export", "regenerate gnuplot files for a finished run directory");
    export_cmd->add_option("--dir", export_dir, "run directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (synth->parsed()) {
            const ExperimentConfig config = resolve_config(synth_opts);
            const auto out = synthesize(config, config.out_dir);
            std::printf("wrote %s (%d models)\n", out.manifest_path.string().c_str(),
                        static_cast<int>(out.per_q.size()));
            for (const auto& art : out.per_q) {
                std::printf("  q=%d  theta=%.6g  epsilon=%.6g  e_phy=%.3e  e_bc=%.3e  %s\n",
                            art.design.index, art.design.theta, art.design.epsilon,
                            art.model.final_e_phy, art.model.final_e_bc,
                            to_string(art.provenance).c_str());
            }
            return kOk;
        }
        if (analyze_cmd->parsed()) {
            const ExperimentConfig config = resolve_config(analyze_opts);
            std::optional<fs::path> manifest;
            if (!analyze_opts.manifest.empty()) manifest = analyze_opts.manifest;
            const auto out = analyze(config, manifest, config.out_dir);
            int idx = 0;
            for (const auto& rep : out.reports) {
                std::printf("barrier %d: %d zero-locus points in the set (%d boundary)\n", idx++,
                            static_cast<int>(rep.points.size()), rep.boundary_count());
            }
            std::printf("wrote %s\n", out.report_path.string().c_str());
            return kOk;
        }
        if (sim_cmd->parsed()) {
            const ExperimentConfig config = resolve_config(sim_opts);
            std::optional<fs::path> manifest;
            if (!sim_opts.manifest.empty()) manifest = sim_opts.manifest;
            const auto out = simulate(config, manifest, config.out_dir);
            std::printf("trace: %zu rows, min h_desired %.6g, chattering %.6g\n",
                        out.trace.rows.size(), out.metrics.min_h_desired,
                        out.metrics.chattering_index);
            if (out.metrics.escaped) {
                std::fprintf(stderr, "state left the admissible box; trace truncated\n");
                return kSimulationEscape;
            }
            return kOk;
        }
        if (cmp_cmd->parsed()) {
            const ExperimentConfig config = resolve_config(cmp_opts);
            if (cmp_opts.manifest.empty()) {
                throw ConfigError("compare needs --manifest from a synthesize run");
            }
            const auto out = compare(config, cmp_opts.manifest, config.out_dir);
            std::printf("single: min h %.6g chattering %.6g | multi: min h %.6g chattering %.6g "
                        "| ratio %.3g\n",
                        out.single_metrics.min_h_desired, out.single_metrics.chattering_index,
                        out.multi_metrics.min_h_desired, out.multi_metrics.chattering_index,
                        out.chattering_ratio);
            if (out.multi_metrics.escaped) {
                std::fprintf(stderr, "multi-CBF run left the admissible box\n");
                return kSimulationEscape;
            }
            return kOk;
        }
        if (export_cmd->parsed()) {
            export_plots(export_dir);
            std::printf("wrote %s/plots.gp\n", export_dir.c_str());
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const InfeasibleDesignError& e) {
        std::fprintf(stderr, "infeasible design: %s\n", e.what());
        return kInfeasibleDesign;
    } catch (const TrainingDivergedError& e) {
        std::fprintf(stderr, "training diverged: %s\n", e.what());
        return kDivergedTraining;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInternalError;
    }
    return kConfigError;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace cbf::cli
