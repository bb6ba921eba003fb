#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cbf/persistence.hpp"
#include "cbf/safety_filter.hpp"
#include "cbf/sim.hpp"

namespace cbf {

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir;

    // system
    std::string system_preset = "quadrotor_z";
    QuadrotorZParams quad;
    Box box;
    double integrator_x_min = -1.0, integrator_x_max = 1.0;

    // safe set
    SafeSetSpec safe_set;

    // boundary machinery
    double level_offset = 0.0;  // sample the boundary of {h = level_offset}
    int boundary_samples = 720;
    int q_target = 1;
    double partition_margin = 0.05;
    double flag_tol = 0.1;
    bool hull_breaks = true;

    // collocation
    int n_phy = 2048;
    int n_bc = 512;
    int audit_factor = 10;

    // gradient design
    GradientDesignConfig design;

    // training
    std::vector<int> hidden = {16, 16};
    bool hard_boundary = true;
    double lambda = 10.0;
    bool auto_lambda = false;
    double step = 1e-3;
    double step_final = 1e-6;
    int iterations = 20000;
    double loss_target = 0.0;

    // inactivity scans
    int scan_resolution = 4096;
    int model_scan_resolution = 128;
    double scan_tol = 1e-7;
    double scan_boundary_band = 1e-3;

    // simulation
    SimulationConfig sim;
    Policy policy;
    double single_cbf_slope = 1.0;
};

ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// Built-in experiment presets: himmelblau, ellipsoid, integrator.
ExperimentConfig preset_config(const std::string& name);

ControlAffineSystem make_system(const ExperimentConfig& config);

// Per-point designed gradient evaluated anywhere: decompose the field target,
// clamp alpha through the channel-decoupled gram, reconstruct.
Vec clamped_alpha(const Mat& gram, const Vec& alpha_target, double epsilon,
                  double majority_sign);
Vec designed_field_at(const TargetGradientField& field, const ControlAffineSystem& sys,
                      double epsilon, double majority_sign, const Vec& x);

struct QArtifacts {
    DesignedGradient design;
    PinnModel model;
    TargetGradientField field;
    SegmentKind provenance = SegmentKind::OriginalBoundary;
    std::string model_hash;
    std::string design_hash;
};

struct SynthesisOutput {
    BoundaryPartition partition;
    std::vector<QArtifacts> per_q;
    std::filesystem::path manifest_path;
    std::string manifest_hash;
};

// The full pipeline: sample, partition, flag/replace, per-q gradient design
// and training, artifact persistence, manifest.
SynthesisOutput synthesize(const ExperimentConfig& config,
                           const std::filesystem::path& out_dir);

MultiCbfFilter load_filter_from_manifest(const std::filesystem::path& manifest_path);

// Per-model design margins recorded in a manifest.
std::vector<double> manifest_epsilons(const std::filesystem::path& manifest_path);

struct AnalyzeOutput {
    std::vector<InactivityReport> reports;  // one per scanned barrier
    std::filesystem::path report_path;
    std::filesystem::path locus_csv_path;
};

// Scan the desired set (no manifest) or every synthesized CBF in a manifest.
AnalyzeOutput analyze(const ExperimentConfig& config,
                      const std::optional<std::filesystem::path>& manifest_path,
                      const std::filesystem::path& out_dir);

struct SimulateOutput {
    SimulationTrace trace;
    TraceMetrics metrics;
    std::filesystem::path trace_csv;
    std::filesystem::path metrics_json;
};

SimulateOutput simulate(const ExperimentConfig& config,
                        const std::optional<std::filesystem::path>& manifest_path,
                        const std::filesystem::path& out_dir);

struct CompareOutput {
    TraceMetrics single_metrics;
    TraceMetrics multi_metrics;
    double chattering_ratio = 0.0;  // single / multi
    std::filesystem::path metrics_json;
};

// Single-CBF baseline (the desired set used directly as the barrier) versus
// the synthesized multi-CBF filter, identical initial state and policy.
CompareOutput compare(const ExperimentConfig& config,
                      const std::filesystem::path& manifest_path,
                      const std::filesystem::path& out_dir);

// Turn trace CSVs in a run directory into gnuplot-ready .dat files + script.
void export_plots(const std::filesystem::path& run_dir);

}  // namespace cbf
