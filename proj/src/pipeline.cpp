#include "cbf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>

#include "cbf/relative_degree.hpp"

namespace cbf {

namespace fs = std::filesystem;

namespace {

Policy policy_from_json(const Json& j) {
    Policy p;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "constant") {
        p.kind = Policy::Kind::Constant;
        p.constant_u = vector_from_json(j.at("u"));
    } else if (kind == "proportional") {
        p.kind = Policy::Kind::Proportional;
        p.goal = vector_from_json(j.at("goal"));
        p.gain = matrix_from_json(j.at("gain"));
        if (j.contains("bias")) p.bias = vector_from_json(j.at("bias"));
    } else {
        throw ConfigError("unknown policy kind: " + kind);
    }
    return p;
}

Json policy_to_json(const Policy& p) {
    Json j;
    if (p.kind == Policy::Kind::Constant) {
        j["kind"] = "constant";
        j["u"] = vector_to_json(p.constant_u);
    } else {
        j["kind"] = "proportional";
        j["goal"] = vector_to_json(p.goal);
        j["gain"] = matrix_to_json(p.gain);
        if (p.bias.size() > 0) j["bias"] = vector_to_json(p.bias);
    }
    return j;
}

}  // namespace

ExperimentConfig config_from_json(const Json& j) {
    ExperimentConfig c;
    if (!j.contains("seed")) {
        throw ConfigError("config: a seed is required; entropy defaults are not allowed");
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.value("out_dir", std::string{});

    const Json& sys = j.at("system");
    c.system_preset = sys.at("preset").get<std::string>();
    if (c.system_preset == "quadrotor_z") {
        c.quad.k1 = sys.value("k1", 20.91);
        c.quad.k2 = sys.value("k2", 3.65);
        c.quad.gravity = sys.value("gravity", 9.81);
    } else if (c.system_preset == "single_integrator") {
        c.integrator_x_min = sys.value("x_min", -1.0);
        c.integrator_x_max = sys.value("x_max", 1.0);
    } else {
        throw ConfigError("config: unknown system preset " + c.system_preset);
    }
    c.box = box_from_json(sys.at("box"));

    c.safe_set = safe_set_spec_from_json(j.at("safe_set"));

    const Json& b = j.at("boundary");
    c.level_offset = b.value("level_offset", 0.0);
    c.boundary_samples = b.value("samples", 720);
    c.q_target = b.at("q").get<int>();
    c.partition_margin = b.value("partition_margin", 0.05);
    c.flag_tol = b.value("flag_tol", 0.1);
    c.hull_breaks = b.value("hull_breaks", true);

    if (j.contains("collocation")) {
        const Json& col = j.at("collocation");
        c.n_phy = col.value("n_phy", 2048);
        c.n_bc = col.value("n_bc", 512);
        c.audit_factor = col.value("audit_factor", 10);
    }

    if (j.contains("design")) {
        const Json& d = j.at("design");
        c.design.epsilon = d.value("epsilon", 0.0);
        c.design.epsilon_min_fraction = d.value("epsilon_min_fraction", 0.0);
        c.design.theta_default = d.value("theta_default", 1.0);
        c.design.theta_min = d.value("theta_min", 1e-3);
        c.design.theta_max = d.value("theta_max", 10.0);
        c.design.solver_tol = d.value("solver_tol", 1e-10);
    }

    if (j.contains("training")) {
        const Json& t = j.at("training");
        c.hidden = t.value("hidden", std::vector<int>{16, 16});
        c.hard_boundary = t.value("hard_boundary", true);
        c.lambda = t.value("lambda", 10.0);
        c.auto_lambda = t.value("auto_lambda", false);
        c.step = t.value("step", 1e-3);
        c.step_final = t.value("step_final", 1e-6);
        c.iterations = t.value("iterations", 20000);
        c.loss_target = t.value("loss_target", 0.0);
    }

    if (j.contains("scan")) {
        const Json& s = j.at("scan");
        c.scan_resolution = s.value("resolution", 4096);
        c.model_scan_resolution = s.value("model_resolution", 128);
        c.scan_tol = s.value("tol", 1e-7);
        c.scan_boundary_band = s.value("boundary_band", 1e-3);
    }

    const Json& sm = j.at("simulation");
    c.sim.filter_rate = sm.value("rate", 100.0);
    c.sim.substeps = sm.value("substeps", 10);
    c.sim.duration = sm.value("duration", 20.0);
    c.sim.x0 = vector_from_json(sm.at("x0"));
    const std::string inf = sm.value("on_infeasible", std::string("hold-last"));
    c.sim.on_infeasible = (inf == "least-violating") ? InfeasiblePolicy::LeastViolating
                                                     : InfeasiblePolicy::HoldLast;
    c.policy = policy_from_json(sm.at("policy"));
    c.single_cbf_slope = sm.value("single_cbf_slope", 1.0);
    return c;
}

Json to_json(const ExperimentConfig& c) {
    Json j;
    j["seed"] = c.seed;
    if (!c.out_dir.empty()) j["out_dir"] = c.out_dir;
    Json sys;
    sys["preset"] = c.system_preset;
    if (c.system_preset == "quadrotor_z") {
        sys["k1"] = c.quad.k1;
        sys["k2"] = c.quad.k2;
        sys["gravity"] = c.quad.gravity;
    } else {
        sys["x_min"] = c.integrator_x_min;
        sys["x_max"] = c.integrator_x_max;
    }
    sys["box"] = to_json(c.box);
    j["system"] = sys;
    j["safe_set"] = to_json(c.safe_set);
    Json b;
    b["level_offset"] = c.level_offset;
    b["samples"] = c.boundary_samples;
    b["q"] = c.q_target;
    b["partition_margin"] = c.partition_margin;
    b["flag_tol"] = c.flag_tol;
    b["hull_breaks"] = c.hull_breaks;
    j["boundary"] = b;
    Json col;
    col["n_phy"] = c.n_phy;
    col["n_bc"] = c.n_bc;
    col["audit_factor"] = c.audit_factor;
    j["collocation"] = col;
    Json d;
    d["epsilon"] = c.design.epsilon;
    d["epsilon_min_fraction"] = c.design.epsilon_min_fraction;
    d["theta_default"] = c.design.theta_default;
    d["theta_min"] = c.design.theta_min;
    d["theta_max"] = c.design.theta_max;
    d["solver_tol"] = c.design.solver_tol;
    j["design"] = d;
    Json t;
    t["hidden"] = c.hidden;
    t["hard_boundary"] = c.hard_boundary;
    t["lambda"] = c.lambda;
    t["auto_lambda"] = c.auto_lambda;
    t["step"] = c.step;
    t["step_final"] = c.step_final;
    t["iterations"] = c.iterations;
    t["loss_target"] = c.loss_target;
    j["training"] = t;
    Json s;
    s["resolution"] = c.scan_resolution;
    s["model_resolution"] = c.model_scan_resolution;
    s["tol"] = c.scan_tol;
    s["boundary_band"] = c.scan_boundary_band;
    j["scan"] = s;
    Json sm;
    sm["rate"] = c.sim.filter_rate;
    sm["substeps"] = c.sim.substeps;
    sm["duration"] = c.sim.duration;
    sm["x0"] = vector_to_json(c.sim.x0);
    sm["on_infeasible"] =
        (c.sim.on_infeasible == InfeasiblePolicy::LeastViolating) ? "least-violating"
                                                                  : "hold-last";
    sm["policy"] = policy_to_json(c.policy);
    sm["single_cbf_slope"] = c.single_cbf_slope;
    j["simulation"] = sm;
    return j;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    Json j;
    try {
        is >> j;
    } catch (const Json::parse_error& e) {
        throw ConfigError("malformed config JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

ControlAffineSystem make_system(const ExperimentConfig& c) {
    if (c.system_preset == "quadrotor_z") {
        return quadrotor_z_system(c.quad, c.box);
    }
    return single_integrator(c.box.lo[0], c.box.hi[0]);
}

ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig c;
    c.seed = 20240 + 1;
    Vec lo(2), hi(2);
    lo << -2.0, -2.0;
    hi << 2.0, 2.0;

    if (name == "himmelblau") {
        c.system_preset = "quadrotor_z";
        c.quad = QuadrotorZParams{};
        c.box = Box(lo, hi);
        c.safe_set.kind = "himmelblau";
        // level above the interior critical value 181.62 keeps the set simply
        // connected; scale 3 fits it inside the box with margin. These values
        // are a choice, not canonical.
        c.safe_set.level = 200.0;
        c.safe_set.scale = Vec::Constant(2, 3.0);
        c.safe_set.offset = Vec::Zero(2);
        c.level_offset = 2.0;
        c.boundary_samples = 720;
        c.q_target = 10;
        c.design.epsilon_min_fraction = 0.9;
        c.sim.duration = 20.0;
        Vec x0(2);
        x0 << 0.0, 0.0;
        c.sim.x0 = x0;
        c.policy.kind = Policy::Kind::Constant;
        c.policy.constant_u = Vec::Constant(1, 0.4);
        c.single_cbf_slope = 1.0;
    } else if (name == "ellipsoid") {
        c.system_preset = "quadrotor_z";
        c.quad = QuadrotorZParams{};
        c.box = Box(lo, hi);
        c.safe_set.kind = "ellipsoid";
        c.safe_set.center = Vec::Zero(2);
        Mat shape(2, 2);
        shape << 1.0 / (1.5 * 1.5), 0.0, 0.0, 1.0;
        c.safe_set.shape = shape;
        c.level_offset = 0.02;
        c.boundary_samples = 640;
        c.q_target = 8;
        c.design.epsilon_min_fraction = 0.9;
        c.sim.duration = 10.0;
        Vec x0(2);
        x0 << -0.5, 0.0;
        c.sim.x0 = x0;
        c.policy.kind = Policy::Kind::Proportional;
        Vec goal(2);
        goal << 2.0, 0.0;
        c.policy.goal = goal;
        Mat gain(1, 2);
        gain << 4.0, 2.0;
        c.policy.gain = gain;
        c.policy.bias = Vec::Constant(1, -(c.quad.k1 - c.quad.gravity) / c.quad.k2);
        c.single_cbf_slope = 1.0;
    } else if (name == "integrator") {
        c.system_preset = "single_integrator";
        Vec lo1(1), hi1(1);
        lo1 << -1.5;
        hi1 << 1.5;
        c.box = Box(lo1, hi1);
        c.integrator_x_min = -1.0;
        c.integrator_x_max = 1.0;
        c.safe_set.kind = "interval";
        c.safe_set.x_min = -1.0;
        c.safe_set.x_max = 1.0;
        c.level_offset = 0.0;
        c.boundary_samples = 2;
        c.q_target = 2;
        c.n_phy = 512;
        c.n_bc = 8;
        c.design.epsilon_min_fraction = 0.9;
        c.iterations = 6000;
        c.scan_resolution = 4096;
        c.sim.duration = 10.0;
        c.sim.x0 = Vec::Zero(1);
        c.policy.kind = Policy::Kind::Constant;
        c.policy.constant_u = Vec::Constant(1, 0.3);
        c.single_cbf_slope = 1.0;
    } else {
        throw ConfigError("unknown preset: " + name);
    }
    return c;
}

Vec clamped_alpha(const Mat& gram, const Vec& alpha_target, double epsilon,
                  double majority_sign) {
    Vec out = alpha_target;
    for (int i = 0; i < out.size(); ++i) {
        const double thr = epsilon / gram(i, i);
        if (std::abs(out[i]) >= thr) continue;
        double s = (out[i] > 0.0) ? 1.0 : (out[i] < 0.0 ? -1.0 : 0.0);
        if (s == 0.0) s = (majority_sign < 0.0) ? -1.0 : 1.0;
        out[i] = s * thr;
    }
    return out;
}

Vec designed_field_at(const TargetGradientField& field, const ControlAffineSystem& sys,
                      double epsilon, double majority_sign, const Vec& x) {
    const Vec target = field.lookup(x);
    const Mat g = sys.input_matrix(x);
    const Mat b = orthonormal_complement(g);
    const Mat gram = g.transpose() * g;
    Vec alpha = gram.ldlt().solve(g.transpose() * target);
    alpha = clamped_alpha(gram, alpha, epsilon, majority_sign);
    Vec recon = g * alpha;
    if (b.cols() > 0) recon += b * (b.transpose() * target);
    return recon;
}

namespace {

struct SegmentPlan {
    BoundarySample segment;
    SegmentKind kind;
    TargetGradientField field;
};

std::vector<SegmentPlan> plan_segments(const ExperimentConfig& config,
                                       const ControlAffineSystem& sys,
                                       const SafeSetFunction& sampling_set,
                                       const SafeSetSpec& sampling_spec,
                                       BoundaryPartition& partition) {
    std::vector<SegmentPlan> plans;
    for (size_t s = 0; s < partition.segments.size(); ++s) {
        SegmentPlan plan;
        plan.segment = partition.segments[s];
        plan.kind = partition.provenance[s];
        const Vec centroid = plan.segment.points.colwise().mean().transpose();
        const Mat g = sys.input_matrix(centroid);

        if (plan.segment.dim() == 2 &&
            segment_needs_inner_approximation(plan.segment, g, config.flag_tol)) {
            double majority = 0.0;
            for (int i = 0; i < plan.segment.count(); ++i) {
                majority += (g.col(0).dot(plan.segment.normals.row(i).transpose()) >= 0.0)
                                ? 1.0
                                : -1.0;
            }
            plan.segment = hyperplane_inner_approximation(plan.segment, g, config.flag_tol,
                                                          majority >= 0.0 ? 1.0 : -1.0);
            plan.kind = SegmentKind::InnerApproximation;
            partition.segments[s] = plan.segment;
            partition.provenance[s] = SegmentKind::InnerApproximation;
        }

        if (plan.kind == SegmentKind::InnerApproximation) {
            plan.field = hyperplane_target_field(
                Vec(plan.segment.normals.row(0).transpose()),
                Vec(plan.segment.points.row(0).transpose()), config.box);
        } else {
            plan.field = build_target_field(plan.segment, sampling_set, config.box,
                                            sampling_spec);
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

// boundary collocation points on one segment
Mat sample_segment_points(const TargetGradientField& field, const BoundarySample& segment,
                          int count, std::uint64_t seed) {
    Rng rng(seed);
    const int n = segment.dim();
    Mat out(count, n);
    if (field.hyperplane) {
        if (n == 1) {
            for (int k = 0; k < count; ++k) out.row(k) = field.plane_point.transpose();
            return out;
        }
        Vec lateral(2);
        lateral << -field.axis[1], field.axis[0];
        double t_lo = std::numeric_limits<double>::infinity();
        double t_hi = -t_lo;
        for (int i = 0; i < segment.count(); ++i) {
            const double t = lateral.dot(segment.points.row(i).transpose());
            t_lo = std::min(t_lo, t);
            t_hi = std::max(t_hi, t);
        }
        const double base = field.axis.dot(field.plane_point);
        for (int k = 0; k < count; ++k) {
            const double t = rng.uniform(t_lo, t_hi);
            const Vec x = base * field.axis + t * lateral;
            out.row(k) = x.transpose();
        }
        return out;
    }
    for (int k = 0; k < count; ++k) {
        const double t = rng.uniform(field.knot_t.front(), field.knot_t.back());
        out.row(k) = field.curve_point(t).transpose();
    }
    return out;
}

std::vector<PriorTables> tabulate_priors(const std::vector<QArtifacts>& done,
                                         const ControlAffineSystem& sys, const Mat& points) {
    const int N = static_cast<int>(points.rows());
    std::vector<PriorTables> priors(done.size());
    for (size_t jq = 0; jq < done.size(); ++jq) {
        priors[jq].value.resize(N);
        priors[jq].lf.resize(N);
        priors[jq].upsilon.resize(N, sys.input_dim);
        priors[jq].theta = done[jq].design.theta;
    }
    std::atomic<int> misses{0};
    par::for_index(par::Exec::openmp, N, [&](std::int64_t k) {
        const Vec x = points.row(k).transpose();
        const Mat g = sys.input_matrix(x);
        const Mat gram = g.transpose() * g;
        const Vec f = sys.drift(x);
        for (size_t jq = 0; jq < done.size(); ++jq) {
            const auto& art = done[jq];
            try {
                const Vec fld =
                    designed_field_at(art.field, sys, art.design.epsilon,
                                      art.design.majority_sign, x);
                Vec alpha = gram.ldlt().solve(g.transpose() * fld);
                priors[jq].upsilon.row(k) = (gram * alpha).transpose();
                priors[jq].lf[k] = f.dot(fld);
                priors[jq].value[k] = art.model.forward(x);
            } catch (const BoundarySearchError&) {
                ++misses;
            }
        }
    });
    if (misses.load() > 0) {
        throw BoundarySearchError("tabulate_priors: " + std::to_string(misses.load()) +
                                  " prior field lookups left the box");
    }
    return priors;
}

}  // namespace

SynthesisOutput synthesize(const ExperimentConfig& config, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const ControlAffineSystem sys = make_system(config);
    SafeSetSpec sampling_spec = config.safe_set;
    sampling_spec.level_shift += config.level_offset;
    const SafeSetFunction sampling_set = make_safe_set(sampling_spec);

    const std::uint64_t seed_boundary = derive_seed(config.seed, 1);
    const std::uint64_t seed_bc = derive_seed(config.seed, 2);

    BoundarySample sample =
        sample_boundary(sampling_set, config.box, config.boundary_samples, seed_boundary);

    PartitionOptions popts;
    popts.margin = config.partition_margin;
    popts.hull_breaks = config.hull_breaks;
    if (sys.input_dim == 1 && sample.dim() == 2) {
        popts.break_scores.resize(sample.count());
        for (int i = 0; i < sample.count(); ++i) {
            const Vec x = sample.points.row(i).transpose();
            popts.break_scores[i] =
                sys.input_matrix(x).col(0).dot(sample.normals.row(i).transpose());
        }
    }
    BoundaryPartition partition = partition_boundary(sample, config.q_target, popts);

    std::vector<SegmentPlan> plans =
        plan_segments(config, sys, sampling_set, sampling_spec, partition);

    save_artifact("boundary_partition", to_json(partition), {config.seed, seed_boundary},
                  out_dir / "partition.json");

    // shared certification points: n_phy training points plus the denser audit
    const int n_total = config.n_phy * (1 + config.audit_factor);
    const Mat raw_points = halton_points(n_total, config.box);

    SynthesisOutput out;
    out.partition = partition;

    const int Q = static_cast<int>(plans.size());
    for (int q = 0; q < Q; ++q) {
        const SegmentPlan& plan = plans[q];
        DesignInputs inputs = evaluate_field_on(plan.field, raw_points, config.n_phy);
        std::vector<PriorTables> priors = tabulate_priors(out.per_q, sys, inputs.points);

        DesignedGradient design;
        try {
            design = design_gradient(q + 1, inputs, sys, priors, config.design);
        } catch (InfeasibleDesignError& e) {
            throw InfeasibleDesignError(q + 1, e.point,
                                        "synthesize: CBF " + std::to_string(q + 1) + ": " +
                                            e.what());
        }

        PinnArchitecture arch;
        arch.widths.push_back(sys.state_dim);
        for (int h : config.hidden) arch.widths.push_back(h);
        arch.widths.push_back(1);
        arch.hard_boundary = config.hard_boundary;

        TrainingConfig tcfg;
        tcfg.d_phy = design.collocation.topRows(design.n_phy);
        tcfg.phys_targets = design.field.topRows(design.n_phy);
        if (config.hard_boundary) {
            tcfg.factor_values = design.potential.head(design.n_phy);
            tcfg.factor_grads = inputs.targets.topRows(design.n_phy);
        } else {
            tcfg.d_bc = sample_segment_points(plan.field, plan.segment, config.n_bc,
                                              derive_seed(seed_bc, q + 1));
        }
        tcfg.lambda = config.lambda;
        tcfg.auto_lambda = config.auto_lambda;
        tcfg.step = config.step;
        tcfg.step_final = config.step_final;
        tcfg.iterations = config.iterations;
        tcfg.loss_target = config.loss_target;
        tcfg.seed = derive_seed(config.seed, 100 + q);

        PinnModel model = train(arch, tcfg,
                                config.hard_boundary
                                    ? std::optional<TargetGradientField>(plan.field)
                                    : std::nullopt);
        if (!config.hard_boundary) model.factor = plan.field;  // kept for h-value queries

        QArtifacts art;
        art.design = std::move(design);
        art.model = std::move(model);
        art.field = plan.field;
        art.provenance = plan.kind;

        char name[64];
        std::snprintf(name, sizeof(name), "design_q%02d.json", q + 1);
        art.design_hash = save_artifact("designed_gradient", to_json(art.design),
                                        {config.seed}, out_dir / name);
        std::snprintf(name, sizeof(name), "model_q%02d.json", q + 1);
        art.model_hash =
            save_artifact("pinn_model", to_json(art.model), {config.seed, tcfg.seed},
                          out_dir / name);
        out.per_q.push_back(std::move(art));
    }

    Json manifest;
    Json msys;
    msys["preset"] = config.system_preset;
    if (config.system_preset == "quadrotor_z") {
        msys["k1"] = config.quad.k1;
        msys["k2"] = config.quad.k2;
        msys["gravity"] = config.quad.gravity;
    } else {
        msys["x_min"] = config.integrator_x_min;
        msys["x_max"] = config.integrator_x_max;
    }
    msys["box"] = to_json(config.box);
    manifest["system"] = msys;
    manifest["desired_set"] = to_json(config.safe_set);
    manifest["sampling_level_offset"] = config.level_offset;
    manifest["q"] = Q;
    Json models = Json::array();
    for (int q = 0; q < Q; ++q) {
        char name[64];
        std::snprintf(name, sizeof(name), "model_q%02d.json", q + 1);
        Json e;
        e["file"] = name;
        std::snprintf(name, sizeof(name), "design_q%02d.json", q + 1);
        e["design_file"] = name;
        e["hash"] = out.per_q[q].model_hash;
        e["design_hash"] = out.per_q[q].design_hash;
        e["theta"] = out.per_q[q].design.theta;
        e["epsilon"] = out.per_q[q].design.epsilon;
        e["provenance"] = to_string(out.per_q[q].provenance);
        models.push_back(std::move(e));
    }
    manifest["models"] = std::move(models);
    manifest["seeds"] = Json{{"master", config.seed}, {"boundary", seed_boundary}};
    manifest["config"] = to_json(config);

    out.manifest_path = out_dir / "manifest.json";
    out.manifest_hash =
        save_artifact("filter_manifest", manifest, {config.seed}, out.manifest_path);
    return out;
}

namespace {

ControlAffineSystem system_from_manifest(const Json& manifest) {
    const Json& msys = manifest.at("system");
    const Box box = box_from_json(msys.at("box"));
    if (msys.at("preset").get<std::string>() == "quadrotor_z") {
        QuadrotorZParams p;
        p.k1 = msys.at("k1").get<double>();
        p.k2 = msys.at("k2").get<double>();
        p.gravity = msys.at("gravity").get<double>();
        return quadrotor_z_system(p, box);
    }
    return single_integrator(box.lo[0], box.hi[0]);
}

}  // namespace

MultiCbfFilter load_filter_from_manifest(const fs::path& manifest_path) {
    const Json manifest = load_artifact(manifest_path, "filter_manifest");
    MultiCbfFilter filter;
    filter.system = system_from_manifest(manifest);
    const fs::path dir = manifest_path.parent_path();
    int q = 1;
    for (const auto& e : manifest.at("models")) {
        const Json payload = load_artifact(dir / e.at("file").get<std::string>(), "pinn_model");
        PinnModel model = pinn_model_from_json(payload);
        filter.cbfs.push_back(
            CbfModel::from_pinn(model, e.at("theta").get<double>(), "h_" + std::to_string(q)));
        ++q;
    }
    return filter;
}

std::vector<double> manifest_epsilons(const fs::path& manifest_path) {
    const Json manifest = load_artifact(manifest_path, "filter_manifest");
    std::vector<double> eps;
    for (const auto& e : manifest.at("models")) eps.push_back(e.at("epsilon").get<double>());
    return eps;
}

AnalyzeOutput analyze(const ExperimentConfig& config,
                      const std::optional<fs::path>& manifest_path, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    AnalyzeOutput out;
    Json payload = Json::array();

    if (!manifest_path.has_value()) {
        const ControlAffineSystem sys = make_system(config);
        const SafeSetFunction desired = make_safe_set(config.safe_set);
        InactivityReport rep = scan_inactivity(sys, desired, config.scan_resolution,
                                               config.scan_tol, config.scan_boundary_band);
        Json entry = to_json(rep);
        entry["barrier"] = "desired_set";
        payload.push_back(std::move(entry));
        out.reports.push_back(std::move(rep));
    } else {
        const MultiCbfFilter filter = load_filter_from_manifest(*manifest_path);
        const std::vector<double> eps = manifest_epsilons(*manifest_path);
        for (size_t q = 0; q < filter.cbfs.size(); ++q) {
            SafeSetFunction barrier;
            barrier.name = filter.cbfs[q].label;
            barrier.value = filter.cbfs[q].value;
            barrier.gradient = filter.cbfs[q].gradient;
            InactivityReport rep =
                scan_inactivity(filter.system, barrier, config.model_scan_resolution,
                                eps[q] / 2.0, config.scan_boundary_band);
            Json entry = to_json(rep);
            entry["barrier"] = barrier.name;
            payload.push_back(std::move(entry));
            out.reports.push_back(std::move(rep));
        }
    }

    out.report_path = out_dir / "inactivity_report.json";
    save_artifact("inactivity_report", payload, {config.seed}, out.report_path);

    out.locus_csv_path = out_dir / "inactivity_locus.csv";
    std::ofstream csv(out.locus_csv_path);
    if (!out.reports.empty()) write_locus_csv(out.reports.front(), csv);
    return out;
}

SimulateOutput simulate(const ExperimentConfig& config,
                        const std::optional<fs::path>& manifest_path, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const ControlAffineSystem sys = make_system(config);
    const SafeSetFunction desired = make_safe_set(config.safe_set);

    SimulateOutput out;
    if (manifest_path.has_value()) {
        const MultiCbfFilter filter = load_filter_from_manifest(*manifest_path);
        out.trace = run_closed_loop(sys, config.policy, &filter, &desired, config.sim);
    } else {
        out.trace = run_closed_loop(sys, config.policy, nullptr, &desired, config.sim);
    }
    out.metrics = trace_metrics(out.trace);

    out.trace_csv = out_dir / "trace.csv";
    std::ofstream csv(out.trace_csv);
    write_trace_csv(out.trace, csv);

    Json mj;
    mj["min_h_desired"] = out.metrics.min_h_desired;
    mj["violation_steps"] = out.metrics.violation_steps;
    mj["chattering_index"] = out.metrics.chattering_index;
    mj["time_to_boundary"] = out.metrics.time_to_boundary;
    mj["escaped"] = out.metrics.escaped;
    out.metrics_json = out_dir / "metrics.json";
    std::ofstream ms(out.metrics_json);
    ms << mj.dump(1) << "\n";
    return out;
}

namespace {

Json metrics_to_json(const TraceMetrics& m) {
    Json j;
    j["min_h_desired"] = m.min_h_desired;
    j["violation_steps"] = m.violation_steps;
    j["chattering_index"] = m.chattering_index;
    j["time_to_boundary"] = m.time_to_boundary;
    j["escaped"] = m.escaped;
    return j;
}

void write_phase_dat(const fs::path& path, const SimulationTrace& a, const SimulationTrace& b) {
    std::ofstream os(path);
    os << "# block 0: single-CBF run, block 1: multi-CBF run; columns: t x0 [x1]\n";
    for (const SimulationTrace* tr : {&a, &b}) {
        for (const auto& row : tr->rows) {
            os << row.t;
            for (int i = 0; i < row.x.size(); ++i) os << " " << row.x[i];
            os << "\n";
        }
        os << "\n\n";
    }
}

void write_series_dat(const fs::path& path, const SimulationTrace& a, const SimulationTrace& b,
                      bool input) {
    std::ofstream os(path);
    os << (input ? "# t u_nom u_filt per block (single, multi)\n"
                 : "# t h_desired per block (single, multi)\n");
    for (const SimulationTrace* tr : {&a, &b}) {
        for (const auto& row : tr->rows) {
            if (input) {
                os << row.t << " " << row.u_nominal[0] << " " << row.u_filtered[0] << "\n";
            } else {
                os << row.t << " " << row.h_desired << "\n";
            }
        }
        os << "\n\n";
    }
}

}  // namespace

CompareOutput compare(const ExperimentConfig& config, const fs::path& manifest_path,
                      const fs::path& out_dir) {
    fs::create_directories(out_dir);
    const ControlAffineSystem sys = make_system(config);
    const SafeSetFunction desired = make_safe_set(config.safe_set);

    MultiCbfFilter single;
    single.system = sys;
    single.cbfs.push_back(
        CbfModel::from_safe_set(desired, config.single_cbf_slope, "desired_set"));

    const MultiCbfFilter multi = load_filter_from_manifest(manifest_path);

    SimulationTrace single_trace =
        run_closed_loop(sys, config.policy, &single, &desired, config.sim);
    SimulationTrace multi_trace =
        run_closed_loop(sys, config.policy, &multi, &desired, config.sim);

    CompareOutput out;
    out.single_metrics = trace_metrics(single_trace);
    out.multi_metrics = trace_metrics(multi_trace);
    out.chattering_ratio =
        (out.multi_metrics.chattering_index > 0.0)
            ? out.single_metrics.chattering_index / out.multi_metrics.chattering_index
            : std::numeric_limits<double>::infinity();

    {
        std::ofstream cs(out_dir / "single_trace.csv");
        write_trace_csv(single_trace, cs);
        std::ofstream cm(out_dir / "multi_trace.csv");
        write_trace_csv(multi_trace, cm);
    }

    // zero locus of the desired-set CBF, for the phase plot
    InactivityReport locus = scan_inactivity(sys, desired, 512, 1e-6, 1e-3);
    {
        std::ofstream os(out_dir / "locus.dat");
        os << "# zero locus of L_g h for the desired-set CBF\n";
        for (const auto& p : locus.locus) {
            for (int i = 0; i < p.x.size(); ++i) os << (i ? " " : "") << p.x[i];
            os << "\n";
        }
    }
    if (sys.state_dim == 2) {
        const std::uint64_t seed_plot = derive_seed(config.seed, 7);
        SafeSetSpec spec = config.safe_set;
        const SafeSetFunction plot_set = make_safe_set(spec);
        BoundarySample bd = sample_boundary(plot_set, config.box, 512, seed_plot);
        std::ofstream os(out_dir / "boundary.dat");
        os << "# desired safe set boundary polyline\n";
        for (int i = 0; i <= bd.count(); ++i) {
            const int k = i % bd.count();
            os << bd.points(k, 0) << " " << bd.points(k, 1) << "\n";
        }
    }
    write_phase_dat(out_dir / "phase.dat", single_trace, multi_trace);
    write_series_dat(out_dir / "input.dat", single_trace, multi_trace, true);
    write_series_dat(out_dir / "h.dat", single_trace, multi_trace, false);

    Json mj;
    mj["single"] = metrics_to_json(out.single_metrics);
    mj["multi"] = metrics_to_json(out.multi_metrics);
    mj["chattering_ratio_single_over_multi"] = out.chattering_ratio;
    mj["single_violates"] = out.single_metrics.min_h_desired < 0.0;
    mj["multi_stays_safe"] = out.multi_metrics.min_h_desired >= 0.0;
    out.metrics_json = out_dir / "compare_metrics.json";
    std::ofstream ms(out.metrics_json);
    ms << mj.dump(1) << "\n";

    export_plots(out_dir);
    return out;
}

void export_plots(const fs::path& run_dir) {
    std::ofstream gp(run_dir / "plots.gp");
    gp << "# gnuplot script for the comparison outputs\n"
          "set terminal pngcairo size 1200,900\n"
          "set output 'comparison.png'\n"
          "set multiplot layout 2,2\n"
          "set title 'phase trajectories'\n"
          "set xlabel 'x0'; set ylabel 'x1'\n"
          "plot 'phase.dat' index 0 using 2:3 with lines title 'single CBF', \\\n"
          "     'phase.dat' index 1 using 2:3 with lines title 'multi CBF', \\\n"
          "     'boundary.dat' using 1:2 with lines title 'safe set boundary', \\\n"
          "     'locus.dat' using 1:2 with dots title 'L_g h = 0'\n"
          "set title 'filtered input'\n"
          "set xlabel 't [s]'; set ylabel 'u'\n"
          "plot 'input.dat' index 0 using 1:3 with lines title 'single CBF', \\\n"
          "     'input.dat' index 1 using 1:3 with lines title 'multi CBF', \\\n"
          "     'input.dat' index 0 using 1:2 with lines dashtype 2 title 'nominal'\n"
          "set title 'desired-set value'\n"
          "set xlabel 't [s]'; set ylabel 'h'\n"
          "plot 'h.dat' index 0 using 1:2 with lines title 'single CBF', \\\n"
          "     'h.dat' index 1 using 1:2 with lines title 'multi CBF', 0 title ''\n"
          "unset multiplot\n";
}

}  // namespace cbf
