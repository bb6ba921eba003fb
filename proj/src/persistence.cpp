#include "cbf/persistence.hpp"

#include <fstream>
#include <sstream>

namespace cbf {

std::string canonical_dump(const Json& j) { return j.dump(); }

namespace {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string content_hash(const Json& payload) { return hex64(fnv1a64(canonical_dump(payload))); }

std::string save_artifact(const std::string& kind, const Json& payload,
                          const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& path) {
    Json env;
    env["schema_tag"] = kSchemaTag;
    env["kind"] = kind;
    env["payload"] = payload;
    env["hash"] = content_hash(payload);
    env["tool_version"] = kToolVersion;
    env["seeds"] = seeds;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_artifact: cannot open " + path.string());
    os << env.dump(1) << "\n";
    return env["hash"].get<std::string>();
}

namespace {

Json read_envelope(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw MalformedArtifactError("cannot open " + path.string());
    Json env;
    try {
        is >> env;
    } catch (const Json::parse_error& e) {
        throw MalformedArtifactError("malformed JSON in " + path.string() + ": " + e.what());
    }
    if (!env.contains("schema_tag") || !env.contains("kind") || !env.contains("payload") ||
        !env.contains("hash")) {
        throw MalformedArtifactError("missing envelope fields in " + path.string());
    }
    if (env["schema_tag"].get<std::string>() != kSchemaTag) {
        throw SchemaMismatchError("schema tag " + env["schema_tag"].get<std::string>() +
                                  " unsupported (expected " + kSchemaTag + ")");
    }
    if (content_hash(env["payload"]) != env["hash"].get<std::string>()) {
        throw HashMismatchError("payload hash mismatch in " + path.string());
    }
    return env;
}

}  // namespace

Json load_artifact(const std::filesystem::path& path, const std::string& expect_kind) {
    Json env = read_envelope(path);
    if (env["kind"].get<std::string>() != expect_kind) {
        throw SchemaMismatchError("artifact kind " + env["kind"].get<std::string>() +
                                  " where " + expect_kind + " was expected");
    }
    return env["payload"];
}

std::string artifact_hash(const std::filesystem::path& path) {
    return read_envelope(path)["hash"].get<std::string>();
}

Json matrix_to_json(const Mat& m) {
    Json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    Json data = Json::array();
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    j["data"] = std::move(data);
    return j;
}

Mat matrix_from_json(const Json& j) {
    Mat m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (static_cast<int>(data.size()) != m.rows() * m.cols()) {
        throw MalformedArtifactError("matrix data size mismatch");
    }
    int k = 0;
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) m(r, c) = data[k++].get<double>();
    }
    return m;
}

Json vector_to_json(const Vec& v) {
    Json j = Json::array();
    for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

Vec vector_from_json(const Json& j) {
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
    return v;
}

Json to_json(const Box& box) {
    Json j;
    j["lo"] = vector_to_json(box.lo);
    j["hi"] = vector_to_json(box.hi);
    return j;
}

Box box_from_json(const Json& j) {
    return Box(vector_from_json(j.at("lo")), vector_from_json(j.at("hi")));
}

Json to_json(const SafeSetSpec& spec) {
    Json j;
    j["kind"] = spec.kind;
    j["level_shift"] = spec.level_shift;
    if (spec.kind == "himmelblau") {
        j["level"] = spec.level;
        j["scale"] = vector_to_json(spec.scale);
        j["offset"] = vector_to_json(spec.offset);
    } else if (spec.kind == "ellipsoid") {
        j["center"] = vector_to_json(spec.center);
        j["shape"] = matrix_to_json(spec.shape);
    } else if (spec.kind == "halfspace") {
        j["normal"] = vector_to_json(spec.normal);
        j["plane_offset"] = spec.plane_offset;
    } else if (spec.kind == "interval") {
        j["x_min"] = spec.x_min;
        j["x_max"] = spec.x_max;
    } else {
        throw std::invalid_argument("to_json: unknown safe set kind " + spec.kind);
    }
    return j;
}

SafeSetSpec safe_set_spec_from_json(const Json& j) {
    SafeSetSpec spec;
    spec.kind = j.at("kind").get<std::string>();
    spec.level_shift = j.value("level_shift", 0.0);
    if (spec.kind == "himmelblau") {
        spec.level = j.at("level").get<double>();
        spec.scale = vector_from_json(j.at("scale"));
        spec.offset = vector_from_json(j.at("offset"));
    } else if (spec.kind == "ellipsoid") {
        spec.center = vector_from_json(j.at("center"));
        spec.shape = matrix_from_json(j.at("shape"));
    } else if (spec.kind == "halfspace") {
        spec.normal = vector_from_json(j.at("normal"));
        spec.plane_offset = j.at("plane_offset").get<double>();
    } else if (spec.kind == "interval") {
        spec.x_min = j.at("x_min").get<double>();
        spec.x_max = j.at("x_max").get<double>();
    } else {
        throw MalformedArtifactError("unknown safe set kind: " + spec.kind);
    }
    return spec;
}

Json to_json(const BoundarySample& sample) {
    Json j;
    j["points"] = matrix_to_json(sample.points);
    j["normals"] = matrix_to_json(sample.normals);
    return j;
}

BoundarySample boundary_sample_from_json(const Json& j) {
    BoundarySample s;
    s.points = matrix_from_json(j.at("points"));
    s.normals = matrix_from_json(j.at("normals"));
    return s;
}

Json to_json(const BoundaryPartition& partition) {
    Json j;
    j["margin"] = partition.margin;
    Json segs = Json::array();
    for (size_t i = 0; i < partition.segments.size(); ++i) {
        Json s = to_json(partition.segments[i]);
        s["provenance"] = to_string(partition.provenance[i]);
        segs.push_back(std::move(s));
    }
    j["segments"] = std::move(segs);
    return j;
}

BoundaryPartition boundary_partition_from_json(const Json& j) {
    BoundaryPartition p;
    p.margin = j.at("margin").get<double>();
    for (const auto& s : j.at("segments")) {
        p.segments.push_back(boundary_sample_from_json(s));
        p.provenance.push_back(segment_kind_from_string(s.at("provenance").get<std::string>()));
    }
    return p;
}

Json to_json(const TargetGradientField& field) {
    Json j;
    j["dim"] = field.dim;
    j["hyperplane"] = field.hyperplane;
    j["axis"] = vector_to_json(field.axis);
    j["box"] = to_json(field.box);
    if (field.hyperplane) {
        j["plane_point"] = vector_to_json(field.plane_point);
        return j;
    }
    if (!field.set_spec.has_value()) {
        throw std::invalid_argument(
            "to_json: curved target field without a safe-set spec is not serializable");
    }
    j["lateral"] = vector_to_json(field.lateral);
    j["knot_t"] = field.knot_t;
    j["knot_d"] = field.knot_d;
    j["slope_lo"] = field.slope_lo;
    j["slope_hi"] = field.slope_hi;
    j["safe_set"] = to_json(*field.set_spec);
    return j;
}

TargetGradientField target_field_from_json(const Json& j) {
    TargetGradientField f;
    f.dim = j.at("dim").get<int>();
    f.hyperplane = j.at("hyperplane").get<bool>();
    f.axis = vector_from_json(j.at("axis"));
    f.box = box_from_json(j.at("box"));
    if (f.hyperplane) {
        f.plane_point = vector_from_json(j.at("plane_point"));
        return f;
    }
    f.lateral = vector_from_json(j.at("lateral"));
    f.knot_t = j.at("knot_t").get<std::vector<double>>();
    f.knot_d = j.at("knot_d").get<std::vector<double>>();
    f.slope_lo = j.at("slope_lo").get<double>();
    f.slope_hi = j.at("slope_hi").get<double>();
    f.set_spec = safe_set_spec_from_json(j.at("safe_set"));
    f.set = make_safe_set(*f.set_spec);
    return f;
}

Json to_json(const DesignedGradient& design) {
    Json j;
    j["index"] = design.index;
    j["collocation"] = matrix_to_json(design.collocation);
    j["n_phy"] = design.n_phy;
    j["alpha"] = matrix_to_json(design.alpha);
    j["beta"] = matrix_to_json(design.beta);
    j["field"] = matrix_to_json(design.field);
    j["potential"] = vector_to_json(design.potential);
    j["witness"] = matrix_to_json(design.witness);
    j["slack"] = vector_to_json(design.slack);
    j["theta"] = design.theta;
    j["epsilon"] = design.epsilon;
    j["majority_sign"] = design.majority_sign;
    j["projected_points"] = design.projected_points;
    j["dropped_points"] = design.dropped_points;
    j["min_abs_upsilon"] = vector_to_json(design.min_abs_upsilon);
    return j;
}

DesignedGradient designed_gradient_from_json(const Json& j) {
    DesignedGradient d;
    d.index = j.at("index").get<int>();
    d.collocation = matrix_from_json(j.at("collocation"));
    d.n_phy = j.at("n_phy").get<int>();
    d.alpha = matrix_from_json(j.at("alpha"));
    d.beta = matrix_from_json(j.at("beta"));
    d.field = matrix_from_json(j.at("field"));
    d.potential = vector_from_json(j.at("potential"));
    d.witness = matrix_from_json(j.at("witness"));
    d.slack = vector_from_json(j.at("slack"));
    d.theta = j.at("theta").get<double>();
    d.epsilon = j.at("epsilon").get<double>();
    d.majority_sign = j.at("majority_sign").get<double>();
    d.projected_points = j.at("projected_points").get<int>();
    d.dropped_points = j.at("dropped_points").get<int>();
    d.min_abs_upsilon = vector_from_json(j.at("min_abs_upsilon"));
    return d;
}

Json to_json(const PinnModel& model) {
    Json j;
    j["widths"] = model.arch.widths;
    j["activation"] = "tanh";
    j["hard_boundary"] = model.arch.hard_boundary;
    Json ws = Json::array();
    Json bs = Json::array();
    for (size_t l = 0; l < model.weights.size(); ++l) {
        ws.push_back(matrix_to_json(model.weights[l]));
        bs.push_back(vector_to_json(model.biases[l]));
    }
    j["weights"] = std::move(ws);
    j["biases"] = std::move(bs);
    if (model.factor.has_value()) j["factor"] = to_json(*model.factor);
    j["seed"] = model.seed;
    j["final_e_phy"] = model.final_e_phy;
    j["final_e_bc"] = model.final_e_bc;
    j["iterations_run"] = model.iterations_run;
    return j;
}

PinnModel pinn_model_from_json(const Json& j) {
    PinnModel m;
    m.arch.widths = j.at("widths").get<std::vector<int>>();
    m.arch.hard_boundary = j.at("hard_boundary").get<bool>();
    m.arch.validate();
    for (const auto& w : j.at("weights")) m.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) m.biases.push_back(vector_from_json(b));
    if (j.contains("factor")) m.factor = target_field_from_json(j.at("factor"));
    if (m.arch.hard_boundary && !m.factor.has_value()) {
        throw MalformedArtifactError("hard-boundary model without a factor");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.final_e_phy = j.at("final_e_phy").get<double>();
    m.final_e_bc = j.at("final_e_bc").get<double>();
    m.iterations_run = j.at("iterations_run").get<int>();
    return m;
}

Json to_json(const InactivityReport& report) {
    Json j;
    j["tol"] = report.tol;
    j["boundary_band"] = report.boundary_band;
    j["grid_resolution"] = report.grid_resolution;
    auto dump_points = [](const std::vector<InactivityPoint>& pts) {
        Json arr = Json::array();
        for (const auto& p : pts) {
            Json e;
            e["x"] = vector_to_json(p.x);
            e["channel"] = p.channel;
            e["lg"] = p.lg_value;
            e["h"] = p.h_value;
            e["class"] = (p.cls == LocusClass::Boundary) ? "boundary" : "interior";
            arr.push_back(std::move(e));
        }
        return arr;
    };
    j["points"] = dump_points(report.points);
    j["locus"] = dump_points(report.locus);
    j["boundary_count"] = report.boundary_count();
    j["interior_count"] = report.interior_count();
    return j;
}

}  // namespace cbf
