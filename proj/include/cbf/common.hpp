#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cbf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Axis-aligned box of admissible states.
struct Box {
    Vec lo;
    Vec hi;

    Box() = default;
    Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
        if (lo.size() != hi.size() || (hi - lo).minCoeff() <= 0.0) {
            throw std::invalid_argument("Box: lower bounds must be strictly below upper bounds");
        }
    }

    int dim() const { return static_cast<int>(lo.size()); }

    bool contains(const Vec& x, double slack = 0.0) const {
        if (x.size() != lo.size()) return false;
        for (int i = 0; i < x.size(); ++i) {
            if (x[i] < lo[i] - slack || x[i] > hi[i] + slack) return false;
        }
        return true;
    }

    Vec clamp(const Vec& x) const { return x.cwiseMax(lo).cwiseMin(hi); }

    Vec center() const { return 0.5 * (lo + hi); }

    double diameter() const { return (hi - lo).norm(); }
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BoundarySearchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InfeasibleDesignError : std::runtime_error {
    int cbf_index;
    Vec point;
    InfeasibleDesignError(int q, Vec x, const std::string& what)
        : std::runtime_error(what), cbf_index(q), point(std::move(x)) {}
};

struct NonConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainingDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HashMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Small deterministic RNG. Distribution mapping is done by hand so that
// streams do not depend on the standard library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // independent child stream
    Rng fork(std::uint64_t tag) {
        std::uint64_t s = next_u64() ^ (tag * 0x9e3779b97f4a7c15ULL);
        return Rng(s);
    }

  private:
    std::uint64_t state_;
};

// Derive a per-stage seed from a master seed without consuming the master stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stage) {
    std::uint64_t s = master ^ (stage * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    return splitmix64(s);
}

// Van der Corput radical inverse.
inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

// Halton low-discrepancy points over a box, rows are points. `skip` offsets
// the sequence so that disjoint windows give disjoint point sets.
Mat halton_points(int count, const Box& box, std::uint64_t skip = 0);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace cbf
