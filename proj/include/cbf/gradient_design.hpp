#pragma once

#include <vector>

#include "cbf/common.hpp"
#include "cbf/dynamics.hpp"
#include "cbf/parallel.hpp"
#include "cbf/target_field.hpp"

namespace cbf {

// Orthonormal basis of the orthogonal complement of col(g); empty when g has
// full row rank. Rank decided by singular values against `tol`.
Mat orthonormal_complement(const Mat& g_matrix, double tol = 1e-10);

// alpha = (g^T g)^{-1} g^T target, beta = b^T target. Requires full column
// rank g (checked); rank-deficient inputs belong to the joint solver.
std::pair<Vec, Vec> decompose_target(const Vec& target, const Mat& g_matrix, const Mat& b_matrix);

// Per-channel closed form of the alpha matching problem:
// min |a - t|^2 s.t. |a_i| >= eps. sign(0) resolves to majority_sign.
Vec solve_alpha_step(const Vec& alpha_target, double epsilon, double majority_sign = 1.0);

struct GradientDesignConfig {
    // Lower bound on channel Lie derivatives |upsilon_i| = |(g^T g alpha)_i|.
    // 0 selects a per-segment value: epsilon_min_fraction * min(|upsilon_target|)
    // when that fraction is set, otherwise 0.05 * median(|upsilon_target|).
    double epsilon = 0.0;
    double epsilon_min_fraction = 0.0;
    double theta_default = 1.0;
    double theta_min = 1e-3;
    double theta_max = 10.0;
    double solver_tol = 1e-10;
    int max_iterations = 100;
    double feasibility_slack = 1e-9;
    par::Exec exec = par::Exec::openmp;
};

// Frozen earlier CBF, tabulated at the shared certification points.
struct PriorTables {
    Vec value;    // h_j(x_k), trained model values
    Vec lf;       // f(x_k) . designed_field_j(x_k)
    Mat upsilon;  // rows k: (g^T g alpha_j)(x_k)
    double theta = 0.0;
};

struct DesignedGradient {
    int index = 0;  // q, 1-based
    Mat collocation;  // certification points, first n_phy rows feed training
    int n_phy = 0;
    Mat alpha;      // per point
    Mat beta;       // per point (0 columns when g spans the state space)
    Mat field;      // g alpha + b beta per point
    Vec potential;  // design-time h_q values (axis line integral)
    Mat witness;    // per-point feasible input
    Vec slack;      // min constraint slack of the witness over j <= q
    double theta = 0.0;
    double epsilon = 0.0;
    double majority_sign = 1.0;
    int projected_points = 0;  // beta projections forced by feasibility
    int dropped_points = 0;    // target lookups that left the box
    Vec min_abs_upsilon;       // per channel, over collocation
};

struct BetaThetaResult {
    Mat beta;
    double theta = 0.0;
    Mat witness;
    Vec slack;
    int projected_points = 0;
};

// Second step of the two-step design: keep alpha fixed, pick one theta in
// (theta_min, theta_max] and per-point beta so that a witness input satisfies
// every constraint j <= q at every point. Throws InfeasibleDesignError with
// the offending point when no (beta, theta, u) exists.
BetaThetaResult solve_beta_theta_step(const Mat& points, const Mat& beta_target,
                                      const Mat& alpha_fixed, const Vec& potential,
                                      const ControlAffineSystem& sys,
                                      const std::vector<PriorTables>& priors,
                                      const GradientDesignConfig& cfg);

// Target field evaluated on the certification points; rows whose axis lookup
// leaves the box are dropped and counted.
struct DesignInputs {
    Mat points;
    int n_phy = 0;
    Mat targets;    // field lookup per point
    Vec potential;  // field value per point
    int dropped = 0;
};

DesignInputs evaluate_field_on(const TargetGradientField& field, const Mat& raw_points,
                               int n_phy_raw);

// Full design for one CBF: target decomposition, alpha clamping, beta/theta
// feasibility, witnesses. Dispatches to the two-step path when g^T g is
// invertible (and channel-decoupled) and to the alternating joint solver
// otherwise.
DesignedGradient design_gradient(int q, const DesignInputs& inputs,
                                 const ControlAffineSystem& sys,
                                 const std::vector<PriorTables>& priors,
                                 const GradientDesignConfig& cfg);

// Alternating solver for the joint problem (used when g^T g is singular, and
// exposed for the consistency tests against the two-step path).
DesignedGradient solve_joint_gradient_problem(int q, const DesignInputs& inputs,
                                              const ControlAffineSystem& sys,
                                              const std::vector<PriorTables>& priors,
                                              const GradientDesignConfig& cfg);

// Re-evaluate the design-time constraint slack of input u at point row k
// against priors and the q-th tables; used by witness audits.
double witness_slack(const Vec& u, int k, const Vec& lf_q, const Mat& upsilon_q,
                     const Vec& potential_q, double theta_q,
                     const std::vector<PriorTables>& priors);

}  // namespace cbf
