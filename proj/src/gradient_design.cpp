#include "cbf/gradient_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace cbf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Mat orthonormal_complement(const Mat& g_matrix, double tol) {
    const int n = static_cast<int>(g_matrix.rows());
    Eigen::JacobiSVD<Mat> svd(g_matrix, Eigen::ComputeFullU);
    int rank = 0;
    const double scale = (svd.singularValues().size() > 0) ? svd.singularValues()[0] : 0.0;
    for (int i = 0; i < svd.singularValues().size(); ++i) {
        if (svd.singularValues()[i] > tol * std::max(1.0, scale)) ++rank;
    }
    // trailing left singular vectors span the complement
    return svd.matrixU().rightCols(n - rank);
}

std::pair<Vec, Vec> decompose_target(const Vec& target, const Mat& g_matrix,
                                     const Mat& b_matrix) {
    const Mat gram = g_matrix.transpose() * g_matrix;
    Eigen::FullPivLU<Mat> lu(gram);
    if (!lu.isInvertible()) {
        throw std::invalid_argument(
            "decompose_target: g^T g is singular; use the joint solver");
    }
    Vec alpha = lu.solve(g_matrix.transpose() * target);
    Vec beta = b_matrix.transpose() * target;
    return {alpha, beta};
}

Vec solve_alpha_step(const Vec& alpha_target, double epsilon, double majority_sign) {
    if (epsilon <= 0.0) {
        throw std::invalid_argument("solve_alpha_step: epsilon must be positive");
    }
    Vec out = alpha_target;
    for (int i = 0; i < out.size(); ++i) {
        if (std::abs(out[i]) >= epsilon) continue;
        double s = (out[i] > 0.0) ? 1.0 : (out[i] < 0.0 ? -1.0 : 0.0);
        if (s == 0.0) s = (majority_sign < 0.0) ? -1.0 : 1.0;
        out[i] = s * epsilon;
    }
    return out;
}

namespace {

// interval of feasible inputs from the prior constraints at point k (m == 1)
struct PriorInterval {
    double lo = -kInf;
    double hi = kInf;
    bool feasible = true;
};

PriorInterval prior_interval(int k, const std::vector<PriorTables>& priors, double slack_tol) {
    PriorInterval iv;
    for (const auto& pr : priors) {
        const double c = pr.upsilon(k, 0);
        const double rhs = -pr.lf[k] - pr.theta * pr.value[k];
        if (std::abs(c) <= 1e-14) {
            if (rhs > slack_tol) iv.feasible = false;
            continue;
        }
        if (c > 0.0) {
            iv.lo = std::max(iv.lo, rhs / c);
        } else {
            iv.hi = std::min(iv.hi, rhs / c);
        }
    }
    if (iv.lo > iv.hi) iv.feasible = false;
    return iv;
}

double clamp_into(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

double witness_slack(const Vec& u, int k, const Vec& lf_q, const Mat& upsilon_q,
                     const Vec& potential_q, double theta_q,
                     const std::vector<PriorTables>& priors) {
    double s = lf_q[k] + upsilon_q.row(k).dot(u) + theta_q * potential_q[k];
    for (const auto& pr : priors) {
        const double sj = pr.lf[k] + pr.upsilon.row(k).dot(u) + pr.theta * pr.value[k];
        s = std::min(s, sj);
    }
    return s;
}

BetaThetaResult solve_beta_theta_step(const Mat& points, const Mat& beta_target,
                                      const Mat& alpha_fixed, const Vec& potential,
                                      const ControlAffineSystem& sys,
                                      const std::vector<PriorTables>& priors,
                                      const GradientDesignConfig& cfg) {
    const int N = static_cast<int>(points.rows());
    const int m = sys.input_dim;
    if (m != 1) {
        throw std::invalid_argument(
            "solve_beta_theta_step: only single-input systems are supported");
    }

    BetaThetaResult res;
    res.beta = beta_target;
    res.witness = Mat::Zero(N, m);
    res.slack = Vec::Zero(N);

    // per-point coefficients of the q-th constraint:
    //   c u >= A + w.beta - theta * pot   with A = -f.(g alpha), w = -(f^T b)
    Vec c_coef(N), a_coef(N);
    Mat w_coef;  // N x (n - p)
    std::vector<PriorInterval> ivs(N);
    int beta_dim = -1;

    for (int k = 0; k < N; ++k) {
        const Vec x = points.row(k).transpose();
        const Mat g = sys.input_matrix(x);
        const Mat b = orthonormal_complement(g);
        if (beta_dim < 0) {
            beta_dim = static_cast<int>(b.cols());
            w_coef.resize(N, beta_dim);
        }
        const Vec f = sys.drift(x);
        const double ups = (g.transpose() * g * alpha_fixed.row(k).transpose())(0);
        c_coef[k] = ups;
        a_coef[k] = -f.dot(g * alpha_fixed.row(k).transpose());
        if (beta_dim > 0) w_coef.row(k) = (-(b.transpose() * f)).transpose();
        ivs[k] = prior_interval(k, priors, cfg.feasibility_slack);
        if (!ivs[k].feasible) {
            throw InfeasibleDesignError(0, x,
                                        "solve_beta_theta_step: prior constraints conflict");
        }
    }

    // theta window: the q-th constraint is satisfiable inside the prior
    // interval iff rhs(theta) <= sup_u in interval of c*u
    double theta_lb = cfg.theta_min;
    double theta_ub = cfg.theta_max;
    std::vector<double> margin_cap(N);  // M_k = best achievable c*u
    for (int k = 0; k < N; ++k) {
        const double c = c_coef[k];
        double M;
        if (c > 0.0) {
            M = (ivs[k].hi == kInf) ? kInf : c * ivs[k].hi;
        } else {
            M = (ivs[k].lo == -kInf) ? kInf : c * ivs[k].lo;
        }
        margin_cap[k] = M;
        if (M == kInf) continue;
        const double rhs0 = a_coef[k] + ((beta_dim > 0)
                                             ? w_coef.row(k).dot(beta_target.row(k))
                                             : 0.0);
        const double pot = potential[k];
        // need rhs0 - theta*pot <= M
        if (pot > 0.0) {
            theta_lb = std::max(theta_lb, (rhs0 - M) / pot);
        } else if (pot < 0.0) {
            theta_ub = std::min(theta_ub, (rhs0 - M) / pot);
        }
        // pot == 0: theta cannot help; handled in the projection pass
    }

    if (theta_lb <= theta_ub) {
        res.theta = clamp_into(cfg.theta_default, theta_lb, theta_ub);
    } else {
        res.theta = clamp_into(0.5 * (theta_lb + theta_ub), cfg.theta_min, cfg.theta_max);
    }

    // per-point: project beta minimally where the q-th constraint still
    // cannot be met, then extract a witness
    for (int k = 0; k < N; ++k) {
        const double c = c_coef[k];
        const double M = margin_cap[k];
        double rhs = a_coef[k] - res.theta * potential[k];
        if (beta_dim > 0) rhs += w_coef.row(k).dot(res.beta.row(k));

        if (M != kInf && rhs > M + cfg.feasibility_slack) {
            // shift beta into the half-space w.beta <= M - a + theta*pot
            if (beta_dim == 0 || w_coef.row(k).norm() <= 1e-14) {
                throw InfeasibleDesignError(
                    0, Vec(points.row(k).transpose()),
                    "solve_beta_theta_step: no (beta, theta, u) satisfies the constraints");
            }
            const double bound = M - a_coef[k] + res.theta * potential[k];
            const double excess = w_coef.row(k).dot(res.beta.row(k)) - bound;
            const Vec w = w_coef.row(k).transpose();
            res.beta.row(k) -= (excess / w.squaredNorm()) * w.transpose();
            ++res.projected_points;
            rhs = a_coef[k] - res.theta * potential[k] + w_coef.row(k).dot(res.beta.row(k));
        }

        // witness: least-magnitude input in the intersected interval
        double lo = ivs[k].lo, hi = ivs[k].hi;
        if (c > 0.0) {
            lo = std::max(lo, rhs / c);
        } else {
            hi = std::min(hi, rhs / c);
        }
        if (lo > hi) {
            if (lo - hi <= 1e-9 * std::max(1.0, std::abs(lo))) {
                lo = hi = 0.5 * (lo + hi);
            } else {
                throw InfeasibleDesignError(
                    0, Vec(points.row(k).transpose()),
                    "solve_beta_theta_step: empty certified input interval");
            }
        }
        const double u = clamp_into(0.0, lo, hi);
        res.witness(k, 0) = u;
    }
    return res;
}

DesignInputs evaluate_field_on(const TargetGradientField& field, const Mat& raw_points,
                               int n_phy_raw) {
    const int N = static_cast<int>(raw_points.rows());
    const int n = static_cast<int>(raw_points.cols());
    DesignInputs in;
    Mat pts(N, n), targets(N, n);
    Vec pot(N);
    int kept = 0;
    int kept_phy = 0;
    for (int k = 0; k < N; ++k) {
        const Vec x = raw_points.row(k).transpose();
        try {
            const Vec t = field.lookup(x);
            const double v = field.value(x);
            pts.row(kept) = x.transpose();
            targets.row(kept) = t.transpose();
            pot[kept] = v;
            ++kept;
            if (k < n_phy_raw) ++kept_phy;
        } catch (const BoundarySearchError&) {
            ++in.dropped;
        }
    }
    in.points = pts.topRows(kept);
    in.targets = targets.topRows(kept);
    in.potential = pot.head(kept);
    in.n_phy = kept_phy;
    return in;
}

namespace {

struct PerPointBasis {
    Mat g;
    Mat b;
    Mat gram;
};

double auto_epsilon(const Mat& upsilon_targets, const GradientDesignConfig& cfg) {
    if (cfg.epsilon > 0.0) return cfg.epsilon;
    std::vector<double> mags;
    mags.reserve(upsilon_targets.size());
    for (int i = 0; i < upsilon_targets.rows(); ++i) {
        for (int j = 0; j < upsilon_targets.cols(); ++j) {
            mags.push_back(std::abs(upsilon_targets(i, j)));
        }
    }
    std::sort(mags.begin(), mags.end());
    if (cfg.epsilon_min_fraction > 0.0) {
        return cfg.epsilon_min_fraction * mags.front();
    }
    return 0.05 * mags[mags.size() / 2];
}

double majority_sign_of(const Mat& upsilon_targets) {
    int pos = 0, neg = 0;
    for (int i = 0; i < upsilon_targets.rows(); ++i) {
        for (int j = 0; j < upsilon_targets.cols(); ++j) {
            if (upsilon_targets(i, j) > 0.0) ++pos;
            if (upsilon_targets(i, j) < 0.0) ++neg;
        }
    }
    return (neg > pos) ? -1.0 : 1.0;
}

bool gram_is_decoupled(const Mat& gram, double tol) {
    for (int i = 0; i < gram.rows(); ++i) {
        for (int j = 0; j < gram.cols(); ++j) {
            if (i != j && std::abs(gram(i, j)) > tol * std::abs(gram(i, i))) return false;
        }
        if (gram(i, i) <= tol) return false;
    }
    return true;
}

}  // namespace

DesignedGradient design_gradient(int q, const DesignInputs& inputs,
                                 const ControlAffineSystem& sys,
                                 const std::vector<PriorTables>& priors,
                                 const GradientDesignConfig& cfg) {
    const int N = static_cast<int>(inputs.points.rows());
    if (N == 0) {
        throw std::invalid_argument("design_gradient: no certification points");
    }
    const Mat g0 = sys.input_matrix(Vec(inputs.points.row(0).transpose()));
    const Mat gram0 = g0.transpose() * g0;
    if (!gram_is_decoupled(gram0, 1e-10)) {
        return solve_joint_gradient_problem(q, inputs, sys, priors, cfg);
    }

    const int m = sys.input_dim;
    const int n = sys.state_dim;

    // per-point decomposition of the target field
    Mat alpha_t(N, m);
    Mat upsilon_t(N, m);
    int beta_dim = -1;
    Mat beta_t;
    std::vector<PerPointBasis> basis(N);
    for (int k = 0; k < N; ++k) {
        const Vec x = inputs.points.row(k).transpose();
        basis[k].g = sys.input_matrix(x);
        basis[k].b = orthonormal_complement(basis[k].g);
        basis[k].gram = basis[k].g.transpose() * basis[k].g;
        if (beta_dim < 0) {
            beta_dim = static_cast<int>(basis[k].b.cols());
            beta_t.resize(N, beta_dim);
        }
        auto [a, b] = decompose_target(Vec(inputs.targets.row(k).transpose()), basis[k].g,
                                       basis[k].b);
        alpha_t.row(k) = a.transpose();
        if (beta_dim > 0) beta_t.row(k) = b.transpose();
        upsilon_t.row(k) = (basis[k].gram * a).transpose();
    }

    const double eps = auto_epsilon(upsilon_t, cfg);
    if (eps <= 0.0) {
        throw InfeasibleDesignError(q, Vec(inputs.points.row(0).transpose()),
                                    "design_gradient: target Lie derivatives vanish everywhere");
    }
    const double majority = majority_sign_of(upsilon_t);

    // alpha step: clamp in upsilon space through the decoupled gram
    Mat alpha(N, m);
    for (int k = 0; k < N; ++k) {
        Vec eps_alpha(m);
        for (int i = 0; i < m; ++i) eps_alpha[i] = eps / basis[k].gram(i, i);
        Vec a = alpha_t.row(k).transpose();
        for (int i = 0; i < m; ++i) {
            const Vec one = solve_alpha_step(Vec::Constant(1, a[i]), eps_alpha[i], majority);
            a[i] = one[0];
        }
        alpha.row(k) = a.transpose();
    }

    auto bt = solve_beta_theta_step(inputs.points, beta_t, alpha, inputs.potential, sys,
                                    priors, cfg);

    DesignedGradient out;
    out.index = q;
    out.collocation = inputs.points;
    out.n_phy = inputs.n_phy;
    out.alpha = alpha;
    out.beta = bt.beta;
    out.field.resize(N, n);
    out.potential = inputs.potential;
    out.witness = bt.witness;
    out.theta = bt.theta;
    out.epsilon = eps;
    out.majority_sign = majority;
    out.projected_points = bt.projected_points;
    out.dropped_points = inputs.dropped;

    Mat upsilon(N, m);
    Vec lf(N);
    for (int k = 0; k < N; ++k) {
        Vec recon = basis[k].g * alpha.row(k).transpose();
        if (beta_dim > 0) recon += basis[k].b * bt.beta.row(k).transpose();
        out.field.row(k) = recon.transpose();
        upsilon.row(k) = (basis[k].gram * alpha.row(k).transpose()).transpose();
        lf[k] = sys.drift(Vec(inputs.points.row(k).transpose())).dot(recon);
    }

    // re-verify, never trust the solver
    out.min_abs_upsilon = Vec::Constant(m, kInf);
    out.slack.resize(N);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < m; ++i) {
            out.min_abs_upsilon[i] = std::min(out.min_abs_upsilon[i], std::abs(upsilon(k, i)));
        }
        out.slack[k] = witness_slack(Vec(bt.witness.row(k).transpose()), k, lf, upsilon,
                                     inputs.potential, bt.theta, priors);
        if (out.slack[k] < -cfg.feasibility_slack) {
            throw InfeasibleDesignError(q, Vec(inputs.points.row(k).transpose()),
                                        "design_gradient: witness fails re-verification");
        }
    }
    for (int i = 0; i < m; ++i) {
        if (out.min_abs_upsilon[i] < eps * (1.0 - 1e-12)) {
            throw InfeasibleDesignError(q, Vec(inputs.points.row(0).transpose()),
                                        "design_gradient: channel Lie derivative below epsilon");
        }
    }
    return out;
}

DesignedGradient solve_joint_gradient_problem(int q, const DesignInputs& inputs,
                                              const ControlAffineSystem& sys,
                                              const std::vector<PriorTables>& priors,
                                              const GradientDesignConfig& cfg) {
    const int N = static_cast<int>(inputs.points.rows());
    const int m = sys.input_dim;
    const int n = sys.state_dim;
    if (m != 1) {
        throw std::invalid_argument(
            "solve_joint_gradient_problem: only single-input systems are supported");
    }

    // per-point bases; rank may be below m
    std::vector<PerPointBasis> basis(N);
    int beta_dim = -1;
    Mat upsilon_t(N, m);
    Mat alpha(N, m);
    Mat beta;
    for (int k = 0; k < N; ++k) {
        const Vec x = inputs.points.row(k).transpose();
        basis[k].g = sys.input_matrix(x);
        basis[k].b = orthonormal_complement(basis[k].g);
        basis[k].gram = basis[k].g.transpose() * basis[k].g;
        if (beta_dim < 0) {
            beta_dim = static_cast<int>(basis[k].b.cols());
            beta.resize(N, beta_dim);
        }
        // channels with identically zero gram rows can never meet |ups| >= eps
        if (basis[k].gram(0, 0) <= 1e-14) {
            throw InfeasibleDesignError(q, x,
                                        "joint solver: input channel has zero Lie derivative "
                                        "for every gradient");
        }
        // min-norm least squares start
        alpha(k, 0) = (basis[k].g.transpose() * inputs.targets.row(k).transpose())(0) /
                      basis[k].gram(0, 0);
        if (beta_dim > 0) {
            beta.row(k) =
                (basis[k].b.transpose() * inputs.targets.row(k).transpose()).transpose();
        }
        upsilon_t.row(k) = (basis[k].gram * alpha.row(k).transpose()).transpose();
    }

    const double eps = auto_epsilon(upsilon_t, cfg);
    const double majority = majority_sign_of(upsilon_t);

    double prev_obj = kInf;
    BetaThetaResult bt;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        // alpha step: clamp upsilon, map back through the gram
        for (int k = 0; k < N; ++k) {
            const double gram = basis[k].gram(0, 0);
            const Vec ups = solve_alpha_step(Vec(basis[k].gram * alpha.row(k).transpose()),
                                             eps, majority);
            alpha(k, 0) = ups[0] / gram;
        }
        bt = solve_beta_theta_step(inputs.points, beta, alpha, inputs.potential, sys, priors,
                                   cfg);
        beta = bt.beta;

        double obj = 0.0;
        for (int k = 0; k < N; ++k) {
            Vec recon = basis[k].g * alpha.row(k).transpose();
            if (beta_dim > 0) recon += basis[k].b * beta.row(k).transpose();
            obj += (recon - inputs.targets.row(k).transpose()).squaredNorm();
        }
        if (prev_obj - obj < cfg.solver_tol) break;
        prev_obj = obj;
    }

    DesignedGradient out;
    out.index = q;
    out.collocation = inputs.points;
    out.n_phy = inputs.n_phy;
    out.alpha = alpha;
    out.beta = beta;
    out.field.resize(N, n);
    out.potential = inputs.potential;
    out.witness = bt.witness;
    out.theta = bt.theta;
    out.epsilon = eps;
    out.majority_sign = majority;
    out.projected_points = bt.projected_points;
    out.dropped_points = inputs.dropped;

    Mat upsilon(N, m);
    Vec lf(N);
    for (int k = 0; k < N; ++k) {
        Vec recon = basis[k].g * alpha.row(k).transpose();
        if (beta_dim > 0) recon += basis[k].b * beta.row(k).transpose();
        out.field.row(k) = recon.transpose();
        upsilon.row(k) = (basis[k].gram * alpha.row(k).transpose()).transpose();
        lf[k] = sys.drift(Vec(inputs.points.row(k).transpose())).dot(recon);
    }
    out.min_abs_upsilon = Vec::Constant(m, kInf);
    out.slack.resize(N);
    for (int k = 0; k < N; ++k) {
        for (int i = 0; i < m; ++i) {
            out.min_abs_upsilon[i] = std::min(out.min_abs_upsilon[i], std::abs(upsilon(k, i)));
        }
        out.slack[k] = witness_slack(Vec(bt.witness.row(k).transpose()), k, lf, upsilon,
                                     inputs.potential, bt.theta, priors);
    }
    for (int i = 0; i < m; ++i) {
        if (out.min_abs_upsilon[i] < eps * (1.0 - 1e-12)) {
            throw NonConvergenceError(
                "joint solver: epsilon constraint unmet after the iteration budget");
        }
    }
    for (int k = 0; k < N; ++k) {
        if (out.slack[k] < -cfg.feasibility_slack) {
            throw NonConvergenceError(
                "joint solver: feasibility constraint unmet after the iteration budget");
        }
    }
    return out;
}

}  // namespace cbf
