#include "cbf/safety_filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace cbf {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSlackTol = 1e-9;
constexpr double kZeroRow = 1e-12;
}  // namespace

CbfModel CbfModel::from_safe_set(const SafeSetFunction& set, double slope, std::string label) {
    if (slope <= 0.0) throw std::invalid_argument("CbfModel: class-K slope must be positive");
    CbfModel m;
    m.label = label.empty() ? set.name : std::move(label);
    m.value = set.value;
    m.gradient = set.gradient;
    m.kappa.slope = slope;
    return m;
}

CbfModel CbfModel::from_pinn(const PinnModel& model, double slope, std::string label) {
    if (slope <= 0.0) throw std::invalid_argument("CbfModel: class-K slope must be positive");
    CbfModel m;
    m.label = std::move(label);
    // the wrapped model is copied into the closures; trained models are
    // immutable, so sharing the copy across threads is safe
    auto shared = std::make_shared<PinnModel>(model);
    m.value = [shared](const Vec& x) { return shared->forward(x); };
    m.gradient = [shared](const Vec& x) { return shared->input_gradient(x); };
    m.kappa.slope = slope;
    return m;
}

ConstraintRow constraint_row(const CbfModel& cbf, const ControlAffineSystem& sys, const Vec& x) {
    const Vec grad = cbf.gradient(x);
    const double h = cbf.value(x);
    ConstraintRow row;
    row.a = sys.input_matrix(x).transpose() * grad;
    row.b = -grad.dot(sys.drift(x)) - cbf.kappa(h);
    return row;
}

namespace {

Vec slacks_at(const std::vector<ConstraintRow>& rows, const Vec& u) {
    Vec s(static_cast<int>(rows.size()));
    for (size_t q = 0; q < rows.size(); ++q) {
        s[static_cast<int>(q)] = rows[q].a.dot(u) - rows[q].b;
    }
    return s;
}

}  // namespace

FilterResult MultiCbfFilter::filter(const Vec& x, const Vec& u_nominal) const {
    const int m = system.input_dim;
    std::vector<ConstraintRow> rows;
    rows.reserve(cbfs.size());
    for (const auto& c : cbfs) rows.push_back(constraint_row(c, system, x));

    FilterResult res;
    res.slacks = slacks_at(rows, u_nominal);

    // feasible nominal inputs pass through bitwise unchanged
    if (res.slacks.size() == 0 || res.slacks.minCoeff() >= 0.0) {
        res.u = u_nominal;
        res.status = FilterStatus::PassThrough;
        return res;
    }

    // vacuous or contradictory near-zero rows
    for (const auto& r : rows) {
        if (r.a.norm() <= kZeroRow && r.b > kSlackTol) {
            res.u = u_nominal;
            res.status = FilterStatus::Infeasible;
            return res;
        }
    }

    if (m == 1) {
        double lo = -kInf, hi = kInf;
        for (const auto& r : rows) {
            const double a = r.a[0];
            if (std::abs(a) <= kZeroRow) continue;
            if (a > 0.0) {
                lo = std::max(lo, r.b / a);
            } else {
                hi = std::min(hi, r.b / a);
            }
        }
        if (lo > hi) {
            res.u = u_nominal;
            res.status = FilterStatus::Infeasible;
            return res;
        }
        Vec u(1);
        u[0] = std::min(std::max(u_nominal[0], lo), hi);
        res.u = u;
    } else {
        // Hildreth dual coordinate ascent on normalized rows
        std::vector<ConstraintRow> nrows;
        for (const auto& r : rows) {
            const double na = r.a.norm();
            if (na <= kZeroRow) continue;  // vacuous satisfied rows were screened above
            nrows.push_back({r.a / na, r.b / na});
        }
        const int Q = static_cast<int>(nrows.size());
        Vec lambda = Vec::Zero(Q);
        Vec u = u_nominal;
        bool diverged = false;
        for (int sweep = 0; sweep < 10000; ++sweep) {
            double change = 0.0;
            for (int q = 0; q < Q; ++q) {
                const double viol = nrows[q].b - nrows[q].a.dot(u);
                const double step = std::max(-lambda[q], viol);  // ||a||=1
                if (step != 0.0) {
                    lambda[q] += step;
                    u += step * nrows[q].a;
                    change = std::max(change, std::abs(step));
                }
            }
            if (change < 1e-12) break;
            if (lambda.norm() > 1e12) {
                diverged = true;
                break;
            }
        }
        res.u = u;
        const Vec final_slacks = slacks_at(rows, u);
        if (diverged || final_slacks.minCoeff() < -1e-7 * std::max(1.0, u.norm())) {
            res.u = u_nominal;
            res.status = FilterStatus::Infeasible;
            res.slacks = slacks_at(rows, u_nominal);
            return res;
        }
    }

    res.status = FilterStatus::Modified;
    res.slacks = slacks_at(rows, res.u);
    for (int q = 0; q < res.slacks.size(); ++q) {
        if (std::abs(res.slacks[q]) <= 1e-7 * std::max(1.0, std::abs(rows[q].b))) {
            res.active.push_back(q);
        }
    }
    return res;
}

std::optional<std::pair<double, double>> MultiCbfFilter::certified_input_set_1d(
    const Vec& x) const {
    if (system.input_dim != 1) {
        throw std::invalid_argument("certified_input_set_1d: system must have one input");
    }
    double lo = -kInf, hi = kInf;
    for (const auto& c : cbfs) {
        const ConstraintRow r = constraint_row(c, system, x);
        const double a = r.a[0];
        if (std::abs(a) <= kZeroRow) {
            if (r.b > kSlackTol) return std::nullopt;  // 0 >= b > 0: empty
            continue;
        }
        if (a > 0.0) {
            lo = std::max(lo, r.b / a);
        } else {
            hi = std::min(hi, r.b / a);
        }
    }
    if (lo > hi) return std::nullopt;
    return std::make_pair(lo, hi);
}

Vec MultiCbfFilter::least_violating_input(const Vec& x, const Vec& u_nominal) const {
    std::vector<ConstraintRow> rows;
    for (const auto& c : cbfs) rows.push_back(constraint_row(c, system, x));
    auto max_violation = [&](const Vec& u) {
        double v = 0.0;
        for (const auto& r : rows) {
            const double na = std::max(r.a.norm(), kZeroRow);
            v = std::max(v, (r.b - r.a.dot(u)) / na);
        }
        return v;
    };
    if (system.input_dim != 1) {
        return u_nominal;  // multi-input fallback: keep the nominal input
    }
    // the max of affine functions of u is convex; ternary search on a wide span
    double lo = u_nominal[0] - 1e3, hi = u_nominal[0] + 1e3;
    for (int it = 0; it < 200; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        Vec v1(1), v2(1);
        v1[0] = m1;
        v2[0] = m2;
        if (max_violation(v1) <= max_violation(v2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Vec u(1);
    u[0] = 0.5 * (lo + hi);
    return u;
}

}  // namespace cbf
