#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbf/common.hpp"
#include "cbf/dynamics.hpp"
#include "cbf/pinn.hpp"
#include "cbf/safe_sets.hpp"

namespace cbf {

// Linear extended class-K function: gamma(v) = slope * v, slope > 0.
struct ClassKappa {
    double slope = 1.0;
    double operator()(double v) const { return slope * v; }
};

// One barrier usable by the filter: an evaluable h with gradient plus its
// class-K slope.
struct CbfModel {
    std::string label;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    ClassKappa kappa;

    static CbfModel from_safe_set(const SafeSetFunction& set, double slope,
                                  std::string label = "");
    static CbfModel from_pinn(const PinnModel& model, double slope, std::string label = "");
};

// Constraint a.u >= b derived from hdot + gamma(h) >= 0 at state x.
struct ConstraintRow {
    Vec a;
    double b = 0.0;
};

ConstraintRow constraint_row(const CbfModel& cbf, const ControlAffineSystem& sys, const Vec& x);

enum class FilterStatus { PassThrough, Modified, Infeasible };

struct FilterResult {
    Vec u;
    FilterStatus status = FilterStatus::PassThrough;
    std::vector<int> active;  // indices of tight constraints
    Vec slacks;               // hdot_q + gamma_q(h_q) at the returned input
};

// QP safety filter over an ordered family of CBFs:
//   min |u - u_nominal|^2  s.t.  a_q.u >= b_q for all q.
// m = 1 solves the interval intersection exactly; m > 1 runs Hildreth dual
// coordinate ascent and re-verifies the result against every constraint.
struct MultiCbfFilter {
    ControlAffineSystem system;
    std::vector<CbfModel> cbfs;

    FilterResult filter(const Vec& x, const Vec& u_nominal) const;

    // intersection of the certified half-lines; nullopt when empty. Endpoints
    // may be infinite. Only valid for single-input systems.
    std::optional<std::pair<double, double>> certified_input_set_1d(const Vec& x) const;

    // input minimizing the worst constraint violation (used by simulators as
    // the fallback policy at infeasible states)
    Vec least_violating_input(const Vec& x, const Vec& u_nominal) const;
};

}  // namespace cbf
