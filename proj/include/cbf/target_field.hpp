#pragma once

#include <optional>

#include "cbf/common.hpp"
#include "cbf/safe_sets.hpp"

namespace cbf {

// Target gradient field for one boundary segment. The field is the gradient
// of the axis signed distance F(x): F vanishes on the (laterally extended)
// segment curve, is positive on the interior side, and its level sets are
// translates of the curve along the cone axis. The field is constant along
// lines parallel to the axis, so the boundary value problem it defines has
// the exact solution h = F.
struct TargetGradientField {
    int dim = 0;
    bool hyperplane = false;

    Vec axis;         // s_q, unit, points inward
    Vec plane_point;  // any point on the zero set (hyperplane mode)

    // curved mode (dim == 2)
    Vec lateral;                  // unit, orthogonal to axis
    std::vector<double> knot_t;   // lateral coordinates of the segment samples, ascending
    std::vector<double> knot_d;   // axis coordinate of the curve at each knot
    double slope_lo = 0.0;        // d'(t) at the lateral ends, for the linear extension
    double slope_hi = 0.0;
    SafeSetFunction set;          // shifted so the segment lies on its zero level
    std::optional<SafeSetSpec> set_spec;  // present when the field is serializable
    Box box;

    // lateral coordinate of a state
    double lateral_coord(const Vec& x) const;

    // axis coordinate of the extended curve at lateral coordinate t;
    // root-polished against the set inside the sampled range, linear beyond.
    double depth(double t) const;
    double depth_slope(double t) const;

    Vec curve_point(double t) const;

    // target gradient at x (grad F); constant along axis lines
    Vec lookup(const Vec& x) const;

    // F(x): the line integral of the field along the axis from the boundary
    // intersection to x
    double value(const Vec& x) const;

    // x_c*: intersection of the extended segment curve with the axis line
    // through x
    Vec boundary_point(const Vec& x) const;

    // count of lookup calls that had to leave the admissible box while
    // bracketing (reported by the builder, not silently dropped)
    int miss_count = 0;
};

// Build the field for a sampled segment. The set must be the one whose zero
// level the segment lies on. Throws if any segment normal has non-positive
// dot with the cone axis (the segment then fails the parallel-level-curve
// condition).
TargetGradientField build_target_field(const BoundarySample& segment,
                                       const SafeSetFunction& set, const Box& box,
                                       std::optional<SafeSetSpec> spec = std::nullopt);

// Constant-normal field with zero set {x : n.(x - p) = 0}; n points inward.
TargetGradientField hyperplane_target_field(const Vec& unit_normal, const Vec& point_on_plane,
                                            const Box& box);

// True when some boundary normal of the segment is nearly orthogonal to some
// input channel direction: |g_i^T n| / ||g_i|| < flag_tol for some point.
bool segment_needs_inner_approximation(const BoundarySample& segment, const Mat& g_matrix,
                                       double flag_tol);

// Replace a flagged segment by its supporting chord from the inside. The
// chord normal starts at the segment's mean normal and is tilted in-plane
// just enough that every channel satisfies |g_i^T n| / ||g_i|| >= tilt target.
// Points are projected onto the chord; all normals become the chord normal.
BoundarySample hyperplane_inner_approximation(const BoundarySample& segment,
                                              const Mat& g_matrix, double flag_tol,
                                              double majority_sign = 1.0);

}  // namespace cbf
