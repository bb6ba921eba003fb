#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cbf/common.hpp"

namespace cbf {

// Smooth function h whose zero-superlevel set is the safe set; the gradient
// is analytic, not finite-differenced.
struct SafeSetFunction {
    std::string name;
    std::function<double(const Vec&)> value;    // h
    std::function<Vec(const Vec&)> gradient;    // grad h

    double operator()(const Vec& x) const { return value(x); }

    // Same geometry family with the zero level moved inward by `offset`
    // (h - offset); the gradient is unchanged.
    SafeSetFunction shifted(double offset) const;
};

// Declarative description of a safe set, used for config files and artifact
// round-trips. `kind` is one of: himmelblau, ellipsoid, halfspace, interval.
struct SafeSetSpec {
    std::string kind;
    double level = 0.0;            // himmelblau
    Vec scale;                     // himmelblau
    Vec offset;                    // himmelblau
    Vec center;                    // ellipsoid
    Mat shape;                     // ellipsoid
    Vec normal;                    // halfspace
    double plane_offset = 0.0;     // halfspace: h = normal.x + plane_offset
    double x_min = 0.0, x_max = 0.0;  // interval (1-D quadratic)
    double level_shift = 0.0;      // applied on top of the base function
};

SafeSetFunction make_safe_set(const SafeSetSpec& spec);

// h = level - Him(s1*(x1-o1), s2*(x2-o2)), with the classical Himmelblau
// function Him(a, b) = (a^2 + b - 11)^2 + (a + b^2 - 7)^2.
SafeSetFunction himmelblau_safe_set(double level, const Vec& scale, const Vec& offset);

// h = 1 - (x - c)^T P (x - c), P symmetric positive definite.
SafeSetFunction ellipsoid_safe_set(const Vec& center, const Mat& shape);

// h = a^T x + b (non-compact half-space set).
SafeSetFunction halfspace_safe_set(const Vec& normal, double offset);

// 1-D h = (x - x_min)(x_max - x), the standard compact-interval barrier.
SafeSetFunction interval_safe_set(double x_min, double x_max);

// Points on the zero level set with unit inward normals; rows are points.
struct BoundarySample {
    Mat points;
    Mat normals;

    int count() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

enum class SegmentKind { OriginalBoundary, ConvexHullExtension, InnerApproximation };

std::string to_string(SegmentKind kind);
SegmentKind segment_kind_from_string(const std::string& s);

struct BoundaryPartition {
    std::vector<BoundarySample> segments;
    std::vector<SegmentKind> provenance;
    double margin = 0.0;
};

struct PartitionOptions {
    double margin = 0.05;
    // Optional per-point scalar whose sign changes force segment breaks
    // (e.g. the channel Lie derivative of the inward normal).
    std::vector<double> break_scores;
    // Force breaks at transitions between hull-contact and concave stretches.
    bool hull_breaks = true;
    double hull_tol = 1e-8;
};

// Deterministic ray-shooting boundary sampler: rays from an interior point
// (grid argmax of h), bisection-polished to machine precision; |h| <= 1e-10
// guaranteed at every returned point.
BoundarySample sample_boundary(const SafeSetFunction& set, const Box& box, int count,
                               std::uint64_t seed);

// Greedy angular sweep partitioner with merge/split adjustment to exactly
// q_target segments. Every output segment passes the pairwise normal check
// n_i . n_j > -1 + margin.
BoundaryPartition partition_boundary(const BoundarySample& sample, int q_target,
                                     const PartitionOptions& opts = {});

// Full pairwise check of the surface-normal condition with margin.
bool segment_passes_normal_check(const BoundarySample& segment, double margin);

// Counter-clockwise convex hull (monotone chain). Throws on fewer than three
// non-collinear points.
std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> points);

// Signed distance of a point to the hull boundary (<= 0 inside); used to
// classify boundary points as on/off the hull within a tolerance.
double hull_boundary_distance(const std::vector<Eigen::Vector2d>& hull,
                              const Eigen::Vector2d& p);

}  // namespace cbf
