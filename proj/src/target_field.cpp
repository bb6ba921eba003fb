#include "cbf/target_field.hpp"

#include <algorithm>
#include <cmath>

namespace cbf {

namespace {

double curve_slope_at(const SafeSetFunction& set, const Vec& point, const Vec& axis,
                      const Vec& lateral) {
    const Vec g = set.gradient(point);
    const double gs = g.dot(axis);
    if (std::abs(gs) <= 1e-12) {
        throw BoundarySearchError("target field: boundary tangent to the cone axis");
    }
    return -g.dot(lateral) / gs;
}

}  // namespace

double TargetGradientField::lateral_coord(const Vec& x) const {
    return lateral.dot(x);
}

double TargetGradientField::depth(double t) const {
    if (hyperplane) {
        throw std::logic_error("depth: not defined for hyperplane fields");
    }
    const double t_lo = knot_t.front();
    const double t_hi = knot_t.back();
    if (t <= t_lo) return knot_d.front() + slope_lo * (t - t_lo);
    if (t >= t_hi) return knot_d.back() + slope_hi * (t - t_hi);

    // bracket from the knot table, then expand until h changes sign
    const auto it = std::upper_bound(knot_t.begin(), knot_t.end(), t);
    const size_t j = static_cast<size_t>(it - knot_t.begin());
    const double t0 = knot_t[j - 1], t1 = knot_t[j];
    const double d0 = knot_d[j - 1], d1 = knot_d[j];
    const double w = (t1 > t0) ? (t - t0) / (t1 - t0) : 0.5;
    const double d_guess = d0 + w * (d1 - d0);

    auto h_at = [&](double d) { return set(Vec(t * lateral + d * axis)); };

    double lo = d_guess, hi = d_guess;
    double width = std::max(std::abs(d1 - d0), 1e-6 * std::max(1.0, std::abs(d_guess)));
    const double limit = box.diameter();
    // h increases along the inward axis near the curve
    for (int it2 = 0; it2 < 64; ++it2) {
        lo = d_guess - width;
        hi = d_guess + width;
        if (h_at(lo) < 0.0 && h_at(hi) > 0.0) break;
        width *= 2.0;
        if (width > limit) {
            throw BoundarySearchError("target field: could not bracket the boundary along the axis");
        }
    }
    // bisect until the bracket collapses
    for (int it2 = 0; it2 < 200; ++it2) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (h_at(mid) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double TargetGradientField::depth_slope(double t) const {
    if (hyperplane) {
        throw std::logic_error("depth_slope: not defined for hyperplane fields");
    }
    if (t <= knot_t.front()) return slope_lo;
    if (t >= knot_t.back()) return slope_hi;
    return curve_slope_at(set, curve_point(t), axis, lateral);
}

Vec TargetGradientField::curve_point(double t) const {
    return Vec(t * lateral + depth(t) * axis);
}

Vec TargetGradientField::lookup(const Vec& x) const {
    if (hyperplane) return axis;
    const double t = lateral_coord(x);
    return Vec(axis - depth_slope(t) * lateral);
}

double TargetGradientField::value(const Vec& x) const {
    if (hyperplane) return axis.dot(x - plane_point);
    const double t = lateral_coord(x);
    return axis.dot(x) - depth(t);
}

Vec TargetGradientField::boundary_point(const Vec& x) const {
    if (hyperplane) return Vec(x - value(x) * axis);
    return curve_point(lateral_coord(x));
}

TargetGradientField build_target_field(const BoundarySample& segment,
                                       const SafeSetFunction& set, const Box& box,
                                       std::optional<SafeSetSpec> spec) {
    const int n = segment.dim();
    if (segment.count() == 0) {
        throw std::invalid_argument("build_target_field: empty segment");
    }

    Vec axis = segment.normals.colwise().mean().transpose();
    const double axis_norm = axis.norm();
    if (axis_norm <= 1e-12) {
        throw BoundarySearchError("build_target_field: segment normals cancel out");
    }
    axis /= axis_norm;
    for (int i = 0; i < segment.count(); ++i) {
        if (segment.normals.row(i).dot(axis) <= 0.0) {
            throw BoundarySearchError(
                "build_target_field: a segment normal points away from the cone axis");
        }
    }

    if (n == 1 || segment.count() == 1) {
        // a single point (or 1-D set) defines a hyperplane field
        return hyperplane_target_field(axis, Vec(segment.points.row(0).transpose()), box);
    }
    if (n != 2) {
        throw std::invalid_argument("build_target_field: curved segments are 2-D only");
    }

    TargetGradientField field;
    field.dim = n;
    field.hyperplane = false;
    field.axis = axis;
    Vec lateral(2);
    lateral << -axis[1], axis[0];
    field.lateral = lateral;
    field.set = set;
    field.set_spec = std::move(spec);
    field.box = box;

    // knots sorted by lateral coordinate
    std::vector<std::pair<double, double>> td(segment.count());
    for (int i = 0; i < segment.count(); ++i) {
        const Vec p = segment.points.row(i).transpose();
        td[i] = {lateral.dot(p), axis.dot(p)};
    }
    std::sort(td.begin(), td.end());
    field.knot_t.reserve(td.size());
    field.knot_d.reserve(td.size());
    for (auto& [t, d] : td) {
        if (!field.knot_t.empty() && t == field.knot_t.back()) continue;
        field.knot_t.push_back(t);
        field.knot_d.push_back(d);
    }
    if (field.knot_t.size() == 1) {
        return hyperplane_target_field(axis, Vec(segment.points.row(0).transpose()), box);
    }

    // endpoint tangent slopes for the linear extension
    Vec end_lo = field.knot_t.front() * lateral + field.knot_d.front() * axis;
    Vec end_hi = field.knot_t.back() * lateral + field.knot_d.back() * axis;
    field.slope_lo = curve_slope_at(set, end_lo, axis, lateral);
    field.slope_hi = curve_slope_at(set, end_hi, axis, lateral);
    return field;
}

TargetGradientField hyperplane_target_field(const Vec& unit_normal, const Vec& point_on_plane,
                                            const Box& box) {
    TargetGradientField field;
    field.dim = static_cast<int>(unit_normal.size());
    field.hyperplane = true;
    field.axis = unit_normal / unit_normal.norm();
    field.plane_point = point_on_plane;
    field.box = box;
    return field;
}

bool segment_needs_inner_approximation(const BoundarySample& segment, const Mat& g_matrix,
                                       double flag_tol) {
    for (int c = 0; c < g_matrix.cols(); ++c) {
        const Vec gi = g_matrix.col(c);
        const double gn = gi.norm();
        if (gn <= 0.0) continue;
        for (int i = 0; i < segment.count(); ++i) {
            const double align = std::abs(segment.normals.row(i).dot(gi)) / gn;
            if (align < flag_tol) return true;
        }
    }
    return false;
}

BoundarySample hyperplane_inner_approximation(const BoundarySample& segment,
                                              const Mat& g_matrix, double flag_tol,
                                              double majority_sign) {
    if (segment.dim() != 2) {
        throw std::invalid_argument("hyperplane_inner_approximation: 2-D segments only");
    }
    Vec normal = segment.normals.colwise().mean().transpose();
    normal.normalize();

    // tilt toward each deficient channel direction until the alignment target
    // is met; the target sits above the flag tolerance so the replacement is
    // never re-flagged
    const double target = 1.5 * flag_tol;
    for (int c = 0; c < g_matrix.cols(); ++c) {
        Vec gi = g_matrix.col(c);
        const double gn = gi.norm();
        if (gn <= 0.0) continue;
        gi /= gn;
        double align = normal.dot(gi);
        if (std::abs(align) >= target) continue;
        double sign = (align > 0.0) ? 1.0 : (align < 0.0 ? -1.0 : majority_sign);
        // rotate normal within the plane toward sign*gi to reach the target
        Vec perp = normal - (normal.dot(gi)) * gi;
        const double pn = perp.norm();
        if (pn <= 1e-12) continue;  // already parallel, alignment is 1
        perp /= pn;
        // normal' = cos(a) * perp + sin(a) * sign * gi with sin(a) = target
        const double s = target;
        const double cth = std::sqrt(1.0 - s * s);
        normal = cth * perp + s * sign * gi;
    }
    normal.normalize();

    // supporting chord from the inside: all segment points end up on the
    // outside (<= 0) side of the line {x : normal.x = off}
    double off = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < segment.count(); ++i) {
        off = std::max(off, normal.dot(Vec(segment.points.row(i).transpose())));
    }

    BoundarySample replaced;
    replaced.points.resize(segment.count(), 2);
    replaced.normals.resize(segment.count(), 2);
    for (int i = 0; i < segment.count(); ++i) {
        const Vec p = segment.points.row(i).transpose();
        const Vec proj = p - (normal.dot(p) - off) * normal;
        replaced.points.row(i) = proj.transpose();
        replaced.normals.row(i) = normal.transpose();
    }
    return replaced;
}

}  // namespace cbf
