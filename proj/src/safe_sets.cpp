#include "cbf/safe_sets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

namespace cbf {

SafeSetFunction SafeSetFunction::shifted(double offset) const {
    if (offset == 0.0) return *this;
    SafeSetFunction s;
    s.name = name + "_shifted";
    auto base = value;
    s.value = [base, offset](const Vec& x) { return base(x) - offset; };
    s.gradient = gradient;
    return s;
}

SafeSetFunction himmelblau_safe_set(double level, const Vec& scale, const Vec& offset) {
    if (level <= 0.0) {
        throw std::invalid_argument("himmelblau_safe_set: level must be positive");
    }
    if (scale.size() != 2 || offset.size() != 2) {
        throw std::invalid_argument("himmelblau_safe_set: scale and offset must be 2-vectors");
    }
    SafeSetFunction s;
    s.name = "himmelblau";
    const double s1 = scale[0], s2 = scale[1], o1 = offset[0], o2 = offset[1];
    s.value = [level, s1, s2, o1, o2](const Vec& x) {
        const double a = s1 * (x[0] - o1);
        const double b = s2 * (x[1] - o2);
        const double t1 = a * a + b - 11.0;
        const double t2 = a + b * b - 7.0;
        return level - (t1 * t1 + t2 * t2);
    };
    s.gradient = [s1, s2, o1, o2](const Vec& x) {
        const double a = s1 * (x[0] - o1);
        const double b = s2 * (x[1] - o2);
        const double t1 = a * a + b - 11.0;
        const double t2 = a + b * b - 7.0;
        // dHim/da = 4 a t1 + 2 t2, dHim/db = 2 t1 + 4 b t2
        Vec g(2);
        g[0] = -(4.0 * a * t1 + 2.0 * t2) * s1;
        g[1] = -(2.0 * t1 + 4.0 * b * t2) * s2;
        return g;
    };
    return s;
}

SafeSetFunction ellipsoid_safe_set(const Vec& center, const Mat& shape) {
    const int n = static_cast<int>(center.size());
    if (shape.rows() != n || shape.cols() != n) {
        throw std::invalid_argument("ellipsoid_safe_set: shape matrix size mismatch");
    }
    if (!shape.isApprox(shape.transpose(), 1e-12)) {
        throw std::invalid_argument("ellipsoid_safe_set: shape matrix must be symmetric");
    }
    Eigen::LLT<Mat> llt(shape);
    if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("ellipsoid_safe_set: shape matrix must be positive definite");
    }
    SafeSetFunction s;
    s.name = "ellipsoid";
    Mat P = shape;
    Vec c = center;
    s.value = [P, c](const Vec& x) {
        const Vec d = x - c;
        return 1.0 - d.dot(P * d);
    };
    s.gradient = [P, c](const Vec& x) { return Vec(-2.0 * (P * (x - c))); };
    return s;
}

SafeSetFunction halfspace_safe_set(const Vec& normal, double offset) {
    if (normal.norm() <= 0.0) {
        throw std::invalid_argument("halfspace_safe_set: zero normal");
    }
    SafeSetFunction s;
    s.name = "halfspace";
    Vec a = normal;
    s.value = [a, offset](const Vec& x) { return a.dot(x) + offset; };
    s.gradient = [a](const Vec&) { return a; };
    return s;
}

SafeSetFunction interval_safe_set(double x_min, double x_max) {
    if (x_max <= x_min) {
        throw std::invalid_argument("interval_safe_set: x_max must exceed x_min");
    }
    SafeSetFunction s;
    s.name = "interval";
    s.value = [x_min, x_max](const Vec& x) { return (x[0] - x_min) * (x_max - x[0]); };
    s.gradient = [x_min, x_max](const Vec& x) {
        Vec g(1);
        g[0] = (x_max - x[0]) - (x[0] - x_min);
        return g;
    };
    return s;
}

SafeSetFunction make_safe_set(const SafeSetSpec& spec) {
    SafeSetFunction base;
    if (spec.kind == "himmelblau") {
        base = himmelblau_safe_set(spec.level, spec.scale, spec.offset);
    } else if (spec.kind == "ellipsoid") {
        base = ellipsoid_safe_set(spec.center, spec.shape);
    } else if (spec.kind == "halfspace") {
        base = halfspace_safe_set(spec.normal, spec.plane_offset);
    } else if (spec.kind == "interval") {
        base = interval_safe_set(spec.x_min, spec.x_max);
    } else {
        throw ConfigError("unknown safe set kind: " + spec.kind);
    }
    return base.shifted(spec.level_shift);
}

namespace {

// Bisection between a strictly positive and a strictly negative h sample,
// run until the bracket collapses to adjacent doubles.
double bisect_root(const std::function<double(double)>& f, double t_pos, double t_neg) {
    double lo = t_pos, hi = t_neg;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (f(mid) >= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

Vec interior_argmax(const SafeSetFunction& set, const Box& box) {
    const int n = box.dim();
    const int res = (n == 1) ? 4097 : 129;
    Vec best;
    double best_val = -std::numeric_limits<double>::infinity();
    if (n == 1) {
        for (int i = 0; i <= res; ++i) {
            Vec x(1);
            x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / res;
            const double v = set(x);
            if (v > best_val) {
                best_val = v;
                best = x;
            }
        }
    } else if (n == 2) {
        for (int i = 0; i <= res; ++i) {
            for (int j = 0; j <= res; ++j) {
                Vec x(2);
                x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / res;
                x[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * j / res;
                const double v = set(x);
                if (v > best_val) {
                    best_val = v;
                    best = x;
                }
            }
        }
    } else {
        throw std::invalid_argument("sample_boundary: only 1-D and 2-D sets are supported");
    }
    if (best_val <= 0.0) {
        throw BoundarySearchError("sample_boundary: no interior point with h > 0 in the box");
    }
    return best;
}

}  // namespace

BoundarySample sample_boundary(const SafeSetFunction& set, const Box& box, int count,
                               std::uint64_t seed) {
    const int n = box.dim();
    if (count < 2) {
        throw std::invalid_argument("sample_boundary: count must be at least 2");
    }
    const Vec center = interior_argmax(set, box);
    const double reach = box.diameter();

    std::vector<Vec> dirs;
    if (n == 1) {
        if (count != 2) {
            throw std::invalid_argument("sample_boundary: 1-D sets have exactly 2 boundary points");
        }
        Vec d1(1), d2(1);
        d1 << 1.0;
        d2 << -1.0;
        dirs = {d2, d1};  // ascending x order
    } else {
        Rng rng(seed);
        dirs.reserve(count);
        const double step = 2.0 * M_PI / count;
        for (int k = 0; k < count; ++k) {
            const double jitter = (rng.uniform() - 0.5) * 0.5 * step;
            const double th = step * k + jitter;
            Vec d(2);
            d << std::cos(th), std::sin(th);
            dirs.push_back(d);
        }
    }

    BoundarySample sample;
    sample.points.resize(count, n);
    sample.normals.resize(count, n);

    for (int k = 0; k < count; ++k) {
        const Vec& d = dirs[k];
        auto along = [&](double t) { return set(Vec(center + t * d)); };
        // march outward to bracket the first crossing
        const int march_steps = 4000;
        double t_prev = 0.0;
        double t_hit = -1.0;
        for (int i = 1; i <= march_steps; ++i) {
            const double t = reach * i / march_steps;
            if (along(t) < 0.0) {
                t_hit = t;
                break;
            }
            t_prev = t;
        }
        if (t_hit < 0.0) {
            throw BoundarySearchError("sample_boundary: ray " + std::to_string(k) +
                                      " found no sign change inside the box");
        }
        const double t_root = bisect_root(along, t_prev, t_hit);
        const Vec p = center + t_root * d;
        const double h = set(p);
        if (std::abs(h) > 1e-10) {
            throw BoundarySearchError("sample_boundary: root polishing failed, |h| = " +
                                      std::to_string(std::abs(h)));
        }
        const Vec g = set.gradient(p);
        const double gn = g.norm();
        if (gn <= 1e-8) {
            throw BoundarySearchError("sample_boundary: vanishing gradient on the boundary");
        }
        sample.points.row(k) = p.transpose();
        sample.normals.row(k) = (g / gn).transpose();
    }
    return sample;
}

bool segment_passes_normal_check(const BoundarySample& segment, double margin) {
    const int n = segment.count();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (segment.normals.row(i).dot(segment.normals.row(j)) <= -1.0 + margin) {
                return false;
            }
        }
    }
    return true;
}

std::string to_string(SegmentKind kind) {
    switch (kind) {
        case SegmentKind::OriginalBoundary: return "original-boundary";
        case SegmentKind::ConvexHullExtension: return "convex-hull-extension";
        case SegmentKind::InnerApproximation: return "inner-approximation";
    }
    return "unknown";
}

SegmentKind segment_kind_from_string(const std::string& s) {
    if (s == "original-boundary") return SegmentKind::OriginalBoundary;
    if (s == "convex-hull-extension") return SegmentKind::ConvexHullExtension;
    if (s == "inner-approximation") return SegmentKind::InnerApproximation;
    throw MalformedArtifactError("unknown segment kind: " + s);
}

std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> points) {
    auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const auto& a, const auto& b) { return a == b; }),
                 points.end());
    const int n = static_cast<int>(points.size());
    if (n < 3) {
        throw std::invalid_argument("convex_hull_2d: need at least 3 distinct points");
    }
    std::vector<Eigen::Vector2d> hull(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    const int lower = k + 1;
    for (int i = n - 2; i >= 0; --i) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) {
        throw std::invalid_argument("convex_hull_2d: input points are collinear");
    }
    return hull;
}

double hull_boundary_distance(const std::vector<Eigen::Vector2d>& hull,
                              const Eigen::Vector2d& p) {
    // hull is CCW; each edge's outward normal gives a signed distance,
    // the maximum over edges is <= 0 inside.
    double best = -std::numeric_limits<double>::infinity();
    const int n = static_cast<int>(hull.size());
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d& a = hull[i];
        const Eigen::Vector2d& b = hull[(i + 1) % n];
        Eigen::Vector2d edge = b - a;
        Eigen::Vector2d outward(edge.y(), -edge.x());
        outward.normalize();
        best = std::max(best, outward.dot(p - a));
    }
    return best;
}

namespace {

struct OrderedPoints {
    std::vector<int> order;          // indices into the sample, sweep order
    std::vector<bool> forced_break;  // break BEFORE order[i]
};

OrderedPoints order_for_sweep(const BoundarySample& sample, const PartitionOptions& opts) {
    const int n = sample.count();
    OrderedPoints out;
    out.order.resize(n);
    std::iota(out.order.begin(), out.order.end(), 0);

    if (sample.dim() == 2) {
        Eigen::Vector2d centroid = sample.points.colwise().mean().transpose();
        std::vector<double> angle(n);
        for (int i = 0; i < n; ++i) {
            angle[i] = std::atan2(sample.points(i, 1) - centroid.y(),
                                  sample.points(i, 0) - centroid.x());
        }
        std::stable_sort(out.order.begin(), out.order.end(),
                         [&](int a, int b) { return angle[a] < angle[b]; });
    }

    out.forced_break.assign(n, false);
    if (!opts.break_scores.empty()) {
        if (static_cast<int>(opts.break_scores.size()) != n) {
            throw std::invalid_argument("partition_boundary: break_scores size mismatch");
        }
        for (int i = 0; i < n; ++i) {
            const double prev = opts.break_scores[out.order[(i + n - 1) % n]];
            const double cur = opts.break_scores[out.order[i]];
            if (prev * cur < 0.0) out.forced_break[i] = true;
        }
    }
    if (opts.hull_breaks && sample.dim() == 2 && n >= 3) {
        std::vector<Eigen::Vector2d> pts(n);
        for (int i = 0; i < n; ++i) pts[i] = sample.points.row(i).transpose();
        std::vector<bool> on_hull(n, false);
        try {
            const auto hull = convex_hull_2d(pts);
            for (int i = 0; i < n; ++i) {
                on_hull[i] = hull_boundary_distance(hull, pts[i]) > -opts.hull_tol;
            }
        } catch (const std::invalid_argument&) {
            // collinear sample: hull classification not applicable
        }
        for (int i = 0; i < n; ++i) {
            const bool prev = on_hull[out.order[(i + n - 1) % n]];
            const bool cur = on_hull[out.order[i]];
            if (prev != cur) out.forced_break[i] = true;
        }
    }
    return out;
}

BoundarySample gather(const BoundarySample& sample, const std::vector<int>& idx) {
    BoundarySample seg;
    seg.points.resize(static_cast<int>(idx.size()), sample.dim());
    seg.normals.resize(static_cast<int>(idx.size()), sample.dim());
    for (size_t r = 0; r < idx.size(); ++r) {
        seg.points.row(static_cast<int>(r)) = sample.points.row(idx[r]);
        seg.normals.row(static_cast<int>(r)) = sample.normals.row(idx[r]);
    }
    return seg;
}

bool can_join(const BoundarySample& sample, const std::vector<int>& a,
              const std::vector<int>& b, double margin) {
    for (int i : a) {
        for (int j : b) {
            if (sample.normals.row(i).dot(sample.normals.row(j)) <= -1.0 + margin) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

BoundaryPartition partition_boundary(const BoundarySample& sample, int q_target,
                                     const PartitionOptions& opts) {
    const int n = sample.count();
    if (q_target < 1) {
        throw std::invalid_argument("partition_boundary: q_target must be at least 1");
    }
    if (n == 0) {
        throw std::invalid_argument("partition_boundary: empty sample");
    }
    if (q_target > n) {
        throw std::invalid_argument("partition_boundary: q_target exceeds the sample size");
    }
    if (opts.margin <= 0.0 || opts.margin >= 2.0) {
        throw std::invalid_argument("partition_boundary: margin must lie in (0, 2)");
    }

    OrderedPoints op = order_for_sweep(sample, opts);

    // rotate the sweep so it starts at a forced break, if any
    int start = 0;
    for (int i = 0; i < n; ++i) {
        if (op.forced_break[i]) {
            start = i;
            break;
        }
    }
    std::vector<int> order(n);
    std::vector<bool> brk(n);
    for (int i = 0; i < n; ++i) {
        order[i] = op.order[(start + i) % n];
        brk[i] = op.forced_break[(start + i) % n];
    }
    const bool has_forced = std::any_of(brk.begin(), brk.end(), [](bool b) { return b; });

    // greedy sweep
    std::vector<std::vector<int>> groups;
    std::vector<bool> group_starts_forced;
    groups.emplace_back();
    group_starts_forced.push_back(brk[0]);
    for (int i = 0; i < n; ++i) {
        const int p = order[i];
        bool fits = true;
        if (!groups.back().empty()) {
            if (i > 0 && brk[i]) {
                fits = false;
            } else {
                for (int q : groups.back()) {
                    if (sample.normals.row(p).dot(sample.normals.row(q)) <= -1.0 + opts.margin) {
                        fits = false;
                        break;
                    }
                }
            }
        }
        if (!fits) {
            groups.emplace_back();
            group_starts_forced.push_back(brk[i]);
        }
        groups.back().push_back(p);
    }
    // wrap-around: if the sweep did not start at a forced break, the first and
    // last groups may be artificial halves of one segment
    if (!has_forced && groups.size() > 1 &&
        static_cast<int>(groups.size()) > q_target &&
        can_join(sample, groups.front(), groups.back(), opts.margin)) {
        std::vector<int> merged = groups.back();
        merged.insert(merged.end(), groups.front().begin(), groups.front().end());
        groups.front() = merged;
        groups.pop_back();
        group_starts_forced.pop_back();
    }

    // merge adjacent groups while there are too many; prefer merges that do
    // not cross forced breaks
    auto try_merge_pass = [&](bool allow_forced) {
        while (static_cast<int>(groups.size()) > q_target) {
            int best = -1;
            size_t best_size = std::numeric_limits<size_t>::max();
            for (size_t i = 0; i + 1 < groups.size(); ++i) {
                if (!allow_forced && group_starts_forced[i + 1]) continue;
                if (!can_join(sample, groups[i], groups[i + 1], opts.margin)) continue;
                const size_t sz = groups[i].size() + groups[i + 1].size();
                if (sz < best_size) {
                    best_size = sz;
                    best = static_cast<int>(i);
                }
            }
            if (best < 0) return;
            groups[best].insert(groups[best].end(), groups[best + 1].begin(),
                                groups[best + 1].end());
            groups.erase(groups.begin() + best + 1);
            group_starts_forced.erase(group_starts_forced.begin() + best + 1);
        }
    };
    try_merge_pass(false);
    try_merge_pass(true);
    if (static_cast<int>(groups.size()) > q_target) {
        throw ConfigError("partition_boundary: cannot reach " + std::to_string(q_target) +
                          " segments; the normal condition needs at least " +
                          std::to_string(groups.size()));
    }

    // split the largest group until the target count is reached
    while (static_cast<int>(groups.size()) < q_target) {
        size_t largest = 0;
        for (size_t i = 1; i < groups.size(); ++i) {
            if (groups[i].size() > groups[largest].size()) largest = i;
        }
        if (groups[largest].size() < 2) {
            throw ConfigError("partition_boundary: not enough points to split further");
        }
        const auto& g = groups[largest];
        const size_t half = g.size() / 2;
        std::vector<int> a(g.begin(), g.begin() + half);
        std::vector<int> b(g.begin() + half, g.end());
        groups[largest] = a;
        groups.insert(groups.begin() + largest + 1, b);
        group_starts_forced.insert(group_starts_forced.begin() + largest + 1, false);
    }

    // hull classification for provenance
    std::vector<bool> on_hull(n, true);
    if (sample.dim() == 2 && n >= 3) {
        std::vector<Eigen::Vector2d> pts(n);
        for (int i = 0; i < n; ++i) pts[i] = sample.points.row(i).transpose();
        try {
            const auto hull = convex_hull_2d(pts);
            for (int i = 0; i < n; ++i) {
                on_hull[i] = hull_boundary_distance(hull, pts[i]) > -opts.hull_tol;
            }
        } catch (const std::invalid_argument&) {
        }
    }

    BoundaryPartition part;
    part.margin = opts.margin;
    for (const auto& g : groups) {
        BoundarySample seg = gather(sample, g);
        if (!segment_passes_normal_check(seg, opts.margin)) {
            throw std::logic_error("partition_boundary: emitted segment fails the normal check");
        }
        bool any_off_hull = false;
        for (int i : g) {
            if (!on_hull[i]) any_off_hull = true;
        }
        part.segments.push_back(std::move(seg));
        part.provenance.push_back(any_off_hull ? SegmentKind::OriginalBoundary
                                               : SegmentKind::ConvexHullExtension);
    }
    return part;
}

}  // namespace cbf
