#include "cbf/relative_degree.hpp"

#include <cmath>
#include <ostream>

namespace cbf {

LieDerivatives lie_derivatives(const ControlAffineSystem& sys, const SafeSetFunction& barrier,
                               const Vec& x) {
    if (x.size() != sys.state_dim) {
        throw std::invalid_argument("lie_derivatives: state dimension mismatch");
    }
    const Vec grad = barrier.gradient(x);
    if (grad.size() != sys.state_dim) {
        throw std::invalid_argument("lie_derivatives: gradient dimension mismatch");
    }
    LieDerivatives ld;
    ld.lf_h = grad.dot(sys.drift(x));
    ld.lg_h = sys.input_matrix(x).transpose() * grad;
    return ld;
}

int InactivityReport::boundary_count() const {
    int c = 0;
    for (const auto& p : points) {
        if (p.cls == LocusClass::Boundary) ++c;
    }
    return c;
}

int InactivityReport::interior_count() const {
    int c = 0;
    for (const auto& p : points) {
        if (p.cls == LocusClass::Interior) ++c;
    }
    return c;
}

namespace {

struct LineHits {
    std::vector<InactivityPoint> inside;
    std::vector<InactivityPoint> all;
};

// refine a sign change of L along the segment [a, b] to |L| < tol
bool refine_edge(const std::function<double(const Vec&)>& lg, const Vec& a, const Vec& b,
                 double tol, Vec& out) {
    Vec lo = a, hi = b;
    double flo = lg(lo);
    for (int it = 0; it < 200; ++it) {
        Vec mid = 0.5 * (lo + hi);
        const double fm = lg(mid);
        if (std::abs(fm) < tol) {
            out = mid;
            return true;
        }
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if ((hi - lo).norm() == 0.0) break;
    }
    Vec mid = 0.5 * (lo + hi);
    if (std::abs(lg(mid)) < tol) {
        out = mid;
        return true;
    }
    return false;
}

}  // namespace

InactivityReport scan_inactivity(const ControlAffineSystem& sys, const SafeSetFunction& barrier,
                                 int grid_resolution, double tol, double boundary_band,
                                 par::Exec exec) {
    if (grid_resolution < 8) {
        throw std::invalid_argument("scan_inactivity: grid_resolution must be at least 8");
    }
    const Box& box = sys.admissible;
    const int n = box.dim();
    const int m = sys.input_dim;
    if (n > 2) {
        throw std::invalid_argument("scan_inactivity: only 1-D and 2-D state spaces supported");
    }

    InactivityReport report;
    report.tol = tol;
    report.boundary_band = boundary_band;
    report.grid_resolution = grid_resolution;

    auto channel_lie = [&](int c) {
        return [&sys, &barrier, c](const Vec& x) {
            return sys.input_matrix(x).col(c).dot(barrier.gradient(x));
        };
    };

    auto classify_and_store = [&](LineHits& hits, const Vec& x, int channel, double lg_value) {
        InactivityPoint p;
        p.x = x;
        p.channel = channel;
        p.lg_value = lg_value;
        p.h_value = barrier(x);
        p.cls = (std::abs(p.h_value) <= boundary_band) ? LocusClass::Boundary
                                                       : LocusClass::Interior;
        hits.all.push_back(p);
        if (p.h_value >= -boundary_band) hits.inside.push_back(p);
    };

    if (n == 1) {
        LineHits hits;
        for (int c = 0; c < m; ++c) {
            auto lg = channel_lie(c);
            Vec prev(1);
            prev[0] = box.lo[0];
            double fprev = lg(prev);
            for (int i = 1; i <= grid_resolution; ++i) {
                Vec cur(1);
                cur[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / grid_resolution;
                const double fcur = lg(cur);
                if (fprev == 0.0 || fprev * fcur < 0.0) {
                    Vec z;
                    if (refine_edge(lg, prev, cur, tol, z)) {
                        classify_and_store(hits, z, c, lg(z));
                    }
                }
                prev = cur;
                fprev = fcur;
            }
        }
        report.points = std::move(hits.inside);
        report.locus = std::move(hits.all);
        return report;
    }

    // 2-D: scan along both grid directions, one line per task
    const int res = grid_resolution;
    auto node = [&](int i, int j) {
        Vec x(2);
        x[0] = box.lo[0] + (box.hi[0] - box.lo[0]) * i / res;
        x[1] = box.lo[1] + (box.hi[1] - box.lo[1]) * j / res;
        return x;
    };

    // tasks: for each channel, res+1 vertical lines then res+1 horizontal lines
    const std::int64_t lines_per_channel = 2 * (res + 1);
    const std::int64_t total = static_cast<std::int64_t>(m) * lines_per_channel;
    std::vector<LineHits> per_line(total);

    par::for_index(exec, total, [&](std::int64_t task) {
        const int c = static_cast<int>(task / lines_per_channel);
        const int rem = static_cast<int>(task % lines_per_channel);
        auto lg = channel_lie(c);
        LineHits& hits = per_line[task];
        const bool vertical = rem <= res;
        const int fixed = vertical ? rem : rem - (res + 1);
        Vec prev = vertical ? node(fixed, 0) : node(0, fixed);
        double fprev = lg(prev);
        for (int k = 1; k <= res; ++k) {
            Vec cur = vertical ? node(fixed, k) : node(k, fixed);
            const double fcur = lg(cur);
            if (fprev == 0.0 || fprev * fcur < 0.0) {
                Vec z;
                if (refine_edge(lg, prev, cur, tol, z)) {
                    classify_and_store(hits, z, c, lg(z));
                }
            }
            prev = cur;
            fprev = fcur;
        }
    });

    for (auto& hits : per_line) {
        report.points.insert(report.points.end(), hits.inside.begin(), hits.inside.end());
        report.locus.insert(report.locus.end(), hits.all.begin(), hits.all.end());
    }
    return report;
}

void write_locus_csv(const InactivityReport& report, std::ostream& os) {
    os << "x0";
    if (!report.locus.empty() && report.locus.front().x.size() > 1) os << ",x1";
    os << ",channel,lg,h,class\n";
    char buf[512];
    for (const auto& p : report.locus) {
        if (p.x.size() == 1) {
            std::snprintf(buf, sizeof(buf), "%.17g,%d,%.17g,%.17g,%s\n", p.x[0], p.channel,
                          p.lg_value, p.h_value,
                          p.cls == LocusClass::Boundary ? "boundary" : "interior");
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.17g,%.17g,%s\n", p.x[0], p.x[1],
                          p.channel, p.lg_value, p.h_value,
                          p.cls == LocusClass::Boundary ? "boundary" : "interior");
        }
        os << buf;
    }
}

}  // namespace cbf
