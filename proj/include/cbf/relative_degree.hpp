#pragma once

#include <iosfwd>
#include <vector>

#include "cbf/common.hpp"
#include "cbf/dynamics.hpp"
#include "cbf/parallel.hpp"
#include "cbf/safe_sets.hpp"

namespace cbf {

struct LieDerivatives {
    double lf_h = 0.0;  // grad h . f
    Vec lg_h;           // g^T grad h, one entry per input channel
};

LieDerivatives lie_derivatives(const ControlAffineSystem& sys, const SafeSetFunction& barrier,
                               const Vec& x);

enum class LocusClass { Interior, Boundary };

struct InactivityPoint {
    Vec x;
    int channel = 0;
    double lg_value = 0.0;
    double h_value = 0.0;
    LocusClass cls = LocusClass::Interior;
};

// States where a channel Lie derivative vanishes. `points` holds the states
// inside or on the safe set (the filter-inactivity pathology); `locus` holds
// every refined zero crossing in the box, for plotting the zero-locus line.
struct InactivityReport {
    std::vector<InactivityPoint> points;
    std::vector<InactivityPoint> locus;
    double tol = 0.0;
    double boundary_band = 0.0;
    int grid_resolution = 0;

    bool empty() const { return points.empty(); }
    int boundary_count() const;
    int interior_count() const;
};

// Dense grid scan with per-edge sign-change bisection. Parallel across grid
// lines; results are assembled in line order, so the output is identical in
// serial and parallel execution.
InactivityReport scan_inactivity(const ControlAffineSystem& sys, const SafeSetFunction& barrier,
                                 int grid_resolution, double tol, double boundary_band = 1e-3,
                                 par::Exec exec = par::Exec::openmp);

void write_locus_csv(const InactivityReport& report, std::ostream& os);

}  // namespace cbf
