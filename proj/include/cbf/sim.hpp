#pragma once

#include <iosfwd>
#include <vector>

#include "cbf/common.hpp"
#include "cbf/dynamics.hpp"
#include "cbf/safe_sets.hpp"
#include "cbf/safety_filter.hpp"

namespace cbf {

// Uncertified policy: constant input or linear state feedback
// u = bias + gain * (goal - x).
struct Policy {
    enum class Kind { Constant, Proportional };
    Kind kind = Kind::Constant;
    Vec constant_u;
    Vec goal;
    Mat gain;  // m x n
    Vec bias;

    Vec operator()(const Vec& x) const;
};

enum class InfeasiblePolicy { HoldLast, LeastViolating };

struct SimulationConfig {
    double filter_rate = 100.0;  // Hz
    int substeps = 10;           // RK4 steps per filter period
    double duration = 20.0;      // seconds
    Vec x0;
    InfeasiblePolicy on_infeasible = InfeasiblePolicy::HoldLast;
};

struct TraceRow {
    double t = 0.0;
    Vec x;
    Vec u_nominal;
    Vec u_filtered;
    int status = 0;  // 0 pass-through, 1 modified, 2 infeasible
    double h_desired = 0.0;
    Vec h_q;
};

struct SimulationTrace {
    std::vector<TraceRow> rows;
    bool escaped = false;
    double escape_time = -1.0;
    int q_count = 0;
};

// Fixed-rate closed loop: zero-order hold of the filtered input over each
// filter period, RK4 integration inside the period. Deterministic. A state
// leaving the admissible box truncates the trace and sets the escape flag.
SimulationTrace run_closed_loop(const ControlAffineSystem& sys, const Policy& policy,
                                const MultiCbfFilter* filter, const SafeSetFunction* desired,
                                const SimulationConfig& config);

struct TraceMetrics {
    double min_h_desired = 0.0;
    int violation_steps = 0;
    double chattering_index = 0.0;  // mean |du| per filter step, last half of the trace
    double time_to_boundary = -1.0; // first time h_desired <= 0, -1 when never
    bool escaped = false;
};

TraceMetrics trace_metrics(const SimulationTrace& trace);

// CSV with header t,x0,..,u_nom,u_filt,status,h_des,h_1..h_Q
void write_trace_csv(const SimulationTrace& trace, std::ostream& os);

}  // namespace cbf
