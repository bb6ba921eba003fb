#include "cbf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace cbf {

Vec Policy::operator()(const Vec& x) const {
    if (kind == Kind::Constant) return constant_u;
    Vec u = gain * (goal - x);
    if (bias.size() > 0) u += bias;
    if (!all_finite(u)) throw std::runtime_error("Policy: non-finite input");
    return u;
}

namespace {

Vec rk4_step(const ControlAffineSystem& sys, const Vec& x, const Vec& u, double dt) {
    const Vec k1 = sys.dynamics(x, u);
    const Vec k2 = sys.dynamics(Vec(x + 0.5 * dt * k1), u);
    const Vec k3 = sys.dynamics(Vec(x + 0.5 * dt * k2), u);
    const Vec k4 = sys.dynamics(Vec(x + dt * k3), u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

SimulationTrace run_closed_loop(const ControlAffineSystem& sys, const Policy& policy,
                                const MultiCbfFilter* filter, const SafeSetFunction* desired,
                                const SimulationConfig& config) {
    if (config.filter_rate <= 0.0 || config.substeps < 1) {
        throw std::invalid_argument("run_closed_loop: invalid rate or substeps");
    }
    if (!sys.admissible.contains(config.x0)) {
        throw std::invalid_argument("run_closed_loop: initial state outside the admissible box");
    }
    const double period = 1.0 / config.filter_rate;
    const double dt = period / config.substeps;
    const int steps = static_cast<int>(std::llround(config.duration * config.filter_rate));

    SimulationTrace trace;
    trace.q_count = filter ? static_cast<int>(filter->cbfs.size()) : 0;
    trace.rows.reserve(steps + 1);

    Vec x = config.x0;
    Vec u_last;  // last applied input, for the hold-last fallback
    bool have_last = false;

    for (int k = 0; k <= steps; ++k) {
        TraceRow row;
        row.t = k * period;
        row.x = x;
        row.u_nominal = policy(x);

        if (filter) {
            const FilterResult fr = filter->filter(x, row.u_nominal);
            switch (fr.status) {
                case FilterStatus::PassThrough:
                    row.status = 0;
                    row.u_filtered = fr.u;
                    break;
                case FilterStatus::Modified:
                    row.status = 1;
                    row.u_filtered = fr.u;
                    break;
                case FilterStatus::Infeasible:
                    row.status = 2;
                    if (config.on_infeasible == InfeasiblePolicy::HoldLast && have_last) {
                        row.u_filtered = u_last;
                    } else {
                        row.u_filtered = filter->least_violating_input(x, row.u_nominal);
                    }
                    break;
            }
            row.h_q.resize(trace.q_count);
            for (int q = 0; q < trace.q_count; ++q) row.h_q[q] = filter->cbfs[q].value(x);
        } else {
            row.status = 0;
            row.u_filtered = row.u_nominal;
        }
        row.h_desired = desired ? (*desired)(x) : 0.0;

        trace.rows.push_back(row);
        u_last = row.u_filtered;
        have_last = true;
        if (k == steps) break;

        bool left_box = false;
        for (int s = 0; s < config.substeps; ++s) {
            x = rk4_step(sys, x, row.u_filtered, dt);
            if (!sys.admissible.contains(x)) {
                left_box = true;
                break;
            }
        }
        if (left_box) {
            trace.escaped = true;
            trace.escape_time = row.t + period;
            break;
        }
    }
    return trace;
}

TraceMetrics trace_metrics(const SimulationTrace& trace) {
    if (trace.rows.empty()) {
        throw std::invalid_argument("trace_metrics: empty trace");
    }
    TraceMetrics m;
    m.escaped = trace.escaped;
    m.min_h_desired = std::numeric_limits<double>::infinity();
    for (const auto& row : trace.rows) {
        m.min_h_desired = std::min(m.min_h_desired, row.h_desired);
        if (row.h_desired < 0.0) ++m.violation_steps;
        if (m.time_to_boundary < 0.0 && row.h_desired <= 0.0) m.time_to_boundary = row.t;
    }
    const size_t n = trace.rows.size();
    const size_t start = n / 2;
    double acc = 0.0;
    int count = 0;
    for (size_t k = std::max<size_t>(start, 1); k < n; ++k) {
        const Vec du = trace.rows[k].u_filtered - trace.rows[k - 1].u_filtered;
        acc += du.lpNorm<Eigen::Infinity>();
        ++count;
    }
    m.chattering_index = (count > 0) ? acc / count : 0.0;
    return m;
}

void write_trace_csv(const SimulationTrace& trace, std::ostream& os) {
    if (trace.rows.empty()) return;
    const int n = static_cast<int>(trace.rows.front().x.size());
    const int mu = static_cast<int>(trace.rows.front().u_nominal.size());
    os << "t";
    for (int i = 0; i < n; ++i) os << ",x" << i;
    os << (mu == 1 ? ",u_nom" : "");
    for (int i = 0; mu > 1 && i < mu; ++i) os << ",u_nom" << i;
    os << (mu == 1 ? ",u_filt" : "");
    for (int i = 0; mu > 1 && i < mu; ++i) os << ",u_filt" << i;
    os << ",status,h_des";
    for (int q = 1; q <= trace.q_count; ++q) os << ",h_" << q;
    os << "\n";
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << buf;
    };
    for (const auto& row : trace.rows) {
        put(row.t);
        for (int i = 0; i < n; ++i) {
            os << ",";
            put(row.x[i]);
        }
        for (int i = 0; i < mu; ++i) {
            os << ",";
            put(row.u_nominal[i]);
        }
        for (int i = 0; i < mu; ++i) {
            os << ",";
            put(row.u_filtered[i]);
        }
        os << "," << row.status << ",";
        put(row.h_desired);
        for (int q = 0; q < trace.q_count; ++q) {
            os << ",";
            put(row.h_q[q]);
        }
        os << "\n";
    }
}

}  // namespace cbf
