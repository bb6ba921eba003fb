#pragma once

#include <functional>
#include <string>

#include "cbf/common.hpp"

namespace cbf {

// Control-affine system xdot = f(x) + g(x) u. Values are immutable after
// construction and safe to share across threads for read-only evaluation.
struct ControlAffineSystem {
    std::string name;
    int state_dim = 0;
    int input_dim = 0;
    std::function<Vec(const Vec&)> drift;         // f
    std::function<Mat(const Vec&)> input_matrix;  // g, n x m
    Box admissible;

    Vec dynamics(const Vec& x, const Vec& u) const;
};

inline Vec evaluate_dynamics(const ControlAffineSystem& sys, const Vec& x, const Vec& u) {
    return sys.dynamics(x, u);
}

struct QuadrotorZParams {
    double k1 = 20.91;     // acceleration bias, m/s^2
    double k2 = 3.65;      // input gain
    double gravity = 9.81; // m/s^2
};

// Vertical-axis quadrotor: state (z, zdot), input is mass-normalized thrust.
// g(x) = [0, k2]^T is constant over the state space.
ControlAffineSystem quadrotor_z_system(const QuadrotorZParams& params,
                                       const Box& admissible);
ControlAffineSystem quadrotor_z_system(const QuadrotorZParams& params);

// 1-D single integrator xdot = u.
ControlAffineSystem single_integrator(double x_lo = -1.5, double x_hi = 1.5);

}  // namespace cbf
