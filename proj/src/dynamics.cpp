#include "cbf/dynamics.hpp"

namespace cbf {

Vec ControlAffineSystem::dynamics(const Vec& x, const Vec& u) const {
    if (x.size() != state_dim || u.size() != input_dim) {
        throw std::invalid_argument(name + ": dimension mismatch in dynamics evaluation");
    }
    Vec dx = drift(x) + input_matrix(x) * u;
    if (!all_finite(dx)) {
        throw std::runtime_error(name + ": non-finite state derivative");
    }
    return dx;
}

ControlAffineSystem quadrotor_z_system(const QuadrotorZParams& params, const Box& admissible) {
    if (params.k2 == 0.0) {
        throw std::invalid_argument("quadrotor_z_system: k2 must be nonzero");
    }
    if (admissible.dim() != 2) {
        throw std::invalid_argument("quadrotor_z_system: admissible box must be 2-D");
    }
    ControlAffineSystem sys;
    sys.name = "quadrotor_z";
    sys.state_dim = 2;
    sys.input_dim = 1;
    const double k1 = params.k1;
    const double k2 = params.k2;
    const double gravity = params.gravity;
    sys.drift = [k1, gravity](const Vec& x) {
        Vec f(2);
        f[0] = x[1];
        f[1] = k1 - gravity;
        return f;
    };
    sys.input_matrix = [k2](const Vec&) {
        Mat g(2, 1);
        g(0, 0) = 0.0;
        g(1, 0) = k2;
        return g;
    };
    sys.admissible = admissible;
    return sys;
}

ControlAffineSystem quadrotor_z_system(const QuadrotorZParams& params) {
    Vec lo(2), hi(2);
    lo << -2.0, -2.0;
    hi << 2.0, 2.0;
    return quadrotor_z_system(params, Box(lo, hi));
}

ControlAffineSystem single_integrator(double x_lo, double x_hi) {
    ControlAffineSystem sys;
    sys.name = "single_integrator";
    sys.state_dim = 1;
    sys.input_dim = 1;
    sys.drift = [](const Vec&) { return Vec::Zero(1); };
    sys.input_matrix = [](const Vec&) { return Mat::Ones(1, 1); };
    Vec lo(1), hi(1);
    lo << x_lo;
    hi << x_hi;
    sys.admissible = Box(lo, hi);
    return sys;
}

}  // namespace cbf
