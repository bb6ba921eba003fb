// Timing comparison of the serial reference kernels against the OpenMP ones:
// PINN loss/gradient evaluation and the inactivity grid scan.

#include <chrono>
#include <cstdio>

#include "cbf/pinn.hpp"
#include "cbf/relative_degree.hpp"
#include "cbf/safe_sets.hpp"

using namespace cbf;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

}  // namespace

int main() {
    Vec lo(2), hi(2);
    lo << -2.0, -2.0;
    hi << 2.0, 2.0;
    const Box box(lo, hi);

    std::printf("worker pool: %d threads (CBF_FORGE_THREADS caps it)\n\n", par::thread_cap());

    // PINN loss + weight gradients, paper-size network
    {
        PinnArchitecture arch;
        arch.widths = {2, 100, 100, 100, 1};
        PinnModel model = init_model(arch, 42);
        const int n_phy = 4096;
        TrainingConfig cfg;
        cfg.d_phy = halton_points(n_phy, box);
        cfg.phys_targets = Mat::Ones(n_phy, 2);
        cfg.d_bc = halton_points(256, box, 100000);
        Vec grad;

        LossBreakdown serial_loss{}, parallel_loss{};
        const double t_serial = time_best_of(3, [&] {
            serial_loss = loss_and_weight_gradients(model, cfg, &grad, par::Exec::serial);
        });
        const double t_parallel = time_best_of(3, [&] {
            parallel_loss = loss_and_weight_gradients(model, cfg, &grad, par::Exec::openmp);
        });
        std::printf("pinn loss+grad (3x100 net, %d phys points)\n", n_phy);
        std::printf("  serial   %8.2f ms\n", t_serial);
        std::printf("  openmp   %8.2f ms   speedup %.2fx\n", t_parallel, t_serial / t_parallel);
        std::printf("  results identical: %s\n\n",
                    (serial_loss.total == parallel_loss.total) ? "yes" : "NO");
    }

    // inactivity grid scan
    {
        QuadrotorZParams params;
        const auto sys = quadrotor_z_system(params, box);
        Mat shape(2, 2);
        shape << 1.0 / 2.25, 0.0, 0.0, 1.0;
        const auto set = ellipsoid_safe_set(Vec::Zero(2), shape);

        InactivityReport rs, rp;
        const double t_serial = time_best_of(3, [&] {
            rs = scan_inactivity(sys, set, 2048, 1e-7, 1e-3, par::Exec::serial);
        });
        const double t_parallel = time_best_of(3, [&] {
            rp = scan_inactivity(sys, set, 2048, 1e-7, 1e-3, par::Exec::openmp);
        });
        std::printf("inactivity scan (2048x2048 grid)\n");
        std::printf("  serial   %8.2f ms\n", t_serial);
        std::printf("  openmp   %8.2f ms   speedup %.2fx\n", t_parallel, t_serial / t_parallel);
        std::printf("  results identical: %s\n", (rs.locus.size() == rp.locus.size()) ? "yes" : "NO");
    }
    return 0;
}
