#pragma once

#include <optional>
#include <vector>

#include "cbf/common.hpp"
#include "cbf/parallel.hpp"
#include "cbf/target_field.hpp"

namespace cbf {

// Fully connected tanh network with scalar output. In hard-boundary mode the
// output is multiplied by a trial-function factor F that vanishes on the
// segment boundary, so the boundary condition holds by construction.
struct PinnArchitecture {
    std::vector<int> widths;  // input, hidden..., output(=1)
    bool hard_boundary = false;

    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int parameter_count() const;
    void validate() const;
};

struct PinnModel {
    PinnArchitecture arch;
    std::vector<Mat> weights;  // layer l: widths[l+1] x widths[l]
    std::vector<Vec> biases;
    std::optional<TargetGradientField> factor;  // hard mode trial function

    std::uint64_t seed = 0;
    double final_e_phy = 0.0;
    double final_e_bc = 0.0;
    int iterations_run = 0;

    // raw network output and its input gradient
    double phi(const Vec& x) const;
    Vec phi_gradient(const Vec& x) const;

    // full model output H (factor applied in hard mode)
    double forward(const Vec& x) const;
    Vec input_gradient(const Vec& x) const;

    Vec pack_parameters() const;
    void unpack_parameters(const Vec& theta);
};

PinnModel init_model(const PinnArchitecture& arch, std::uint64_t seed,
                     std::optional<TargetGradientField> factor = std::nullopt);

struct TrainingConfig {
    Mat d_phy;          // N x n collocation points
    Mat phys_targets;   // N x n designed gradient targets
    Mat d_bc;           // M x n boundary points (soft mode)

    // hard mode: factor values/gradients precomputed at d_phy
    Vec factor_values;
    Mat factor_grads;

    double lambda = 10.0;
    bool auto_lambda = false;

    double step = 1e-3;
    double step_final = 0.0;  // > 0 enables exponential step decay toward this value
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int iterations = 20000;
    double loss_target = 0.0;  // 0 disables early stopping
    std::uint64_t seed = 0;
    par::Exec exec = par::Exec::openmp;
};

struct LossBreakdown {
    double e_phy = 0.0;
    double e_bc = 0.0;
    double total = 0.0;
};

// Loss over the collocation sets and, when grad_out is non-null, the exact
// gradient with respect to every weight and bias (reverse mode through the
// input-gradient computation). Work is split into fixed chunks combined in
// index order, so serial and parallel execution agree bitwise.
LossBreakdown loss_and_weight_gradients(const PinnModel& model, const TrainingConfig& config,
                                        Vec* grad_out, par::Exec exec);

// Serial reference path, kept for testing against the parallel kernel.
inline LossBreakdown loss_and_weight_gradients_serial(const PinnModel& model,
                                                      const TrainingConfig& config,
                                                      Vec* grad_out) {
    return loss_and_weight_gradients(model, config, grad_out, par::Exec::serial);
}

// Adaptive-moment full-batch training from a seeded fan-in initialization.
// Deterministic given the seed. Throws TrainingDivergedError when the loss
// becomes non-finite.
PinnModel train(const PinnArchitecture& arch, const TrainingConfig& config,
                std::optional<TargetGradientField> factor = std::nullopt);

}  // namespace cbf
