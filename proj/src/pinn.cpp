#include "cbf/pinn.hpp"

#include <algorithm>
#include <cmath>

namespace cbf {

int PinnArchitecture::parameter_count() const {
    int p = 0;
    for (int l = 0; l + 1 < static_cast<int>(widths.size()); ++l) {
        p += widths[l + 1] * (widths[l] + 1);
    }
    return p;
}

void PinnArchitecture::validate() const {
    if (widths.size() < 3) {
        throw std::invalid_argument("PinnArchitecture: need at least one hidden layer");
    }
    if (widths.back() != 1) {
        throw std::invalid_argument("PinnArchitecture: output width must be 1");
    }
    for (int w : widths) {
        if (w < 1) throw std::invalid_argument("PinnArchitecture: widths must be positive");
    }
}

namespace {

// forward pass storing activations; Jacobians filled only when with_jacobian
struct PointWork {
    std::vector<Vec> a;    // a[l], l = 0..L-1 (a[0] = x)
    std::vector<Vec> z;    // z[l], l = 0..L-1
    std::vector<Mat> jz;   // dz[l]/dx
    std::vector<Mat> ja;   // da[l]/dx
    double y = 0.0;

    void resize(const std::vector<int>& w) {
        const int L = static_cast<int>(w.size()) - 1;
        a.resize(L);
        z.resize(L);
        jz.resize(L);
        ja.resize(L);
        const int n = w[0];
        for (int l = 0; l < L; ++l) {
            a[l].resize(w[l]);
            z[l].resize(w[l + 1]);
            jz[l].resize(w[l + 1], n);
            ja[l].resize(w[l], n);
        }
    }
};

void forward_point(const PinnModel& m, const Vec& x, bool with_jacobian, PointWork& wk) {
    const auto& w = m.arch.widths;
    const int L = m.arch.layer_count();
    const int n = w[0];
    wk.a[0] = x;
    if (with_jacobian) wk.ja[0] = Mat::Identity(n, n);
    for (int l = 0; l < L; ++l) {
        wk.z[l].noalias() = m.weights[l] * wk.a[l];
        wk.z[l] += m.biases[l];
        if (with_jacobian) wk.jz[l].noalias() = m.weights[l] * wk.ja[l];
        if (l + 1 < L) {
            wk.a[l + 1] = wk.z[l].array().tanh();
            if (with_jacobian) {
                const Vec d = (1.0 - wk.a[l + 1].array().square()).matrix();
                wk.ja[l + 1] = d.asDiagonal() * wk.jz[l];
            }
        }
    }
    wk.y = wk.z[L - 1][0];
}

// adjoint pass; y_bar seeds the scalar output, jy_bar (1 x n) the output
// Jacobian row. Accumulates into per-layer gradient buffers.
void backward_point(const PinnModel& m, const PointWork& wk, double y_bar,
                    const Eigen::RowVectorXd& jy_bar, bool with_jacobian,
                    std::vector<Mat>& w_grad, std::vector<Vec>& b_grad) {
    const int L = m.arch.layer_count();
    Vec z_bar = Vec::Constant(1, y_bar);
    Mat jz_bar;
    if (with_jacobian) jz_bar = jy_bar;

    for (int l = L - 1; l >= 0; --l) {
        w_grad[l].noalias() += z_bar * wk.a[l].transpose();
        if (with_jacobian) w_grad[l].noalias() += jz_bar * wk.ja[l].transpose();
        b_grad[l] += z_bar;
        if (l == 0) break;

        Vec a_bar = m.weights[l].transpose() * z_bar;
        Mat ja_bar;
        if (with_jacobian) ja_bar.noalias() = m.weights[l].transpose() * jz_bar;

        // through a[l] = tanh(z[l-1])
        const auto& a = wk.a[l];
        Vec d = (1.0 - a.array().square()).matrix();
        Vec z_prev_bar = d.cwiseProduct(a_bar);
        if (with_jacobian) {
            // d depends on z[l-1]: dd/dz = -2 a (1 - a^2)
            const Vec dprime = (-2.0 * a.array() * (1.0 - a.array().square())).matrix();
            const Vec rowdot = (wk.jz[l - 1].array() * ja_bar.array()).rowwise().sum().matrix();
            z_prev_bar += dprime.cwiseProduct(rowdot);
            jz_bar = d.asDiagonal() * ja_bar;
        }
        z_bar = std::move(z_prev_bar);
    }
}

}  // namespace

double PinnModel::phi(const Vec& x) const {
    thread_local PointWork wk;
    wk.resize(arch.widths);
    forward_point(*this, x, false, wk);
    return wk.y;
}

Vec PinnModel::phi_gradient(const Vec& x) const {
    thread_local PointWork wk;
    wk.resize(arch.widths);
    forward_point(*this, x, true, wk);
    return wk.jz[arch.layer_count() - 1].row(0).transpose();
}

double PinnModel::forward(const Vec& x) const {
    const double y = phi(x);
    if (arch.hard_boundary) {
        return factor->value(x) * y;
    }
    return y;
}

Vec PinnModel::input_gradient(const Vec& x) const {
    thread_local PointWork wk;
    wk.resize(arch.widths);
    forward_point(*this, x, true, wk);
    Vec grad_phi = wk.jz[arch.layer_count() - 1].row(0).transpose();
    if (arch.hard_boundary) {
        const double f = factor->value(x);
        const Vec fg = factor->lookup(x);
        return f * grad_phi + wk.y * fg;
    }
    return grad_phi;
}

Vec PinnModel::pack_parameters() const {
    Vec theta(arch.parameter_count());
    int k = 0;
    for (int l = 0; l < arch.layer_count(); ++l) {
        for (int r = 0; r < weights[l].rows(); ++r) {
            for (int c = 0; c < weights[l].cols(); ++c) theta[k++] = weights[l](r, c);
        }
        for (int r = 0; r < biases[l].size(); ++r) theta[k++] = biases[l][r];
    }
    return theta;
}

void PinnModel::unpack_parameters(const Vec& theta) {
    int k = 0;
    for (int l = 0; l < arch.layer_count(); ++l) {
        for (int r = 0; r < weights[l].rows(); ++r) {
            for (int c = 0; c < weights[l].cols(); ++c) weights[l](r, c) = theta[k++];
        }
        for (int r = 0; r < biases[l].size(); ++r) biases[l][r] = theta[k++];
    }
}

PinnModel init_model(const PinnArchitecture& arch, std::uint64_t seed,
                     std::optional<TargetGradientField> factor) {
    arch.validate();
    if (arch.hard_boundary && !factor.has_value()) {
        throw std::invalid_argument("init_model: hard boundary mode needs a factor");
    }
    PinnModel m;
    m.arch = arch;
    m.factor = std::move(factor);
    m.seed = seed;
    Rng rng(seed);
    for (int l = 0; l < arch.layer_count(); ++l) {
        const int rows = arch.widths[l + 1];
        const int cols = arch.widths[l];
        const double s = 1.0 / std::sqrt(static_cast<double>(cols));
        Mat w(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-s, s);
        }
        m.weights.push_back(std::move(w));
        m.biases.push_back(Vec::Zero(rows));
    }
    return m;
}

namespace {

struct ChunkAccum {
    double phys_sum = 0.0;
    double bc_sum = 0.0;
    Vec grad;  // packed layout, empty when gradients are not requested
};

}  // namespace

LossBreakdown loss_and_weight_gradients(const PinnModel& model, const TrainingConfig& config,
                                        Vec* grad_out, par::Exec exec) {
    const int n_phy = static_cast<int>(config.d_phy.rows());
    const int n_bc = static_cast<int>(config.d_bc.rows());
    const bool hard = model.arch.hard_boundary;
    const bool want_grad = grad_out != nullptr;
    const int P = model.arch.parameter_count();
    const int L = model.arch.layer_count();

    if (n_phy < 1) throw std::invalid_argument("loss: empty physics collocation set");
    if (!hard && n_bc < 1) throw std::invalid_argument("loss: empty boundary set in soft mode");
    if (config.phys_targets.rows() != n_phy) {
        throw std::invalid_argument("loss: physics target count mismatch");
    }
    if (hard && (config.factor_values.size() != n_phy || config.factor_grads.rows() != n_phy)) {
        throw std::invalid_argument("loss: hard mode factor tables missing");
    }

    const auto layout = par::chunks_for(n_phy);
    const auto bc_layout = par::chunks_for(hard ? 0 : n_bc);
    const std::int64_t tasks = layout.chunk_count + bc_layout.chunk_count;
    std::vector<ChunkAccum> acc(tasks);

    par::for_index(exec, tasks, [&](std::int64_t task) {
        ChunkAccum& out = acc[task];
        if (want_grad) out.grad = Vec::Zero(P);
        PointWork wk;
        wk.resize(model.arch.widths);
        std::vector<Mat> w_grad;
        std::vector<Vec> b_grad;
        if (want_grad) {
            for (int l = 0; l < L; ++l) {
                w_grad.push_back(Mat::Zero(model.weights[l].rows(), model.weights[l].cols()));
                b_grad.push_back(Vec::Zero(model.biases[l].size()));
            }
        }
        const bool is_phys = task < layout.chunk_count;
        const std::int64_t base =
            is_phys ? task * layout.chunk_size : (task - layout.chunk_count) * bc_layout.chunk_size;
        const std::int64_t count = is_phys ? std::min<std::int64_t>(layout.chunk_size, n_phy - base)
                                           : std::min<std::int64_t>(bc_layout.chunk_size, n_bc - base);

        for (std::int64_t i = 0; i < count; ++i) {
            const std::int64_t row = base + i;
            if (is_phys) {
                const Vec x = config.d_phy.row(row).transpose();
                forward_point(model, x, true, wk);
                Vec grad_h = wk.jz[L - 1].row(0).transpose();
                double y_bar = 0.0;
                if (hard) {
                    const double f = config.factor_values[row];
                    const Vec fg = config.factor_grads.row(row).transpose();
                    grad_h = f * grad_h + wk.y * fg;
                    const Vec r = grad_h - config.phys_targets.row(row).transpose();
                    out.phys_sum += r.squaredNorm();
                    if (want_grad) {
                        y_bar = 2.0 * r.dot(fg);
                        Eigen::RowVectorXd jy_bar = (2.0 * f) * r.transpose();
                        backward_point(model, wk, y_bar, jy_bar, true, w_grad, b_grad);
                    }
                } else {
                    const Vec r = grad_h - config.phys_targets.row(row).transpose();
                    out.phys_sum += r.squaredNorm();
                    if (want_grad) {
                        Eigen::RowVectorXd jy_bar = 2.0 * r.transpose();
                        backward_point(model, wk, 0.0, jy_bar, true, w_grad, b_grad);
                    }
                }
            } else {
                const Vec x = config.d_bc.row(row).transpose();
                forward_point(model, x, false, wk);
                out.bc_sum += wk.y * wk.y;
                if (want_grad) {
                    backward_point(model, wk, 2.0 * wk.y, Eigen::RowVectorXd(), false, w_grad,
                                   b_grad);
                }
            }
        }

        if (want_grad) {
            // pack: physics chunks carry phys-loss grads, bc chunks bc-loss grads
            int k = 0;
            for (int l = 0; l < L; ++l) {
                for (int r = 0; r < w_grad[l].rows(); ++r) {
                    for (int c = 0; c < w_grad[l].cols(); ++c) out.grad[k++] = w_grad[l](r, c);
                }
                for (int r = 0; r < b_grad[l].size(); ++r) out.grad[k++] = b_grad[l][r];
            }
        }
    });

    // fixed-order combination
    LossBreakdown loss;
    Vec phys_grad, bc_grad;
    if (want_grad) {
        phys_grad = Vec::Zero(P);
        bc_grad = Vec::Zero(P);
    }
    for (std::int64_t t = 0; t < tasks; ++t) {
        loss.e_phy += acc[t].phys_sum;
        loss.e_bc += acc[t].bc_sum;
        if (want_grad) {
            if (t < layout.chunk_count) {
                phys_grad += acc[t].grad;
            } else {
                bc_grad += acc[t].grad;
            }
        }
    }
    loss.e_phy /= n_phy;
    if (!hard) loss.e_bc /= n_bc;
    loss.total = loss.e_phy + (hard ? 0.0 : config.lambda * loss.e_bc);
    if (want_grad) {
        *grad_out = phys_grad / n_phy;
        if (!hard) *grad_out += (config.lambda / n_bc) * bc_grad;
    }
    return loss;
}

PinnModel train(const PinnArchitecture& arch, const TrainingConfig& config,
                std::optional<TargetGradientField> factor) {
    PinnModel model = init_model(arch, config.seed, std::move(factor));
    const int P = arch.parameter_count();

    Vec theta = model.pack_parameters();
    Vec m1 = Vec::Zero(P);
    Vec m2 = Vec::Zero(P);
    Vec grad(P);

    TrainingConfig cfg = config;  // lambda may be retuned in place
    LossBreakdown loss{};
    int it = 0;
    for (; it < config.iterations; ++it) {
        loss = loss_and_weight_gradients(model, cfg, &grad, config.exec);
        if (!std::isfinite(loss.total)) {
            throw TrainingDivergedError("train: loss became non-finite at iteration " +
                                        std::to_string(it));
        }
        if (config.loss_target > 0.0 && loss.total < config.loss_target) break;
        if (cfg.auto_lambda && !arch.hard_boundary && it > 0 && it % 200 == 0 &&
            loss.e_bc > 0.0) {
            cfg.lambda = std::clamp(loss.e_phy / loss.e_bc, 1e-2, 1e6);
        }

        const double b1t = 1.0 - std::pow(config.beta1, it + 1);
        const double b2t = 1.0 - std::pow(config.beta2, it + 1);
        double step = config.step;
        if (config.step_final > 0.0 && config.step_final < config.step && config.iterations > 1) {
            const double frac = static_cast<double>(it) / (config.iterations - 1);
            step = config.step * std::pow(config.step_final / config.step, frac);
        }
        for (int k = 0; k < P; ++k) {
            m1[k] = config.beta1 * m1[k] + (1.0 - config.beta1) * grad[k];
            m2[k] = config.beta2 * m2[k] + (1.0 - config.beta2) * grad[k] * grad[k];
            const double mh = m1[k] / b1t;
            const double vh = m2[k] / b2t;
            theta[k] -= step * mh / (std::sqrt(vh) + config.adam_eps);
        }
        model.unpack_parameters(theta);
    }

    loss = loss_and_weight_gradients(model, cfg, nullptr, config.exec);
    if (!std::isfinite(loss.total)) {
        throw TrainingDivergedError("train: final loss is non-finite");
    }
    model.final_e_phy = loss.e_phy;
    model.final_e_bc = loss.e_bc;
    model.iterations_run = it;
    return model;
}

}  // namespace cbf
