#pragma once

#include <vector>

#include "affordkit/field.hpp"

namespace affordkit::scbr {

/// Log arguments are clamped to [kClampEps, 1 - kClampEps].
inline constexpr double kClampEps = 1e-6;
/// Smoothing inside the KL logarithms.
inline constexpr double kKlEps = 1e-12;

struct LossInputs {
    ScalarField p_img;   // image-branch prediction
    ScalarField p_sem;   // mask-guided branch prediction
    ScalarField gt;      // normalized ground truth in [0,1]
    BinaryMask m_bound;  // band around the GT boundary
};

struct WeightSchedule {
    double lambda_base_con = 0.1;
    double lambda_base_grad = 0.1;
    double epsilon = 1e-2;
    double lambda_max = 1.0;
};

struct Weights {
    double con = 0.0;
    double grad = 0.0;
};

struct LossValue {
    double value = 0.0;
    ScalarField grad;
};

struct BranchLossValue {
    double value = 0.0;
    ScalarField grad_img;
    ScalarField grad_sem;
};

struct LossReport {
    double l_sup = 0.0;
    double l_con = 0.0;
    double l_grad = 0.0;
    double l_total = 0.0;
    double lambda_con = 0.0;
    double lambda_grad = 0.0;
    ScalarField grad_p_img;
    ScalarField grad_p_sem;
};

/// Mean binary cross-entropy and its gradient w.r.t. p.
LossValue bce_loss(const ScalarField& p, const ScalarField& g);

/// BCE(p_img, gt) + BCE(p_sem, gt).
BranchLossValue dual_stream_sup(const LossInputs& in);

/// Half the sum of both KL directions between the sum-normalized maps, with
/// gradients carried back through the normalization.
BranchLossValue sym_kl_consistency(const ScalarField& p_img, const ScalarField& p_sem);

/// Mean over all pixels of (|gx| m)^2 + (|gy| m)^2 for the Sobel response of p.
LossValue boundary_grad_penalty(const ScalarField& p, const BinaryMask& m_bound);

/// lambda_k = min(base_k / (l_sup + epsilon), lambda_max).
Weights dynamic_weights(double l_sup, const WeightSchedule& s);

/// L_sup + lambda_con L_con + lambda_grad L_grad. The boundary penalty is
/// applied to both branches and summed. Weights are constants in the
/// backward pass.
LossReport total_loss(const LossInputs& in, const WeightSchedule& s);

struct OptimizeResult {
    std::vector<LossReport> trajectory;  // steps + 1 entries, initial state first
    ScalarField p_img;
    ScalarField p_sem;
};

/// Gradient descent on the logits of both branches. `step_size` scales the
/// per-pixel gradient (the mean-reduced gradient times the pixel count), so
/// its meaning does not depend on resolution.
OptimizeResult optimize_heatmap(const LossInputs& init, const WeightSchedule& s, int steps, double step_size);

/// Fraction of the prediction's mass lying where gt == 0.
double overflow_fraction(const ScalarField& p, const ScalarField& gt);

}  // namespace affordkit::scbr
