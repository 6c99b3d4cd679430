#include "affordkit/scbr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace affordkit::scbr {

namespace {

double clamp_prob(double p) { return std::clamp(p, kClampEps, 1.0 - kClampEps); }

void check_inputs(const LossInputs& in) {
    require_same_shape(in.p_img, in.gt, "p_img and gt differ in size");
    require_same_shape(in.p_sem, in.gt, "p_sem and gt differ in size");
    require_same_shape(in.m_bound, in.gt, "m_bound and gt differ in size");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

LossValue bce_loss(const ScalarField& p, const ScalarField& g) {
    require_same_shape(p, g, "bce_loss: prediction and target differ in size");
    const auto n = static_cast<double>(p.size());
    LossValue out{0.0, ScalarField(p.width(), p.height())};
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = clamp_prob(p[i]);
        out.value -= g[i] * std::log(q) + (1.0 - g[i]) * std::log(1.0 - q);
        out.grad[i] = (q - g[i]) / (q * (1.0 - q)) / n;
    }
    out.value /= n;
    return out;
}

BranchLossValue dual_stream_sup(const LossInputs& in) {
    LossValue a = bce_loss(in.p_img, in.gt);
    LossValue b = bce_loss(in.p_sem, in.gt);
    return {a.value + b.value, std::move(a.grad), std::move(b.grad)};
}

BranchLossValue sym_kl_consistency(const ScalarField& p_img, const ScalarField& p_sem) {
    require_same_shape(p_img, p_sem, "sym_kl_consistency: branches differ in size");
    const ScalarField a = sum_normalize(p_img);
    const ScalarField b = sum_normalize(p_sem);
    const double sa = p_img.sum();
    const double sb = p_sem.sum();

    // 0.5 * sum (a - b)(log(a+e) - log(b+e)) equals the symmetric KL sum.
    BranchLossValue out{0.0, ScalarField(a.width(), a.height()), ScalarField(a.width(), a.height())};
    ScalarField da(a.width(), a.height());
    ScalarField db(a.width(), a.height());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double la = std::log(a[i] + kKlEps);
        const double lb = std::log(b[i] + kKlEps);
        const double diff = a[i] - b[i];
        out.value += 0.5 * diff * (la - lb);
        da[i] = 0.5 * ((la - lb) + diff / (a[i] + kKlEps));
        db[i] = 0.5 * ((lb - la) - diff / (b[i] + kKlEps));
    }
    // Through q_i = p_i / S: dL/dp_j = (dL/dq_j - sum_i dL/dq_i q_i) / S.
    double dot_a = 0.0;
    double dot_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot_a += da[i] * a[i];
        dot_b += db[i] * b[i];
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.grad_img[i] = (da[i] - dot_a) / sa;
        out.grad_sem[i] = (db[i] - dot_b) / sb;
    }
    return out;
}

LossValue boundary_grad_penalty(const ScalarField& p, const BinaryMask& m_bound) {
    require_same_shape(p, m_bound, "boundary_grad_penalty: mask and prediction differ in size");
    const GradientPair g = sobel_gradients(p);
    const auto n = static_cast<double>(p.size());
    LossValue out{0.0, ScalarField()};
    ScalarField rx(p.width(), p.height());
    ScalarField ry(p.width(), p.height());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = m_bound[i] ? 1.0 : 0.0;
        const double ex = std::abs(g.gx[i]) * m;
        const double ey = std::abs(g.gy[i]) * m;
        out.value += ex * ex + ey * ey;
        rx[i] = 2.0 * m * m * g.gx[i] / n;
        ry[i] = 2.0 * m * m * g.gy[i] / n;
    }
    out.value /= n;
    out.grad = sobel_adjoint(rx, ry);
    return out;
}

Weights dynamic_weights(double l_sup, const WeightSchedule& s) {
    if (l_sup < 0.0) fail(ErrorCode::InvalidArgument, "l_sup must be non-negative");
    if (!(s.epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "weight schedule epsilon must be positive");
    const double inv = 1.0 / (l_sup + s.epsilon);
    return {std::min(s.lambda_base_con * inv, s.lambda_max), std::min(s.lambda_base_grad * inv, s.lambda_max)};
}

LossReport total_loss(const LossInputs& in, const WeightSchedule& s) {
    check_inputs(in);
    const BranchLossValue sup = dual_stream_sup(in);
    const BranchLossValue con = sym_kl_consistency(in.p_img, in.p_sem);
    const LossValue grad_img = boundary_grad_penalty(in.p_img, in.m_bound);
    const LossValue grad_sem = boundary_grad_penalty(in.p_sem, in.m_bound);
    const Weights w = dynamic_weights(sup.value, s);

    LossReport r;
    r.l_sup = sup.value;
    r.l_con = con.value;
    r.l_grad = grad_img.value + grad_sem.value;
    r.lambda_con = w.con;
    r.lambda_grad = w.grad;
    r.l_total = r.l_sup + w.con * r.l_con + w.grad * r.l_grad;
    r.grad_p_img = sup.grad_img + w.con * con.grad_img + w.grad * grad_img.grad;
    r.grad_p_sem = sup.grad_sem + w.con * con.grad_sem + w.grad * grad_sem.grad;
    return r;
}

OptimizeResult optimize_heatmap(const LossInputs& init, const WeightSchedule& s, int steps, double step_size) {
    if (steps < 1) fail(ErrorCode::InvalidArgument, "optimize_heatmap needs at least one step");
    check_inputs(init);

    auto to_logit = [](const ScalarField& p) {
        ScalarField z = p;
        for (double& v : z.values()) {
            const double q = clamp_prob(v);
            v = std::log(q / (1.0 - q));
        }
        return z;
    };
    auto to_prob = [](const ScalarField& z) {
        ScalarField p = z;
        for (double& v : p.values()) v = sigmoid(v);
        return p;
    };

    ScalarField z_img = to_logit(init.p_img);
    ScalarField z_sem = to_logit(init.p_sem);
    LossInputs cur = init;
    cur.p_img = to_prob(z_img);
    cur.p_sem = to_prob(z_sem);
    const double scale = step_size * static_cast<double>(init.gt.size());

    OptimizeResult out;
    out.trajectory.reserve(static_cast<std::size_t>(steps) + 1);
    for (int step = 0; step <= steps; ++step) {
        LossReport r = total_loss(cur, s);
        if (!std::isfinite(r.l_total)) {
            fail(ErrorCode::NonFiniteLoss, "non-finite SCBR loss at step " + std::to_string(step));
        }
        if (step < steps) {
            for (std::size_t i = 0; i < z_img.size(); ++i) {
                // dp/dz = p (1 - p) for the logistic parameterization
                z_img[i] -= scale * r.grad_p_img[i] * cur.p_img[i] * (1.0 - cur.p_img[i]);
                z_sem[i] -= scale * r.grad_p_sem[i] * cur.p_sem[i] * (1.0 - cur.p_sem[i]);
            }
            cur.p_img = to_prob(z_img);
            cur.p_sem = to_prob(z_sem);
        }
        out.trajectory.push_back(std::move(r));
    }
    out.p_img = std::move(cur.p_img);
    out.p_sem = std::move(cur.p_sem);
    return out;
}

double overflow_fraction(const ScalarField& p, const ScalarField& gt) {
    require_same_shape(p, gt, "overflow_fraction: fields differ in size");
    double outside = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        total += p[i];
        if (gt[i] <= 0.0) outside += p[i];
    }
    if (total <= 0.0) fail(ErrorCode::AllZeroField, "overflow_fraction of an all-zero prediction");
    return outside / total;
}

}  // namespace affordkit::scbr
