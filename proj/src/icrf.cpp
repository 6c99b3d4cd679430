#include "affordkit/icrf.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "affordkit/rng.hpp"

namespace affordkit::icrf {

namespace {

void check_time(double t, const char* name) {
    if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::TimeOutOfRange, std::string(name) + " must lie in [0,1]");
}

}  // namespace

ScalarField interpolate_state(const ScalarField& x0, const ScalarField& x1, double t) {
    require_same_shape(x0, x1, "interpolate_state: x0 and x1 differ in size");
    check_time(t, "t");
    ScalarField out(x0.width(), x0.height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
    return out;
}

ScalarField interpolate_velocity(const ScalarField& v0, const ScalarField& x0, const ScalarField& x1, double tau) {
    require_same_shape(x0, x1, "interpolate_velocity: x0 and x1 differ in size");
    require_same_shape(v0, x0, "interpolate_velocity: v0 and x0 differ in size");
    check_time(tau, "tau");
    ScalarField out(x0.width(), x0.height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - tau) * v0[i] + tau * (x1[i] - x0[i]);
    return out;
}

ScalarField acceleration_target(const ScalarField& x0, const ScalarField& x1, const ScalarField& v0) {
    require_same_shape(x0, x1, "acceleration_target: x0 and x1 differ in size");
    require_same_shape(v0, x0, "acceleration_target: v0 and x0 differ in size");
    ScalarField out(x0.width(), x0.height());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x1[i] - x0[i]) - v0[i];
    return out;
}

FlowSample make_sample(const ScalarField& x0, const ScalarField& x1, double t, double tau, const ScalarField& v0) {
    FlowSample s;
    s.x_t = interpolate_state(x0, x1, t);
    s.v_tau = interpolate_velocity(v0, x0, x1, tau);
    s.a_gt = acceleration_target(x0, x1, v0);
    s.x0 = x0;
    s.x1 = x1;
    s.v0 = v0;
    s.t = t;
    s.tau = tau;
    return s;
}

// ---------------------------------------------------------------------------

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    fail(ErrorCode::InvalidArgument, "unknown activation '" + name + "'");
}

int Architecture::input_dim() const {
    const int side = 2 * patch_radius + 1;
    return 2 * side * side + 4;
}

std::size_t Architecture::parameter_count() const {
    std::size_t count = 0;
    std::size_t in = static_cast<std::size_t>(input_dim());
    for (int h : hidden) {
        count += static_cast<std::size_t>(h) * in + static_cast<std::size_t>(h);
        in = static_cast<std::size_t>(h);
    }
    return count + in;
}

namespace {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

void validate(const Architecture& arch) {
    if (arch.patch_radius < 0) fail(ErrorCode::InvalidArgument, "patch_radius must be non-negative");
    for (int h : arch.hidden) {
        if (h <= 0) fail(ErrorCode::InvalidArgument, "hidden widths must be positive");
    }
}

double coord(int i, int n) { return n > 1 ? static_cast<double>(i) / (n - 1) : 0.5; }

// One column per pixel (column-major, so each pixel's features are contiguous).
Matrix build_features(const Architecture& arch, const ScalarField& x, const ScalarField& v, double t, double tau) {
    const int w = x.width();
    const int h = x.height();
    const int r = arch.patch_radius;
    const int side = 2 * r + 1;
    const int patch = side * side;
    Matrix feats(arch.input_dim(), static_cast<Eigen::Index>(x.size()));
    for (int y = 0; y < h; ++y) {
        for (int px = 0; px < w; ++px) {
            double* col = feats.col(static_cast<Eigen::Index>(y) * w + px).data();
            int k = 0;
            for (int dy = -r; dy <= r; ++dy) {
                const int yy = std::clamp(y + dy, 0, h - 1);
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = std::clamp(px + dx, 0, w - 1);
                    col[k] = x(xx, yy);
                    col[patch + k] = v(xx, yy);
                    ++k;
                }
            }
            col[2 * patch] = coord(px, w);
            col[2 * patch + 1] = coord(y, h);
            col[2 * patch + 2] = t;
            col[2 * patch + 3] = tau;
        }
    }
    return feats;
}

struct ForwardCache {
    std::vector<Matrix> acts;  // acts[0] = features, acts[l] = post-activation of hidden layer l
    Eigen::RowVectorXd out;
};

ForwardCache run_forward(const Architecture& arch, const std::vector<double>& params, Matrix features) {
    ForwardCache cache;
    cache.acts.reserve(arch.hidden.size() + 1);
    cache.acts.push_back(std::move(features));
    const double* p = params.data();
    Eigen::Index in = arch.input_dim();
    for (int width : arch.hidden) {
        ConstRowMap weight(p, width, in);
        p += static_cast<std::ptrdiff_t>(width) * in;
        Eigen::Map<const Eigen::VectorXd> bias(p, width);
        p += width;
        Matrix pre = weight * cache.acts.back();
        pre.colwise() += bias;
        if (arch.activation == Activation::Tanh) {
            pre = pre.array().tanh();
        } else {
            pre = pre.array().max(0.0);
        }
        cache.acts.push_back(std::move(pre));
        in = width;
    }
    ConstRowMap out_weight(p, 1, in);
    cache.out = out_weight * cache.acts.back();
    return cache;
}

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(out).
void run_backward(const Architecture& arch, const std::vector<double>& params, const ForwardCache& cache,
                  const Eigen::RowVectorXd& d_out, std::vector<double>& grad) {
    const std::size_t layers = arch.hidden.size();
    std::vector<std::ptrdiff_t> offsets(layers + 1);
    std::ptrdiff_t off = 0;
    Eigen::Index in = arch.input_dim();
    for (std::size_t l = 0; l < layers; ++l) {
        offsets[l] = off;
        off += static_cast<std::ptrdiff_t>(arch.hidden[l]) * in + arch.hidden[l];
        in = arch.hidden[l];
    }
    offsets[layers] = off;

    ConstRowMap out_weight(params.data() + offsets[layers], 1, in);
    RowMap g_out(grad.data() + offsets[layers], 1, in);
    g_out.noalias() += d_out * cache.acts.back().transpose();
    Matrix d_act = out_weight.transpose() * d_out;

    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& act = cache.acts[l + 1];
        const Matrix& prev = cache.acts[l];
        const int width = arch.hidden[l];
        const Eigen::Index fan_in = prev.rows();
        Matrix d_pre;
        if (arch.activation == Activation::Tanh) {
            d_pre = d_act.array() * (1.0 - act.array().square());
        } else {
            d_pre = d_act.array() * (act.array() > 0.0).cast<double>();
        }
        RowMap g_w(grad.data() + offsets[l], width, fan_in);
        g_w.noalias() += d_pre * prev.transpose();
        Eigen::Map<Eigen::VectorXd> g_b(grad.data() + offsets[l] + static_cast<std::ptrdiff_t>(width) * fan_in,
                                        width);
        g_b += d_pre.rowwise().sum();
        if (l > 0) {
            ConstRowMap weight(params.data() + offsets[l], width, fan_in);
            d_act = weight.transpose() * d_pre;
        }
    }
}

}  // namespace

AccelerationModel::AccelerationModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
    validate(arch_);
    params_.assign(arch_.parameter_count(), 0.0);
    Rng rng(seed);
    double* p = params_.data();
    int in = arch_.input_dim();
    auto glorot = [&](int fan_out, int fan_in) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (long i = 0; i < static_cast<long>(fan_out) * fan_in; ++i) *p++ = rng.uniform(-limit, limit);
    };
    for (int width : arch_.hidden) {
        glorot(width, in);
        p += width;  // zero biases
        in = width;
    }
    glorot(1, in);
}

AccelerationModel::AccelerationModel(Architecture arch, std::vector<double> parameters, std::uint64_t seed)
    : arch_(std::move(arch)), params_(std::move(parameters)), seed_(seed) {
    validate(arch_);
    if (params_.size() != arch_.parameter_count()) {
        fail(ErrorCode::DimensionMismatch, "parameter vector does not match the architecture");
    }
}

ScalarField AccelerationModel::forward(const ScalarField& v_tau, const ScalarField& x_t, double t, double tau) const {
    require_same_shape(v_tau, x_t, "model_forward: v_tau and x_t differ in size");
    check_time(t, "t");
    check_time(tau, "tau");
    const ForwardCache cache = run_forward(arch_, params_, build_features(arch_, x_t, v_tau, t, tau));
    std::vector<double> out(cache.out.data(), cache.out.data() + cache.out.size());
    for (double v : out) {
        if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "model produced a non-finite acceleration");
    }
    return ScalarField(x_t.width(), x_t.height(), std::move(out));
}

std::pair<double, std::vector<double>> AccelerationModel::loss_and_gradient(const std::vector<FlowSample>& batch) const {
    if (batch.empty()) fail(ErrorCode::InvalidArgument, "model_backward needs a non-empty batch");
    std::size_t total = 0;
    for (const auto& s : batch) total += s.a_gt.size();
    const double inv_n = 1.0 / static_cast<double>(total);

    std::vector<double> grad(params_.size(), 0.0);
    double loss = 0.0;
    for (const auto& s : batch) {
        const ForwardCache cache = run_forward(arch_, params_, build_features(arch_, s.x_t, s.v_tau, s.t, s.tau));
        Eigen::Map<const Eigen::RowVectorXd> target(s.a_gt.values().data(), static_cast<Eigen::Index>(s.a_gt.size()));
        const Eigen::RowVectorXd residual = cache.out - target;
        loss += residual.squaredNorm() * inv_n;
        run_backward(arch_, params_, cache, (2.0 * inv_n) * residual, grad);
    }
    return {loss, std::move(grad)};
}

std::vector<double> model_backward(const AccelerationModel& m, const std::vector<FlowSample>& batch) {
    return m.loss_and_gradient(batch).second;
}

std::string AccelerationModel::serialize() const {
    std::string out = "ICRF1\n";
    out += "patch_radius=" + std::to_string(arch_.patch_radius) + " hidden=";
    for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(arch_.hidden[i]);
    }
    out += " activation=" + to_string(arch_.activation) + " seed=" + std::to_string(seed_) +
           " params=" + std::to_string(params_.size()) + "\n";
    for (std::size_t i = 0; i < params_.size(); ++i) {
        out += format_real(params_[i]);
        out += (i % 8 == 7 || i + 1 == params_.size()) ? '\n' : ' ';
    }
    return out;
}

AccelerationModel AccelerationModel::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "ICRF1") fail(ErrorCode::MalformedHeader, "missing ICRF1 magic");
    if (!std::getline(in, line)) fail(ErrorCode::MalformedHeader, "missing architecture line");

    Architecture arch;
    arch.hidden.clear();
    std::uint64_t seed = 0;
    std::size_t count = 0;
    bool have_radius = false, have_hidden = false, have_count = false;
    std::istringstream desc(line);
    std::string item;
    while (desc >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::MalformedHeader, "bad descriptor item '" + item + "'");
        const std::string key = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);
        try {
            if (key == "patch_radius") {
                arch.patch_radius = std::stoi(value);
                have_radius = true;
            } else if (key == "hidden") {
                std::istringstream widths(value);
                std::string wtok;
                while (std::getline(widths, wtok, ',')) arch.hidden.push_back(std::stoi(wtok));
                have_hidden = true;
            } else if (key == "activation") {
                arch.activation = parse_activation(value);
            } else if (key == "seed") {
                seed = std::stoull(value);
            } else if (key == "params") {
                count = std::stoull(value);
                have_count = true;
            }
        } catch (const std::logic_error&) {
            fail(ErrorCode::MalformedHeader, "bad descriptor value in '" + item + "'");
        }
    }
    if (!have_radius || !have_hidden || !have_count) fail(ErrorCode::MalformedHeader, "incomplete architecture line");

    std::vector<double> params;
    params.reserve(count);
    std::string tok;
    while (in >> tok) {
        double v = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            fail(ErrorCode::MalformedValue, "cannot parse parameter '" + tok + "'");
        }
        if (!std::isfinite(v)) fail(ErrorCode::NonFiniteValue, "non-finite parameter");
        params.push_back(v);
    }
    if (params.size() != count) fail(ErrorCode::DimensionMismatch, "parameter count differs from header");
    return AccelerationModel(std::move(arch), std::move(params), seed);
}

void AccelerationModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << serialize();
}

AccelerationModel AccelerationModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

// ---------------------------------------------------------------------------

namespace {

ScalarField draw_velocity(const VelocityPrior& prior, int w, int h, Rng& rng) {
    ScalarField v(w, h);
    if (prior.kind == VelocityPrior::Kind::Gaussian) {
        for (double& e : v.values()) e = prior.sigma * rng.normal();
    }
    return v;
}

}  // namespace

double learning_rate_at(const TrainConfig& cfg, int step) {
    const int warmup = static_cast<int>(std::round(cfg.warmup_fraction * cfg.steps));
    if (step < warmup) return cfg.learning_rate * static_cast<double>(step + 1) / warmup;
    const int span = std::max(1, cfg.steps - warmup - 1);
    const double progress = std::min(1.0, static_cast<double>(step - warmup) / span);
    const double floor = cfg.learning_rate * cfg.min_lr_fraction;
    return floor + (cfg.learning_rate - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

TrainResult train(const std::vector<std::pair<ScalarField, ScalarField>>& pairs, const TrainConfig& cfg) {
    if (pairs.empty()) fail(ErrorCode::InvalidArgument, "train needs at least one pair");
    if (cfg.steps < 1 || cfg.batch_pairs < 1) fail(ErrorCode::InvalidArgument, "steps and batch_pairs must be >= 1");
    for (const auto& [x0, x1] : pairs) require_same_shape(x0, x1, "training pair sizes differ");

    TrainResult result{AccelerationModel(cfg.architecture, mix_seed(cfg.seed, 0)), {}};
    std::vector<double>& theta = result.model.parameters();
    std::vector<double> m1(theta.size(), 0.0);
    std::vector<double> m2(theta.size(), 0.0);
    Rng rng(mix_seed(cfg.seed, 1));
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.steps));

    std::vector<FlowSample> batch;
    for (int step = 0; step < cfg.steps; ++step) {
        batch.clear();
        for (int b = 0; b < cfg.batch_pairs; ++b) {
            const auto& [x0, x1] = pairs[rng.below(pairs.size())];
            const double t = rng.uniform();
            const double tau = rng.uniform();
            const ScalarField v0 = draw_velocity(cfg.v0_prior, x0.width(), x0.height(), rng);
            batch.push_back(make_sample(x0, x1, t, tau, v0));
        }
        auto [loss, grad] = result.model.loss_and_gradient(batch);
        if (!std::isfinite(loss)) fail(ErrorCode::NonFiniteLoss, "non-finite flow loss at step " + std::to_string(step));
        result.loss_curve.push_back(loss);

        const double lr = learning_rate_at(cfg, step);
        const double c1 = 1.0 - std::pow(cfg.beta1, step + 1);
        const double c2 = 1.0 - std::pow(cfg.beta2, step + 1);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            theta[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg.adam_eps);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------

ScalarField refine_unclamped(const AccelerationFn& accel, const ScalarField& x0, const RefineConfig& cfg,
                             std::uint64_t seed) {
    if (cfg.n_t < 1 || cfg.n_tau < 1) fail(ErrorCode::InvalidArgument, "n_t and n_tau must be >= 1");
    Rng rng(seed);
    ScalarField x = x0;
    for (int i = 0; i < cfg.n_t; ++i) {
        const double t = static_cast<double>(i) / cfg.n_t;
        ScalarField v = draw_velocity(cfg.v0_prior, x.width(), x.height(), rng);
        for (int j = 0; j < cfg.n_tau; ++j) {
            const double tau = static_cast<double>(j) / cfg.n_tau;
            const ScalarField a = accel(v, tau, x, t);
            require_same_shape(a, v, "acceleration field has the wrong size");
            for (std::size_t p = 0; p < v.size(); ++p) v[p] += a[p] / cfg.n_tau;
            if (!v.all_finite()) {
                fail(ErrorCode::NonFiniteState,
                     "velocity became non-finite at t-step " + std::to_string(i) + ", tau-step " + std::to_string(j));
            }
        }
        for (std::size_t p = 0; p < x.size(); ++p) x[p] += v[p] / cfg.n_t;
        if (!x.all_finite()) {
            fail(ErrorCode::NonFiniteState, "state became non-finite at t-step " + std::to_string(i) + ", tau-step " +
                                                std::to_string(cfg.n_tau - 1));
        }
    }
    return x;
}

ScalarField refine_unclamped(const AccelerationModel& m, const ScalarField& x0, const RefineConfig& cfg,
                             std::uint64_t seed) {
    return refine_unclamped(
        [&m](const ScalarField& v, double tau, const ScalarField& x, double t) { return m.forward(v, x, t, tau); }, x0,
        cfg, seed);
}

ScalarField refine(const AccelerationFn& accel, const ScalarField& x0, const RefineConfig& cfg, std::uint64_t seed) {
    ScalarField x = refine_unclamped(accel, x0, cfg, seed);
    for (double& v : x.values()) v = std::clamp(v, 0.0, 1.0);
    return x;
}

ScalarField refine(const AccelerationModel& m, const ScalarField& x0, const RefineConfig& cfg, std::uint64_t seed) {
    ScalarField x = refine_unclamped(m, x0, cfg, seed);
    for (double& v : x.values()) v = std::clamp(v, 0.0, 1.0);
    return x;
}

// ---------------------------------------------------------------------------

std::vector<ManipulationPoint> extract_points(const ScalarField& f, int k, double quantile) {
    if (k < 1) fail(ErrorCode::InvalidArgument, "extract_points needs k >= 1");
    if (!(quantile > 0.0 && quantile < 1.0)) fail(ErrorCode::InvalidArgument, "quantile must lie in (0,1)");
    std::vector<double> positive;
    for (double v : f.values()) {
        if (v > 0.0) positive.push_back(v);
    }
    if (positive.empty()) fail(ErrorCode::AllZeroField, "extract_points on a field without positive values");
    std::sort(positive.begin(), positive.end());
    const double pos = quantile * static_cast<double>(positive.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, positive.size() - 1);
    const double threshold = positive[lo] + (pos - static_cast<double>(lo)) * (positive[hi] - positive[lo]);

    BinaryMask keep(f.width(), f.height());
    for (std::size_t i = 0; i < f.size(); ++i) keep.set(i, f[i] > 0.0 && f[i] >= threshold);
    const LabelField labels = connected_components(keep, 8);

    std::vector<ManipulationPoint> comps(static_cast<std::size_t>(labels.count));
    for (int y = 0; y < f.height(); ++y) {
        for (int x = 0; x < f.width(); ++x) {
            const int l = labels(x, y);
            if (l == 0) continue;
            auto& c = comps[static_cast<std::size_t>(l - 1)];
            const double v = f(x, y);
            c.mass += v;
            c.x += v * x;
            c.y += v * y;
        }
    }
    for (auto& c : comps) {
        c.x /= c.mass;
        c.y /= c.mass;
    }
    // Labels are in raster order of first pixel, so a stable sort keeps ties deterministic.
    std::stable_sort(comps.begin(), comps.end(),
                     [](const ManipulationPoint& a, const ManipulationPoint& b) { return a.mass > b.mass; });
    if (comps.size() > static_cast<std::size_t>(k)) comps.resize(static_cast<std::size_t>(k));
    return comps;
}

}  // namespace affordkit::icrf
