#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "affordkit/field.hpp"

namespace affordkit::icrf {

// ---------------------------------------------------------------------------
// Interpolants

/// (1 - t) x0 + t x1. Throws TimeOutOfRange unless t in [0,1].
ScalarField interpolate_state(const ScalarField& x0, const ScalarField& x1, double t);

/// (1 - tau) v0 + tau (x1 - x0).
ScalarField interpolate_velocity(const ScalarField& v0, const ScalarField& x0, const ScalarField& x1, double tau);

/// (x1 - x0) - v0: the tau-derivative of interpolate_velocity.
ScalarField acceleration_target(const ScalarField& x0, const ScalarField& x1, const ScalarField& v0);

struct FlowSample {
    ScalarField x0;
    ScalarField x1;
    double t = 0.0;
    double tau = 0.0;
    ScalarField v0;
    ScalarField x_t;
    ScalarField v_tau;
    ScalarField a_gt;
};

FlowSample make_sample(const ScalarField& x0, const ScalarField& x1, double t, double tau, const ScalarField& v0);

// ---------------------------------------------------------------------------
// Acceleration model

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

struct Architecture {
    int patch_radius = 1;
    std::vector<int> hidden = {64, 64};
    Activation activation = Activation::Tanh;

    /// Per-pixel inputs: two (2r+1)^2 patches (x_t, v_tau), two normalized
    /// coordinates, then t and tau.
    int input_dim() const;
    /// Hidden layers carry weights and biases; the scalar output layer has
    /// weights only.
    std::size_t parameter_count() const;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Per-pixel multilayer perceptron a_theta(v_tau, tau, x_t, t).
///
/// Parameters are one flat vector, laid out layer by layer: the weight
/// matrix (row-major, out x in) followed by the bias vector for each hidden
/// layer, then the output weight row.
class AccelerationModel {
public:
    AccelerationModel() = default;
    /// Glorot-uniform initialization from `seed`; biases start at zero.
    AccelerationModel(Architecture arch, std::uint64_t seed);
    AccelerationModel(Architecture arch, std::vector<double> parameters, std::uint64_t seed = 0);

    const Architecture& architecture() const noexcept { return arch_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<double>& parameters() const noexcept { return params_; }
    std::vector<double>& parameters() noexcept { return params_; }

    ScalarField forward(const ScalarField& v_tau, const ScalarField& x_t, double t, double tau) const;

    /// Mean squared error between forward() and a_gt over every pixel of
    /// every sample, and its gradient with respect to the parameters.
    std::pair<double, std::vector<double>> loss_and_gradient(const std::vector<FlowSample>& batch) const;

    void save(const std::filesystem::path& path) const;
    static AccelerationModel load(const std::filesystem::path& path);
    std::string serialize() const;
    static AccelerationModel deserialize(const std::string& text);

private:
    Architecture arch_;
    std::vector<double> params_;
    std::uint64_t seed_ = 0;
};

/// Parameter gradient of the flow objective over a batch.
std::vector<double> model_backward(const AccelerationModel& m, const std::vector<FlowSample>& batch);

// ---------------------------------------------------------------------------
// Training

struct VelocityPrior {
    enum class Kind { Zero, Gaussian } kind = Kind::Gaussian;
    double sigma = 0.5;

    static VelocityPrior zero() { return {Kind::Zero, 0.0}; }
    static VelocityPrior gaussian(double s) { return {Kind::Gaussian, s}; }
};

struct TrainConfig {
    Architecture architecture;
    int steps = 3000;
    int batch_pairs = 4;
    double learning_rate = 1e-3;
    double warmup_fraction = 0.05;
    double min_lr_fraction = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    VelocityPrior v0_prior = VelocityPrior::gaussian(0.5);
    std::uint64_t seed = 0;
};

struct TrainResult {
    AccelerationModel model;
    std::vector<double> loss_curve;  // loss before each update
};

/// Linear warmup to the base rate, then cosine decay to
/// base * min_lr_fraction at the final step.
double learning_rate_at(const TrainConfig& cfg, int step);

TrainResult train(const std::vector<std::pair<ScalarField, ScalarField>>& pairs, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Inference

struct RefineConfig {
    int n_t = 10;
    int n_tau = 10;
    VelocityPrior v0_prior = VelocityPrior::zero();
};

/// a(v, tau, x, t) -> acceleration field.
using AccelerationFn = std::function<ScalarField(const ScalarField& v, double tau, const ScalarField& x, double t)>;

/// Explicit Euler double integration without the final clamp. The outer loop
/// walks t over {0, 1/n_t, ...}; each outer step draws v from the prior and
/// integrates v over tau in n_tau steps before advancing x by v/n_t.
ScalarField refine_unclamped(const AccelerationFn& accel, const ScalarField& x0, const RefineConfig& cfg,
                             std::uint64_t seed);
ScalarField refine_unclamped(const AccelerationModel& m, const ScalarField& x0, const RefineConfig& cfg,
                             std::uint64_t seed);

/// refine_unclamped followed by a clamp to [0,1].
ScalarField refine(const AccelerationModel& m, const ScalarField& x0, const RefineConfig& cfg, std::uint64_t seed);
ScalarField refine(const AccelerationFn& accel, const ScalarField& x0, const RefineConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Manipulation points

struct ManipulationPoint {
    double x = 0.0;
    double y = 0.0;
    double mass = 0.0;
};

/// Thresholds f at the given quantile of its positive values, groups the
/// surviving pixels into 8-connected components and returns up to k
/// intensity-weighted centroids, heaviest first (ties by raster order).
std::vector<ManipulationPoint> extract_points(const ScalarField& f, int k, double quantile);

}  // namespace affordkit::icrf
