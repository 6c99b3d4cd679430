#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/error.hpp"
#include "affordkit/field.hpp"
#include "affordkit/icrf.hpp"
#include "affordkit/metrics.hpp"
#include "affordkit/scbr.hpp"
#include "affordkit/softmask.hpp"
#include "affordkit/synth.hpp"
#include "affordkit/tacot.hpp"

namespace affordkit::harness {

inline constexpr const char* kVersion = "0.1.0";

/// Errors caused by bad input (exit code 1) as opposed to failures while
/// running (exit code 2).
bool is_validation_error(ErrorCode code);

enum class Mode { Scbr, Icrf, Tacot, Eval, Softmask };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct ScbrParams {
    int width = 32;
    int height = 32;
    double annotation_sigma = 6.0;  // px, spread of the raw annotation blob
    double object_radius = 12.0;    // px, disk-shaped object mask
    double object_offset = 3.0;     // px, max offset of the object from the annotation center
    double boundary_threshold = 0.5;
    int boundary_width = 2;
    int steps = 200;
    double step_size = 0.5;
    scbr::WeightSchedule weights;
    // Optional AFG1 inputs; when gt_path is set the synthetic instance is not used.
    std::string gt_path;
    std::string object_mask_path;
    std::string p_img_path;
    std::string p_sem_path;
};

struct IcrfParams {
    int train_pairs = 200;
    int heldout_pairs = 50;
    std::uint64_t heldout_offset = 1000000;
    icrf::TrainConfig train;
    icrf::RefineConfig refine;
    double point_quantile = 0.9;
    double point_tolerance = 2.0;  // px
    bool write_fields = true;
};

struct TacotParams {
    std::string cases_path;  // JSON case table; bundled table when empty
    nlohmann::json categories = nlohmann::json::array();
};

struct EvalParams {
    std::string pred_dir;
    std::string gt_dir;
    double fix_frac = 0.5;
    metrics::Normalization normalization = metrics::Normalization::Sum;
};

struct SoftmaskParams {
    std::vector<std::string> masks;  // AFG1 masks; synthetic ones when empty
    int synthetic_count = 20;
    SoftMaskParams soft;
};

struct ExperimentConfig {
    Mode mode = Mode::Icrf;
    std::uint64_t seed = 2024;
    std::filesystem::path out_dir = "out";
    synth::SyntheticPairConfig synthetic;
    ScbrParams scbr;
    IcrfParams icrf;
    TacotParams tacot;
    EvalParams eval;
    SoftmaskParams softmask;
};

/// Fills an ExperimentConfig from JSON. Missing keys keep their defaults;
/// unknown keys, wrong types and out-of-range values raise InvalidArgument.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Parses a bare training block ({"steps": .., "learning_rate": .., ...}).
icrf::TrainConfig parse_train_config(const nlohmann::json& j);

/// The effective configuration with every default made explicit.
nlohmann::json to_json(const ExperimentConfig& c);
nlohmann::json to_json(const icrf::TrainConfig& c);
/// FNV-1a 64 of the canonical (key-sorted, compact) effective configuration, hex.
std::string config_hash(const ExperimentConfig& c);

// ---------------------------------------------------------------------------
// Studies

struct ScbrStudy {
    scbr::LossInputs inputs;
    scbr::OptimizeResult result;
    std::vector<double> smoothed_total;  // trailing mean over 10 steps
    bool smoothed_non_increasing = false;
    double overflow_initial = 0.0;  // mean over both branches
    double overflow_final = 0.0;
    double boundary_energy_initial = 0.0;  // l_grad
    double boundary_energy_final = 0.0;
};

/// Builds the synthetic instance: a Gaussian annotation spilling past a disk
/// object mask, G = annotation restricted to the mask, boundary band on the
/// min-max normalized G, both branches initialized uniformly in [0.05, 0.95].
scbr::LossInputs make_scbr_instance(const ScbrParams& p, std::uint64_t seed, BinaryMask* object_mask = nullptr);
ScbrStudy run_scbr_study(const scbr::LossInputs& init, const ScbrParams& p);

/// Mean of the last `window` values ending at each index (fewer at the start).
std::vector<double> trailing_mean(const std::vector<double>& v, int window);

struct IcrfSample {
    std::string name;
    double kld_x0 = 0.0;
    double kld_refined = 0.0;
    double sim_refined = 0.0;
    std::vector<icrf::ManipulationPoint> points;
    double point_error = 0.0;  // worst matched distance; infinity if too few points
    bool points_ok = false;
    ScalarField refined;
};

struct IcrfStudy {
    icrf::TrainResult training;
    std::vector<IcrfSample> samples;
    std::vector<std::string> failures;
    double baseline_kld = 0.0;
    double refined_kld = 0.0;
    double points_ok_fraction = 0.0;
    double improved_fraction = 0.0;  // samples whose KLD against x1 dropped
};

IcrfStudy run_icrf_study(const synth::SyntheticPairConfig& synthetic, const IcrfParams& p, std::uint64_t seed);

/// Largest distance under the best one-to-one matching of ground-truth
/// centers to extracted points; infinity when there are fewer points.
double matched_point_error(const std::vector<icrf::ManipulationPoint>& pts, const std::vector<synth::Point>& gt);

// ---------------------------------------------------------------------------
// Experiment driver

struct RunResult {
    nlohmann::json report;
    std::vector<std::string> files;  // relative to out_dir, in write order
};

/// Runs the configured mode, writing its artifacts, report.json and
/// manifest.json into out_dir. Only the manifest carries a timestamp.
RunResult run_experiment(const ExperimentConfig& c);

/// Writes the (step, l_sup, l_con, l_grad, l_total, lambda_con, lambda_grad) CSV.
void write_trajectory_csv(const std::vector<scbr::LossReport>& trajectory, const std::filesystem::path& path);
/// Writes the (step, loss, learning_rate) CSV of a training run.
void write_loss_curve_csv(const std::vector<double>& curve, const icrf::TrainConfig& c, const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

/// Loads paired fields <dir>/x0/<name>.afg and <dir>/x1/<name>.afg.
std::vector<std::pair<ScalarField, ScalarField>> load_pair_dir(const std::filesystem::path& dir);
/// Writes the layout read by load_pair_dir plus points.json with centers.
void write_pair_dir(const std::vector<synth::SyntheticPair>& pairs, const std::filesystem::path& dir);

}  // namespace affordkit::harness
