#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "affordkit/field.hpp"

namespace affordkit::metrics {

inline constexpr double kKldEps = 1e-12;

/// sum_i G_i log(G_i / (P_i + eps) + eps) over sum-normalized maps.
double kld(const ScalarField& pred, const ScalarField& gt);

/// sum_i min(P_i, G_i) over sum-normalized maps.
double sim(const ScalarField& pred, const ScalarField& gt);

/// Mean z-scored prediction over the fixation set {gt >= fix_frac * max(gt)}.
double nss(const ScalarField& pred, const ScalarField& gt, double fix_frac = 0.5);

enum class Normalization { Sum, MinMax };

struct SampleMetrics {
    std::string name;
    double kld = 0.0;
    double sim = 0.0;
    double nss = 0.0;
};

struct SampleFailure {
    std::string name;
    std::string error;
};

struct MetricsReport {
    double kld = 0.0;
    double sim = 0.0;
    double nss = 0.0;
    double fix_frac = 0.5;
    Normalization normalization = Normalization::Sum;
    std::vector<SampleMetrics> per_sample;
    std::vector<std::string> missing_pairs;
    std::vector<SampleFailure> failures;
};

/// Scores one pair; with MinMax the prediction is min-max rescaled first.
SampleMetrics evaluate_pair(const std::string& name, const ScalarField& pred, const ScalarField& gt, double fix_frac,
                            Normalization norm = Normalization::Sum);

/// Unweighted means over the scored samples (in the given order).
MetricsReport summarize(std::vector<SampleMetrics> samples, double fix_frac, Normalization norm);

/// Pairs *.afg files by name across the two directories. Unmatched names are
/// listed in missing_pairs and per-sample errors in failures; neither aborts.
MetricsReport evaluate_corpus(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              double fix_frac = 0.5, Normalization norm = Normalization::Sum);

nlohmann::json to_json(const MetricsReport& r);

}  // namespace affordkit::metrics
