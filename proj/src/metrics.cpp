#include "affordkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace affordkit::metrics {

double kld(const ScalarField& pred, const ScalarField& gt) {
    require_same_shape(pred, gt, "kld: prediction and ground truth differ in size");
    const ScalarField p = sum_normalize(pred);
    const ScalarField g = sum_normalize(gt);
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        total += g[i] * std::log(g[i] / (p[i] + kKldEps) + kKldEps);
    }
    return total;
}

double sim(const ScalarField& pred, const ScalarField& gt) {
    require_same_shape(pred, gt, "sim: prediction and ground truth differ in size");
    const ScalarField p = sum_normalize(pred);
    const ScalarField g = sum_normalize(gt);
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) total += std::min(p[i], g[i]);
    return total;
}

double nss(const ScalarField& pred, const ScalarField& gt, double fix_frac) {
    require_same_shape(pred, gt, "nss: prediction and ground truth differ in size");
    const double cut = fix_frac * gt.max();
    const ScalarField z = zscore_normalize(pred);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] > 0.0 && gt[i] >= cut) {
            total += z[i];
            ++count;
        }
    }
    if (count == 0) fail(ErrorCode::EmptyFixationSet, "no ground-truth pixel reaches the fixation level");
    return total / static_cast<double>(count);
}

SampleMetrics evaluate_pair(const std::string& name, const ScalarField& pred, const ScalarField& gt, double fix_frac,
                            Normalization norm) {
    const ScalarField p = norm == Normalization::MinMax ? minmax_normalize(pred) : pred;
    return {name, kld(p, gt), sim(p, gt), nss(p, gt, fix_frac)};
}

MetricsReport summarize(std::vector<SampleMetrics> samples, double fix_frac, Normalization norm) {
    MetricsReport r;
    r.fix_frac = fix_frac;
    r.normalization = norm;
    for (const auto& s : samples) {
        r.kld += s.kld;
        r.sim += s.sim;
        r.nss += s.nss;
    }
    if (!samples.empty()) {
        const auto n = static_cast<double>(samples.size());
        r.kld /= n;
        r.sim /= n;
        r.nss /= n;
    }
    r.per_sample = std::move(samples);
    return r;
}

MetricsReport evaluate_corpus(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                              double fix_frac, Normalization norm) {
    auto list = [](const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, "not a directory: " + dir.string());
        std::set<std::string> names;
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".afg") names.insert(e.path().filename().string());
        }
        return names;
    };
    const auto preds = list(pred_dir);
    const auto gts = list(gt_dir);

    std::set<std::string> all = preds;
    all.insert(gts.begin(), gts.end());
    std::vector<SampleMetrics> samples;
    std::vector<std::string> missing;
    std::vector<SampleFailure> failures;
    for (const auto& name : all) {
        if (!preds.count(name) || !gts.count(name)) {
            missing.push_back(name);
            continue;
        }
        try {
            samples.push_back(evaluate_pair(name, read_field(pred_dir / name), read_field(gt_dir / name), fix_frac, norm));
        } catch (const Error& e) {
            failures.push_back({name, e.what()});
        }
    }
    MetricsReport r = summarize(std::move(samples), fix_frac, norm);
    r.missing_pairs = std::move(missing);
    r.failures = std::move(failures);
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["kld"] = r.kld;
    j["sim"] = r.sim;
    j["nss"] = r.nss;
    j["fix_frac"] = r.fix_frac;
    j["normalization"] = r.normalization == Normalization::Sum ? "sum" : "minmax";
    j["samples"] = r.per_sample.size();
    j["per_sample"] = nlohmann::json::array();
    for (const auto& s : r.per_sample) {
        j["per_sample"].push_back({{"name", s.name}, {"kld", s.kld}, {"sim", s.sim}, {"nss", s.nss}});
    }
    j["missing_pairs"] = r.missing_pairs;
    j["failures"] = nlohmann::json::array();
    for (const auto& f : r.failures) j["failures"].push_back({{"name", f.name}, {"error", f.error}});
    return j;
}

}  // namespace affordkit::metrics
