#include "affordkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "affordkit/rng.hpp"

namespace affordkit::harness {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_validation_error(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonFiniteLoss:
        case ErrorCode::NonFiniteState:
        case ErrorCode::PlacementFailure:
        case ErrorCode::OracleUnavailable:
        case ErrorCode::AlreadyDecided:
        case ErrorCode::Io:
            return false;
        default:
            return true;
    }
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Scbr: return "scbr";
        case Mode::Icrf: return "icrf";
        case Mode::Tacot: return "tacot";
        case Mode::Eval: return "eval";
        case Mode::Softmask: return "softmask";
    }
    return "icrf";
}

Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::Scbr, Mode::Icrf, Mode::Tacot, Mode::Eval, Mode::Softmask}) {
        if (to_string(m) == s) return m;
    }
    fail(ErrorCode::InvalidArgument, "unknown mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

/// Reads typed keys from one JSON object and rejects keys nobody asked for.
class Block {
public:
    Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(ErrorCode::InvalidArgument, where() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        const json& v = j_.at(key);
        bool ok = false;
        if constexpr (std::is_same_v<T, bool>) {
            ok = v.is_boolean();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            ok = v.is_number_unsigned();
        } else if constexpr (std::is_integral_v<T>) {
            ok = v.is_number_integer() && v.get<long long>() >= std::numeric_limits<T>::min() &&
                 v.get<long long>() <= std::numeric_limits<T>::max();
        } else if constexpr (std::is_floating_point_v<T>) {
            ok = v.is_number();
        } else if constexpr (std::is_same_v<T, std::string>) {
            ok = v.is_string();
        } else {
            ok = true;
        }
        if (!ok) fail(ErrorCode::InvalidArgument, where(key) + " has the wrong type");
        try {
            out = v.get<T>();
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, where(key) + ": " + e.what());
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    Block sub(const char* key) {
        seen_.insert(key);
        static const json empty = json::object();
        return Block(j_.contains(key) ? j_.at(key) : empty, where(key));
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) fail(ErrorCode::InvalidArgument, "unknown key " + where(k.c_str()));
        }
    }

    std::string where(const char* key = nullptr) const {
        std::string p = path_.empty() ? std::string("config") : path_;
        return key ? p + "." + key : p;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) fail(ErrorCode::InvalidArgument, msg);
}

void read_synthetic(Block b, synth::SyntheticPairConfig& c) {
    b.get("width", c.width);
    b.get("height", c.height);
    b.get("n_targets", c.n_targets);
    b.get("blob_sigma", c.blob_sigma);
    b.get("n_fragments", c.n_fragments);
    b.get("fragment_scatter", c.fragment_scatter);
    b.get("noise_texture_scale", c.noise_texture_scale);
    b.get("noise_amplitude", c.noise_amplitude);
    b.finish();
    require(c.width > 0 && c.height > 0, "synthetic size must be positive");
    require(c.n_targets == 1 || c.n_targets == 2, "synthetic.n_targets must be 1 or 2");
    require(c.blob_sigma > 0 && c.noise_texture_scale > 0, "synthetic scales must be positive");
    require(c.fragment_scatter >= 0 && c.noise_amplitude >= 0, "synthetic scatter and noise must be non-negative");
    require(c.n_fragments >= 1, "synthetic.n_fragments must be >= 1");
}

void read_weights(Block b, scbr::WeightSchedule& w) {
    b.get("lambda_base_con", w.lambda_base_con);
    b.get("lambda_base_grad", w.lambda_base_grad);
    b.get("epsilon", w.epsilon);
    b.get("lambda_max", w.lambda_max);
    b.finish();
    require(w.lambda_base_con >= 0 && w.lambda_base_grad >= 0, "lambda_base values must be non-negative");
    require(w.epsilon > 0, "weights.epsilon must be positive");
    require(w.lambda_max > 0 && w.lambda_max >= w.lambda_base_con && w.lambda_max >= w.lambda_base_grad,
            "weights.lambda_max must be positive and at least the base weights");
}

void read_scbr(Block b, ScbrParams& p) {
    b.get("width", p.width);
    b.get("height", p.height);
    b.get("annotation_sigma", p.annotation_sigma);
    b.get("object_radius", p.object_radius);
    b.get("object_offset", p.object_offset);
    b.get("boundary_threshold", p.boundary_threshold);
    b.get("boundary_width", p.boundary_width);
    b.get("steps", p.steps);
    b.get("step_size", p.step_size);
    read_weights(b.sub("weights"), p.weights);
    b.get("gt", p.gt_path);
    b.get("object_mask", p.object_mask_path);
    b.get("p_img", p.p_img_path);
    b.get("p_sem", p.p_sem_path);
    b.finish();
    require(p.width >= 3 && p.height >= 3, "scbr size must be at least 3x3");
    require(p.annotation_sigma > 0 && p.object_radius > 0 && p.object_offset >= 0, "scbr geometry out of range");
    require(p.boundary_threshold > 0 && p.boundary_threshold < 1, "scbr.boundary_threshold must lie in (0,1)");
    require(p.boundary_width >= 1, "scbr.boundary_width must be >= 1");
    require(p.steps >= 1, "scbr.steps must be >= 1");
    require(p.step_size > 0, "scbr.step_size must be positive");
    require(p.p_img_path.empty() == p.p_sem_path.empty(), "scbr.p_img and scbr.p_sem must be given together");
    require(p.p_img_path.empty() || !p.gt_path.empty(), "scbr initial predictions need scbr.gt");
}

void read_train(Block b, icrf::TrainConfig& t, bool allow_seed) {
    b.get("steps", t.steps);
    b.get("batch_pairs", t.batch_pairs);
    b.get("learning_rate", t.learning_rate);
    b.get("warmup_fraction", t.warmup_fraction);
    b.get("min_lr_fraction", t.min_lr_fraction);
    b.get("beta1", t.beta1);
    b.get("beta2", t.beta2);
    b.get("adam_eps", t.adam_eps);
    b.get("v0_sigma", t.v0_prior.sigma);
    if (b.has("v0_sigma")) t.v0_prior.kind = t.v0_prior.sigma > 0 ? icrf::VelocityPrior::Kind::Gaussian
                                                                   : icrf::VelocityPrior::Kind::Zero;
    b.get("patch_radius", t.architecture.patch_radius);
    b.get("hidden", t.architecture.hidden);
    std::string act = icrf::to_string(t.architecture.activation);
    b.get("activation", act);
    t.architecture.activation = icrf::parse_activation(act);
    if (allow_seed) b.get("seed", t.seed);
    b.finish();
    require(t.steps >= 1 && t.batch_pairs >= 1, "training steps and batch_pairs must be >= 1");
    require(t.learning_rate > 0, "learning_rate must be positive");
    require(t.warmup_fraction >= 0 && t.warmup_fraction < 1, "warmup_fraction must lie in [0,1)");
    require(t.min_lr_fraction >= 0 && t.min_lr_fraction <= 1, "min_lr_fraction must lie in [0,1]");
    require(t.beta1 >= 0 && t.beta1 < 1 && t.beta2 >= 0 && t.beta2 < 1, "Adam betas must lie in [0,1)");
    require(t.adam_eps > 0, "adam_eps must be positive");
    require(t.v0_prior.sigma >= 0, "v0_sigma must be non-negative");
    require(t.architecture.patch_radius >= 0, "patch_radius must be non-negative");
    require(!t.architecture.hidden.empty() &&
                std::all_of(t.architecture.hidden.begin(), t.architecture.hidden.end(), [](int w) { return w > 0; }),
            "hidden widths must be positive");
}

void read_icrf(Block b, IcrfParams& p) {
    b.get("train_pairs", p.train_pairs);
    b.get("heldout_pairs", p.heldout_pairs);
    b.get("heldout_offset", p.heldout_offset);
    read_train(b.sub("train"), p.train, false);
    b.get("n_t", p.refine.n_t);
    b.get("n_tau", p.refine.n_tau);
    b.get("point_quantile", p.point_quantile);
    b.get("point_tolerance", p.point_tolerance);
    b.get("write_fields", p.write_fields);
    b.finish();
    require(p.train_pairs >= 1 && p.heldout_pairs >= 1, "icrf corpus sizes must be >= 1");
    require(p.heldout_offset >= static_cast<std::uint64_t>(p.train_pairs), "icrf.heldout_offset overlaps the training pairs");
    require(p.refine.n_t >= 1 && p.refine.n_tau >= 1, "icrf.n_t and icrf.n_tau must be >= 1");
    require(p.point_quantile >= 0 && p.point_quantile < 1, "icrf.point_quantile must lie in [0,1)");
    require(p.point_tolerance > 0, "icrf.point_tolerance must be positive");
}

void read_tacot(Block b, TacotParams& p) {
    b.get("cases", p.cases_path);
    b.get("categories", p.categories);
    b.finish();
    require(p.categories.is_array(), "tacot.categories must be an array");
}

void read_eval(Block b, EvalParams& p) {
    b.get("pred_dir", p.pred_dir);
    b.get("gt_dir", p.gt_dir);
    b.get("fix_frac", p.fix_frac);
    std::string norm = p.normalization == metrics::Normalization::Sum ? "sum" : "minmax";
    b.get("normalization", norm);
    b.finish();
    require(norm == "sum" || norm == "minmax", "eval.normalization must be sum or minmax");
    p.normalization = norm == "sum" ? metrics::Normalization::Sum : metrics::Normalization::MinMax;
    require(p.fix_frac > 0 && p.fix_frac <= 1, "eval.fix_frac must lie in (0,1]");
}

void read_softmask(Block b, SoftmaskParams& p) {
    b.get("masks", p.masks);
    b.get("synthetic_count", p.synthetic_count);
    b.get("temperature", p.soft.temperature);
    b.get("inside_positive", p.soft.inside_positive);
    b.finish();
    require(p.synthetic_count >= 1, "softmask.synthetic_count must be >= 1");
    require(p.soft.temperature > 0, "softmask.temperature must be positive");
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
    ExperimentConfig c;
    Block b(j, "");
    std::string mode = to_string(c.mode);
    b.get("mode", mode);
    c.mode = parse_mode(mode);
    b.get("seed", c.seed);
    std::string out = c.out_dir.string();
    b.get("out_dir", out);
    c.out_dir = out;
    read_synthetic(b.sub("synthetic"), c.synthetic);
    read_scbr(b.sub("scbr"), c.scbr);
    read_icrf(b.sub("icrf"), c.icrf);
    read_tacot(b.sub("tacot"), c.tacot);
    read_eval(b.sub("eval"), c.eval);
    read_softmask(b.sub("softmask"), c.softmask);
    b.finish();
    if (c.mode == Mode::Eval) require(!c.eval.pred_dir.empty() && !c.eval.gt_dir.empty(), "eval mode needs eval.pred_dir and eval.gt_dir");
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, "config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

icrf::TrainConfig parse_train_config(const json& j) {
    icrf::TrainConfig t;
    read_train(Block(j, "train"), t, true);
    return t;
}

json to_json(const icrf::TrainConfig& t) {
    return {
        {"steps", t.steps},
        {"batch_pairs", t.batch_pairs},
        {"learning_rate", t.learning_rate},
        {"warmup_fraction", t.warmup_fraction},
        {"min_lr_fraction", t.min_lr_fraction},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"v0_sigma", t.v0_prior.kind == icrf::VelocityPrior::Kind::Zero ? 0.0 : t.v0_prior.sigma},
        {"patch_radius", t.architecture.patch_radius},
        {"hidden", t.architecture.hidden},
        {"activation", icrf::to_string(t.architecture.activation)},
        {"seed", t.seed},
    };
}

json to_json(const ExperimentConfig& c) {
    const auto& s = c.synthetic;
    const auto& sc = c.scbr;
    return {
        {"mode", to_string(c.mode)},
        {"seed", c.seed},
        {"out_dir", c.out_dir.string()},
        {"synthetic",
         {{"width", s.width},
          {"height", s.height},
          {"n_targets", s.n_targets},
          {"blob_sigma", s.blob_sigma},
          {"n_fragments", s.n_fragments},
          {"fragment_scatter", s.fragment_scatter},
          {"noise_texture_scale", s.noise_texture_scale},
          {"noise_amplitude", s.noise_amplitude}}},
        {"scbr",
         {{"width", sc.width},
          {"height", sc.height},
          {"annotation_sigma", sc.annotation_sigma},
          {"object_radius", sc.object_radius},
          {"object_offset", sc.object_offset},
          {"boundary_threshold", sc.boundary_threshold},
          {"boundary_width", sc.boundary_width},
          {"steps", sc.steps},
          {"step_size", sc.step_size},
          {"weights",
           {{"lambda_base_con", sc.weights.lambda_base_con},
            {"lambda_base_grad", sc.weights.lambda_base_grad},
            {"epsilon", sc.weights.epsilon},
            {"lambda_max", sc.weights.lambda_max}}},
          {"gt", sc.gt_path},
          {"object_mask", sc.object_mask_path},
          {"p_img", sc.p_img_path},
          {"p_sem", sc.p_sem_path}}},
        {"icrf",
         {{"train_pairs", c.icrf.train_pairs},
          {"heldout_pairs", c.icrf.heldout_pairs},
          {"heldout_offset", c.icrf.heldout_offset},
          {"train", [&] {
               json t = to_json(c.icrf.train);
               t.erase("seed");
               return t;
           }()},
          {"n_t", c.icrf.refine.n_t},
          {"n_tau", c.icrf.refine.n_tau},
          {"point_quantile", c.icrf.point_quantile},
          {"point_tolerance", c.icrf.point_tolerance},
          {"write_fields", c.icrf.write_fields}}},
        {"tacot", {{"cases", c.tacot.cases_path}, {"categories", c.tacot.categories}}},
        {"eval",
         {{"pred_dir", c.eval.pred_dir},
          {"gt_dir", c.eval.gt_dir},
          {"fix_frac", c.eval.fix_frac},
          {"normalization", c.eval.normalization == metrics::Normalization::Sum ? "sum" : "minmax"}}},
        {"softmask",
         {{"masks", c.softmask.masks},
          {"synthetic_count", c.softmask.synthetic_count},
          {"temperature", c.softmask.soft.temperature},
          {"inside_positive", c.softmask.soft.inside_positive}}},
    };
}

std::string config_hash(const ExperimentConfig& c) {
    json j = to_json(c);
    j.erase("out_dir");  // where results go does not change them
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

// ---------------------------------------------------------------------------
// SCBR study

std::vector<double> trailing_mean(const std::vector<double>& v, int window) {
    if (window < 1) fail(ErrorCode::InvalidArgument, "window must be >= 1");
    std::vector<double> out(v.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        acc += v[i];
        if (i >= static_cast<std::size_t>(window)) acc -= v[i - static_cast<std::size_t>(window)];
        out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
    }
    return out;
}

scbr::LossInputs make_scbr_instance(const ScbrParams& p, std::uint64_t seed, BinaryMask* object_mask) {
    Rng rng(mix_seed(seed, 0));
    const double cx = rng.uniform(0.35, 0.65) * (p.width - 1);
    const double cy = rng.uniform(0.35, 0.65) * (p.height - 1);
    const double r = p.object_offset * std::sqrt(rng.uniform());
    const double theta = 2.0 * 3.14159265358979323846 * rng.uniform();
    const double ox = cx + r * std::cos(theta);
    const double oy = cy + r * std::sin(theta);

    ScalarField annotation(p.width, p.height);
    BinaryMask object(p.width, p.height);
    const double inv = 1.0 / (2.0 * p.annotation_sigma * p.annotation_sigma);
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            annotation(x, y) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
            object.set(x, y, std::hypot(x - ox, y - oy) <= p.object_radius);
        }
    }
    ScalarField gt = intersect_annotation(annotation, object);
    BinaryMask bound = boundary_mask(minmax_normalize(gt), p.boundary_threshold, p.boundary_width);

    auto random_map = [&](std::uint64_t stream) {
        Rng r2(mix_seed(seed, stream));
        ScalarField f(p.width, p.height);
        for (double& v : f.values()) v = r2.uniform(0.05, 0.95);
        return f;
    };
    if (object_mask) *object_mask = object;
    return {random_map(1), random_map(2), std::move(gt), std::move(bound)};
}

ScbrStudy run_scbr_study(const scbr::LossInputs& init, const ScbrParams& p) {
    ScbrStudy s;
    s.inputs = init;
    s.result = scbr::optimize_heatmap(init, p.weights, p.steps, p.step_size);
    std::vector<double> totals;
    totals.reserve(s.result.trajectory.size());
    for (const auto& r : s.result.trajectory) totals.push_back(r.l_total);
    s.smoothed_total = trailing_mean(totals, 10);
    s.smoothed_non_increasing = true;
    for (std::size_t i = 1; i < s.smoothed_total.size(); ++i) {
        if (s.smoothed_total[i] > s.smoothed_total[i - 1]) s.smoothed_non_increasing = false;
    }
    s.overflow_initial = 0.5 * (scbr::overflow_fraction(init.p_img, init.gt) + scbr::overflow_fraction(init.p_sem, init.gt));
    s.overflow_final =
        0.5 * (scbr::overflow_fraction(s.result.p_img, init.gt) + scbr::overflow_fraction(s.result.p_sem, init.gt));
    s.boundary_energy_initial = s.result.trajectory.front().l_grad;
    s.boundary_energy_final = s.result.trajectory.back().l_grad;
    return s;
}

// ---------------------------------------------------------------------------
// ICRF study

double matched_point_error(const std::vector<icrf::ManipulationPoint>& pts, const std::vector<synth::Point>& gt) {
    if (pts.size() < gt.size()) return std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double worst = 0.0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            worst = std::max(worst, std::hypot(pts[idx[i]].x - gt[i].x, pts[idx[i]].y - gt[i].y));
        }
        best = std::min(best, worst);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

IcrfStudy run_icrf_study(const synth::SyntheticPairConfig& synthetic, const IcrfParams& p, std::uint64_t seed) {
    synth::SyntheticPairConfig base = synthetic;
    base.seed = seed;
    const auto train_set = synth::gen_corpus(base, p.train_pairs, 0);
    const auto heldout = synth::gen_corpus(base, p.heldout_pairs, p.heldout_offset);

    std::vector<std::pair<ScalarField, ScalarField>> pairs;
    pairs.reserve(train_set.size());
    for (const auto& s : train_set) pairs.emplace_back(s.x0, s.x1);

    IcrfStudy st;
    // Corpus pairs use substreams 0, 1, ...; model and sampler seeds come
    // from a stream index the corpus never reaches.
    const std::uint64_t study_stream = mix_seed(seed, ~0ULL);
    icrf::TrainConfig tc = p.train;
    tc.seed = mix_seed(study_stream, 0);
    st.training = icrf::train(pairs, tc);

    double base_sum = 0.0;
    double refined_sum = 0.0;
    int ok = 0;
    int improved = 0;
    for (std::size_t i = 0; i < heldout.size(); ++i) {
        const auto& h = heldout[i];
        IcrfSample s;
        std::ostringstream name;
        name << "heldout_" << std::setw(4) << std::setfill('0') << i;
        s.name = name.str();
        try {
            s.refined = icrf::refine(st.training.model, h.x0, p.refine, mix_seed(study_stream, 1 + i));
            s.kld_x0 = metrics::kld(h.x0, h.x1);
            s.kld_refined = metrics::kld(s.refined, h.x1);
            s.sim_refined = metrics::sim(s.refined, h.x1);
            s.points = icrf::extract_points(s.refined, synthetic.n_targets, p.point_quantile);
            s.point_error = matched_point_error(s.points, h.gt_points);
            s.points_ok = s.point_error <= p.point_tolerance;
        } catch (const Error& e) {
            st.failures.push_back(s.name + ": " + e.what());
            continue;
        }
        base_sum += s.kld_x0;
        refined_sum += s.kld_refined;
        ok += s.points_ok ? 1 : 0;
        improved += s.kld_refined < s.kld_x0 ? 1 : 0;
        st.samples.push_back(std::move(s));
    }
    const double n = static_cast<double>(std::max<std::size_t>(st.samples.size(), 1));
    st.baseline_kld = base_sum / n;
    st.refined_kld = refined_sum / n;
    st.points_ok_fraction = static_cast<double>(ok) / static_cast<double>(heldout.size());
    st.improved_fraction = static_cast<double>(improved) / static_cast<double>(heldout.size());
    return st;
}

// ---------------------------------------------------------------------------
// I/O helpers

void write_json(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

void write_trajectory_csv(const std::vector<scbr::LossReport>& trajectory, const fs::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    out << "step,l_sup,l_con,l_grad,l_total,lambda_con,lambda_grad\n";
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const auto& r = trajectory[i];
        out << i << ',' << format_real(r.l_sup) << ',' << format_real(r.l_con) << ',' << format_real(r.l_grad) << ','
            << format_real(r.l_total) << ',' << format_real(r.lambda_con) << ',' << format_real(r.lambda_grad) << '\n';
    }
    if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

void write_loss_curve_csv(const std::vector<double>& curve, const icrf::TrainConfig& c, const fs::path& path) {
    std::ofstream out(path);
    out << "step,loss,learning_rate\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out << i << ',' << format_real(curve[i]) << ',' << format_real(icrf::learning_rate_at(c, static_cast<int>(i)))
            << '\n';
    }
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
}

std::vector<std::pair<ScalarField, ScalarField>> load_pair_dir(const fs::path& dir) {
    const fs::path x0_dir = dir / "x0";
    const fs::path x1_dir = dir / "x1";
    if (!fs::is_directory(x0_dir) || !fs::is_directory(x1_dir)) {
        fail(ErrorCode::Io, dir.string() + " must contain x0/ and x1/ directories");
    }
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(x0_dir)) {
        if (e.path().extension() == ".afg") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    std::vector<std::pair<ScalarField, ScalarField>> out;
    for (const auto& n : names) {
        if (!fs::exists(x1_dir / n)) fail(ErrorCode::MissingPair, "no x1 field for " + n);
        out.emplace_back(read_field(x0_dir / n), read_field(x1_dir / n));
    }
    if (out.empty()) fail(ErrorCode::InvalidArgument, "no .afg pairs under " + dir.string());
    return out;
}

void write_pair_dir(const std::vector<synth::SyntheticPair>& pairs, const fs::path& dir) {
    fs::create_directories(dir / "x0");
    fs::create_directories(dir / "x1");
    json points = json::object();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::ostringstream name;
        name << "pair_" << std::setw(4) << std::setfill('0') << i;
        write_field(pairs[i].x0, dir / "x0" / (name.str() + ".afg"));
        write_field(pairs[i].x1, dir / "x1" / (name.str() + ".afg"));
        json pts = json::array();
        for (const auto& p : pairs[i].gt_points) pts.push_back({p.x, p.y});
        points[name.str()] = pts;
    }
    write_json(points, dir / "points.json");
}

// ---------------------------------------------------------------------------
// Modes

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Writer {
public:
    explicit Writer(fs::path root) : root_(std::move(root)) {}

    fs::path path(const std::string& rel) {
        const fs::path p = root_ / rel;
        fs::create_directories(p.parent_path());
        files_.push_back(rel);
        return p;
    }
    std::vector<std::string>& files() { return files_; }

private:
    fs::path root_;
    std::vector<std::string> files_;
};

json run_scbr(const ExperimentConfig& c, Writer& w) {
    const ScbrParams& p = c.scbr;
    scbr::LossInputs init;
    BinaryMask object;
    if (p.gt_path.empty()) {
        init = make_scbr_instance(p, c.seed, &object);
    } else {
        ScalarField gt = read_field(p.gt_path);
        if (!p.object_mask_path.empty()) {
            object = read_mask(p.object_mask_path);
            gt = intersect_annotation(gt, object);
        }
        BinaryMask bound = boundary_mask(minmax_normalize(gt), p.boundary_threshold, p.boundary_width);
        if (!p.p_img_path.empty()) {
            init = {read_field(p.p_img_path), read_field(p.p_sem_path), gt, bound};
        } else {
            ScbrParams sized = p;
            sized.width = gt.width();
            sized.height = gt.height();
            init = make_scbr_instance(sized, c.seed);
            init.gt = gt;
            init.m_bound = bound;
        }
    }
    const ScbrStudy s = run_scbr_study(init, p);

    write_trajectory_csv(s.result.trajectory, w.path("trajectory.csv"));
    write_field(s.inputs.gt, w.path("fields/gt.afg"));
    write_mask(s.inputs.m_bound, w.path("fields/boundary_mask.afg"));
    write_field(s.result.p_img, w.path("fields/p_img.afg"));
    write_field(s.result.p_sem, w.path("fields/p_sem.afg"));

    const auto& first = s.result.trajectory.front();
    const auto& last = s.result.trajectory.back();
    return {
        {"steps", p.steps},
        {"step_size", p.step_size},
        {"initial", {{"l_sup", first.l_sup}, {"l_con", first.l_con}, {"l_grad", first.l_grad}, {"l_total", first.l_total}}},
        {"final", {{"l_sup", last.l_sup}, {"l_con", last.l_con}, {"l_grad", last.l_grad}, {"l_total", last.l_total}}},
        {"smoothing_window", 10},
        {"smoothed_total_non_increasing", s.smoothed_non_increasing},
        {"overflow_fraction_initial", s.overflow_initial},
        {"overflow_fraction_final", s.overflow_final},
        {"boundary_energy_initial", s.boundary_energy_initial},
        {"boundary_energy_final", s.boundary_energy_final},
    };
}

json run_icrf(const ExperimentConfig& c, Writer& w) {
    const IcrfStudy st = run_icrf_study(c.synthetic, c.icrf, c.seed);

    st.training.model.save(w.path("model.icrf"));
    write_loss_curve_csv(st.training.loss_curve, c.icrf.train, w.path("loss_curve.csv"));

    json samples = json::array();
    for (const auto& s : st.samples) {
        json pts = json::array();
        for (const auto& p : s.points) pts.push_back({{"x", p.x}, {"y", p.y}, {"mass", p.mass}});
        samples.push_back({{"name", s.name},
                           {"kld_x0", s.kld_x0},
                           {"kld_refined", s.kld_refined},
                           {"sim_refined", s.sim_refined},
                           {"points", pts},
                           {"point_error", finite_or_null(s.point_error)},
                           {"points_ok", s.points_ok}});
        if (c.icrf.write_fields) write_field(s.refined, w.path("refined/" + s.name + ".afg"));
    }

    const auto& curve = st.training.loss_curve;
    const std::size_t tail = std::min<std::size_t>(50, curve.size());
    const double head_mean = std::accumulate(curve.begin(), curve.begin() + static_cast<long>(tail), 0.0) / tail;
    const double tail_mean = std::accumulate(curve.end() - static_cast<long>(tail), curve.end(), 0.0) / tail;
    return {
        {"train_pairs", c.icrf.train_pairs},
        {"heldout_pairs", c.icrf.heldout_pairs},
        {"parameter_count", st.training.model.parameters().size()},
        {"train_loss_first50_mean", head_mean},
        {"train_loss_last50_mean", tail_mean},
        {"mean_kld_x0_x1", st.baseline_kld},
        {"mean_kld_refined_x1", st.refined_kld},
        {"kld_ratio", st.baseline_kld > 0 ? json(st.refined_kld / st.baseline_kld) : json(nullptr)},
        {"point_tolerance", c.icrf.point_tolerance},
        {"points_ok_fraction", st.points_ok_fraction},
        {"improved_fraction", st.improved_fraction},
        {"failures", st.failures},
        {"samples", samples},
    };
}

json run_tacot(const ExperimentConfig& c, Writer& w) {
    tacot::CategoryRegistry registry = tacot::CategoryRegistry::defaults();
    registry.extend({{"categories", c.tacot.categories}});
    std::vector<tacot::RoutingCase> cases;
    if (c.tacot.cases_path.empty()) {
        cases = tacot::bundled_cases();
    } else {
        std::ifstream in(c.tacot.cases_path);
        if (!in) fail(ErrorCode::Io, "cannot open case table " + c.tacot.cases_path);
        try {
            cases = tacot::parse_cases(json::parse(in));
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, "malformed case table: " + std::string(e.what()));
        }
    }
    const tacot::RoutingReport report = tacot::evaluate_routing(registry, cases);

    json traces = json::array();
    bool all_sound = true;
    bool all_monotone = true;
    for (const auto& rc : cases) {
        try {
            tacot::ScriptedOracle oracle(rc.oracle_script);
            const auto r = tacot::plan(oracle, registry);
            const bool sound = r.trace.is_sound();
            const bool mono = tacot::layer_order_is_monotone(r.plan);
            all_sound = all_sound && sound;
            all_monotone = all_monotone && mono;
            traces.push_back({{"name", rc.name}, {"sound", sound}, {"plan", tacot::to_json(r.plan)},
                              {"trace", r.trace.to_json()}});
        } catch (const Error& e) {
            traces.push_back({{"name", rc.name}, {"error", e.what()}});
        }
    }
    write_json(traces, w.path("traces.json"));
    json j = tacot::to_json(report);
    j["all_traces_sound"] = all_sound;
    j["all_plans_layer_monotone"] = all_monotone;
    return j;
}

json run_eval(const ExperimentConfig& c, Writer&) {
    return metrics::to_json(
        metrics::evaluate_corpus(c.eval.pred_dir, c.eval.gt_dir, c.eval.fix_frac, c.eval.normalization));
}

json run_softmask(const ExperimentConfig& c, Writer& w) {
    std::vector<std::pair<std::string, BinaryMask>> masks;
    if (c.softmask.masks.empty()) {
        synth::SyntheticPairConfig base = c.synthetic;
        base.seed = c.seed;
        const auto pairs = synth::gen_corpus(base, c.softmask.synthetic_count);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            std::ostringstream name;
            name << "mask_" << std::setw(4) << std::setfill('0') << i;
            masks.emplace_back(name.str(), threshold_mask(pairs[i].x1, 0.5));
        }
    } else {
        for (const auto& p : c.softmask.masks) masks.emplace_back(fs::path(p).stem().string(), read_mask(p));
    }
    json items = json::array();
    int round_trips = 0;
    for (const auto& [name, m] : masks) {
        const ScalarField soft = soft_mask(m, c.softmask.soft);
        const BinaryMask back = threshold_mask(soft, 0.5);
        const bool exact = back == (c.softmask.soft.inside_positive ? m : m.complement());
        round_trips += exact ? 1 : 0;
        write_field(soft, w.path("soft/" + name + ".afg"));
        items.push_back({{"name", name}, {"foreground", m.count()}, {"round_trip_exact", exact}});
    }
    return {{"temperature", c.softmask.soft.temperature},
            {"inside_positive", c.softmask.soft.inside_positive},
            {"masks", items},
            {"round_trip_exact", round_trips},
            {"total", masks.size()}};
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& c) {
    const auto started = std::chrono::steady_clock::now();
    const std::string stamp = utc_timestamp();
    fs::create_directories(c.out_dir);
    Writer w(c.out_dir);

    json body;
    switch (c.mode) {
        case Mode::Scbr: body = run_scbr(c, w); break;
        case Mode::Icrf: body = run_icrf(c, w); break;
        case Mode::Tacot: body = run_tacot(c, w); break;
        case Mode::Eval: body = run_eval(c, w); break;
        case Mode::Softmask: body = run_softmask(c, w); break;
    }
    json report = {{"mode", to_string(c.mode)}, {"seed", c.seed}, {"config_hash", config_hash(c)}, {"results", body}};
    write_json(report, w.path("report.json"));

    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest = {
        {"tool", "affordkit"},
        {"version", kVersion},
        {"mode", to_string(c.mode)},
        {"seed", c.seed},
        {"config_hash", config_hash(c)},
        {"config", to_json(c)},
        {"started_utc", stamp},
        {"wall_seconds", seconds},
        {"files", w.files()},
        {"versions", {{"affordkit", kVersion}, {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                                   std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                                   std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
    };
    write_json(manifest, c.out_dir / "manifest.json");
    return {std::move(report), w.files()};
}

}  // namespace affordkit::harness
