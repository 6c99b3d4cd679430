// Acceptance gate: one PASS/FAIL line per criterion. `--only N` runs a single
// criterion. Exit status is nonzero if any executed criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "affordkit/harness.hpp"
#include "affordkit/icrf.hpp"
#include "affordkit/metrics.hpp"
#include "affordkit/scbr.hpp"
#include "affordkit/softmask.hpp"
#include "affordkit/tacot.hpp"
#include "oracles.hpp"

using namespace affordkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// 1. Interpolant identities and the tau derivative.
Outcome interpolant_exactness() {
    const auto start = std::chrono::steady_clock::now();
    double worst_identity = 0.0;
    double worst_fd = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(mix_seed(1, seed));
        const auto x0 = oracle::random_field(8, 8, mix_seed(2, seed));
        const auto x1 = oracle::random_field(8, 8, mix_seed(3, seed));
        const auto v0 = oracle::random_field(8, 8, mix_seed(4, seed), -1.0, 1.0);
        const double t = rng.uniform();
        const double tau = rng.uniform(0.01, 0.99);
        const auto s = icrf::make_sample(x0, x1, t, tau, v0);
        const double h = 1e-4;
        const auto up = icrf::interpolate_velocity(v0, x0, x1, tau + h);
        const auto down = icrf::interpolate_velocity(v0, x0, x1, tau - h);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            worst_identity = std::max(worst_identity, std::abs(s.x_t[i] - ((1 - t) * x0[i] + t * x1[i])));
            worst_identity = std::max(worst_identity, std::abs(s.v_tau[i] - ((1 - tau) * v0[i] + tau * (x1[i] - x0[i]))));
            worst_identity = std::max(worst_identity, std::abs(s.a_gt[i] - ((x1[i] - x0[i]) - v0[i])));
            worst_fd = std::max(worst_fd, std::abs((up[i] - down[i]) / (2 * h) - s.a_gt[i]));
        }
    }
    const double secs = seconds_since(start);
    return {worst_identity <= 1e-12 && worst_fd <= 1e-6 && secs < 1.0,
            "identity err " + fmt("%.2e", worst_identity) + ", tau-FD err " + fmt("%.2e", worst_fd) + ", " +
                fmt("%.3f", secs) + " s"};
}

// 2. Analytic gradients against central differences.
Outcome gradient_suite() {
    const auto start = std::chrono::steady_clock::now();
    const double h = 1e-5;
    double bce = 0.0, kl = 0.0, bound = 0.0, composite = 0.0, model = 0.0;
    auto vec = oracle::to_vec;
    auto field = [](const std::vector<double>& v) { return oracle::from_vec(8, 8, v); };
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = oracle::random_field(8, 8, mix_seed(10, seed), 0.05, 0.95);
        const auto q = oracle::random_field(8, 8, mix_seed(11, seed), 0.05, 0.95);
        const auto g = oracle::random_field(8, 8, mix_seed(12, seed));
        const auto m = oracle::random_mask(8, 8, mix_seed(13, seed), 0.4);

        const auto b = scbr::bce_loss(p, g);
        bce = std::max(bce, oracle::max_rel_error(
                                vec(b.grad), oracle::central_diff([&](const auto& x) { return scbr::bce_loss(field(x), g).value; },
                                                                  vec(p), h)));

        const auto k = scbr::sym_kl_consistency(p, q);
        kl = std::max(kl, oracle::max_rel_error(
                              vec(k.grad_img),
                              oracle::central_diff([&](const auto& x) { return scbr::sym_kl_consistency(field(x), q).value; },
                                                   vec(p), h)));
        kl = std::max(kl, oracle::max_rel_error(
                              vec(k.grad_sem),
                              oracle::central_diff([&](const auto& x) { return scbr::sym_kl_consistency(p, field(x)).value; },
                                                   vec(q), h)));

        const auto bd = scbr::boundary_grad_penalty(p, m);
        bound = std::max(bound, oracle::max_rel_error(
                                    vec(bd.grad),
                                    oracle::central_diff(
                                        [&](const auto& x) { return scbr::boundary_grad_penalty(field(x), m).value; }, vec(p), h)));

        // Composite, with the dynamic weights held at their values at the base point.
        const scbr::LossInputs in{p, q, g, m};
        const auto r = scbr::total_loss(in, {});
        auto objective = [&](const ScalarField& pi, const ScalarField& ps) {
            return scbr::dual_stream_sup({pi, ps, g, m}).value + r.lambda_con * scbr::sym_kl_consistency(pi, ps).value +
                   r.lambda_grad * (scbr::boundary_grad_penalty(pi, m).value + scbr::boundary_grad_penalty(ps, m).value);
        };
        composite = std::max(composite, oracle::max_rel_error(vec(r.grad_p_img),
                                                              oracle::central_diff([&](const auto& x) { return objective(field(x), q); },
                                                                                   vec(p), h)));
        composite = std::max(composite, oracle::max_rel_error(vec(r.grad_p_sem),
                                                              oracle::central_diff([&](const auto& x) { return objective(p, field(x)); },
                                                                                   vec(q), h)));

        // Model backward: every parameter of a reduced-width network against the
        // scalar-loop reference forward pass.
        const icrf::Architecture arch{1, {16, 16}, icrf::Activation::Tanh};
        const icrf::AccelerationModel net(arch, mix_seed(14, seed));
        Rng rng(mix_seed(15, seed));
        const auto v0 = oracle::random_field(8, 8, mix_seed(16, seed), -0.5, 0.5);
        const std::vector<icrf::FlowSample> batch{icrf::make_sample(p, g, rng.uniform(), rng.uniform(), v0)};
        auto mse = [&](const std::vector<double>& params) {
            const auto& s = batch[0];
            double acc = 0.0;
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const double d = oracle::naive_mlp_pixel(arch, params, s.v_tau, s.x_t, s.t, s.tau, x, y) - s.a_gt(x, y);
                    acc += d * d;
                }
            return acc / 64.0;
        };
        model = std::max(model, oracle::max_rel_error(icrf::model_backward(net, batch),
                                                      oracle::central_diff(mse, net.parameters(), h)));
    }
    // The default-width network, once.
    {
        const icrf::AccelerationModel net(icrf::Architecture{}, 99);
        const auto x0 = oracle::random_field(8, 8, 97);
        const auto x1 = oracle::random_field(8, 8, 98);
        const std::vector<icrf::FlowSample> batch{icrf::make_sample(x0, x1, 0.4, 0.7, ScalarField(8, 8))};
        auto loss = [&](const std::vector<double>& params) {
            const icrf::AccelerationModel m(net.architecture(), params);
            const auto out = m.forward(batch[0].v_tau, batch[0].x_t, batch[0].t, batch[0].tau);
            double acc = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) acc += (out[i] - batch[0].a_gt[i]) * (out[i] - batch[0].a_gt[i]);
            return acc / static_cast<double>(out.size());
        };
        model = std::max(model, oracle::max_rel_error(icrf::model_backward(net, batch),
                                                      oracle::central_diff(loss, net.parameters(), h)));
    }
    const double secs = seconds_since(start);
    const bool pass = bce < 1e-4 && kl < 1e-4 && bound < 1e-4 && model < 1e-4 && composite < 1e-3 && secs < 30.0;
    return {pass, "bce " + fmt("%.1e", bce) + ", sym-kl " + fmt("%.1e", kl) + ", boundary " + fmt("%.1e", bound) +
                      ", composite " + fmt("%.1e", composite) + ", model " + fmt("%.1e", model) + ", 20 seeds, " +
                      fmt("%.1f", secs) + " s"};
}

// 3. Closed-form ODE checks.
Outcome ode_oracle() {
    const auto x0 = oracle::random_field(8, 8, 301);
    const auto a = oracle::random_field(8, 8, 302, -1.0, 1.0);
    const icrf::AccelerationFn constant = [&](const ScalarField&, double, const ScalarField&, double) { return a; };
    const ScalarField expect = x0 + a;
    double worst = 0.0;
    for (int nt : {1, 10, 100})
        for (int ntau : {1, 10, 100}) {
            const icrf::RefineConfig cfg{nt, ntau, icrf::VelocityPrior::zero()};
            worst = std::max(worst, max_abs_diff(icrf::refine_unclamped(constant, x0, cfg, 0), expect));
        }

    synth::SyntheticPairConfig sc;
    sc.seed = 303;
    const auto pair = synth::gen_pair(sc);
    const ScalarField delta = pair.x1 - pair.x0;
    const icrf::AccelerationFn tracking = [&](const ScalarField& v, double, const ScalarField&, double) {
        return delta - v;
    };
    std::vector<double> dev;
    bool monotone = true;
    for (int ntau : {8, 16, 32, 64}) {
        const icrf::RefineConfig cfg{10, ntau, icrf::VelocityPrior::zero()};
        dev.push_back(max_abs_diff(icrf::refine_unclamped(tracking, pair.x0, cfg, 0), pair.x1));
        if (dev.size() > 1 && !(dev.back() < dev[dev.size() - 2])) monotone = false;
    }
    std::string d = "constant-field err " + fmt("%.2e", worst) + "; tracking max dev at n_tau 8/16/32/64 =";
    for (double v : dev) d += " " + fmt("%.4f", v);
    d += monotone ? " (decreasing)" : " (not decreasing)";
    return {worst < 1e-9 && monotone, d};
}

// 4. Desk-scale ICRF run on the default synthetic corpus.
Outcome icrf_efficacy() {
    const auto start = std::chrono::steady_clock::now();
    const harness::ExperimentConfig c;
    const auto study = harness::run_icrf_study(c.synthetic, c.icrf, c.seed);
    const double secs = seconds_since(start);
    const double ratio = study.refined_kld / study.baseline_kld;
    const bool pass = ratio <= 0.7 && study.points_ok_fraction >= 0.8 && secs < 600.0 && study.failures.empty();
    return {pass, "KLD x0 " + fmt("%.4f", study.baseline_kld) + " -> refined " + fmt("%.4f", study.refined_kld) +
                      " (ratio " + fmt("%.3f", ratio) + "), points within 2 px " +
                      fmt("%.0f%%", 100.0 * study.points_ok_fraction) + ", " + fmt("%.0f", secs) + " s"};
}

// 5. SCBR optimization from a random init.
Outcome scbr_convergence() {
    const harness::ScbrParams p;
    const auto init = harness::make_scbr_instance(p, 37);
    const auto s = harness::run_scbr_study(init, p);
    const double of_img = scbr::overflow_fraction(s.result.p_img, init.gt);
    const double of_sem = scbr::overflow_fraction(s.result.p_sem, init.gt);
    const bool pass = s.result.trajectory.size() == 201 && s.smoothed_non_increasing && of_img < 0.05 && of_sem < 0.05 &&
                      s.boundary_energy_final < s.boundary_energy_initial;
    return {pass, std::string("smoothed L_total ") + (s.smoothed_non_increasing ? "non-increasing" : "increases") +
                      ", overflow img " + fmt("%.2f%%", 100 * of_img) + " sem " + fmt("%.2f%%", 100 * of_sem) +
                      ", boundary energy " + fmt("%.3e", s.boundary_energy_initial) + " -> " +
                      fmt("%.3e", s.boundary_energy_final)};
}

// 6. Metric identities and worked examples.
Outcome metric_oracles() {
    double self_kld = 0.0, self_sim = 0.0, asym = 0.0, affine = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = oracle::random_field(12, 12, mix_seed(60, seed));
        const auto g = oracle::random_field(12, 12, mix_seed(61, seed));
        self_kld = std::max(self_kld, std::abs(metrics::kld(p, p)));
        self_sim = std::max(self_sim, std::abs(metrics::sim(p, p) - 1.0));
        asym = std::max(asym, std::abs(metrics::sim(p, g) - metrics::sim(g, p)));
        ScalarField q = 2.5 * p;
        for (double& v : q.values()) v += 0.75;
        affine = std::max(affine, std::abs(metrics::nss(q, g, 0.5) - metrics::nss(p, g, 0.5)));
    }
    const double ex_kld = metrics::kld(ScalarField(2, 1, {0.5, 0.5}), ScalarField(2, 1, {1.0, 0.0}));
    const double ex_sim = metrics::sim(ScalarField(2, 1, {0.3, 0.7}), ScalarField(2, 1, {0.7, 0.3}));
    ScalarField peak(5, 5);
    peak(2, 2) = 1.0;
    const double ex_nss = metrics::nss(peak, peak, 0.5);
    const double nss_expect = (1.0 - 1.0 / 25.0) / std::sqrt(1.0 / 25.0 - 1.0 / 625.0);
    const bool examples = std::abs(ex_kld - std::log(2.0)) < 1e-6 && std::abs(ex_sim - 0.6) < 1e-12 &&
                          std::abs(ex_nss - nss_expect) < 1e-12;
    const bool pass = self_kld <= 1e-9 && self_sim <= 1e-9 && asym == 0.0 && affine < 1e-9 && examples;
    return {pass, "kld(p,p) " + fmt("%.1e", self_kld) + ", |sim(p,p)-1| " + fmt("%.1e", self_sim) + ", sim asym " +
                      fmt("%.1e", asym) + ", nss affine " + fmt("%.1e", affine) + ", examples " +
                      (examples ? "ok" : "mismatch")};
}

// 7. Planner routing, gating and replanning.
Outcome tacot_routing() {
    const auto registry = tacot::CategoryRegistry::defaults();
    const auto cases = tacot::bundled_cases();
    const auto report = tacot::evaluate_routing(registry, cases);

    bool anchored = true;
    auto expect = [&](const std::string& script, const std::vector<std::string>& want) {
        tacot::ScriptedOracle o(script);
        std::vector<std::string> got;
        for (const auto& a : tacot::plan(o, registry).plan) got.push_back(tacot::to_string(a));
        anchored = anchored && got == want;
    };
    expect("category = tissue", {"pull_out@object"});
    expect("category = curtain", {"pull@object"});
    expect("category = pants\nsleeve = not_applicable\nleg = long\npart_at_target.legs = false",
           {"pick@garment", "place@garment", "fold_legs_secondary@legs"});

    bool sound = true;
    bool replan_ok = true;
    for (const auto& c : cases) {
        tacot::ScriptedOracle o(c.oracle_script);
        const auto r = tacot::plan(o, registry);
        sound = sound && r.trace.is_sound() && tacot::layer_order_is_monotone(r.plan);
        std::vector<std::string> parts;
        for (const auto& a : r.plan)
            if (a.layer == tacot::Layer::Attribute && std::find(parts.begin(), parts.end(), a.target_part) == parts.end())
                parts.push_back(a.target_part);
        for (unsigned bits = 0; bits < (1u << parts.size()); ++bits) {
            tacot::ScriptedOracle fb;
            for (std::size_t i = 0; i < parts.size(); ++i)
                fb.set("part_at_target." + parts[i], (bits >> i) & 1u ? "true" : "false");
            const auto out = tacot::replan_after_feedback(r.plan, fb);
            std::size_t j = 0;
            for (const auto& a : out) {
                while (j < r.plan.size() && !(r.plan[j] == a)) ++j;
                if (j == r.plan.size()) replan_ok = false;
                ++j;
            }
        }
    }
    const bool pass = report.accuracy == 1.0 && anchored && sound && replan_ok;
    return {pass, std::to_string(static_cast<int>(std::lround(report.accuracy * report.cases.size()))) + "/" +
                      std::to_string(report.cases.size()) + " cases, anchored cases " + (anchored ? "ok" : "wrong") +
                      ", gating " + (sound ? "sound" : "violated") + ", replan " +
                      (replan_ok ? "subsequence" : "adds or reorders")};
}

// 8. Soft masks on random 16x16 masks.
Outcome softmask_suite() {
    double worst_complement = 0.0;
    bool monotone = true;
    int round_trips = 0;
    int masks = 0;
    for (std::uint64_t seed = 0; masks < 20; ++seed) {
        const auto m = oracle::random_mask(16, 16, mix_seed(80, seed));
        if (m.count() == 0 || m.count() == m.size()) continue;
        ++masks;
        const SoftMaskParams sp{2.0, true};
        const auto s = soft_mask(m, sp);
        const auto c = soft_mask(m.complement(), sp);
        const auto d = signed_distance(m);
        for (std::size_t i = 0; i < s.size(); ++i) {
            worst_complement = std::max(worst_complement, std::abs(s[i] + c[i] - 1.0));
            for (std::size_t j = 0; j < s.size(); ++j)
                if (d[i] > d[j] && !(s[i] > s[j])) monotone = false;
        }
        if (threshold_mask(s, 0.5) == m) ++round_trips;
    }
    const bool pass = worst_complement <= 1e-9 && monotone && round_trips == 20;
    return {pass, "complement err " + fmt("%.1e", worst_complement) + ", monotone " + (monotone ? "yes" : "no") +
                      ", round trips " + std::to_string(round_trips) + "/20"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// 9. Repeated runs give identical report bodies and artifacts.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "affordkit_acceptance_determinism";
    fs::remove_all(root);
    synth::SyntheticPairConfig sc;
    harness::write_pair_dir(synth::gen_corpus(sc, 5), root / "pairs");
    const std::vector<std::string> configs = {
        R"({"mode": "tacot"})",
        R"({"mode": "scbr", "seed": 37})",
        R"({"mode": "softmask"})",
        R"({"mode": "icrf", "icrf": {"train_pairs": 20, "heldout_pairs": 5, "train": {"steps": 100}}})",
        R"({"mode": "eval", "eval": {"pred_dir": ")" + (root / "pairs" / "x0").string() + R"(", "gt_dir": ")" +
            (root / "pairs" / "x1").string() + R"("}})",
    };
    int identical = 0;
    int compared = 0;
    std::string mismatch;
    for (const auto& text : configs) {
        auto c = harness::parse_config(nlohmann::json::parse(text));
        c.out_dir = root / "a";
        const auto ra = harness::run_experiment(c);
        c.out_dir = root / "b";
        harness::run_experiment(c);
        for (const auto& f : ra.files) {
            if (f == "manifest.json") continue;
            ++compared;
            if (slurp(root / "a" / f) == slurp(root / "b" / f))
                ++identical;
            else
                mismatch += " " + harness::to_string(c.mode) + ":" + f;
        }
        fs::remove_all(root / "a");
        fs::remove_all(root / "b");
    }
    fs::remove_all(root);
    return {identical == compared && compared > 0,
            std::to_string(identical) + "/" + std::to_string(compared) + " artifacts identical across 5 modes" + mismatch};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<Criterion> criteria = {
        {1, "interpolant exactness", interpolant_exactness},
        {2, "gradient suite", gradient_suite},
        {3, "ODE oracle", ode_oracle},
        {4, "ICRF efficacy", icrf_efficacy},
        {5, "SCBR convergence", scbr_convergence},
        {6, "metric oracles", metric_oracles},
        {7, "TA-CoT routing", tacot_routing},
        {8, "soft-mask suite", softmask_suite},
        {9, "determinism", determinism},
    };
    bool all = true;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
