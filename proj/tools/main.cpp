#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "affordkit/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace affordkit;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out_dir;
};

// --config takes a file path or, when it starts with '{', inline JSON.
json read_config_json(const std::string& path) {
    if (!path.empty() && path.front() == '{') {
        try {
            return json::parse(path);
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, std::string("inline config is not valid JSON: ") + e.what());
        }
    }
    std::ifstream in(path);
    if (!in) fail(ErrorCode::InvalidArgument, "cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, path + " is not valid JSON: " + e.what());
    }
}

harness::ExperimentConfig experiment_config(const Globals& g) {
    harness::ExperimentConfig c = harness::parse_config(g.config.empty() ? json::object() : read_config_json(g.config));
    if (g.seed) c.seed = *g.seed;
    if (!g.out_dir.empty()) c.out_dir = g.out_dir;
    return c;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affordance heatmap refinement and task planning toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", harness::kVersion);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Experiment seed (overrides the config)");
    app.add_option("--config", g.config, "JSON configuration file or inline JSON object");
    app.add_option("--out-dir", g.out_dir, "Output directory");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate synthetic (x0, x1) pairs");
    int gen_count = 10;
    std::uint64_t gen_offset = 0;
    gen->add_option("--count", gen_count, "Number of pairs")->check(CLI::PositiveNumber);
    gen->add_option("--offset", gen_offset, "First substream index");

    // softmask
    auto* sm = app.add_subcommand("softmask", "Soft mask from a binary mask");
    std::string sm_in, sm_out;
    SoftMaskParams sm_params;
    bool sm_inside_negative = false;
    sm->add_option("--in", sm_in, "Binary mask (AFG1)")->required();
    sm->add_option("--out", sm_out, "Output field")->required();
    sm->add_option("--temperature", sm_params.temperature, "Pixels per sigmoid unit")->check(CLI::PositiveNumber);
    sm->add_flag("--inside-negative", sm_inside_negative, "Foreground maps below 0.5");

    // intersect
    auto* isect = app.add_subcommand("intersect", "Restrict an annotation to an object mask");
    std::string is_gt, is_mask, is_out;
    isect->add_option("--gt", is_gt, "Annotation field")->required();
    isect->add_option("--mask", is_mask, "Object mask")->required();
    isect->add_option("--out", is_out, "Output field")->required();

    // scbr-optimize
    auto* so = app.add_subcommand("scbr-optimize", "Optimize a dual-branch heatmap under the boundary-refinement loss");

    // icrf-train
    auto* it = app.add_subcommand("icrf-train", "Train the acceleration model");
    std::string it_data, it_out;
    it->add_option("--data", it_data, "Directory with x0/ and x1/")->required();
    it->add_option("--out", it_out, "Model file")->required();
    std::string it_curve;
    it->add_option("--loss-curve", it_curve, "Optional CSV of per-step loss");

    // icrf-refine
    auto* ir = app.add_subcommand("icrf-refine", "Refine a heatmap with a trained model");
    std::string ir_model, ir_in, ir_out;
    icrf::RefineConfig ir_cfg;
    ir->add_option("--model", ir_model, "Model file")->required();
    ir->add_option("--in", ir_in, "Input field")->required();
    ir->add_option("--out", ir_out, "Output field")->required();
    ir->add_option("--nt", ir_cfg.n_t, "Outer steps")->check(CLI::PositiveNumber);
    ir->add_option("--ntau", ir_cfg.n_tau, "Inner steps")->check(CLI::PositiveNumber);
    int ir_points = 0;
    double ir_quantile = 0.9;
    ir->add_option("--points", ir_points, "Also print this many manipulation points")->check(CLI::NonNegativeNumber);
    ir->add_option("--quantile", ir_quantile, "Point extraction quantile")->check(CLI::Range(0.0, 0.999999));

    // plan
    auto* pl = app.add_subcommand("plan", "Plan sub-actions for one object");
    std::string pl_oracle, pl_host, pl_out;
    int pl_port = 0;
    double pl_timeout = 10.0;
    bool pl_trace = false;
    auto* pl_oracle_opt = pl->add_option("--oracle", pl_oracle, "Scripted oracle file");
    auto* pl_host_opt = pl->add_option("--host", pl_host, "Remote oracle host");
    pl->add_option("--port", pl_port, "Remote oracle port")->needs(pl_host_opt);
    pl->add_option("--timeout", pl_timeout, "Remote oracle timeout in seconds")->check(CLI::PositiveNumber);
    pl->add_flag("--trace", pl_trace, "Include the gate trace");
    pl->add_option("--out", pl_out, "Write JSON here instead of stdout");
    pl_oracle_opt->excludes(pl_host_opt);

    // eval
    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    std::string ev_pred, ev_gt, ev_out, ev_norm = "sum";
    double ev_fix = 0.5;
    ev->add_option("--pred", ev_pred, "Prediction directory")->required();
    ev->add_option("--gt", ev_gt, "Ground-truth directory")->required();
    ev->add_option("--fix-frac", ev_fix, "Fixation threshold as a fraction of the GT maximum")
        ->check(CLI::Range(1e-12, 1.0));
    ev->add_option("--normalization", ev_norm, "sum or minmax")->check(CLI::IsMember({"sum", "minmax"}));
    ev->add_option("--out", ev_out, "Report file (stdout when omitted)");

    // run
    auto* run = app.add_subcommand("run", "Run a full experiment from --config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            harness::ExperimentConfig c = experiment_config(g);
            synth::SyntheticPairConfig base = c.synthetic;
            base.seed = c.seed;
            harness::write_pair_dir(synth::gen_corpus(base, gen_count, gen_offset), c.out_dir);
        } else if (*sm) {
            sm_params.inside_positive = !sm_inside_negative;
            write_field(soft_mask(read_mask(sm_in), sm_params), sm_out);
        } else if (*isect) {
            write_field(intersect_annotation(read_field(is_gt), read_mask(is_mask)), is_out);
        } else if (*so) {
            harness::ExperimentConfig c = experiment_config(g);
            c.mode = harness::Mode::Scbr;
            print_json(harness::run_experiment(c).report);
        } else if (*it) {
            icrf::TrainConfig tc;
            if (!g.config.empty()) {
                json j = read_config_json(g.config);
                if (j.contains("icrf") && j["icrf"].contains("train")) j = j["icrf"]["train"];
                tc = harness::parse_train_config(j);
            }
            if (g.seed) tc.seed = *g.seed;
            const auto result = icrf::train(harness::load_pair_dir(it_data), tc);
            result.model.save(it_out);
            if (!it_curve.empty()) harness::write_loss_curve_csv(result.loss_curve, tc, it_curve);
        } else if (*ir) {
            const auto model = icrf::AccelerationModel::load(ir_model);
            const ScalarField out = icrf::refine(model, read_field(ir_in), ir_cfg, g.seed.value_or(0));
            write_field(out, ir_out);
            if (ir_points > 0) {
                json pts = json::array();
                for (const auto& p : icrf::extract_points(out, ir_points, ir_quantile)) {
                    pts.push_back({{"x", p.x}, {"y", p.y}, {"mass", p.mass}});
                }
                print_json(pts);
            }
        } else if (*pl) {
            tacot::CategoryRegistry registry = tacot::CategoryRegistry::defaults();
            if (!g.config.empty()) {
                json j = read_config_json(g.config);
                registry.extend(j.contains("tacot") ? j["tacot"] : j);
            }
            std::unique_ptr<tacot::AttributeOracle> oracle;
            if (!pl_oracle.empty()) {
                oracle = std::make_unique<tacot::ScriptedOracle>(tacot::ScriptedOracle::from_file(pl_oracle));
            } else if (!pl_host.empty()) {
                oracle = tacot::RemoteOracle::connect(
                    pl_host, pl_port, std::chrono::milliseconds(static_cast<long long>(pl_timeout * 1000.0)));
            } else {
                fail(ErrorCode::InvalidArgument, "plan needs --oracle or --host/--port");
            }
            const auto r = tacot::plan(*oracle, registry);
            json out = {{"category", r.category}, {"kind", tacot::to_string(r.kind)}, {"plan", tacot::to_json(r.plan)}};
            if (pl_trace) out["trace"] = r.trace.to_json();
            if (pl_out.empty()) {
                print_json(out);
            } else {
                harness::write_json(out, pl_out);
            }
        } else if (*ev) {
            const auto norm = ev_norm == "sum" ? metrics::Normalization::Sum : metrics::Normalization::MinMax;
            const json report = metrics::to_json(metrics::evaluate_corpus(ev_pred, ev_gt, ev_fix, norm));
            if (ev_out.empty()) {
                print_json(report);
            } else {
                harness::write_json(report, ev_out);
            }
        } else if (*run) {
            if (g.config.empty()) fail(ErrorCode::InvalidArgument, "run needs --config");
            const auto result = harness::run_experiment(experiment_config(g));
            std::cout << "wrote " << result.files.size() << " files plus manifest.json to "
                      << experiment_config(g).out_dir.string() << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return harness::is_validation_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
