#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "razor/checkpoint_io.hpp"
#include "razor/config.hpp"
#include "razor/data.hpp"
#include "razor/engine.hpp"
#include "razor/errors.hpp"
#include "razor/metrics.hpp"
#include "razor/pretrain.hpp"
#include "razor/quantize.hpp"
#include "razor/saliency.hpp"

namespace fs = std::filesystem;
using namespace razor;

namespace {

class RunLog {
  public:
    explicit RunLog(const fs::path& dir) : out_(dir / "run.log", std::ios::app) {}

    void line(const std::string& msg) {
        auto now = std::chrono::system_clock::now();
        auto t = std::chrono::system_clock::to_time_t(now);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
        out_ << buf << "Z " << msg << "\n";
        out_.flush();
        std::cerr << msg << "\n";
    }

  private:
    std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write " + path.string());
    f << text;
}

struct Session {
    RunConfig cfg;
    fs::path out_dir;
};

Session open_session(const std::string& config_path, const std::string& out_override,
                     std::optional<uint64_t> seed_override) {
    Session s;
    s.cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed_override) s.cfg.seed = *seed_override;
    if (!out_override.empty()) s.cfg.output_dir = out_override;
    s.cfg.split.seed = s.cfg.seed;
    s.cfg.validate();
    s.out_dir = s.cfg.output_dir;
    fs::create_directories(s.out_dir);
    write_text(s.out_dir / "resolved_config.txt", render_run_config(s.cfg));
    return s;
}

nlohmann::json summary_json(const MetricsReport& r) {
    return nlohmann::json::parse(r.to_json());
}

int cmd_pretrain(const Session& s) {
    RunLog log(s.out_dir);
    log.line("pretrain: generating data");
    Dataset ds = generate(s.cfg.split, s.cfg.model);
    Checkpoint init = init_checkpoint(s.cfg.model, s.cfg.seed);
    log.line("pretrain: training " + std::to_string(s.cfg.pretrain.steps) + " steps");
    Checkpoint trained = pretrain(init, ds, s.cfg.pretrain, s.cfg.razor.weights.temperature);

    EngineSplits splits = make_engine_splits(ds);
    MetricsReport rep = evaluate_all(trained, trained, splits.full, "pretrained", "fp");
    save_checkpoint(trained, s.out_dir / "pretrained.ckpt");
    write_text(s.out_dir / "pretrain_metrics.json", rep.to_json() + "\n");
    std::ostringstream msg;
    msg << "pretrain: m1=" << rep.m1 << " m4=" << rep.m4;
    log.line(msg.str());
    std::cout << rep.to_json() << "\n";
    if (rep.m1 < 0.9 || rep.m4 < 0.9) {
        log.line("pretrain: convergence contract not met (need m1>=0.9 and m4>=0.9)");
        return 2;
    }
    return 0;
}

int run_unlearn_variant(const Session& s, const Checkpoint& frozen, const Dataset& ds,
                        const RazorConfig& rc, const fs::path& dir, RunLog& log,
                        RunResult& out_result) {
    fs::create_directories(dir);
    EngineSplits splits = make_engine_splits(ds);
    out_result = run(frozen, splits, rc);
    save_checkpoint(out_result.edited, dir / "edited.ckpt");
    write_text(dir / "trace.jsonl", out_result.trace.to_jsonl());
    write_text(dir / "report_before.json", out_result.before.to_json() + "\n");
    write_text(dir / "report_after.json", out_result.after.to_json() + "\n");

    // Saliency table of the frozen model, for inspection.
    auto grads = component_gradients(frozen, splits.retain_train, splits.forget_train,
                                     rc.weights.temperature);
    SaliencyTable table = build_table(frozen, grads, rc.alpha, rc.eps, rc.saliency_variant);
    std::ofstream csv(dir / "saliency.csv");
    write_saliency_csv(table, csv);

    std::ostringstream msg;
    msg << "run: target_met=" << (out_result.trace.target_met ? "yes" : "no")
        << " stop=" << out_result.trace.stop_reason << " m1=" << out_result.after.m1
        << " m4=" << out_result.after.m4 << " m5=" << out_result.after.m5;
    log.line(msg.str());
    return 0;
}

int cmd_unlearn(const Session& s, const std::string& ckpt_path) {
    RunLog log(s.out_dir);
    Checkpoint frozen = load_checkpoint(ckpt_path);
    Dataset ds = generate(s.cfg.split, s.cfg.model);
    RunResult result;
    int rc = run_unlearn_variant(s, frozen, ds, s.cfg.razor, s.out_dir, log, result);
    if (rc != 0) return rc;
    if (!result.trace.target_met) log.line("unlearn: target-not-met (flagged success)");
    std::cout << result.after.to_json() << "\n";
    return 0;
}

int cmd_quant_eval(const Session& s, const std::string& ckpt_path,
                   const std::string& reference_path) {
    RunLog log(s.out_dir);
    Checkpoint c = load_checkpoint(ckpt_path);
    Checkpoint ref = reference_path.empty() ? c : load_checkpoint(reference_path);
    Dataset ds = generate(s.cfg.split, s.cfg.model);
    EngineSplits splits = make_engine_splits(ds);

    MetricsReport fp = evaluate_all(ref, c, splits.full, "quant-eval", "fp");
    MetricsReport q8 = evaluate_all(ref, quantize(c, QuantSpec{8}), splits.full, "quant-eval", "q8");
    MetricsReport q4 = evaluate_all(ref, quantize(c, QuantSpec{4}), splits.full, "quant-eval", "q4");

    std::ostringstream csv;
    write_metrics_csv_header(csv);
    write_metrics_csv_row(csv, "quant-eval", fp);
    write_metrics_csv_row(csv, "quant-eval", q8);
    write_metrics_csv_row(csv, "quant-eval", q4);
    write_text(s.out_dir / "quant_grid.csv", csv.str());

    nlohmann::json j;
    j["fp"] = summary_json(fp);
    j["q8"] = summary_json(q8);
    j["q4"] = summary_json(q4);
    j["m1_drift_q8"] = std::abs(q8.m1 - fp.m1);
    j["m1_drift_q4"] = std::abs(q4.m1 - fp.m1);
    write_text(s.out_dir / "quant_report.json", j.dump(2) + "\n");
    log.line("quant-eval: m1 fp=" + std::to_string(fp.m1) + " q8=" + std::to_string(q8.m1) +
             " q4=" + std::to_string(q4.m1));
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_ablate(const Session& s, const std::string& ckpt_path) {
    RunLog log(s.out_dir);
    Checkpoint frozen = load_checkpoint(ckpt_path);
    Dataset ds = generate(s.cfg.split, s.cfg.model);

    struct Variant {
        std::string name;
        RazorConfig rc;
    };
    std::vector<Variant> variants;
    {
        RazorConfig rc = s.cfg.razor;
        rc.ablation.use_retain = false;
        variants.push_back({"wo_retain", rc});
    }
    {
        RazorConfig rc = s.cfg.razor;
        rc.ablation.use_mismatch = false;
        variants.push_back({"wo_mismatch", rc});
    }
    {
        RazorConfig rc = s.cfg.razor;
        rc.ablation.use_forget = false;
        variants.push_back({"wo_forget", rc});
    }
    {
        RazorConfig rc = s.cfg.razor;
        rc.select_all = true;
        rc.iterate = false;
        variants.push_back({"no_selection", rc});
    }
    {
        RazorConfig rc = s.cfg.razor;
        rc.iterate = false;
        variants.push_back({"no_iteration", rc});
    }
    variants.push_back({"full", s.cfg.razor});

    std::ostringstream csv;
    write_metrics_csv_header(csv);
    nlohmann::json j = nlohmann::json::object();
    for (const Variant& v : variants) {
        log.line("ablate: running " + v.name);
        RunResult result;
        run_unlearn_variant(s, frozen, ds, v.rc, s.out_dir / v.name, log, result);
        write_metrics_csv_row(csv, v.name, result.after);
        j[v.name] = summary_json(result.after);
        j[v.name]["target_met"] = result.trace.target_met;
    }
    write_text(s.out_dir / "ablation_grid.csv", csv.str());
    write_text(s.out_dir / "ablation_report.json", j.dump(2) + "\n");
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_sweep_lr(const Session& s, const std::string& ckpt_path, std::vector<double> lambdas) {
    RunLog log(s.out_dir);
    Checkpoint frozen = load_checkpoint(ckpt_path);
    Dataset ds = generate(s.cfg.split, s.cfg.model);
    if (lambdas.empty()) lambdas = {1.0, 1e-1, 1e-2, 1e-3, 1e-4};
    std::sort(lambdas.begin(), lambdas.end(), std::greater<>());

    std::ostringstream csv;
    csv << "lambda_init,";
    write_metrics_csv_header(csv);
    for (double li : lambdas) {
        if (!(li > 0.0)) throw ConfigError("sweep-lr: lambda_init values must be > 0");
        RazorConfig rc = s.cfg.razor;
        rc.lambda_init = li;
        rc.delta = std::min(rc.delta, li / 2.0);
        std::ostringstream tag;
        tag << "lambda_" << li;
        log.line("sweep-lr: " + tag.str());
        RunResult result;
        run_unlearn_variant(s, frozen, ds, rc, s.out_dir / tag.str(), log, result);
        csv << li << ",";
        write_metrics_csv_row(csv, tag.str(), result.after);
    }
    write_text(s.out_dir / "sweep_lr.csv", csv.str());
    std::cout << "wrote " << (s.out_dir / "sweep_lr.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ratio-aware component editing for a two-tower contrastive encoder"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, reference_path, out_dir;
    std::optional<uint64_t> seed;
    std::vector<double> lambdas;

    auto add_common = [&](CLI::App* cmd, bool needs_ckpt) {
        cmd->add_option("--config", config_path, "run configuration file");
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--seed", seed, "master seed (overrides config)");
        if (needs_ckpt)
            cmd->add_option("--checkpoint", ckpt_path, "input checkpoint")->required();
    };

    CLI::App* c_pre = app.add_subcommand("pretrain", "train the toy encoder from scratch");
    add_common(c_pre, false);
    CLI::App* c_unl = app.add_subcommand("unlearn", "run the full editing pipeline");
    add_common(c_unl, true);
    CLI::App* c_qe = app.add_subcommand("quant-eval", "evaluate a checkpoint at fp/8-bit/4-bit");
    add_common(c_qe, true);
    c_qe->add_option("--reference", reference_path,
                     "pre-edit checkpoint used as the drift reference");
    CLI::App* c_abl = app.add_subcommand("ablate", "run the six-variant loss/strategy ablation");
    add_common(c_abl, true);
    CLI::App* c_swp = app.add_subcommand("sweep-lr", "sweep the initial step-size bound");
    add_common(c_swp, true);
    c_swp->add_option("--lambdas", lambdas, "lambda_init values to sweep");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        Session s = open_session(config_path, out_dir, seed);
        if (c_pre->parsed()) return cmd_pretrain(s);
        if (c_unl->parsed()) return cmd_unlearn(s, ckpt_path);
        if (c_qe->parsed()) return cmd_quant_eval(s, ckpt_path, reference_path);
        if (c_abl->parsed()) return cmd_ablate(s, ckpt_path);
        if (c_swp->parsed()) return cmd_sweep_lr(s, ckpt_path, lambdas);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
