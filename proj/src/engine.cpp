#include "razor/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "razor/errors.hpp"

namespace razor {

void TargetSpec::validate() const {
    if (!(m1_max > 0.0 && m1_max <= 1.0)) throw ConfigError("target: m1_max must be in (0,1]");
    if (!(m3_max >= 0.0)) throw ConfigError("target: m3_max must be >= 0");
    if (!(m4_min_frac > 0.0 && m4_min_frac <= 1.0))
        throw ConfigError("target: m4_min_frac must be in (0,1]");
    if (!(m5_min >= 0.0 && m5_min <= 1.0)) throw ConfigError("target: m5_min must be in [0,1]");
}

void RazorConfig::validate() const {
    weights.validate();
    target.validate();
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("razor: alpha must be in [0,1]");
    if (!(eps > 0.0)) throw ConfigError("razor: eps must be > 0");
    if (!(tau_percentile >= 0.0 && tau_percentile <= 100.0))
        throw ConfigError("razor: tau_percentile must be in [0,100]");
    if (t_max < 1) throw ConfigError("razor: t_max must be >= 1");
    if (!(lambda_init > 0.0)) throw ConfigError("razor: lambda_init must be > 0");
    if (!(delta > 0.0)) throw ConfigError("razor: delta must be > 0");
    if (!(lambda_init > delta)) throw ConfigError("razor: lambda_init must exceed delta");
}

EvalContext make_eval_context(const Checkpoint& frozen, const EvalSplits& val) {
    if (val.forget.empty() || val.retain.empty())
        throw InputError("eval context: empty validation split");
    EvalContext ctx;
    ctx.val = val;
    FrozenEncoder enc(frozen);
    ctx.probe_sims_before.reserve(val.retain_probe.size());
    for (const Pair& p : val.retain_probe) {
        Tensor v = enc.image(p.image);
        Tensor t = enc.text(p.tokens);
        ctx.probe_sims_before.push_back(seq_dot(v.data, t.data));
    }
    ctx.util_before = retrieval_utility(frozen, val.retain, val.prompt_bank);
    ctx.m4_pre = m4_retain_accuracy(frozen, val.retain, val.prompt_bank);
    return ctx;
}

ValMetrics evaluate_val(const Checkpoint& candidate, EvalContext& ctx) {
    ++ctx.eval_count;
    ValMetrics m;
    for (const auto& [name, t] : candidate.params) {
        (void)name;
        if (!t.all_finite()) {
            m.finite = false;
            return m;
        }
    }
    try {
        const EvalSplits& val = ctx.val;
        FrozenEncoder enc(candidate);
        std::vector<Tensor> prompts;
        prompts.reserve(val.prompt_bank.size());
        for (const Tensor& p : val.prompt_bank) prompts.push_back(enc.text(p));

        // M1 on the validation forget pairs; ties count toward the forget class.
        int m1_hits = 0;
        for (const Pair& p : val.forget) {
            Tensor v = enc.image(p.image);
            double own = seq_dot(v.data, prompts[p.class_id].data);
            double best_other = -2.0;
            for (size_t j = 0; j < prompts.size(); ++j)
                if (static_cast<int>(j) != p.class_id)
                    best_other = std::max(best_other, seq_dot(v.data, prompts[j].data));
            if (own >= best_other) ++m1_hits;
        }
        m.m1 = static_cast<double>(m1_hits) / static_cast<double>(val.forget.size());

        // Retain classes present, in sorted order, for the retrieval utility.
        std::vector<int> classes;
        for (const Pair& p : val.retain)
            if (std::find(classes.begin(), classes.end(), p.class_id) == classes.end())
                classes.push_back(p.class_id);
        std::sort(classes.begin(), classes.end());

        int m4_hits = 0;
        int util_hits = 0;
        std::vector<double> probe_sims;
        probe_sims.reserve(val.retain.size());
        for (const Pair& p : val.retain) {
            Tensor v = enc.image(p.image);
            std::vector<double> sims;
            sims.reserve(prompts.size());
            for (const Tensor& t : prompts) sims.push_back(seq_dot(v.data, t.data));
            size_t arg = 0;
            for (size_t j = 1; j < sims.size(); ++j)
                if (sims[j] > sims[arg]) arg = j;
            if (static_cast<int>(arg) == p.class_id) ++m4_hits;
            size_t uarg = 0;
            for (size_t j = 1; j < classes.size(); ++j)
                if (sims[classes[j]] > sims[classes[uarg]]) uarg = j;
            if (classes[uarg] == p.class_id) ++util_hits;
            probe_sims.push_back(sims[p.class_id]);
        }
        m.m4 = static_cast<double>(m4_hits) / static_cast<double>(val.retain.size());
        double util_after = static_cast<double>(util_hits) / static_cast<double>(val.retain.size());
        m.m5 = m5_stability(ctx.util_before, util_after);

        if (probe_sims.size() != ctx.probe_sims_before.size())
            throw ContractError("evaluate_val: probe split changed size");
        double drift = 0.0;
        for (size_t i = 0; i < probe_sims.size(); ++i) {
            double d = probe_sims[i] - ctx.probe_sims_before[i];
            drift += d * d;
        }
        m.m3 = drift / static_cast<double>(probe_sims.size());
    } catch (const NumericError&) {
        m = ValMetrics{};
        m.finite = false;
    }
    return m;
}

bool target_satisfied(const ValMetrics& m, const TargetSpec& target, double m4_pre) {
    return m.finite && m.m1 <= target.m1_max && m.m3 <= target.m3_max &&
           m.m4 >= target.m4_min_frac * m4_pre && m.m5 >= target.m5_min;
}

double step_score(const ValMetrics& m, const TargetSpec& target, double m4_pre) {
    if (!m.finite) return -1.0;
    double forget_term = std::max(0.0, (target.m1_max - m.m1) / target.m1_max);
    double m4_min = target.m4_min_frac * m4_pre;
    double retain_term;
    if (m4_min >= 1.0)
        retain_term = m.m4 >= m4_min ? 1.0 : 0.0;
    else
        retain_term = std::max(0.0, (m.m4 - m4_min) / (1.0 - m4_min));
    return forget_term + retain_term;
}

std::vector<double> stage0_baseline(const Checkpoint& frozen,
                                    const std::vector<Pair>& forget_batch) {
    return baseline_sims(frozen, forget_batch);
}

std::vector<double> blended_gradient_flat(const std::vector<double>& g_f,
                                          const std::vector<double>& g_r,
                                          const std::vector<double>& g_m, const LossWeights& w,
                                          const AblationToggles& ablation) {
    if (g_f.size() != g_r.size() || g_f.size() != g_m.size())
        throw ContractError("blended_gradient: gradient length mismatch");
    std::vector<double> blend(g_f.size(), 0.0);
    for (size_t i = 0; i < blend.size(); ++i) {
        double v = 0.0;
        if (ablation.use_forget) v -= w.lambda_f * w.rho * g_f[i];
        if (ablation.use_retain) v += g_r[i];
        if (ablation.use_mismatch) v += w.lambda_m * g_m[i];
        blend[i] = v;
    }
    return blend;
}

GradMap blended_gradient(const ModelConfig& cfg, const ComponentGradients& g, const GradMap& g_m,
                         const LossWeights& w, const AblationToggles& ablation) {
    std::vector<double> flat_m;
    flat_m.reserve(g.g_f.size());
    for (const ParamSlice& s : g.slices) {
        auto it = g_m.find(s.key());
        if (it == g_m.end()) throw ContractError("blended_gradient: missing key " + s.key());
        flat_m.insert(flat_m.end(), it->second.begin(), it->second.end());
    }
    if (flat_m.size() != g.g_f.size())
        throw ContractError("blended_gradient: mismatch gradient layout differs");
    std::vector<double> blend = blended_gradient_flat(g.g_f, g.g_r, flat_m, w, ablation);
    return grad_map_from_flat(cfg, g.id, blend);
}

StepResult bisect_largest_stable(double lambda_init, double delta, double s_base,
                                 const std::function<StepProbe(double)>& probe) {
    if (!(lambda_init > delta && delta > 0.0))
        throw ConfigError("step search: need lambda_init > delta > 0");
    StepResult r;
    r.score = s_base;
    double lo = 0.0;
    double hi = lambda_init;
    while (hi - lo > delta) {
        double mid = 0.5 * (lo + hi);
        StepProbe p = probe(mid);
        ++r.evals;
        if (p.stable) {
            if (p.score > r.score) {
                r.score = p.score;
                r.lambda = mid;
            }
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return r;
}

StepResult binary_search_step(const Checkpoint& current, const ComponentId& id,
                              const std::vector<double>& blend, EvalContext& ctx,
                              const TargetSpec& target, double lambda_init, double delta) {
    int evals_before = ctx.eval_count;

    double m4_min = target.m4_min_frac * ctx.m4_pre;
    ValMetrics base = evaluate_val(current, ctx);
    double s_base = step_score(base, target, ctx.m4_pre);

    StepResult r = bisect_largest_stable(
        lambda_init, delta, s_base, [&](double lambda) {
            Checkpoint cand = apply_flat_delta(current, id, blend, -lambda);
            ValMetrics m = evaluate_val(cand, ctx);
            StepProbe p;
            p.stable = m.finite && m.m4 >= m4_min && m.m5 >= target.m5_min;
            p.score = p.stable ? step_score(m, target, ctx.m4_pre) : -1.0;
            return p;
        });
    r.evals = ctx.eval_count - evals_before;
    return r;
}

EngineSplits make_engine_splits(const Dataset& ds) {
    EngineSplits s;
    s.forget_train = ds.forget;
    s.retain_train = ds.retain;
    s.val.forget = ds.val_forget(ds.spec);
    s.val.retain = ds.val_retain(ds.spec);
    s.val.retain_probe = s.val.retain;
    s.val.prompt_bank = ds.class_prompts;
    s.val.split_id = "val";
    s.full.forget = ds.forget;
    s.full.retain = ds.retain;
    s.full.retain_probe = s.val.retain;
    s.full.prompt_bank = ds.class_prompts;
    s.full.split_id = "full";
    return s;
}

namespace {

nlohmann::json val_metrics_json(const ValMetrics& m) {
    return {{"m1", m.m1}, {"m3", m.m3}, {"m4", m.m4}, {"m5", m.m5}, {"finite", m.finite}};
}

struct ScoringState {
    std::vector<ComponentGradients> grads;
    SaliencyTable table;
    std::map<std::string, Tensor> mismatch;  // empty when mismatch is ablated
};

ScoringState rescore(const Checkpoint& current, const EngineSplits& splits,
                     const std::vector<double>& baseline, const RazorConfig& cfg) {
    ScoringState s;
    s.grads = component_gradients(current, splits.retain_train, splits.forget_train,
                                  cfg.weights.temperature);
    s.table = build_table(current, s.grads, cfg.alpha, cfg.eps, cfg.saliency_variant);
    if (cfg.ablation.use_mismatch)
        s.mismatch = mismatch_gradients(current, splits.forget_train, baseline, cfg.mismatch_form)
                         .grads;
    return s;
}

const ComponentGradients& find_grads(const std::vector<ComponentGradients>& grads,
                                     const ComponentId& id) {
    for (const ComponentGradients& g : grads)
        if (g.id == id) return g;
    throw ContractError("engine: component gradients missing for " + id.str());
}

std::vector<double> mismatch_flat(const ScoringState& s, const ComponentGradients& g) {
    if (s.mismatch.empty()) return std::vector<double>(g.g_f.size(), 0.0);
    return flatten_component_grads(s.mismatch, g.slices);
}

std::vector<std::string> names_of(const std::vector<ComponentId>& ids) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const ComponentId& id : ids) out.push_back(id.str());
    return out;
}

// Updates one component in place: blend, step search, apply. Returns the
// trace record (without t/stage fields filled in).
IterationRecord update_component(Checkpoint& current, const ComponentId& id,
                                 const ScoringState& state, EvalContext& ctx,
                                 const RazorConfig& cfg) {
    const ComponentGradients& g = find_grads(state.grads, id);
    std::vector<double> g_m = mismatch_flat(state, g);
    std::vector<double> blend = blended_gradient_flat(g.g_f, g.g_r, g_m, cfg.weights,
                                                      cfg.ablation);
    StepResult step =
        binary_search_step(current, id, blend, ctx, cfg.target, cfg.lambda_init, cfg.delta);
    IterationRecord rec;
    rec.component = id.str();
    rec.lambda = step.lambda;
    rec.step_score = step.score;
    rec.phi_max = state.table.entries.empty() ? 0.0 : state.table.entries.front().phi;
    rec.table_hash = table_hash(state.table);
    if (step.lambda > 0.0) {
        current = apply_flat_delta(current, id, blend, -step.lambda);
    } else {
        rec.event = "no-step";
    }
    rec.metrics = evaluate_val(current, ctx);
    return rec;
}

}  // namespace

std::string IterationRecord::to_json() const {
    nlohmann::json j;
    j["t"] = t;
    j["stage"] = stage;
    j["active_set"] = active_set;
    j["component"] = component;
    j["lambda"] = lambda;
    j["step_score"] = step_score;
    j["phi_max"] = phi_max;
    j["table_hash"] = table_hash;
    j["metrics"] = val_metrics_json(metrics);
    j["event"] = event;
    return j.dump();
}

std::string EditTrace::to_jsonl() const {
    std::ostringstream os;
    for (const IterationRecord& r : records) os << r.to_json() << "\n";
    nlohmann::json summary;
    summary["summary"] = true;
    summary["target_met"] = target_met;
    summary["stop_reason"] = stop_reason;
    summary["growth_iterations"] = growth_iterations;
    os << summary.dump() << "\n";
    return os.str();
}

RunResult run(const Checkpoint& frozen, const EngineSplits& splits, const RazorConfig& cfg) {
    cfg.validate();
    frozen.validate();
    if (splits.forget_train.empty() || splits.retain_train.empty())
        throw InputError("engine: empty training split");

    RunResult result;
    result.before = evaluate_all(frozen, frozen, splits.full, "pre-edit", "fp");

    std::vector<double> baseline = stage0_baseline(frozen, splits.forget_train);
    EvalContext ctx = make_eval_context(frozen, splits.val);

    Checkpoint current = frozen;
    ScoringState state = rescore(current, splits, baseline, cfg);

    std::vector<ComponentId> active;
    if (cfg.select_all) {
        for (const SaliencyEntry& e : state.table.entries) active.push_back(e.id);
    } else {
        double tau = percentile_threshold(state.table, cfg.tau_percentile);
        active = select(state.table, tau);
    }

    EditTrace& trace = result.trace;

    // Initial pass: update every selected component once, highest phi first,
    // rescoring after each update.
    for (size_t i = 0; i < active.size(); ++i) {
        if (i > 0) state = rescore(current, splits, baseline, cfg);
        IterationRecord rec = update_component(current, active[i], state, ctx, cfg);
        rec.t = 0;
        rec.stage = "initial";
        rec.active_set = names_of(active);
        trace.records.push_back(std::move(rec));
    }

    ValMetrics val_now =
        trace.records.empty() ? evaluate_val(current, ctx) : trace.records.back().metrics;
    trace.target_met = target_satisfied(val_now, cfg.target, ctx.m4_pre);

    if (trace.target_met) {
        trace.stop_reason = "target-met";
    } else if (!cfg.iterate) {
        trace.stop_reason = "no-iteration";
    } else {
        // Growth: add one component per iteration, rescoring first.
        for (int t = 1; t <= cfg.t_max; ++t) {
            state = rescore(current, splits, baseline, cfg);
            const SaliencyEntry* best = nullptr;
            for (const SaliencyEntry& e : state.table.entries) {
                bool taken = std::find(active.begin(), active.end(), e.id) != active.end();
                if (!taken) {
                    best = &e;
                    break;
                }
            }
            if (best == nullptr) {
                trace.stop_reason = "all-components-selected";
                break;
            }
            if (best->phi <= 0.0) {
                IterationRecord rec;
                rec.t = t;
                rec.stage = "grow";
                rec.active_set = names_of(active);
                rec.component = best->id.str();
                rec.phi_max = best->phi;
                rec.table_hash = table_hash(state.table);
                rec.metrics = val_now;
                rec.event = "no-useful-component";
                trace.records.push_back(std::move(rec));
                trace.stop_reason = "no-useful-component";
                break;
            }
            active.push_back(best->id);
            ++trace.growth_iterations;
            IterationRecord rec = update_component(current, best->id, state, ctx, cfg);
            rec.t = t;
            rec.stage = "grow";
            rec.active_set = names_of(active);
            trace.records.push_back(rec);
            val_now = rec.metrics;
            if (target_satisfied(val_now, cfg.target, ctx.m4_pre)) {
                trace.target_met = true;
                trace.stop_reason = "target-met";
                break;
            }
        }
        if (trace.stop_reason.empty()) trace.stop_reason = "t-max";
    }

    result.edited = std::move(current);
    result.after = evaluate_all(frozen, result.edited, splits.full, "post-edit", "fp");
    return result;
}

}  // namespace razor
