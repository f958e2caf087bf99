#pragma once

#include <functional>
#include <string>
#include <vector>

#include "razor/data.hpp"
#include "razor/losses.hpp"
#include "razor/metrics.hpp"
#include "razor/model.hpp"
#include "razor/saliency.hpp"

namespace razor {

// Metric thresholds the edit tries to satisfy. m1_max is absolute; m4_min is
// expressed as a fraction of the pre-edit retain accuracy.
struct TargetSpec {
    double m1_max = 0.55;
    double m3_max = 0.01;
    double m4_min_frac = 0.85;
    double m5_min = 0.95;

    void validate() const;
};

struct RazorConfig {
    LossWeights weights;
    double alpha = 0.5;
    double eps = 1e-8;
    double tau_percentile = 90.0;  // initial threshold = this percentile of phi
    int t_max = 6;
    double lambda_init = 1.0;
    double delta = 1e-3;  // binary-search interval tolerance
    TargetSpec target;
    SaliencyVariant saliency_variant = SaliencyVariant::eq2;
    MismatchForm mismatch_form = MismatchForm::signed_drift;
    AblationToggles ablation;
    bool select_all = false;  // skip saliency selection, edit every component
    bool iterate = true;      // run the growth stage after the initial pass

    void validate() const;
};

// Validation-split metrics used inside the step search and for the stopping
// predicate. Cheap relative to the full-split reports.
struct ValMetrics {
    double m1 = 0.0;
    double m3 = 0.0;
    double m4 = 0.0;
    double m5 = 0.0;
    bool finite = true;
};

struct IterationRecord {
    int t = 0;                  // 0 = initial pass, 1.. = growth iterations
    std::string stage;          // "initial" or "grow"
    std::vector<std::string> active_set;
    std::string component;
    double lambda = 0.0;
    double step_score = 0.0;
    double phi_max = 0.0;
    uint64_t table_hash = 0;
    ValMetrics metrics;
    std::string event;  // "", "no-step", "unstable", "no-useful-component"

    std::string to_json() const;
};

struct EditTrace {
    std::vector<IterationRecord> records;
    bool target_met = false;
    std::string stop_reason;  // target-met / no-useful-component / t-max / no-iteration
    int growth_iterations = 0;

    std::string to_jsonl() const;  // one record per line plus a summary line
};

struct RunResult {
    Checkpoint edited;
    EditTrace trace;
    MetricsReport before;
    MetricsReport after;
};

// Shared evaluation state for the step search: the frozen pre-edit model,
// its reference numbers on the validation split, and an evaluation counter.
struct EvalContext {
    EvalSplits val;
    std::vector<double> probe_sims_before;  // frozen sims on val.retain_probe
    double util_before = 0.0;               // frozen retrieval utility on val.retain
    double m4_pre = 0.0;                    // frozen M4 on val.retain
    int eval_count = 0;
};

EvalContext make_eval_context(const Checkpoint& frozen, const EvalSplits& val);

ValMetrics evaluate_val(const Checkpoint& candidate, EvalContext& ctx);

bool target_satisfied(const ValMetrics& m, const TargetSpec& target, double m4_pre);

// Scalar step score: rewards forgetting below m1_max and retention above the
// absolute m4 floor; both terms clipped at 0, higher is better.
double step_score(const ValMetrics& m, const TargetSpec& target, double m4_pre);

// Reference similarities of the frozen model over the forget batch, captured
// once before any edit.
std::vector<double> stage0_baseline(const Checkpoint& frozen, const std::vector<Pair>& forget_batch);

// The parenthesized update direction: -lambda_f*rho*g_f + g_r + lambda_m*g_m.
// The step magnitude is applied separately by the search routine.
std::vector<double> blended_gradient_flat(const std::vector<double>& g_f,
                                          const std::vector<double>& g_r,
                                          const std::vector<double>& g_m, const LossWeights& w,
                                          const AblationToggles& ablation);
GradMap blended_gradient(const ModelConfig& cfg, const ComponentGradients& g, const GradMap& g_m,
                         const LossWeights& w, const AblationToggles& ablation = {});

struct StepResult {
    double lambda = 0.0;  // 0 = no beneficial step found
    double score = 0.0;
    int evals = 0;
};

// One probed point of the step-size landscape.
struct StepProbe {
    bool stable = false;
    double score = 0.0;
};

// Bisection core shared by binary_search_step and directly testable against
// synthetic landscapes: widens towards lambda_init while probes stay stable,
// shrinks on instability, and keeps the best stable score seen. s_base is the
// no-op score; lambda stays 0 unless some probe strictly beats it. Probe
// invocations number at most ceil(log2(lambda_init/delta)).
StepResult bisect_largest_stable(double lambda_init, double delta, double s_base,
                                 const std::function<StepProbe(double)>& probe);

// Bisection on [0, lambda_init] for the largest stable, score-improving step
// theta_l <- theta_l - lambda * blend. Metric evaluations are counted in ctx;
// per call they stay within ceil(log2(lambda_init/delta)) + 1.
StepResult binary_search_step(const Checkpoint& current, const ComponentId& id,
                              const std::vector<double>& blend, EvalContext& ctx,
                              const TargetSpec& target, double lambda_init, double delta);

struct EngineSplits {
    std::vector<Pair> forget_train;
    std::vector<Pair> retain_train;
    EvalSplits val;   // drives the step search and stopping predicate
    EvalSplits full;  // drives the before/after reports
};

EngineSplits make_engine_splits(const Dataset& ds);

RunResult run(const Checkpoint& frozen, const EngineSplits& splits, const RazorConfig& cfg);

}  // namespace razor
