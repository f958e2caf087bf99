#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "razor/data.hpp"
#include "razor/model.hpp"

namespace razor {

struct MetricsReport {
    double m1 = 0.0;  // forget accuracy, [0,1], lower is better
    double m2 = 0.0;  // mean forget cosine, [-1,1]
    double m3 = 0.0;  // privacy-leak drift on retain-side probes, >= 0
    double m4 = 0.0;  // retain zero-shot accuracy, [0,1]
    double m5 = 0.0;  // retrieval stability, [0,1]
    double m3_forget_diag = 0.0;  // drift on the forget split (diagnostic)
    double util_before = 0.0;
    double util_after = 0.0;
    std::string split_id;
    std::string checkpoint_tag;
    std::string precision_tag = "fp";  // fp / q8 / q4

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

// Fraction of forget-split images whose argmax-similarity prompt is their own
// (forgotten) class; ties break toward the forget class.
double m1_forget_accuracy(const Checkpoint& c, const std::vector<Pair>& forget_split,
                          const std::vector<Tensor>& prompt_bank);

double m2_forget_cosine(const Checkpoint& c, const std::vector<Pair>& forget_split);

// Mean squared drift of image-caption similarities between two checkpoints.
double m3_privleak(const Checkpoint& before, const Checkpoint& after,
                   const std::vector<Pair>& probe_split);

double m4_retain_accuracy(const Checkpoint& c, const std::vector<Pair>& retain_split,
                          const std::vector<Tensor>& prompt_bank);

// Utility for M5: retain image->text retrieval accuracy over the retain-class
// caption bank (class-level correctness, since captions are per-class
// templates).
double retrieval_utility(const Checkpoint& c, const std::vector<Pair>& retain_split,
                         const std::vector<Tensor>& prompt_bank);

double m5_stability(double util_before, double util_after);

struct EvalSplits {
    std::vector<Pair> forget;       // M1, M2, forget-side M3 diagnostic
    std::vector<Pair> retain;       // M4, utility
    std::vector<Pair> retain_probe; // normative M3 probe (val retain)
    std::vector<Tensor> prompt_bank;
    std::string split_id;
};

MetricsReport evaluate_all(const Checkpoint& before, const Checkpoint& after,
                           const EvalSplits& splits, const std::string& checkpoint_tag,
                           const std::string& precision_tag);

void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(std::ostream& os, const std::string& scenario,
                           const MetricsReport& r);

}  // namespace razor
