#pragma once

#include <iosfwd>
#include <vector>

#include "razor/losses.hpp"
#include "razor/model.hpp"

namespace razor {

enum class SaliencyVariant { eq2, appendix_squared };

struct ComponentGradients {
    ComponentId id;
    std::vector<ParamSlice> slices;
    std::vector<double> g_f;  // forget gradient, canonical slice order
    std::vector<double> g_r;  // retain gradient, same layout
};

struct SaliencyEntry {
    ComponentId id;
    int canonical_index = 0;  // position in enumerate_components order
    double phi = 0.0;
    double norm_gf = 0.0;
    double norm_theta = 0.0;
    double cos_fr = 0.0;
    bool selected = false;
};

struct SaliencyTable {
    std::vector<SaliencyEntry> entries;  // sorted by phi desc, canonical-order tie-break
    double alpha = 0.5;
    double eps = 1e-8;
    SaliencyVariant variant = SaliencyVariant::eq2;
};

// One backward pass per loss; gradients sliced per component.
std::vector<ComponentGradients> component_gradients(const Checkpoint& c,
                                                    const std::vector<Pair>& retain_batch,
                                                    const std::vector<Pair>& forget_batch,
                                                    double tau_c);

// Cosine between flattened gradient vectors; a zero vector on either side is
// treated as orthogonal (cos = 0).
double gradient_cosine(const std::vector<double>& a, const std::vector<double>& b);

double score(const std::vector<double>& g_f, const std::vector<double>& g_r,
             const std::vector<double>& theta_l, double alpha, double eps,
             SaliencyVariant variant = SaliencyVariant::eq2);

SaliencyTable build_table(const Checkpoint& c, const std::vector<ComponentGradients>& grads,
                          double alpha, double eps, SaliencyVariant variant);

// K = { l : phi(l) > tau }; never empty (falls back to the canonical-order
// argmax).
std::vector<ComponentId> select(const SaliencyTable& table, double tau);

// Threshold at the given percentile (0..100) of the phi distribution.
double percentile_threshold(const SaliencyTable& table, double pct);

uint64_t table_hash(const SaliencyTable& table);

void write_saliency_csv(const SaliencyTable& table, std::ostream& os);

}  // namespace razor
