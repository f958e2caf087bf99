#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "razor/data.hpp"
#include "razor/graph.hpp"
#include "razor/model.hpp"

namespace razor {

struct LossWeights {
    double rho = 0.5;          // forget/retain ratio, (0, 1]
    double lambda_f = 1.0;     // forgetting pressure
    double lambda_m = 0.1;     // mismatch regularization
    double temperature = 0.07; // InfoNCE temperature (tau_c)

    void validate() const;
};

enum class MismatchForm { signed_drift, squared_drift };

struct AblationToggles {
    bool use_retain = true;
    bool use_forget = true;
    bool use_mismatch = true;
};

// Per-forget-pair reference similarities from the frozen checkpoint.
std::vector<double> baseline_sims(const Checkpoint& frozen, const std::vector<Pair>& forget_batch);

// ---- Loss graphs over per-pair embedding nodes (each [1 x d]) ----

Graph::NodeId retain_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                               const std::vector<Graph::NodeId>& t, double tau_c);
Graph::NodeId forget_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                               const std::vector<Graph::NodeId>& t);
Graph::NodeId mismatch_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                                 const std::vector<Graph::NodeId>& t,
                                 const std::vector<double>& baseline, MismatchForm form);

// ---- Scalar loss values ----

double retain_loss(const Checkpoint& c, const std::vector<Pair>& batch, double tau_c);
double forget_loss(const Checkpoint& c, const std::vector<Pair>& batch);
double mismatch_loss(const Checkpoint& c, const std::vector<Pair>& batch,
                     const std::vector<double>& baseline, MismatchForm form);
double composite_loss(const Checkpoint& c, const std::vector<Pair>& retain_batch,
                      const std::vector<Pair>& forget_batch, const std::vector<double>& baseline,
                      const LossWeights& w, const AblationToggles& ablation,
                      MismatchForm form = MismatchForm::signed_drift);

// ---- Gradients with respect to all model parameters ----

struct LossValueGrads {
    double value = 0.0;
    std::map<std::string, Tensor> grads;  // name -> tensor-shaped gradient
};

// Builds the loss from per-pair embedding nodes; used by the generic
// pair-checkpointed gradient driver below.
using EmbeddingLossBuilder = std::function<Graph::NodeId(
    Graph&, const std::vector<Graph::NodeId>&, const std::vector<Graph::NodeId>&)>;

// Gradient of an embedding-level loss over one batch. Memory stays bounded by
// one pair's tape: embeddings are computed forward once, the loss is
// differentiated in a small embedding-only graph, and each pair's tower tape
// is rebuilt for its backward pass.
LossValueGrads param_gradients(const Checkpoint& c, const std::vector<Pair>& batch,
                               const EmbeddingLossBuilder& builder);

LossValueGrads retain_gradients(const Checkpoint& c, const std::vector<Pair>& batch, double tau_c);
LossValueGrads forget_gradients(const Checkpoint& c, const std::vector<Pair>& batch);
LossValueGrads mismatch_gradients(const Checkpoint& c, const std::vector<Pair>& batch,
                                  const std::vector<double>& baseline, MismatchForm form);
LossValueGrads composite_gradients(const Checkpoint& c, const std::vector<Pair>& retain_batch,
                                   const std::vector<Pair>& forget_batch,
                                   const std::vector<double>& baseline, const LossWeights& w,
                                   const AblationToggles& ablation, MismatchForm form);

}  // namespace razor
