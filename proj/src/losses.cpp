#include "razor/losses.hpp"

#include "razor/errors.hpp"

namespace razor {

void LossWeights::validate() const {
    if (rho <= 0.0 || rho > 1.0) throw ConfigError("losses: rho must be in (0,1]");
    if (lambda_f <= 0.0) throw ConfigError("losses: lambda_f must be > 0");
    if (lambda_m <= 0.0) throw ConfigError("losses: lambda_m must be > 0");
    if (temperature <= 0.0) throw ConfigError("losses: temperature must be > 0");
}

std::vector<double> baseline_sims(const Checkpoint& frozen, const std::vector<Pair>& forget_batch) {
    std::vector<double> out;
    out.reserve(forget_batch.size());
    for (const Pair& p : forget_batch) {
        Tensor v = encode_image(frozen, p.image);
        Tensor t = encode_text(frozen, p.tokens);
        out.push_back(seq_dot(v.data, t.data));
    }
    return out;
}

Graph::NodeId retain_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                               const std::vector<Graph::NodeId>& t, double tau_c) {
    if (v.empty() || v.size() != t.size()) throw InputError("retain_loss: empty or misaligned batch");
    Graph::NodeId vm = g.concat_rows(v);
    Graph::NodeId tm = g.concat_rows(t);
    Graph::NodeId sims = g.scale(g.matmul(vm, g.transpose(tm)), 1.0 / tau_c);
    Graph::NodeId row_term = g.mean(g.sub(g.logsumexp_rows(sims), g.diag(sims)));
    Graph::NodeId simsT = g.transpose(sims);
    Graph::NodeId col_term = g.mean(g.sub(g.logsumexp_rows(simsT), g.diag(simsT)));
    return g.scale(g.add(row_term, col_term), 0.5);
}

namespace {

Graph::NodeId pair_sims_node(Graph& g, const std::vector<Graph::NodeId>& v,
                             const std::vector<Graph::NodeId>& t) {
    if (v.empty() || v.size() != t.size()) throw InputError("loss: empty or misaligned batch");
    std::vector<Graph::NodeId> dots;
    dots.reserve(v.size());
    for (size_t i = 0; i < v.size(); ++i) dots.push_back(g.dot(v[i], t[i]));
    return g.stack_scalars(dots);
}

}  // namespace

Graph::NodeId forget_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                               const std::vector<Graph::NodeId>& t) {
    Graph::NodeId sims = pair_sims_node(g, v, t);
    return g.sub(g.input(Tensor::scalar(1.0)), g.mean(sims));
}

Graph::NodeId mismatch_loss_node(Graph& g, const std::vector<Graph::NodeId>& v,
                                 const std::vector<Graph::NodeId>& t,
                                 const std::vector<double>& baseline, MismatchForm form) {
    if (baseline.size() != v.size())
        throw ContractError("mismatch_loss: baseline length does not match batch");
    Graph::NodeId sims = pair_sims_node(g, v, t);
    Tensor base = Tensor::zeros({static_cast<int>(baseline.size()), 1});
    base.data = baseline;
    Graph::NodeId drift = g.sub(sims, g.input(std::move(base)));
    if (form == MismatchForm::squared_drift) drift = g.mul(drift, drift);
    return g.mean(drift);
}

namespace {

struct EmbeddingBatch {
    std::vector<Tensor> v, t;
};

EmbeddingBatch encode_batch(const Checkpoint& c, const std::vector<Pair>& batch) {
    EmbeddingBatch eb;
    eb.v.reserve(batch.size());
    eb.t.reserve(batch.size());
    for (const Pair& p : batch) {
        eb.v.push_back(encode_image(c, p.image));
        eb.t.push_back(encode_text(c, p.tokens));
    }
    return eb;
}

double embedding_loss_value(const Checkpoint& c, const std::vector<Pair>& batch,
                            const EmbeddingLossBuilder& builder) {
    if (batch.empty()) throw InputError("loss: empty batch");
    EmbeddingBatch eb = encode_batch(c, batch);
    Graph g;
    std::vector<Graph::NodeId> vn, tn;
    for (size_t i = 0; i < batch.size(); ++i) {
        vn.push_back(g.input(eb.v[i]));
        tn.push_back(g.input(eb.t[i]));
    }
    return g.value(builder(g, vn, tn)).data[0];
}

}  // namespace

double retain_loss(const Checkpoint& c, const std::vector<Pair>& batch, double tau_c) {
    return embedding_loss_value(c, batch, [tau_c](Graph& g, const auto& v, const auto& t) {
        return retain_loss_node(g, v, t, tau_c);
    });
}

double forget_loss(const Checkpoint& c, const std::vector<Pair>& batch) {
    return embedding_loss_value(c, batch, [](Graph& g, const auto& v, const auto& t) {
        return forget_loss_node(g, v, t);
    });
}

double mismatch_loss(const Checkpoint& c, const std::vector<Pair>& batch,
                     const std::vector<double>& baseline, MismatchForm form) {
    return embedding_loss_value(c, batch, [&](Graph& g, const auto& v, const auto& t) {
        return mismatch_loss_node(g, v, t, baseline, form);
    });
}

double composite_loss(const Checkpoint& c, const std::vector<Pair>& retain_batch,
                      const std::vector<Pair>& forget_batch, const std::vector<double>& baseline,
                      const LossWeights& w, const AblationToggles& ablation, MismatchForm form) {
    w.validate();
    if (!ablation.use_retain && !ablation.use_forget && !ablation.use_mismatch)
        throw ConfigError("composite_loss: all terms disabled");
    double total = 0.0;
    if (ablation.use_retain) total += retain_loss(c, retain_batch, w.temperature);
    if (ablation.use_forget) total += w.lambda_f * w.rho * forget_loss(c, forget_batch);
    if (ablation.use_mismatch) total += w.lambda_m * mismatch_loss(c, forget_batch, baseline, form);
    return total;
}

LossValueGrads param_gradients(const Checkpoint& c, const std::vector<Pair>& batch,
                               const EmbeddingLossBuilder& builder) {
    if (batch.empty()) throw InputError("loss: empty batch");
    EmbeddingBatch eb = encode_batch(c, batch);

    // Differentiate the loss with respect to the embeddings alone.
    Graph lg;
    std::vector<Graph::NodeId> vn, tn;
    for (size_t i = 0; i < batch.size(); ++i) {
        vn.push_back(lg.param(eb.v[i]));
        tn.push_back(lg.param(eb.t[i]));
    }
    Graph::NodeId root = builder(lg, vn, tn);
    lg.backward(root);

    LossValueGrads out;
    out.value = lg.value(root).data[0];
    for (const auto& [name, shape] : param_spec(c.config))
        out.grads.emplace(name, Tensor::zeros(shape));

    // Rebuild each pair's tower tape and pull the chain through it.
    for (size_t i = 0; i < batch.size(); ++i) {
        Graph g;
        ParamNodeMap p = register_params(g, c);
        Graph::NodeId ve = encode_image_node(g, p, c.config, batch[i].image);
        Graph::NodeId te = encode_text_node(g, p, c.config, batch[i].tokens);
        std::vector<std::pair<Graph::NodeId, Tensor>> seeds;
        if (lg.has_grad(vn[i])) seeds.push_back({ve, lg.grad(vn[i])});
        if (lg.has_grad(tn[i])) seeds.push_back({te, lg.grad(tn[i])});
        g.backward_seeds(seeds);
        for (auto& [name, acc] : out.grads) {
            Graph::NodeId pid = p.at(name);
            if (!g.has_grad(pid)) continue;
            const Tensor& gt = g.grad(pid);
            for (size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += gt.data[j];
        }
    }
    return out;
}

LossValueGrads retain_gradients(const Checkpoint& c, const std::vector<Pair>& batch, double tau_c) {
    return param_gradients(c, batch, [tau_c](Graph& g, const auto& v, const auto& t) {
        return retain_loss_node(g, v, t, tau_c);
    });
}

LossValueGrads forget_gradients(const Checkpoint& c, const std::vector<Pair>& batch) {
    return param_gradients(c, batch, [](Graph& g, const auto& v, const auto& t) {
        return forget_loss_node(g, v, t);
    });
}

LossValueGrads mismatch_gradients(const Checkpoint& c, const std::vector<Pair>& batch,
                                  const std::vector<double>& baseline, MismatchForm form) {
    return param_gradients(c, batch, [&](Graph& g, const auto& v, const auto& t) {
        return mismatch_loss_node(g, v, t, baseline, form);
    });
}

LossValueGrads composite_gradients(const Checkpoint& c, const std::vector<Pair>& retain_batch,
                                   const std::vector<Pair>& forget_batch,
                                   const std::vector<double>& baseline, const LossWeights& w,
                                   const AblationToggles& ablation, MismatchForm form) {
    w.validate();
    if (!ablation.use_retain && !ablation.use_forget && !ablation.use_mismatch)
        throw ConfigError("composite_gradients: all terms disabled");
    LossValueGrads out;
    for (const auto& [name, shape] : param_spec(c.config))
        out.grads.emplace(name, Tensor::zeros(shape));
    auto axpy = [&](const LossValueGrads& part, double coeff) {
        out.value += coeff * part.value;
        for (auto& [name, acc] : out.grads) {
            const Tensor& gt = part.grads.at(name);
            for (size_t j = 0; j < acc.data.size(); ++j) acc.data[j] += coeff * gt.data[j];
        }
    };
    if (ablation.use_retain) axpy(retain_gradients(c, retain_batch, w.temperature), 1.0);
    if (ablation.use_forget) axpy(forget_gradients(c, forget_batch), w.lambda_f * w.rho);
    if (ablation.use_mismatch)
        axpy(mismatch_gradients(c, forget_batch, baseline, form), w.lambda_m);
    return out;
}

}  // namespace razor
