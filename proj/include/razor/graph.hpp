#pragma once

#include <functional>
#include <vector>

#include "razor/tensor.hpp"

namespace razor {

/// Append-only reverse-mode tape. Nodes record their inputs by index, so the
/// insertion order is already a topological order; backward() visits nodes
/// exactly once in reverse insertion order. One graph per loss evaluation,
/// single-threaded.
class Graph {
public:
    using NodeId = int;

    // Leaves.
    NodeId input(Tensor value);           // constant, no gradient
    NodeId param(Tensor value);           // gradient accumulated

    // Elementwise / linear algebra.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId add_row_bias(NodeId mat, NodeId bias);  // bias broadcast over rows
    NodeId matmul(NodeId a, NodeId b);
    NodeId matmul_nt(NodeId a, NodeId b);  // A * B^T without a transpose node
    NodeId transpose(NodeId a);

    // Nonlinearities.
    NodeId exp_(NodeId a);
    NodeId log_(NodeId a);
    NodeId tanh_(NodeId a);
    NodeId gelu(NodeId a);

    // Reductions (fixed left-to-right summation order).
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId mean_rows(NodeId a);            // [n x d] -> [1 x d]

    // Structure.
    NodeId slice_rows(NodeId a, int begin, int end);
    NodeId slice_cols(NodeId a, int begin, int end);
    NodeId concat_rows(const std::vector<NodeId>& parts);
    NodeId concat_cols(const std::vector<NodeId>& parts);
    NodeId stack_scalars(const std::vector<NodeId>& scalars);  // -> [n x 1]
    NodeId diag(NodeId a);                 // [n x n] -> [n x 1]
    NodeId gather_rows(NodeId table, const std::vector<int>& ids);

    // Row-wise normalizers.
    NodeId softmax_rows(NodeId a);
    NodeId logsumexp_rows(NodeId a);       // [n x m] -> [n x 1]
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta);
    NodeId l2_normalize(NodeId v);

    // Scalars from vectors (flat views).
    NodeId dot(NodeId a, NodeId b);
    NodeId cosine_similarity(NodeId a, NodeId b);

    void backward(NodeId root);
    // Backward from an interior node with an externally supplied output
    // gradient (pair-level gradient checkpointing).
    void backward_from(NodeId node, const Tensor& seed);
    // Seeds several nodes, then runs the tape once; required when the seeded
    // nodes live on the same tape.
    void backward_seeds(const std::vector<std::pair<NodeId, Tensor>>& seeds);

    const Tensor& value(NodeId id) const { return nodes_[id].value; }
    const Tensor& grad(NodeId id) const;
    bool has_grad(NodeId id) const { return !nodes_[id].grad.data.empty(); }
    size_t node_count() const { return nodes_.size(); }

    // Rolls the tape back to the first n nodes (forward-only reuse: keeps
    // registered parameters, discards everything built on top of them).
    void truncate(size_t n);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched by backward
        bool wants_grad = false;
        std::function<void(Graph&)> backprop;  // empty for leaves
    };

    NodeId emit(Tensor value, bool wants_grad, std::function<void(Graph&)> backprop);
    Tensor& grad_buf(NodeId id);
    void accumulate(NodeId id, const std::vector<double>& g);
    void run_tape(NodeId top);
    void check_finite(const Tensor& t, const char* op) const;

    std::vector<Node> nodes_;
};

}  // namespace razor
