#include "razor/graph.hpp"

#include <algorithm>
#include <cmath>

#include "razor/errors.hpp"

namespace razor {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

Graph::NodeId Graph::emit(Tensor value, bool wants_grad, std::function<void(Graph&)> backprop) {
    check_finite(value, "op");
    Node n;
    n.value = std::move(value);
    n.wants_grad = wants_grad;
    if (wants_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
}

void Graph::check_finite(const Tensor& t, const char* op) const {
    if (!t.all_finite()) throw NumericError(std::string("non-finite values produced by ") + op);
}

Tensor& Graph::grad_buf(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

const Tensor& Graph::grad(NodeId id) const {
    if (nodes_[id].grad.data.empty())
        throw ContractError("gradient requested for a node backward never reached");
    return nodes_[id].grad;
}

void Graph::accumulate(NodeId id, const std::vector<double>& g) {
    Node& n = nodes_[id];
    if (!n.wants_grad) return;
    Tensor& buf = grad_buf(id);
    for (size_t i = 0; i < g.size(); ++i) buf.data[i] += g[i];
}

Graph::NodeId Graph::input(Tensor value) { return emit(std::move(value), false, {}); }

Graph::NodeId Graph::param(Tensor value) { return emit(std::move(value), true, {}); }

Graph::NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out = va;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [a, b, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        g.accumulate(a, d);
        g.accumulate(b, d);
    });
}

Graph::NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("sub: shape mismatch");
    Tensor out = va;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [a, b, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        g.accumulate(a, d);
        std::vector<double> neg(d.size());
        for (size_t i = 0; i < d.size(); ++i) neg[i] = -d[i];
        g.accumulate(b, neg);
    });
}

Graph::NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw DimensionError("mul: shape mismatch");
    Tensor out = va;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [a, b, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        const auto& va2 = g.value(a).data;
        const auto& vb2 = g.value(b).data;
        std::vector<double> ga(d.size()), gb(d.size());
        for (size_t i = 0; i < d.size(); ++i) {
            ga[i] = d[i] * vb2[i];
            gb[i] = d[i] * va2[i];
        }
        g.accumulate(a, ga);
        g.accumulate(b, gb);
    });
}

Graph::NodeId Graph::scale(NodeId a, double c) {
    Tensor out = value(a);
    for (double& x : out.data) x *= c;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, c, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        std::vector<double> ga(d.size());
        for (size_t i = 0; i < d.size(); ++i) ga[i] = d[i] * c;
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::add_row_bias(NodeId mat, NodeId bias) {
    const Tensor& vm = value(mat);
    const Tensor& vb = value(bias);
    int n = vm.rows(), d = vm.cols();
    if (static_cast<int64_t>(d) != vb.size())
        throw DimensionError("add_row_bias: bias length does not match columns");
    Tensor out = vm;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.data[static_cast<size_t>(r) * d + c] += vb.data[c];
    bool w = nodes_[mat].wants_grad || nodes_[bias].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [mat, bias, n, d, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        g.accumulate(mat, dd);
        std::vector<double> gb(static_cast<size_t>(d), 0.0);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) gb[c] += dd[static_cast<size_t>(r) * d + c];
        g.accumulate(bias, gb);
    });
}

Graph::NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2)
        throw DimensionError("matmul: operands must be rank 2");
    int m = va.shape[0], k = va.shape[1], k2 = vb.shape[0], n = vb.shape[1];
    if (k != k2)
        throw DimensionError("matmul: inner dimensions " + va.shape_str() + " x " + vb.shape_str());
    Tensor out = Tensor::zeros({m, n});
    // i-k-j loop order for cache friendliness; summation order over k is fixed.
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = va.data[static_cast<size_t>(i) * k + p];
            const double* brow = &vb.data[static_cast<size_t>(p) * n];
            double* crow = &out.data[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [a, b, m, k, n, self](Graph& g) {
        const auto& dc = g.nodes_[self].grad.data;
        const auto& va2 = g.value(a).data;
        const auto& vb2 = g.value(b).data;
        // dA = dC * B^T
        std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double dv = dc[static_cast<size_t>(i) * n + j];
                const double* brow = &vb2[0];
                for (int p = 0; p < k; ++p)
                    da[static_cast<size_t>(i) * k + p] += dv * brow[static_cast<size_t>(p) * n + j];
            }
        // dB = A^T * dC
        std::vector<double> db(static_cast<size_t>(k) * n, 0.0);
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double av = va2[static_cast<size_t>(i) * k + p];
                const double* drow = &dc[static_cast<size_t>(i) * n];
                double* dbrow = &db[static_cast<size_t>(p) * n];
                for (int j = 0; j < n; ++j) dbrow[j] += av * drow[j];
            }
        g.accumulate(a, da);
        g.accumulate(b, db);
    });
}

Graph::NodeId Graph::matmul_nt(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.rank() != 2 || vb.rank() != 2)
        throw DimensionError("matmul_nt: operands must be rank 2");
    int m = va.shape[0], k = va.shape[1], n = vb.shape[0];
    if (k != vb.shape[1])
        throw DimensionError("matmul_nt: inner dimensions " + va.shape_str() + " x " +
                             vb.shape_str() + "^T");
    Tensor out = Tensor::zeros({m, n});
    // out[i][j] = <row i of A, row j of B>; both rows contiguous.
    for (int i = 0; i < m; ++i) {
        const double* arow = &va.data[static_cast<size_t>(i) * k];
        double* crow = &out.data[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) {
            const double* brow = &vb.data[static_cast<size_t>(j) * k];
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [a, b, m, k, n, self](Graph& g) {
        const auto& dc = g.nodes_[self].grad.data;
        const auto& va2 = g.value(a).data;
        const auto& vb2 = g.value(b).data;
        // dA = dC * B
        std::vector<double> da(static_cast<size_t>(m) * k, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double dv = dc[static_cast<size_t>(i) * n + j];
                const double* brow = &vb2[static_cast<size_t>(j) * k];
                double* darow = &da[static_cast<size_t>(i) * k];
                for (int p = 0; p < k; ++p) darow[p] += dv * brow[p];
            }
        // dB = dC^T * A
        std::vector<double> db(static_cast<size_t>(n) * k, 0.0);
        for (int i = 0; i < m; ++i) {
            const double* arow = &va2[static_cast<size_t>(i) * k];
            for (int j = 0; j < n; ++j) {
                double dv = dc[static_cast<size_t>(i) * n + j];
                double* dbrow = &db[static_cast<size_t>(j) * k];
                for (int p = 0; p < k; ++p) dbrow[p] += dv * arow[p];
            }
        }
        g.accumulate(a, da);
        g.accumulate(b, db);
    });
}

Graph::NodeId Graph::transpose(NodeId a) {
    const Tensor& va = value(a);
    if (va.rank() != 2) throw DimensionError("transpose: rank 2 required");
    int m = va.shape[0], n = va.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[static_cast<size_t>(j) * m + i] = va.data[static_cast<size_t>(i) * n + j];
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, m, n, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        std::vector<double> ga(static_cast<size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] = d[static_cast<size_t>(j) * m + i];
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::exp_(NodeId a) {
    Tensor out = value(a);
    for (double& x : out.data) x = std::exp(x);
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        const auto& y = g.value(self).data;
        std::vector<double> ga(d.size());
        for (size_t i = 0; i < d.size(); ++i) ga[i] = d[i] * y[i];
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::log_(NodeId a) {
    const Tensor& va = value(a);
    Tensor out = va;
    for (double& x : out.data) {
        if (x <= 0.0) throw NumericError("log of non-positive value");
        x = std::log(x);
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        const auto& x = g.value(a).data;
        std::vector<double> ga(d.size());
        for (size_t i = 0; i < d.size(); ++i) ga[i] = d[i] / x[i];
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::tanh_(NodeId a) {
    Tensor out = value(a);
    for (double& x : out.data) x = std::tanh(x);
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        const auto& y = g.value(self).data;
        std::vector<double> ga(d.size());
        for (size_t i = 0; i < d.size(); ++i) ga[i] = d[i] * (1.0 - y[i] * y[i]);
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::gelu(NodeId a) {
    // tanh approximation of GELU
    constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687;
    constexpr double kCubic = 0.044715;
    const Tensor& va = value(a);
    Tensor out = va;
    for (double& x : out.data) {
        double u = kSqrt2OverPi * (x + kCubic * x * x * x);
        x = 0.5 * x * (1.0 + std::tanh(u));
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, self](Graph& g) {
        const auto& d = g.nodes_[self].grad.data;
        const auto& x = g.value(a).data;
        std::vector<double> ga(d.size());
        for (size_t i = 0; i < d.size(); ++i) {
            double xi = x[i];
            double u = kSqrt2OverPi * (xi + kCubic * xi * xi * xi);
            double t = std::tanh(u);
            double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * xi * xi);
            double dy = 0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * du;
            ga[i] = d[i] * dy;
        }
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::sum(NodeId a) {
    double s = seq_sum(value(a).data);
    NodeId self = static_cast<NodeId>(nodes_.size());
    int64_t n = value(a).size();
    return emit(Tensor::scalar(s), nodes_[a].wants_grad, [a, n, self](Graph& g) {
        double d = g.nodes_[self].grad.data[0];
        g.accumulate(a, std::vector<double>(static_cast<size_t>(n), d));
    });
}

Graph::NodeId Graph::mean(NodeId a) {
    int64_t n = value(a).size();
    if (n == 0) throw DimensionError("mean of empty tensor");
    double s = seq_sum(value(a).data) / static_cast<double>(n);
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(Tensor::scalar(s), nodes_[a].wants_grad, [a, n, self](Graph& g) {
        double d = g.nodes_[self].grad.data[0] / static_cast<double>(n);
        g.accumulate(a, std::vector<double>(static_cast<size_t>(n), d));
    });
}

Graph::NodeId Graph::mean_rows(NodeId a) {
    const Tensor& va = value(a);
    int n = va.rows(), d = va.cols();
    Tensor out = Tensor::zeros({1, d});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) out.data[c] += va.data[static_cast<size_t>(r) * d + c];
    for (double& x : out.data) x /= static_cast<double>(n);
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, n, d, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        std::vector<double> ga(static_cast<size_t>(n) * d);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < d; ++c) ga[static_cast<size_t>(r) * d + c] = dd[c] / static_cast<double>(n);
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::slice_rows(NodeId a, int begin, int end) {
    const Tensor& va = value(a);
    int n = va.rows(), d = va.cols();
    if (begin < 0 || end > n || begin >= end) throw DimensionError("slice_rows: bad range");
    Tensor out = Tensor::zeros({end - begin, d});
    std::copy(va.data.begin() + static_cast<size_t>(begin) * d,
              va.data.begin() + static_cast<size_t>(end) * d, out.data.begin());
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, begin, end, n, d, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        std::vector<double> ga(static_cast<size_t>(n) * d, 0.0);
        std::copy(dd.begin(), dd.end(), ga.begin() + static_cast<size_t>(begin) * d);
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::slice_cols(NodeId a, int begin, int end) {
    const Tensor& va = value(a);
    int n = va.rows(), d = va.cols();
    if (begin < 0 || end > d || begin >= end) throw DimensionError("slice_cols: bad range");
    int w = end - begin;
    Tensor out = Tensor::zeros({n, w});
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < w; ++c)
            out.data[static_cast<size_t>(r) * w + c] = va.data[static_cast<size_t>(r) * d + begin + c];
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, begin, n, d, w, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        std::vector<double> ga(static_cast<size_t>(n) * d, 0.0);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < w; ++c)
                ga[static_cast<size_t>(r) * d + begin + c] = dd[static_cast<size_t>(r) * w + c];
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::concat_rows(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    int d = value(parts[0]).cols();
    int total = 0;
    bool w = false;
    for (NodeId p : parts) {
        if (value(p).cols() != d) throw DimensionError("concat_rows: column mismatch");
        total += value(p).rows();
        w = w || nodes_[p].wants_grad;
    }
    Tensor out = Tensor::zeros({total, d});
    size_t off = 0;
    for (NodeId p : parts) {
        const auto& src = value(p).data;
        std::copy(src.begin(), src.end(), out.data.begin() + off);
        off += src.size();
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    std::vector<NodeId> ps = parts;
    return emit(std::move(out), w, [ps, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        size_t off2 = 0;
        for (NodeId p : ps) {
            size_t len = g.value(p).data.size();
            std::vector<double> gp(dd.begin() + off2, dd.begin() + off2 + len);
            g.accumulate(p, gp);
            off2 += len;
        }
    });
}

Graph::NodeId Graph::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    int n = value(parts[0]).rows();
    int total = 0;
    bool w = false;
    for (NodeId p : parts) {
        if (value(p).rows() != n) throw DimensionError("concat_cols: row mismatch");
        total += value(p).cols();
        w = w || nodes_[p].wants_grad;
    }
    Tensor out = Tensor::zeros({n, total});
    int off = 0;
    for (NodeId p : parts) {
        const Tensor& src = value(p);
        int pc = src.cols();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < pc; ++c)
                out.data[static_cast<size_t>(r) * total + off + c] = src.data[static_cast<size_t>(r) * pc + c];
        off += pc;
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    std::vector<NodeId> ps = parts;
    return emit(std::move(out), w, [ps, n, total, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        int off2 = 0;
        for (NodeId p : ps) {
            int pc = g.value(p).cols();
            std::vector<double> gp(static_cast<size_t>(n) * pc);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < pc; ++c)
                    gp[static_cast<size_t>(r) * pc + c] = dd[static_cast<size_t>(r) * total + off2 + c];
            g.accumulate(p, gp);
            off2 += pc;
        }
    });
}

Graph::NodeId Graph::stack_scalars(const std::vector<NodeId>& scalars) {
    if (scalars.empty()) throw DimensionError("stack_scalars: no inputs");
    int n = static_cast<int>(scalars.size());
    Tensor out = Tensor::zeros({n, 1});
    bool w = false;
    for (int i = 0; i < n; ++i) {
        if (value(scalars[i]).size() != 1) throw DimensionError("stack_scalars: non-scalar input");
        out.data[i] = value(scalars[i]).data[0];
        w = w || nodes_[scalars[i]].wants_grad;
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    std::vector<NodeId> ss = scalars;
    return emit(std::move(out), w, [ss, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        for (size_t i = 0; i < ss.size(); ++i) g.accumulate(ss[i], {dd[i]});
    });
}

Graph::NodeId Graph::diag(NodeId a) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || va.shape[0] != va.shape[1]) throw DimensionError("diag: square matrix required");
    int n = va.shape[0];
    Tensor out = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) out.data[i] = va.data[static_cast<size_t>(i) * n + i];
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, n, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        std::vector<double> ga(static_cast<size_t>(n) * n, 0.0);
        for (int i = 0; i < n; ++i) ga[static_cast<size_t>(i) * n + i] = dd[i];
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::gather_rows(NodeId table, const std::vector<int>& ids) {
    const Tensor& vt = value(table);
    int vocab = vt.rows(), d = vt.cols();
    int n = static_cast<int>(ids.size());
    if (n == 0) throw DimensionError("gather_rows: empty id list");
    Tensor out = Tensor::zeros({n, d});
    for (int i = 0; i < n; ++i) {
        if (ids[i] < 0 || ids[i] >= vocab) throw InputError("gather_rows: id out of range");
        std::copy(vt.data.begin() + static_cast<size_t>(ids[i]) * d,
                  vt.data.begin() + static_cast<size_t>(ids[i] + 1) * d,
                  out.data.begin() + static_cast<size_t>(i) * d);
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    std::vector<int> idv = ids;
    return emit(std::move(out), nodes_[table].wants_grad, [table, idv, vocab, d, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        std::vector<double> gt(static_cast<size_t>(vocab) * d, 0.0);
        for (size_t i = 0; i < idv.size(); ++i)
            for (int c = 0; c < d; ++c)
                gt[static_cast<size_t>(idv[i]) * d + c] += dd[i * d + c];
        g.accumulate(table, gt);
    });
}

Graph::NodeId Graph::softmax_rows(NodeId a) {
    const Tensor& va = value(a);
    if (va.size() == 0 || va.cols() < 1) throw DimensionError("softmax_rows: empty tensor");
    int n = va.rows(), m = va.cols();
    Tensor out = Tensor::zeros({n, m});
    for (int r = 0; r < n; ++r) {
        const double* x = &va.data[static_cast<size_t>(r) * m];
        double mx = x[0];
        for (int c = 1; c < m; ++c) mx = std::max(mx, x[c]);
        double s = 0.0;
        double* y = &out.data[static_cast<size_t>(r) * m];
        for (int c = 0; c < m; ++c) {
            y[c] = std::exp(x[c] - mx);
            s += y[c];
        }
        for (int c = 0; c < m; ++c) y[c] /= s;
    }
    if (va.rank() == 1) out.shape = va.shape;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, n, m, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        const auto& y = g.value(self).data;
        std::vector<double> ga(dd.size());
        for (int r = 0; r < n; ++r) {
            double dotv = 0.0;
            for (int c = 0; c < m; ++c) dotv += dd[static_cast<size_t>(r) * m + c] * y[static_cast<size_t>(r) * m + c];
            for (int c = 0; c < m; ++c) {
                size_t i = static_cast<size_t>(r) * m + c;
                ga[i] = y[i] * (dd[i] - dotv);
            }
        }
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::logsumexp_rows(NodeId a) {
    const Tensor& va = value(a);
    int n = va.rows(), m = va.cols();
    Tensor out = Tensor::zeros({n, 1});
    for (int r = 0; r < n; ++r) {
        const double* x = &va.data[static_cast<size_t>(r) * m];
        double mx = x[0];
        for (int c = 1; c < m; ++c) mx = std::max(mx, x[c]);
        double s = 0.0;
        for (int c = 0; c < m; ++c) s += std::exp(x[c] - mx);
        out.data[r] = mx + std::log(s);
    }
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[a].wants_grad, [a, n, m, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        const auto& x = g.value(a).data;
        const auto& lse = g.value(self).data;
        std::vector<double> ga(x.size());
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < m; ++c) {
                size_t i = static_cast<size_t>(r) * m + c;
                ga[i] = dd[r] * std::exp(x[i] - lse[r]);
            }
        g.accumulate(a, ga);
    });
}

Graph::NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta) {
    const Tensor& vx = value(x);
    const Tensor& vg = value(gamma);
    const Tensor& vb = value(beta);
    int n = vx.rows(), d = vx.cols();
    if (vg.size() != d || vb.size() != d) throw DimensionError("layer_norm: gamma/beta length mismatch");
    Tensor out = Tensor::zeros(vx.shape);
    std::vector<double> inv_std(static_cast<size_t>(n)), means(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        const double* xr = &vx.data[static_cast<size_t>(r) * d];
        double mu = 0.0;
        for (int c = 0; c < d; ++c) mu += xr[c];
        mu /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= d;
        double is = 1.0 / std::sqrt(var + kLayerNormEps);
        means[r] = mu;
        inv_std[r] = is;
        for (int c = 0; c < d; ++c)
            out.data[static_cast<size_t>(r) * d + c] = (xr[c] - mu) * is * vg.data[c] + vb.data[c];
    }
    bool w = nodes_[x].wants_grad || nodes_[gamma].wants_grad || nodes_[beta].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), w, [x, gamma, beta, n, d, means, inv_std, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        const auto& vx2 = g.value(x).data;
        const auto& vg2 = g.value(gamma).data;
        std::vector<double> gx(vx2.size()), gg(static_cast<size_t>(d), 0.0), gb(static_cast<size_t>(d), 0.0);
        for (int r = 0; r < n; ++r) {
            double mu = means[r], is = inv_std[r];
            double sum_dh = 0.0, sum_dh_xhat = 0.0;
            for (int c = 0; c < d; ++c) {
                size_t i = static_cast<size_t>(r) * d + c;
                double xhat = (vx2[i] - mu) * is;
                double dh = dd[i] * vg2[c];
                sum_dh += dh;
                sum_dh_xhat += dh * xhat;
                gg[c] += dd[i] * xhat;
                gb[c] += dd[i];
            }
            for (int c = 0; c < d; ++c) {
                size_t i = static_cast<size_t>(r) * d + c;
                double xhat = (vx2[i] - mu) * is;
                double dh = dd[i] * vg2[c];
                gx[i] = is * (dh - sum_dh / d - xhat * sum_dh_xhat / d);
            }
        }
        g.accumulate(x, gx);
        g.accumulate(gamma, gg);
        g.accumulate(beta, gb);
    });
}

Graph::NodeId Graph::l2_normalize(NodeId v) {
    const Tensor& vv = value(v);
    double norm = l2_norm(vv.data);
    if (norm <= 0.0) throw InputError("l2_normalize: zero vector");
    Tensor out = vv;
    for (double& x : out.data) x /= norm;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(std::move(out), nodes_[v].wants_grad, [v, norm, self](Graph& g) {
        const auto& dd = g.nodes_[self].grad.data;
        const auto& y = g.value(self).data;
        double proj = 0.0;
        for (size_t i = 0; i < dd.size(); ++i) proj += dd[i] * y[i];
        std::vector<double> gv(dd.size());
        for (size_t i = 0; i < dd.size(); ++i) gv[i] = (dd[i] - y[i] * proj) / norm;
        g.accumulate(v, gv);
    });
}

Graph::NodeId Graph::dot(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.size() != vb.size()) throw DimensionError("dot: length mismatch");
    double s = seq_dot(va.data, vb.data);
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(Tensor::scalar(s), w, [a, b, self](Graph& g) {
        double d = g.nodes_[self].grad.data[0];
        const auto& va2 = g.value(a).data;
        const auto& vb2 = g.value(b).data;
        std::vector<double> ga(va2.size()), gb(vb2.size());
        for (size_t i = 0; i < va2.size(); ++i) {
            ga[i] = d * vb2[i];
            gb[i] = d * va2[i];
        }
        g.accumulate(a, ga);
        g.accumulate(b, gb);
    });
}

Graph::NodeId Graph::cosine_similarity(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.size() != vb.size()) throw DimensionError("cosine_similarity: length mismatch");
    double sa = seq_dot(va.data, va.data);
    double sb = seq_dot(vb.data, vb.data);
    if (sa == 0.0 || sb == 0.0) throw InputError("cosine_similarity: zero vector");
    double dotv = seq_dot(va.data, vb.data);
    // sqrt(sa * sb) keeps cos exactly 1 for exactly parallel inputs.
    double denom = std::sqrt(sa * sb);
    double cosv = std::clamp(dotv / denom, -1.0, 1.0);
    bool w = nodes_[a].wants_grad || nodes_[b].wants_grad;
    NodeId self = static_cast<NodeId>(nodes_.size());
    return emit(Tensor::scalar(cosv), w, [a, b, sa, sb, denom, cosv, self](Graph& g) {
        double d = g.nodes_[self].grad.data[0];
        const auto& va2 = g.value(a).data;
        const auto& vb2 = g.value(b).data;
        std::vector<double> ga(va2.size()), gb(vb2.size());
        for (size_t i = 0; i < va2.size(); ++i) {
            ga[i] = d * (vb2[i] / denom - cosv * va2[i] / sa);
            gb[i] = d * (va2[i] / denom - cosv * vb2[i] / sb);
        }
        g.accumulate(a, ga);
        g.accumulate(b, gb);
    });
}

void Graph::truncate(size_t n) {
    if (n > nodes_.size()) throw ContractError("truncate: size exceeds tape");
    nodes_.resize(n);
}

void Graph::run_tape(NodeId top) {
    for (NodeId i = top; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.backprop && !n.grad.data.empty()) n.backprop(*this);
    }
}

void Graph::backward(NodeId root) {
    if (value(root).size() != 1) throw ContractError("backward: root must be scalar");
    accumulate(root, {1.0});
    if (!nodes_[root].wants_grad) grad_buf(root).data[0] = 1.0;  // leafless graphs still report
    run_tape(root);
}

void Graph::backward_from(NodeId node, const Tensor& seed) {
    backward_seeds({{node, seed}});
}

void Graph::backward_seeds(const std::vector<std::pair<NodeId, Tensor>>& seeds) {
    NodeId top = -1;
    for (const auto& [node, seed] : seeds) {
        if (!seed.same_shape(value(node)))
            throw ContractError("backward_seeds: seed shape mismatch");
        if (!nodes_[node].wants_grad) continue;
        accumulate(node, seed.data);
        top = std::max(top, node);
    }
    if (top >= 0) run_tape(top);
}

}  // namespace razor
