#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "razor/errors.hpp"
#include "razor/graph.hpp"
#include "razor/rng.hpp"
#include "razor/tensor.hpp"

using namespace razor;

namespace {

// Builds a scalar graph over the given leaf tensors and checks every leaf
// gradient against central finite differences.
using ScalarBuilder = std::function<Graph::NodeId(Graph&, const std::vector<Graph::NodeId>&)>;

double eval_scalar(const std::vector<Tensor>& leaves, const ScalarBuilder& build) {
    Graph g;
    std::vector<Graph::NodeId> ids;
    for (const Tensor& t : leaves) ids.push_back(g.param(t));
    Graph::NodeId root = build(g, ids);
    REQUIRE(g.value(root).size() == 1);
    return g.value(root).data[0];
}

void check_gradients(std::vector<Tensor> leaves, const ScalarBuilder& build, double tol = 1e-6) {
    Graph g;
    std::vector<Graph::NodeId> ids;
    for (const Tensor& t : leaves) ids.push_back(g.param(t));
    Graph::NodeId root = build(g, ids);
    g.backward(root);

    const double h = 1e-6;
    for (size_t li = 0; li < leaves.size(); ++li) {
        const Tensor& grad = g.grad(ids[li]);
        for (size_t i = 0; i < leaves[li].data.size(); ++i) {
            double saved = leaves[li].data[i];
            leaves[li].data[i] = saved + h;
            double fp = eval_scalar(leaves, build);
            leaves[li].data[i] = saved - h;
            double fm = eval_scalar(leaves, build);
            leaves[li].data[i] = saved;
            double fd = (fp - fm) / (2 * h);
            CHECK(grad.data[i] == doctest::Approx(fd).epsilon(tol).scale(1.0));
        }
    }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data) x = rng.normal();
    return t;
}

}  // namespace

TEST_CASE("arithmetic op gradients match finite differences") {
    Rng rng(1);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.mul(g.add(v[0], v[1]), g.sub(v[0], g.scale(v[1], 0.3))));
    });
}

TEST_CASE("matmul and transpose gradients match finite differences") {
    Rng rng(2);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({3, 4}, rng);
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.matmul(v[0], v[1]));
    });
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.matmul(g.transpose(g.matmul(v[0], v[1])), v[0]));
    });
}

TEST_CASE("matmul_nt equals matmul with an explicit transpose") {
    Rng rng(3);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Graph g;
    Graph::NodeId na = g.param(a), nb = g.param(b);
    Tensor fused = g.value(g.matmul_nt(na, nb));
    Tensor ref = g.value(g.matmul(na, g.transpose(nb)));
    REQUIRE(fused.shape == ref.shape);
    for (size_t i = 0; i < ref.data.size(); ++i)
        CHECK(fused.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-14));

    check_gradients({a, b}, [](Graph& g2, const std::vector<Graph::NodeId>& v) {
        return g2.sum(g2.mul(g2.matmul_nt(v[0], v[1]), g2.matmul_nt(v[0], v[1])));
    });
}

TEST_CASE("nonlinearity gradients match finite differences") {
    Rng rng(4);
    Tensor a = random_tensor({2, 4}, rng);
    for (double& x : a.data) x = 0.1 + std::abs(x);  // keep log well-conditioned
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.log_(g.exp_(g.tanh_(v[0]))));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.gelu(v[0]));
    });
}

TEST_CASE("reduction and row-op gradients match finite differences") {
    Rng rng(5);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({1, 4}, rng);
    check_gradients({a, bias}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.mean(g.add_row_bias(v[0], v[1]));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.mul(g.mean_rows(v[0]), g.mean_rows(v[0])));
    });
}

TEST_CASE("softmax, logsumexp and layer_norm gradients match finite differences") {
    Rng rng(6);
    Tensor a = random_tensor({3, 5}, rng);
    Tensor gamma = random_tensor({1, 5}, rng);
    Tensor beta = random_tensor({1, 5}, rng);
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.mul(g.softmax_rows(v[0]), v[0]));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.logsumexp_rows(v[0]));
    });
    check_gradients({a, gamma, beta}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.mul(g.layer_norm(v[0], v[1], v[2]), v[0]));
    }, 1e-5);
}

TEST_CASE("normalize / dot / cosine gradients match finite differences") {
    Rng rng(7);
    Tensor a = random_tensor({1, 6}, rng);
    Tensor b = random_tensor({1, 6}, rng);
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.sum(g.mul(g.l2_normalize(v[0]), v[0]));
    });
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.dot(v[0], v[1]);
    });
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        return g.cosine_similarity(v[0], v[1]);
    });
}

TEST_CASE("structural op gradients match finite differences") {
    Rng rng(8);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    check_gradients({a, b}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        auto cat = g.concat_rows({g.slice_rows(v[0], 1, 3), v[1]});
        return g.sum(g.mul(cat, cat));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        auto cat = g.concat_cols({g.slice_cols(v[0], 0, 2), g.slice_cols(v[0], 1, 3)});
        return g.sum(g.mul(cat, cat));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        auto sq = g.matmul_nt(v[0], v[0]);  // [4 x 4]
        return g.sum(g.diag(sq));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        auto rows = g.gather_rows(v[0], {3, 0, 0, 2});
        return g.sum(g.mul(rows, rows));
    });
    check_gradients({a}, [](Graph& g, const std::vector<Graph::NodeId>& v) {
        std::vector<Graph::NodeId> scalars;
        for (int i = 0; i < 3; ++i)
            scalars.push_back(g.dot(g.slice_rows(v[0], i, i + 1), g.slice_rows(v[0], i + 1, i + 2)));
        return g.sum(g.stack_scalars(scalars));
    });
}

TEST_CASE("inputs get no gradient, params do") {
    Graph g;
    Graph::NodeId c = g.input(Tensor::row({1, 2}));
    Graph::NodeId p = g.param(Tensor::row({3, 4}));
    g.backward(g.sum(g.mul(c, p)));
    CHECK_FALSE(g.has_grad(c));
    REQUIRE(g.has_grad(p));
    CHECK(g.grad(p).data[0] == 1.0);
    CHECK(g.grad(p).data[1] == 2.0);
}

TEST_CASE("fan-out accumulates gradients") {
    Graph g;
    Graph::NodeId p = g.param(Tensor::scalar(3.0));
    // f = p*p + p  =>  df/dp = 2p + 1 = 7
    g.backward(g.add(g.mul(p, p), p));
    CHECK(g.grad(p).data[0] == doctest::Approx(7.0));
}

TEST_CASE("backward_from seeds an interior node") {
    Graph g;
    Graph::NodeId p = g.param(Tensor::row({1.0, 2.0}));
    Graph::NodeId y = g.scale(p, 3.0);
    g.backward_from(y, Tensor::row({0.5, 0.25}));
    CHECK(g.grad(p).data[0] == doctest::Approx(1.5));
    CHECK(g.grad(p).data[1] == doctest::Approx(0.75));
}

TEST_CASE("backward_seeds runs one tape pass for several roots") {
    Graph g;
    Graph::NodeId p = g.param(Tensor::scalar(2.0));
    Graph::NodeId a = g.mul(p, p);   // da/dp = 4
    Graph::NodeId b = g.scale(p, 5); // db/dp = 5
    g.backward_seeds({{a, Tensor::scalar(1.0)}, {b, Tensor::scalar(1.0)}});
    CHECK(g.grad(p).data[0] == doctest::Approx(9.0));
}

TEST_CASE("non-finite intermediate values are rejected") {
    Graph g;
    Graph::NodeId p = g.param(Tensor::scalar(2000.0));
    CHECK_THROWS_AS(g.exp_(p), NumericError);
    Graph g2;
    Graph::NodeId z = g2.param(Tensor::scalar(0.0));
    CHECK_THROWS_AS(g2.log_(z), NumericError);
}

TEST_CASE("shape mismatches are rejected") {
    Graph g;
    Graph::NodeId a = g.param(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Graph::NodeId b = g.param(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    CHECK_THROWS_AS(g.add(a, b), DimensionError);
    CHECK_THROWS_AS(g.matmul(a, a), DimensionError);
    CHECK_THROWS_AS(g.matmul_nt(a, b), DimensionError);
}

TEST_CASE("truncate rolls the tape back for forward-only reuse") {
    Graph g;
    Graph::NodeId p = g.param(Tensor::row({1.0, 2.0, 3.0}));
    size_t base = g.node_count();

    Graph::NodeId y1 = g.sum(g.mul(p, p));
    double v1 = g.value(y1).data[0];
    g.truncate(base);
    CHECK(g.node_count() == base);

    Graph::NodeId y2 = g.sum(g.mul(p, p));
    CHECK(g.value(y2).data[0] == v1);
    g.truncate(base);

    CHECK_THROWS_AS(g.truncate(base + 10), ContractError);
}
