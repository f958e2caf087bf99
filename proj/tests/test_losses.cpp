#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "razor/data.hpp"
#include "razor/errors.hpp"
#include "razor/losses.hpp"
#include "razor/model.hpp"
#include "razor/rng.hpp"

using namespace razor;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.n_blocks = 2;
    cfg.n_heads = 2;
    cfg.mlp_hidden = 12;
    cfg.vocab_size = 32;
    cfg.n_patches = 4;
    cfg.patch_dim = 6;
    cfg.max_text_len = 6;
    return cfg;
}

struct Fixture {
    ModelConfig cfg = small_config();
    Checkpoint c;
    Dataset ds;

    Fixture() {
        SplitSpec spec;
        spec.n_classes = 4;
        spec.pairs_per_class = 4;
        spec.val_fraction = 0.25;
        ds = generate(spec, cfg);
        c = init_checkpoint(cfg, 17);
    }
};

// Unit row embeddings injected straight into the loss graphs.
std::vector<Graph::NodeId> rows(Graph& g, const std::vector<std::vector<double>>& vs) {
    std::vector<Graph::NodeId> out;
    for (const auto& v : vs) out.push_back(g.input(Tensor::row(v)));
    return out;
}

}  // namespace

TEST_CASE("single-pair retain loss is zero") {
    Fixture f;
    std::vector<Pair> one = {f.ds.retain[0]};
    CHECK(retain_loss(f.c, one, 0.07) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("retain loss on an identity similarity matrix matches the closed form") {
    Graph g;
    auto v = rows(g, {{1, 0}, {0, 1}});
    auto t = rows(g, {{1, 0}, {0, 1}});
    double loss = g.value(retain_loss_node(g, v, t, 0.07)).data[0];
    double expected = std::log(1.0 + std::exp(-1.0 / 0.07));
    CHECK(loss == doctest::Approx(expected).epsilon(1e-9));
    CHECK(loss == doctest::Approx(6.1e-7).epsilon(0.05));
}

TEST_CASE("retain loss is invariant under batch permutation") {
    Fixture f;
    std::vector<Pair> batch(f.ds.retain.begin(), f.ds.retain.begin() + 6);
    double base = retain_loss(f.c, batch, 0.07);
    std::rotate(batch.begin(), batch.begin() + 2, batch.end());
    std::swap(batch[0], batch[3]);
    CHECK(retain_loss(f.c, batch, 0.07) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("forget loss hits its alignment anchors") {
    Graph g;
    auto v = rows(g, {{1, 0}, {0, 1}});
    SUBCASE("aligned pairs give 0") {
        auto t = rows(g, {{1, 0}, {0, 1}});
        CHECK(g.value(forget_loss_node(g, v, t)).data[0] == doctest::Approx(0.0).scale(1.0));
    }
    SUBCASE("orthogonal pairs give 1") {
        auto t = rows(g, {{0, 1}, {1, 0}});
        CHECK(g.value(forget_loss_node(g, v, t)).data[0] == doctest::Approx(1.0));
    }
    SUBCASE("antipodal pairs give 2") {
        auto t = rows(g, {{-1, 0}, {0, -1}});
        CHECK(g.value(forget_loss_node(g, v, t)).data[0] == doctest::Approx(2.0));
    }
}

TEST_CASE("mismatch loss measures drift from the baseline sims") {
    Fixture f;
    std::vector<Pair> batch(f.ds.forget.begin(), f.ds.forget.begin() + 3);
    std::vector<double> base = baseline_sims(f.c, batch);

    SUBCASE("self-reference is zero") {
        CHECK(mismatch_loss(f.c, batch, base, MismatchForm::signed_drift) ==
              doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(mismatch_loss(f.c, batch, base, MismatchForm::squared_drift) ==
              doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    }
    SUBCASE("constant 0.3 shift gives 0.3 signed, 0.09 squared") {
        std::vector<double> shifted = base;
        for (double& s : shifted) s -= 0.3;
        CHECK(mismatch_loss(f.c, batch, shifted, MismatchForm::signed_drift) ==
              doctest::Approx(0.3).epsilon(1e-10));
        CHECK(mismatch_loss(f.c, batch, shifted, MismatchForm::squared_drift) ==
              doctest::Approx(0.09).epsilon(1e-10));
    }
    SUBCASE("baseline length mismatch is rejected") {
        base.pop_back();
        CHECK_THROWS_AS(mismatch_loss(f.c, batch, base, MismatchForm::signed_drift),
                        ContractError);
    }
}

TEST_CASE("composite loss is linear in each toggle") {
    Fixture f;
    std::vector<Pair> retain(f.ds.retain.begin(), f.ds.retain.begin() + 5);
    std::vector<Pair> forget(f.ds.forget.begin(), f.ds.forget.begin() + 3);
    std::vector<double> base = baseline_sims(f.c, forget);
    for (double& s : base) s -= 0.2;  // nonzero drift so the term matters
    LossWeights w;

    double lr = retain_loss(f.c, retain, w.temperature);
    double lf = forget_loss(f.c, forget);
    double lm = mismatch_loss(f.c, forget, base, MismatchForm::signed_drift);

    auto comp = [&](bool r, bool fo, bool m) {
        return composite_loss(f.c, retain, forget, base, w, {r, fo, m},
                              MismatchForm::signed_drift);
    };
    CHECK(comp(true, true, true) ==
          doctest::Approx(lr + w.lambda_f * w.rho * lf + w.lambda_m * lm).epsilon(1e-12));
    CHECK(comp(true, false, false) == doctest::Approx(lr).epsilon(1e-12));
    CHECK(comp(false, true, false) == doctest::Approx(w.lambda_f * w.rho * lf).epsilon(1e-12));
    CHECK(comp(false, false, true) == doctest::Approx(w.lambda_m * lm).epsilon(1e-12));
    CHECK(comp(true, true, false) - comp(true, false, false) ==
          doctest::Approx(w.lambda_f * w.rho * lf).epsilon(1e-10));

    CHECK_THROWS_AS(comp(false, false, false), ConfigError);
}

TEST_CASE("empty batches are rejected") {
    Fixture f;
    std::vector<Pair> empty;
    CHECK_THROWS_AS(retain_loss(f.c, empty, 0.07), InputError);
    CHECK_THROWS_AS(forget_loss(f.c, empty), InputError);
    CHECK_THROWS_AS(forget_gradients(f.c, empty), InputError);
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.rho = 0.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = LossWeights{};
    w.temperature = -1.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("gradient values agree with the scalar losses under finite differences") {
    Fixture f;
    std::vector<Pair> retain(f.ds.retain.begin(), f.ds.retain.begin() + 4);
    std::vector<Pair> forget(f.ds.forget.begin(), f.ds.forget.begin() + 2);
    std::vector<double> base = baseline_sims(f.c, forget);
    for (double& s : base) s -= 0.1;

    struct Probe {
        const char* tensor;
        size_t index;
    };
    std::vector<Probe> probes = {{"img.block0.attn.wq", 3},
                                 {"txt.block1.mlp.w1", 17},
                                 {"img.patch_embed.w", 5},
                                 {"txt.block0.ln1.gamma", 2}};

    auto check_one = [&](const LossValueGrads& vg, auto&& eval) {
        const double h = 1e-5;
        for (const Probe& p : probes) {
            Checkpoint cp = f.c;
            cp.params.at(p.tensor).data[p.index] += h;
            double up = eval(cp);
            cp.params.at(p.tensor).data[p.index] -= 2 * h;
            double dn = eval(cp);
            double fd = (up - dn) / (2 * h);
            double an = vg.grads.at(p.tensor).data[p.index];
            CHECK(an == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
        }
    };

    check_one(retain_gradients(f.c, retain, 0.07),
              [&](const Checkpoint& cp) { return retain_loss(cp, retain, 0.07); });
    check_one(forget_gradients(f.c, forget),
              [&](const Checkpoint& cp) { return forget_loss(cp, forget); });
    check_one(mismatch_gradients(f.c, forget, base, MismatchForm::squared_drift),
              [&](const Checkpoint& cp) {
                  return mismatch_loss(cp, forget, base, MismatchForm::squared_drift);
              });
}

TEST_CASE("ascending the forget gradient reduces pair similarity") {
    Fixture f;
    std::vector<Pair> forget(f.ds.forget.begin(), f.ds.forget.begin() + 3);
    LossValueGrads vg = forget_gradients(f.c, forget);

    auto mean_sim = [&](const Checkpoint& cp) {
        double s = 0.0;
        for (const Pair& p : forget)
            s += seq_dot(encode_image(cp, p.image).data, encode_text(cp, p.tokens).data);
        return s / static_cast<double>(forget.size());
    };

    Checkpoint stepped = f.c;
    const double h = 1e-6;
    for (auto& [name, t] : stepped.params) {
        const Tensor& grad = vg.grads.at(name);
        for (size_t i = 0; i < t.data.size(); ++i) t.data[i] += h * grad.data[i];
    }
    CHECK(mean_sim(stepped) < mean_sim(f.c));
}
