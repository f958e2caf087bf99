#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <string>

#include "razor/errors.hpp"
#include "razor/model.hpp"
#include "razor/rng.hpp"
#include "razor/tensor.hpp"

using namespace razor;

namespace {

Tensor test_image(const ModelConfig& cfg, uint64_t seed) {
    Rng rng(seed);
    Tensor t = Tensor::zeros({cfg.n_patches, cfg.patch_dim});
    for (double& x : t.data) x = rng.normal();
    return t;
}

Tensor test_tokens() { return Tensor::vec({1, 5, 20, 2}); }

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

}  // namespace

TEST_CASE("config validation") {
    ModelConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.n_heads = 3;  // does not divide embed_dim = 32
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("init_checkpoint matches param_spec and is seed-deterministic") {
    ModelConfig cfg = small_config();
    Checkpoint a = init_checkpoint(cfg, 123);
    auto spec = param_spec(cfg);
    REQUIRE(a.params.size() == spec.size());
    for (const auto& [name, shape] : spec) {
        auto it = a.params.find(name);
        REQUIRE(it != a.params.end());
        CHECK(it->second.shape == shape);
    }

    Checkpoint b = init_checkpoint(cfg, 123);
    for (const auto& [name, t] : a.params)
        CHECK(std::memcmp(t.data.data(), b.params.at(name).data.data(),
                          t.data.size() * sizeof(double)) == 0);

    Checkpoint c = init_checkpoint(cfg, 124);
    bool any_diff = false;
    for (const auto& [name, t] : a.params)
        if (t.data != c.params.at(name).data) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("encoders emit unit-norm embeddings deterministically") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 7);
    Tensor img = test_image(cfg, 1);
    Tensor v1 = encode_image(c, img);
    Tensor v2 = encode_image(c, img);
    REQUIRE(v1.shape == std::vector<int>({1, cfg.embed_dim}));
    CHECK(v1.data == v2.data);
    CHECK(l2_norm(v1.data) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor t1 = encode_text(c, test_tokens());
    REQUIRE(t1.shape == std::vector<int>({1, cfg.embed_dim}));
    CHECK(l2_norm(t1.data) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("FrozenEncoder matches the one-shot encoders") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 9);
    FrozenEncoder enc(c);
    for (uint64_t s = 0; s < 4; ++s) {
        Tensor img = test_image(cfg, s);
        CHECK(enc.image(img).data == encode_image(c, img).data);
    }
    CHECK(enc.text(test_tokens()).data == encode_text(c, test_tokens()).data);
    // Interleaving towers must not corrupt the rolled-back tape.
    Tensor img = test_image(cfg, 0);
    CHECK(enc.image(img).data == encode_image(c, img).data);
}

TEST_CASE("component enumeration covers both towers") {
    ModelConfig cfg;  // defaults: 2 towers x 4 blocks x (4 heads + 1 mlp)
    auto ids = enumerate_components(cfg);
    CHECK(ids.size() == 40);
    std::set<std::string> names;
    for (const auto& id : ids) names.insert(id.str());
    CHECK(names.size() == ids.size());
}

TEST_CASE("components partition the attention+MLP parameters") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 3);
    auto ids = enumerate_components(cfg);

    // Count per-coordinate coverage over all editable tensors.
    std::map<std::string, std::vector<int>> cover;
    for (const auto& [name, t] : c.params)
        cover[name] = std::vector<int>(t.data.size(), 0);

    for (const auto& id : ids) {
        for (const ParamSlice& s : component_params(cfg, id)) {
            const Tensor& t = c.params.at(s.tensor);
            Tensor marker = t;
            std::vector<double> ones(static_cast<size_t>(s.count(cfg)), 1.0);
            for (double& x : marker.data) x = 0.0;
            slice_axpy(marker, s, ones, 1.0);
            for (size_t i = 0; i < marker.data.size(); ++i)
                if (marker.data[i] != 0.0) ++cover[s.tensor][i];
        }
    }

    for (const auto& [name, hits] : cover) {
        bool editable = name.find("attn.") != std::string::npos ||
                        name.find("mlp.") != std::string::npos;
        for (int h : hits) CHECK(h == (editable ? 1 : 0));
    }
}

TEST_CASE("editing one head leaves every other head's bytes intact") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 5);
    ComponentId h0{Tower::image, 0, ComponentKind::msa_head, 0};
    ComponentId h1{Tower::image, 0, ComponentKind::msa_head, 1};

    auto slices = component_params(cfg, h0);
    int64_t n = 0;
    for (const auto& s : slices) n += s.count(cfg);
    std::vector<double> delta(static_cast<size_t>(n), 0.01);
    Checkpoint edited = apply_flat_delta(c, h0, delta, 1.0);

    // The edited component moved and changes the forward pass.
    Tensor img = test_image(cfg, 2);
    CHECK(encode_image(edited, img).data != encode_image(c, img).data);

    // Head 1 of the same block is bit-identical.
    for (const ParamSlice& s : component_params(cfg, h1)) {
        auto before = slice_extract(c.params.at(s.tensor), s);
        auto after = slice_extract(edited.params.at(s.tensor), s);
        CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0);
    }

    // All tensors the component does not touch are bit-identical.
    std::set<std::string> touched;
    for (const auto& s : slices) touched.insert(s.tensor);
    for (const auto& [name, t] : c.params) {
        if (touched.count(name)) continue;
        CHECK(std::memcmp(t.data.data(), edited.params.at(name).data.data(),
                          t.data.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("text-tower edits do not move image embeddings") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 6);
    ComponentId txt_mlp{Tower::text, 1, ComponentKind::mlp, 0};
    auto slices = component_params(cfg, txt_mlp);
    int64_t n = 0;
    for (const auto& s : slices) n += s.count(cfg);
    Checkpoint edited = apply_flat_delta(c, txt_mlp, std::vector<double>(n, 0.05), 1.0);

    Tensor img = test_image(cfg, 8);
    CHECK(encode_image(edited, img).data == encode_image(c, img).data);
    CHECK(encode_text(edited, test_tokens()).data != encode_text(c, test_tokens()).data);
}

TEST_CASE("flatten and apply round-trip") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 4);
    ComponentId id{Tower::image, 1, ComponentKind::mlp, 0};
    auto slices = component_params(cfg, id);
    std::vector<double> flat = flatten_component(c, slices);

    // theta - 1.0*theta zeroes exactly the component.
    Checkpoint zeroed = apply_flat_delta(c, id, flat, -1.0);
    for (double x : flatten_component(zeroed, slices)) CHECK(x == 0.0);

    // grad_map_from_flat agrees with apply_delta on the same update.
    GradMap gm = grad_map_from_flat(cfg, id, flat);
    Checkpoint doubled = apply_delta(c, id, gm);
    std::vector<double> twice = flatten_component(doubled, slices);
    for (size_t i = 0; i < flat.size(); ++i)
        CHECK(twice[i] == doctest::Approx(2.0 * flat[i]).epsilon(1e-15));
}

TEST_CASE("delta with keys outside the component is rejected") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 2);
    ComponentId id{Tower::image, 0, ComponentKind::mlp, 0};
    GradMap bad;
    bad["img.block1.mlp.w1"] = std::vector<double>(
        static_cast<size_t>(cfg.mlp_hidden) * cfg.embed_dim, 0.0);
    CHECK_THROWS_AS(apply_delta(c, id, bad), ContractError);
}

TEST_CASE("token ids outside the vocabulary are rejected") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 1);
    CHECK_THROWS_AS(encode_text(c, Tensor::vec({1.0, 99.0, 2.0})), InputError);
}
