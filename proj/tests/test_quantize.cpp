#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "razor/errors.hpp"
#include "razor/quantize.hpp"
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

}  // namespace

TEST_CASE("fixed three-value tensor quantizes to the expected grid") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 1);
    // Overwrite one tensor with a hand-checkable pattern.
    Tensor& t = c.params.at("img.block0.mlp.b1");
    for (double& x : t.data) x = 0.0;
    t.data[0] = -1.0;
    t.data[1] = 0.5;
    t.data[2] = 1.0;

    SUBCASE("8-bit: s = 1/127") {
        Checkpoint q = quantize(c, QuantSpec{8});
        const Tensor& qt = q.params.at("img.block0.mlp.b1");
        double s = 1.0 / 127.0;
        CHECK(qt.data[0] == doctest::Approx(-1.0));
        CHECK(qt.data[1] == doctest::Approx(64.0 * s));  // round-half-even: 63.5 -> 64
        CHECK(qt.data[2] == doctest::Approx(1.0));
        CHECK(q.meta.quant_bits == 8);
    }
    SUBCASE("4-bit: s = 1/7") {
        Checkpoint q = quantize(c, QuantSpec{4});
        const Tensor& qt = q.params.at("img.block0.mlp.b1");
        double s = 1.0 / 7.0;
        CHECK(qt.data[0] == doctest::Approx(-1.0));
        CHECK(qt.data[1] == doctest::Approx(4.0 * s));  // 3.5 -> 4
        CHECK(qt.data[2] == doctest::Approx(1.0));
        CHECK(q.meta.quant_bits == 4);
    }
}

TEST_CASE("quantization is idempotent") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 2);
    for (int bits : {8, 4}) {
        Checkpoint q1 = quantize(c, QuantSpec{bits});
        Checkpoint q2 = quantize(q1, QuantSpec{bits});
        for (const auto& [name, t] : q1.params)
            CHECK(std::memcmp(t.data.data(), q2.params.at(name).data.data(),
                              t.data.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("element error is bounded by half the scale for every weight") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 3);
    for (int bits : {8, 4}) {
        Checkpoint q = quantize(c, QuantSpec{bits});
        auto rows = quant_error(c, QuantSpec{bits});
        for (const auto& row : rows) {
            const Tensor& orig = c.params.at(row.name);
            const Tensor& quant = q.params.at(row.name);
            double max_err = 0.0;
            for (size_t i = 0; i < orig.data.size(); ++i)
                max_err = std::max(max_err, std::abs(orig.data[i] - quant.data[i]));
            CHECK(max_err <= row.scale / 2.0 + 1e-15);
            CHECK(row.max_abs_error == doctest::Approx(max_err).epsilon(1e-12));
        }
    }
}

TEST_CASE("coarser quantization cannot reduce the RMS error") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 4);
    auto e8 = quant_error(c, QuantSpec{8});
    auto e4 = quant_error(c, QuantSpec{4});
    REQUIRE(e8.size() == e4.size());
    for (size_t i = 0; i < e8.size(); ++i) {
        REQUIRE(e8[i].name == e4[i].name);
        CHECK(e4[i].rms_error >= e8[i].rms_error - 1e-15);
    }
}

TEST_CASE("layer-norm parameters stay full precision") {
    ModelConfig cfg = small_config();
    Checkpoint c = init_checkpoint(cfg, 5);
    Checkpoint q = quantize(c, QuantSpec{4});
    for (const auto& [name, t] : c.params) {
        if (!is_layer_norm_param(name)) continue;
        CHECK(std::memcmp(t.data.data(), q.params.at(name).data.data(),
                          t.data.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("invalid bit widths are rejected") {
    CHECK_THROWS_AS(QuantSpec{16}.validate(), ConfigError);
    CHECK_THROWS_AS(QuantSpec{0}.validate(), ConfigError);
    CHECK_NOTHROW(QuantSpec{8}.validate());
    CHECK_NOTHROW(QuantSpec{4}.validate());
}
