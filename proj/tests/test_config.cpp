#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "razor/config.hpp"
#include "razor/errors.hpp"

using namespace razor;

TEST_CASE("empty text yields the defaults") {
    RunConfig c = parse_run_config("");
    CHECK(c.model.embed_dim == 32);
    CHECK(c.split.n_classes == 10);
    CHECK(c.split.forget_classes == std::vector<int>{0});
    CHECK(c.razor.weights.rho == 0.5);
    CHECK(c.razor.lambda_init == 1.0);
    CHECK(c.razor.t_max == 6);
    CHECK(c.pretrain.steps == 300);
    CHECK(c.pretrain.step_size == 1e-2);
    CHECK(c.seed == 0);
}

TEST_CASE("keys, comments and whitespace parse") {
    RunConfig c = parse_run_config(
        "# a comment\n"
        "model.embed_dim = 16   # trailing comment\n"
        "\n"
        "  data.forget_classes = 1, 3 \n"
        "razor.mismatch_variant = squared\n"
        "razor.select_all = true\n"
        "target.m1_max = 0.4\n"
        "seed = 17\n"
        "output_dir = results\n");
    CHECK(c.model.embed_dim == 16);
    CHECK(c.split.forget_classes == std::vector<int>{1, 3});
    CHECK(c.razor.mismatch_form == MismatchForm::squared_drift);
    CHECK(c.razor.select_all);
    CHECK(c.razor.target.m1_max == 0.4);
    CHECK(c.seed == 17);
    CHECK(c.output_dir == "results");
}

TEST_CASE("render / parse round-trips") {
    RunConfig c = parse_run_config(
        "model.n_blocks = 3\n"
        "data.noise_sigma = 0.25\n"
        "razor.lambda_init = 0.5\n"
        "razor.saliency_variant = squared\n"
        "razor.iterate = false\n"
        "pretrain.batch_size = 4\n");
    RunConfig back = parse_run_config(render_run_config(c));
    CHECK(render_run_config(back) == render_run_config(c));
    CHECK(back.model.n_blocks == 3);
    CHECK(back.split.noise_sigma == 0.25);
    CHECK(back.razor.lambda_init == 0.5);
    CHECK(back.razor.saliency_variant == SaliencyVariant::appendix_squared);
    CHECK_FALSE(back.razor.iterate);
    CHECK(back.pretrain.batch_size == 4);
}

TEST_CASE("file loading") {
    auto path = std::filesystem::temp_directory_path() / "razor_cfg_test.txt";
    {
        std::ofstream f(path);
        f << "model.n_heads = 2\nseed = 5\n";
    }
    RunConfig c = load_run_config(path);
    CHECK(c.model.n_heads == 2);
    CHECK(c.seed == 5);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_run_config("/no/such/config.txt"), InputError);
}

TEST_CASE("malformed input is rejected with ConfigError") {
    CHECK_THROWS_AS(parse_run_config("unknown.key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("model.embed_dim\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("model.embed_dim = twelve\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("model.embed_dim = 12.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("razor.select_all = maybe\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("razor.saliency_variant = cubed\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("data.forget_classes = ,\n"), ConfigError);
}

TEST_CASE("semantic validation runs after parsing") {
    // 3 does not divide embed_dim 32.
    CHECK_THROWS_AS(parse_run_config("model.n_heads = 3\n"), ConfigError);
    // Forget class outside the class range.
    CHECK_THROWS_AS(parse_run_config("data.forget_classes = 12\n"), ConfigError);
    // Binary-search interval must be positive and below lambda_init.
    CHECK_THROWS_AS(parse_run_config("razor.delta = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("razor.lambda_init = 0.0005\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("output_dir =\n"), ConfigError);
}
