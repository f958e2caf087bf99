#pragma once

#include <filesystem>
#include <string>

#include "razor/data.hpp"
#include "razor/engine.hpp"
#include "razor/model.hpp"
#include "razor/pretrain.hpp"

namespace razor {

struct RunConfig {
    ModelConfig model;
    SplitSpec split;
    RazorConfig razor;
    PretrainConfig pretrain;
    uint64_t seed = 0;
    std::string output_dir = "out";

    void validate() const;
};

// Flat "key = value" text with '#' comments and dotted keys
// (e.g. "model.embed_dim = 32", "razor.lambda_init = 1.0",
// "data.forget_classes = 0,3"). Unknown keys are rejected.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical round-trippable rendering of a RunConfig.
std::string render_run_config(const RunConfig& cfg);

}  // namespace razor
