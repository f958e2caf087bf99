#pragma once

#include <cstdint>
#include <vector>

#include "razor/model.hpp"
#include "razor/tensor.hpp"

namespace razor {

struct SplitSpec {
    int n_classes = 10;
    std::vector<int> forget_classes = {0};
    int pairs_per_class = 64;
    double noise_sigma = 0.1;
    uint64_t seed = 0;
    double val_fraction = 0.2;

    void validate() const;
};

struct Pair {
    Tensor image;   // [n_patches x patch_dim]
    Tensor tokens;  // [len], integer ids
    int class_id = 0;
};

struct Dataset {
    std::vector<Pair> forget;
    std::vector<Pair> retain;
    std::vector<Pair> val;  // mixed classes, labels kept
    std::vector<Tensor> class_prompts;  // prompt bank, one template per class
    std::vector<Tensor> prototypes;     // noiseless class patterns
    SplitSpec spec;

    std::vector<Pair> val_forget(const SplitSpec&) const;
    std::vector<Pair> val_retain(const SplitSpec&) const;
    bool is_forget_class(int class_id) const;
};

Dataset generate(const SplitSpec& spec, const ModelConfig& cfg);

}  // namespace razor
