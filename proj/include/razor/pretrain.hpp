#pragma once

#include <cstdint>
#include <vector>

#include "razor/data.hpp"
#include "razor/model.hpp"

namespace razor {

struct PretrainConfig {
    int steps = 300;
    double step_size = 1e-2;
    int batch_size = 10;
    double momentum = 0.9;
    int warmup_steps = 50;
    double clip_norm = 1.0;  // global gradient-norm ceiling; 0 disables

    void validate() const;
};

// Full-model minibatch gradient descent on the symmetric contrastive loss over
// the union of forget and retain training pairs. Deterministic in (init, seed).
Checkpoint pretrain(const Checkpoint& init, const Dataset& ds, const PretrainConfig& pc,
                    double tau_c);

}  // namespace razor
