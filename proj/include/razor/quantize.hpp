#pragma once

#include <string>
#include <vector>

#include "razor/model.hpp"

namespace razor {

// Symmetric per-tensor weight quantization: s = max|w| / (2^(bits-1) - 1),
// round-half-to-even, dequantized back to doubles. Layer-norm scale/bias stay
// full precision.
struct QuantSpec {
    int bits = 8;  // 8 or 4

    void validate() const;
    int q_max() const { return (1 << (bits - 1)) - 1; }
};

Checkpoint quantize(const Checkpoint& c, const QuantSpec& spec);

struct QuantErrorRow {
    std::string name;
    double scale = 0.0;
    double max_abs_error = 0.0;
    double rms_error = 0.0;
};

std::vector<QuantErrorRow> quant_error(const Checkpoint& c, const QuantSpec& spec);

}  // namespace razor
