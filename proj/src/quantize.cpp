#include "razor/quantize.hpp"

#include <cmath>

#include "razor/errors.hpp"

namespace razor {

void QuantSpec::validate() const {
    if (bits != 8 && bits != 4) throw ConfigError("quantize: bits must be 8 or 4");
}

namespace {

Tensor quantize_tensor(const Tensor& t, int q_max) {
    double mx = 0.0;
    for (double x : t.data) mx = std::max(mx, std::abs(x));
    if (mx == 0.0) return t;  // all-zero fixed point
    double s = mx / static_cast<double>(q_max);
    Tensor out = t;
    for (double& x : out.data) {
        // nearbyint rounds half to even under the default FP environment
        double q = std::nearbyint(x / s);
        x = q * s;
    }
    return out;
}

}  // namespace

Checkpoint quantize(const Checkpoint& c, const QuantSpec& spec) {
    spec.validate();
    Checkpoint out = c;
    out.meta.quant_bits = spec.bits;
    for (auto& [name, t] : out.params) {
        if (is_layer_norm_param(name)) continue;
        t = quantize_tensor(t, spec.q_max());
    }
    return out;
}

std::vector<QuantErrorRow> quant_error(const Checkpoint& c, const QuantSpec& spec) {
    spec.validate();
    std::vector<QuantErrorRow> rows;
    for (const auto& [name, shape] : param_spec(c.config)) {
        if (is_layer_norm_param(name)) continue;
        const Tensor& t = c.params.at(name);
        double mx = 0.0;
        for (double x : t.data) mx = std::max(mx, std::abs(x));
        QuantErrorRow row;
        row.name = name;
        row.scale = mx == 0.0 ? 0.0 : mx / static_cast<double>(spec.q_max());
        Tensor q = quantize_tensor(t, spec.q_max());
        double sq = 0.0;
        for (size_t i = 0; i < t.data.size(); ++i) {
            double e = std::abs(t.data[i] - q.data[i]);
            row.max_abs_error = std::max(row.max_abs_error, e);
            sq += e * e;
        }
        row.rms_error = std::sqrt(sq / static_cast<double>(t.data.size()));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace razor
