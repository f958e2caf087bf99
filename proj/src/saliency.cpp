#include "razor/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>

#include "razor/errors.hpp"

namespace razor {

std::vector<ComponentGradients> component_gradients(const Checkpoint& c,
                                                    const std::vector<Pair>& retain_batch,
                                                    const std::vector<Pair>& forget_batch,
                                                    double tau_c) {
    LossValueGrads gf = forget_gradients(c, forget_batch);
    LossValueGrads gr = retain_gradients(c, retain_batch, tau_c);
    std::vector<ComponentGradients> out;
    for (const ComponentId& id : enumerate_components(c.config)) {
        ComponentGradients cg;
        cg.id = id;
        cg.slices = component_params(c.config, id);
        cg.g_f = flatten_component_grads(gf.grads, cg.slices);
        cg.g_r = flatten_component_grads(gr.grads, cg.slices);
        out.push_back(std::move(cg));
    }
    return out;
}

double gradient_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double sa = seq_dot(a, a);
    double sb = seq_dot(b, b);
    if (sa == 0.0 || sb == 0.0) return 0.0;
    // sqrt(sa * sb) keeps cos exactly 1 for exactly parallel vectors.
    double cosv = seq_dot(a, b) / std::sqrt(sa * sb);
    return std::clamp(cosv, -1.0, 1.0);
}

double score(const std::vector<double>& g_f, const std::vector<double>& g_r,
             const std::vector<double>& theta_l, double alpha, double eps,
             SaliencyVariant variant) {
    if (eps <= 0.0) throw ConfigError("saliency: eps must be > 0");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("saliency: alpha must be in [0,1]");
    double nf = l2_norm(g_f);
    if (nf == 0.0) return 0.0;
    double cosv = gradient_cosine(g_f, g_r);
    double base = 1.0 - cosv;
    double orth = base <= 0.0 ? 0.0 : std::pow(base, alpha);
    double nt = l2_norm(theta_l);
    double mag;
    if (variant == SaliencyVariant::eq2) {
        mag = nf / (nt + eps);
    } else {
        mag = nf * nf / (nt * nt + eps);
    }
    return mag * orth;
}

SaliencyTable build_table(const Checkpoint& c, const std::vector<ComponentGradients>& grads,
                          double alpha, double eps, SaliencyVariant variant) {
    SaliencyTable table;
    table.alpha = alpha;
    table.eps = eps;
    table.variant = variant;
    int idx = 0;
    for (const ComponentGradients& cg : grads) {
        SaliencyEntry e;
        e.id = cg.id;
        e.canonical_index = idx++;
        std::vector<double> theta = flatten_component(c, cg.slices);
        e.phi = score(cg.g_f, cg.g_r, theta, alpha, eps, variant);
        e.norm_gf = l2_norm(cg.g_f);
        e.norm_theta = l2_norm(theta);
        e.cos_fr = gradient_cosine(cg.g_f, cg.g_r);
        table.entries.push_back(e);
    }
    std::stable_sort(table.entries.begin(), table.entries.end(),
                     [](const SaliencyEntry& a, const SaliencyEntry& b) {
                         if (a.phi != b.phi) return a.phi > b.phi;
                         return a.canonical_index < b.canonical_index;
                     });
    return table;
}

std::vector<ComponentId> select(const SaliencyTable& table, double tau) {
    if (table.entries.empty()) throw InputError("select: empty saliency table");
    std::vector<ComponentId> k;
    for (const SaliencyEntry& e : table.entries)
        if (e.phi > tau) k.push_back(e.id);
    if (k.empty()) {
        // Fallback: canonical-order-first argmax.
        const SaliencyEntry* best = &table.entries[0];
        for (const SaliencyEntry& e : table.entries)
            if (e.phi > best->phi ||
                (e.phi == best->phi && e.canonical_index < best->canonical_index))
                best = &e;
        k.push_back(best->id);
    }
    return k;
}

double percentile_threshold(const SaliencyTable& table, double pct) {
    if (table.entries.empty()) throw InputError("percentile_threshold: empty table");
    std::vector<double> phis;
    for (const SaliencyEntry& e : table.entries) phis.push_back(e.phi);
    std::sort(phis.begin(), phis.end());
    double rank = pct / 100.0 * (static_cast<double>(phis.size()) - 1.0);
    size_t lo = static_cast<size_t>(std::floor(rank));
    size_t hi = static_cast<size_t>(std::ceil(rank));
    double frac = rank - static_cast<double>(lo);
    return phis[lo] * (1.0 - frac) + phis[hi] * frac;
}

uint64_t table_hash(const SaliencyTable& table) {
    // FNV-1a over the phi bit patterns in sorted order.
    uint64_t h = 14695981039346656037ull;
    auto mix = [&h](uint64_t bits) {
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    for (const SaliencyEntry& e : table.entries) {
        uint64_t bits;
        static_assert(sizeof(double) == sizeof(uint64_t));
        std::memcpy(&bits, &e.phi, sizeof(bits));
        mix(bits);
        mix(static_cast<uint64_t>(e.canonical_index));
    }
    return h;
}

void write_saliency_csv(const SaliencyTable& table, std::ostream& os) {
    os << "component,tower,block,kind,head,norm_gf,norm_theta,cos,phi,selected\n";
    for (const SaliencyEntry& e : table.entries) {
        os << e.id.str() << "," << (e.id.tower == Tower::image ? "image" : "text") << ","
           << e.id.block << "," << (e.id.kind == ComponentKind::msa_head ? "msa_head" : "mlp")
           << ",";
        if (e.id.kind == ComponentKind::msa_head)
            os << e.id.head;
        os << "," << e.norm_gf << "," << e.norm_theta << "," << e.cos_fr << "," << e.phi << ","
           << (e.selected ? 1 : 0) << "\n";
    }
}

}  // namespace razor
