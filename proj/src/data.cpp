#include "razor/data.hpp"

#include <algorithm>
#include <cmath>

#include "razor/errors.hpp"
#include "razor/rng.hpp"

namespace razor {

void SplitSpec::validate() const {
    if (n_classes < 2) throw ConfigError("data: need at least 2 classes");
    if (pairs_per_class < 1) throw ConfigError("data: pairs_per_class must be >= 1");
    if (noise_sigma < 0) throw ConfigError("data: noise_sigma must be >= 0");
    if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("data: val_fraction in [0,1)");
    if (forget_classes.empty()) throw ConfigError("data: forget_classes must be nonempty");
    if (static_cast<int>(forget_classes.size()) >= n_classes)
        throw ConfigError("data: forget_classes must be a proper subset of all classes");
    for (int c : forget_classes)
        if (c < 0 || c >= n_classes) throw ConfigError("data: forget class id out of range");
}

bool Dataset::is_forget_class(int class_id) const {
    return std::find(spec.forget_classes.begin(), spec.forget_classes.end(), class_id) !=
           spec.forget_classes.end();
}

std::vector<Pair> Dataset::val_forget(const SplitSpec&) const {
    std::vector<Pair> out;
    for (const Pair& p : val)
        if (is_forget_class(p.class_id)) out.push_back(p);
    return out;
}

std::vector<Pair> Dataset::val_retain(const SplitSpec&) const {
    std::vector<Pair> out;
    for (const Pair& p : val)
        if (!is_forget_class(p.class_id)) out.push_back(p);
    return out;
}

namespace {

// Classes come in look-alike pairs: classes 2k and 2k+1 blend a shared pair
// component with their own private component, giving cosine kPairOverlap
// inside a pair and exact orthogonality across pairs (an odd trailing class
// stays fully private). Mimics fine-grained sibling categories in natural
// data; nearest-prototype classification is still essentially noise-free at
// the default noise level. Each prototype has unit RMS.
constexpr double kPairOverlap = 0.85;

std::vector<Tensor> make_prototypes(const SplitSpec& spec, const ModelConfig& cfg, Rng& rng) {
    int dim = cfg.n_patches * cfg.patch_dim;
    int n_pairs = spec.n_classes / 2;
    if (spec.n_classes + n_pairs > dim)
        throw ConfigError("data: more classes than prototype dimensions");
    std::vector<std::vector<double>> basis;  // [0..n) private, [n..) per-pair shared
    for (int c = 0; c < spec.n_classes + n_pairs; ++c) {
        std::vector<double> v(static_cast<size_t>(dim));
        for (;;) {
            for (double& x : v) x = rng.normal();
            for (const auto& b : basis) {
                double proj = seq_dot(v, b);
                for (int i = 0; i < dim; ++i) v[i] -= proj * b[i];
            }
            if (l2_norm(v) > 1e-6) break;
        }
        double n = l2_norm(v);
        for (double& x : v) x /= n;
        basis.push_back(std::move(v));
    }
    double shared_w = std::sqrt(kPairOverlap);
    double private_w = std::sqrt(1.0 - kPairOverlap);
    double rms_scale = std::sqrt(static_cast<double>(dim));
    std::vector<Tensor> out;
    for (int c = 0; c < spec.n_classes; ++c) {
        std::vector<double> scaled(static_cast<size_t>(dim));
        bool paired = c / 2 < n_pairs;
        for (int i = 0; i < dim; ++i) {
            double x = paired ? shared_w * basis[spec.n_classes + c / 2][i] + private_w * basis[c][i]
                              : basis[c][i];
            scaled[i] = rms_scale * x;
        }
        out.push_back(Tensor({cfg.n_patches, cfg.patch_dim}, std::move(scaled)));
    }
    return out;
}

Tensor make_prompt(int class_id, const ModelConfig& cfg) {
    // [class_token, style_token, style_token]
    // Class tokens grow from the bottom of the vocabulary, style tokens from
    // the top. Sibling classes (2k, 2k+1) share a style token, mirroring the
    // shared pair component of their image prototypes: siblings look alike and
    // are captioned alike, so only the class token separates their captions.
    // The style token is repeated so that most of the caption describes the
    // shared style and the class token carries only the fine-grained residual.
    // No filler tokens shared across pairs: caption vocabularies of different
    // pairs are disjoint, so editing one pair's caption processing has little
    // lexical reason to disturb the others.
    int class_token = 3 + class_id;
    int style_token = cfg.vocab_size - 1 - class_id / 2;
    if (class_token >= style_token)
        throw ConfigError("data: vocab too small for class and style tokens");
    return Tensor::vec({static_cast<double>(class_token), static_cast<double>(style_token),
                        static_cast<double>(style_token)});
}

}  // namespace

Dataset generate(const SplitSpec& spec, const ModelConfig& cfg) {
    spec.validate();
    cfg.validate();
    Dataset ds;
    ds.spec = spec;

    Rng proto_rng = Rng::stream(spec.seed, "data");
    ds.prototypes = make_prototypes(spec, cfg, proto_rng);
    for (int c = 0; c < spec.n_classes; ++c) ds.class_prompts.push_back(make_prompt(c, cfg));

    int n_train = static_cast<int>(std::floor(spec.pairs_per_class * (1.0 - spec.val_fraction)));
    Rng noise = Rng::stream(spec.seed, "noise");
    for (int c = 0; c < spec.n_classes; ++c) {
        bool forget = std::find(spec.forget_classes.begin(), spec.forget_classes.end(), c) !=
                      spec.forget_classes.end();
        for (int i = 0; i < spec.pairs_per_class; ++i) {
            Pair p;
            p.class_id = c;
            p.image = ds.prototypes[c];
            for (double& x : p.image.data) x += spec.noise_sigma * noise.normal();
            p.tokens = ds.class_prompts[c];
            if (i < n_train) {
                (forget ? ds.forget : ds.retain).push_back(std::move(p));
            } else {
                ds.val.push_back(std::move(p));
            }
        }
    }
    return ds;
}

}  // namespace razor
