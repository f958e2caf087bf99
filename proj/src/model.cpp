#include "razor/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "razor/errors.hpp"
#include "razor/rng.hpp"

namespace razor {

void ModelConfig::validate() const {
    if (embed_dim < 1 || n_blocks < 1 || n_heads < 1 || mlp_hidden < 1 || vocab_size < 1 ||
        n_patches < 1 || patch_dim < 1 || max_text_len < 1)
        throw ConfigError("model config fields must be >= 1");
    if (embed_dim % n_heads != 0)
        throw ConfigError("embed_dim must be divisible by n_heads");
}

std::string ComponentId::str() const {
    std::ostringstream os;
    os << (tower == Tower::image ? "img" : "txt") << ".block" << block << ".";
    if (kind == ComponentKind::msa_head)
        os << "head" << head;
    else
        os << "mlp";
    return os.str();
}

namespace {

const char* tower_prefix(Tower t) { return t == Tower::image ? "img" : "txt"; }

std::string block_prefix(Tower t, int b) {
    return std::string(tower_prefix(t)) + ".block" + std::to_string(b) + ".";
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> param_spec(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::vector<int>>> out;
    int d = cfg.embed_dim;
    auto tower_blocks = [&](Tower t) {
        for (int b = 0; b < cfg.n_blocks; ++b) {
            std::string p = block_prefix(t, b);
            out.push_back({p + "ln1.gamma", {d}});
            out.push_back({p + "ln1.beta", {d}});
            out.push_back({p + "attn.wq", {d, d}});
            out.push_back({p + "attn.wk", {d, d}});
            out.push_back({p + "attn.wv", {d, d}});
            out.push_back({p + "attn.wo", {d, d}});
            out.push_back({p + "ln2.gamma", {d}});
            out.push_back({p + "ln2.beta", {d}});
            out.push_back({p + "mlp.w1", {cfg.mlp_hidden, d}});
            out.push_back({p + "mlp.b1", {cfg.mlp_hidden}});
            out.push_back({p + "mlp.w2", {d, cfg.mlp_hidden}});
            out.push_back({p + "mlp.b2", {d}});
        }
        std::string tp = tower_prefix(t);
        out.push_back({tp + ".ln_final.gamma", {d}});
        out.push_back({tp + ".ln_final.beta", {d}});
        out.push_back({tp + ".proj.w", {d, d}});
    };
    out.push_back({"img.patch_embed.w", {d, cfg.patch_dim}});
    out.push_back({"img.patch_embed.b", {d}});
    out.push_back({"img.pos", {cfg.n_patches, d}});
    tower_blocks(Tower::image);
    out.push_back({"txt.tok_embed", {cfg.vocab_size, d}});
    out.push_back({"txt.pos", {cfg.max_text_len, d}});
    tower_blocks(Tower::text);
    return out;
}

bool is_layer_norm_param(const std::string& name) {
    return name.find(".ln1.") != std::string::npos || name.find(".ln2.") != std::string::npos ||
           name.find(".ln_final.") != std::string::npos;
}

void Checkpoint::validate() const {
    config.validate();
    auto spec = param_spec(config);
    if (spec.size() != params.size())
        throw ContractError("checkpoint key count does not match config");
    for (const auto& [name, shape] : spec) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("checkpoint missing parameter " + name);
        if (it->second.shape != shape)
            throw ContractError("checkpoint parameter " + name + " has wrong shape");
        if (!it->second.all_finite())
            throw NumericError("checkpoint parameter " + name + " has non-finite entries");
    }
}

Checkpoint init_checkpoint(const ModelConfig& cfg, uint64_t seed) {
    Checkpoint c;
    c.config = cfg;
    c.meta.seed = seed;
    Rng rng = Rng::stream(seed, "init");
    for (const auto& [name, shape] : param_spec(cfg)) {
        Tensor t = Tensor::zeros(shape);
        if (is_layer_norm_param(name)) {
            double v = name.ends_with("gamma") ? 1.0 : 0.0;
            for (double& x : t.data) x = v;
        } else {
            for (double& x : t.data) x = 0.02 * rng.normal();
        }
        c.params.emplace(name, std::move(t));
    }
    return c;
}

ParamNodeMap register_params(Graph& g, const Checkpoint& c) {
    ParamNodeMap m;
    for (const auto& [name, shape] : param_spec(c.config))
        m.emplace(name, g.param(c.params.at(name)));
    return m;
}

ParamNodeMap register_params_frozen(Graph& g, const Checkpoint& c) {
    ParamNodeMap m;
    for (const auto& [name, shape] : param_spec(c.config))
        m.emplace(name, g.input(c.params.at(name)));
    return m;
}

namespace {

Graph::NodeId attention(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg,
                        const std::string& bp, Graph::NodeId x) {
    int dh = cfg.head_dim();
    Graph::NodeId q = g.matmul_nt(x, p.at(bp + "attn.wq"));
    Graph::NodeId k = g.matmul_nt(x, p.at(bp + "attn.wk"));
    Graph::NodeId v = g.matmul_nt(x, p.at(bp + "attn.wv"));
    std::vector<Graph::NodeId> heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < cfg.n_heads; ++h) {
        Graph::NodeId qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        Graph::NodeId kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        Graph::NodeId vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        Graph::NodeId scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt);
        Graph::NodeId attn = g.softmax_rows(scores);
        heads.push_back(g.matmul(attn, vh));
    }
    Graph::NodeId merged = g.concat_cols(heads);
    return g.matmul_nt(merged, p.at(bp + "attn.wo"));
}

Graph::NodeId mlp(Graph& g, const ParamNodeMap& p, const std::string& bp, Graph::NodeId x) {
    Graph::NodeId h = g.add_row_bias(g.matmul_nt(x, p.at(bp + "mlp.w1")), p.at(bp + "mlp.b1"));
    h = g.gelu(h);
    return g.add_row_bias(g.matmul_nt(h, p.at(bp + "mlp.w2")), p.at(bp + "mlp.b2"));
}

Graph::NodeId tower_body(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg, Tower t,
                         Graph::NodeId x) {
    // Pre-norm transformer blocks, mean pooling, projection, normalization.
    for (int b = 0; b < cfg.n_blocks; ++b) {
        std::string bp = block_prefix(t, b);
        Graph::NodeId a =
            attention(g, p, cfg, bp, g.layer_norm(x, p.at(bp + "ln1.gamma"), p.at(bp + "ln1.beta")));
        x = g.add(x, a);
        Graph::NodeId m =
            mlp(g, p, bp, g.layer_norm(x, p.at(bp + "ln2.gamma"), p.at(bp + "ln2.beta")));
        x = g.add(x, m);
    }
    std::string tp = tower_prefix(t);
    x = g.layer_norm(x, p.at(tp + std::string(".ln_final.gamma")), p.at(tp + std::string(".ln_final.beta")));
    Graph::NodeId pooled = g.mean_rows(x);
    Graph::NodeId z = g.matmul_nt(pooled, p.at(tp + std::string(".proj.w")));
    return g.l2_normalize(z);
}

}  // namespace

Graph::NodeId encode_image_node(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg,
                                const Tensor& image) {
    if (image.rank() != 2 || image.shape[0] != cfg.n_patches || image.shape[1] != cfg.patch_dim)
        throw DimensionError("encode_image: expected [" + std::to_string(cfg.n_patches) + " x " +
                             std::to_string(cfg.patch_dim) + "], got " + image.shape_str());
    Graph::NodeId xin = g.input(image);
    Graph::NodeId x = g.add_row_bias(g.matmul_nt(xin, p.at("img.patch_embed.w")),
                                     p.at("img.patch_embed.b"));
    x = g.add(x, p.at("img.pos"));
    return tower_body(g, p, cfg, Tower::image, x);
}

Graph::NodeId encode_text_node(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg,
                               const Tensor& tokens) {
    if (tokens.rank() != 1 || tokens.shape[0] < 1 || tokens.shape[0] > cfg.max_text_len)
        throw DimensionError("encode_text: token sequence length out of range");
    std::vector<int> ids;
    ids.reserve(tokens.data.size());
    for (double v : tokens.data) {
        int id = static_cast<int>(v);
        if (static_cast<double>(id) != v || id < 0 || id >= cfg.vocab_size)
            throw InputError("encode_text: token id out of vocabulary");
        ids.push_back(id);
    }
    int len = static_cast<int>(ids.size());
    Graph::NodeId x = g.gather_rows(p.at("txt.tok_embed"), ids);
    x = g.add(x, g.slice_rows(p.at("txt.pos"), 0, len));
    return tower_body(g, p, cfg, Tower::text, x);
}

Tensor encode_image(const Checkpoint& c, const Tensor& image) {
    Graph g;
    ParamNodeMap p = register_params_frozen(g, c);
    return g.value(encode_image_node(g, p, c.config, image));
}

Tensor encode_text(const Checkpoint& c, const Tensor& tokens) {
    Graph g;
    ParamNodeMap p = register_params_frozen(g, c);
    return g.value(encode_text_node(g, p, c.config, tokens));
}

FrozenEncoder::FrozenEncoder(const Checkpoint& c) : cfg_(c.config) {
    p_ = register_params_frozen(g_, c);
    base_ = g_.node_count();
}

Tensor FrozenEncoder::image(const Tensor& img) {
    try {
        Tensor out = g_.value(encode_image_node(g_, p_, cfg_, img));
        g_.truncate(base_);
        return out;
    } catch (...) {
        g_.truncate(base_);
        throw;
    }
}

Tensor FrozenEncoder::text(const Tensor& tokens) {
    try {
        Tensor out = g_.value(encode_text_node(g_, p_, cfg_, tokens));
        g_.truncate(base_);
        return out;
    } catch (...) {
        g_.truncate(base_);
        throw;
    }
}

// ---- Components ----

std::vector<ComponentId> enumerate_components(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ComponentId> out;
    for (Tower t : {Tower::image, Tower::text})
        for (int b = 0; b < cfg.n_blocks; ++b) {
            for (int h = 0; h < cfg.n_heads; ++h)
                out.push_back({t, b, ComponentKind::msa_head, h});
            out.push_back({t, b, ComponentKind::mlp, 0});
        }
    return out;
}

std::string ParamSlice::key() const {
    switch (axis) {
        case Axis::all:
            return tensor;
        case Axis::rows:
            return tensor + "#rows:" + std::to_string(begin) + "-" + std::to_string(end);
        case Axis::cols:
            return tensor + "#cols:" + std::to_string(begin) + "-" + std::to_string(end);
    }
    return tensor;
}

int64_t ParamSlice::count(const ModelConfig& cfg) const {
    auto spec = param_spec(cfg);
    for (const auto& [name, shape] : spec)
        if (name == tensor) {
            if (axis == Axis::all) return shape_size(shape);
            int64_t other = (axis == Axis::rows) ? shape[1] : shape[0];
            return static_cast<int64_t>(end - begin) * other;
        }
    throw ContractError("unknown tensor in slice: " + tensor);
}

std::vector<ParamSlice> component_params(const ModelConfig& cfg, const ComponentId& id) {
    cfg.validate();
    if (id.block < 0 || id.block >= cfg.n_blocks)
        throw InputError("component block index out of range");
    std::string bp = block_prefix(id.tower, id.block);
    std::vector<ParamSlice> out;
    if (id.kind == ComponentKind::msa_head) {
        if (id.head < 0 || id.head >= cfg.n_heads)
            throw InputError("component head index out of range");
        int dh = cfg.head_dim();
        int r0 = id.head * dh, r1 = (id.head + 1) * dh;
        out.push_back({bp + "attn.wq", ParamSlice::Axis::rows, r0, r1});
        out.push_back({bp + "attn.wk", ParamSlice::Axis::rows, r0, r1});
        out.push_back({bp + "attn.wv", ParamSlice::Axis::rows, r0, r1});
        out.push_back({bp + "attn.wo", ParamSlice::Axis::cols, r0, r1});
    } else {
        out.push_back({bp + "mlp.w1", ParamSlice::Axis::all, 0, 0});
        out.push_back({bp + "mlp.b1", ParamSlice::Axis::all, 0, 0});
        out.push_back({bp + "mlp.w2", ParamSlice::Axis::all, 0, 0});
        out.push_back({bp + "mlp.b2", ParamSlice::Axis::all, 0, 0});
    }
    return out;
}

std::vector<double> slice_extract(const Tensor& t, const ParamSlice& s) {
    if (s.axis == ParamSlice::Axis::all) return t.data;
    int rows = t.rows(), cols = t.cols();
    std::vector<double> out;
    if (s.axis == ParamSlice::Axis::rows) {
        out.assign(t.data.begin() + static_cast<size_t>(s.begin) * cols,
                   t.data.begin() + static_cast<size_t>(s.end) * cols);
    } else {
        out.reserve(static_cast<size_t>(rows) * (s.end - s.begin));
        for (int r = 0; r < rows; ++r)
            for (int c = s.begin; c < s.end; ++c)
                out.push_back(t.data[static_cast<size_t>(r) * cols + c]);
    }
    return out;
}

void slice_axpy(Tensor& t, const ParamSlice& s, const std::vector<double>& v, double scale) {
    if (s.axis == ParamSlice::Axis::all) {
        if (v.size() != t.data.size()) throw ContractError("slice_axpy: length mismatch");
        for (size_t i = 0; i < v.size(); ++i) t.data[i] += scale * v[i];
        return;
    }
    int rows = t.rows(), cols = t.cols();
    if (s.axis == ParamSlice::Axis::rows) {
        size_t expect = static_cast<size_t>(s.end - s.begin) * cols;
        if (v.size() != expect) throw ContractError("slice_axpy: length mismatch");
        size_t off = static_cast<size_t>(s.begin) * cols;
        for (size_t i = 0; i < v.size(); ++i) t.data[off + i] += scale * v[i];
    } else {
        int w = s.end - s.begin;
        size_t expect = static_cast<size_t>(rows) * w;
        if (v.size() != expect) throw ContractError("slice_axpy: length mismatch");
        size_t i = 0;
        for (int r = 0; r < rows; ++r)
            for (int c = s.begin; c < s.end; ++c)
                t.data[static_cast<size_t>(r) * cols + c] += scale * v[i++];
    }
}

std::vector<double> flatten_component(const Checkpoint& c, const std::vector<ParamSlice>& slices) {
    std::vector<double> out;
    for (const ParamSlice& s : slices) {
        auto v = slice_extract(c.params.at(s.tensor), s);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

std::vector<double> flatten_component_grads(const std::map<std::string, Tensor>& grads,
                                            const std::vector<ParamSlice>& slices) {
    std::vector<double> out;
    for (const ParamSlice& s : slices) {
        auto it = grads.find(s.tensor);
        if (it == grads.end()) throw ContractError("missing gradient for " + s.tensor);
        auto v = slice_extract(it->second, s);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

Checkpoint apply_delta(const Checkpoint& c, const ComponentId& id, const GradMap& delta) {
    auto slices = component_params(c.config, id);
    std::map<std::string, const ParamSlice*> by_key;
    for (const ParamSlice& s : slices) by_key.emplace(s.key(), &s);
    Checkpoint out = c;
    for (const auto& [key, vals] : delta) {
        auto it = by_key.find(key);
        if (it == by_key.end())
            throw ContractError("apply_delta: key outside component: " + key);
        slice_axpy(out.params.at(it->second->tensor), *it->second, vals, 1.0);
    }
    return out;
}

Checkpoint apply_flat_delta(const Checkpoint& c, const ComponentId& id,
                            const std::vector<double>& delta, double scale) {
    auto slices = component_params(c.config, id);
    Checkpoint out = c;
    size_t off = 0;
    for (const ParamSlice& s : slices) {
        size_t n = static_cast<size_t>(s.count(c.config));
        if (off + n > delta.size()) throw ContractError("apply_flat_delta: delta too short");
        std::vector<double> part(delta.begin() + off, delta.begin() + off + n);
        slice_axpy(out.params.at(s.tensor), s, part, scale);
        off += n;
    }
    if (off != delta.size()) throw ContractError("apply_flat_delta: delta length mismatch");
    return out;
}

GradMap grad_map_from_flat(const ModelConfig& cfg, const ComponentId& id,
                           const std::vector<double>& flat) {
    GradMap m;
    size_t off = 0;
    for (const ParamSlice& s : component_params(cfg, id)) {
        size_t n = static_cast<size_t>(s.count(cfg));
        if (off + n > flat.size()) throw ContractError("grad_map_from_flat: vector too short");
        m.emplace(s.key(), std::vector<double>(flat.begin() + off, flat.begin() + off + n));
        off += n;
    }
    if (off != flat.size()) throw ContractError("grad_map_from_flat: vector length mismatch");
    return m;
}

}  // namespace razor
