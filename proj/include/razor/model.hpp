#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "razor/graph.hpp"
#include "razor/tensor.hpp"

namespace razor {

struct ModelConfig {
    int embed_dim = 32;
    int n_blocks = 4;
    int n_heads = 4;
    int mlp_hidden = 64;
    int vocab_size = 64;
    int n_patches = 16;
    int patch_dim = 16;
    int max_text_len = 8;

    void validate() const;
    int head_dim() const { return embed_dim / n_heads; }
    bool operator==(const ModelConfig&) const = default;
};

enum class Tower { image, text };
enum class ComponentKind { msa_head, mlp };

struct ComponentId {
    Tower tower = Tower::image;
    int block = 0;
    ComponentKind kind = ComponentKind::msa_head;
    int head = 0;  // meaningful iff kind == msa_head

    std::string str() const;
    bool operator==(const ComponentId&) const = default;
};

struct CheckpointMeta {
    uint64_t seed = 0;
    int step = 0;
    int quant_bits = 0;  // 0 = full precision
};

/// Immutable named-tensor snapshot of all model parameters. Mutation is
/// expressed only by functions returning a new Checkpoint.
struct Checkpoint {
    ModelConfig config;
    CheckpointMeta meta;
    std::map<std::string, Tensor> params;

    void validate() const;
};

// Ordered (name, shape) list implied by a config; the single source of truth
// for checkpoint key sets, initialization order and persistence order.
std::vector<std::pair<std::string, std::vector<int>>> param_spec(const ModelConfig& cfg);

Checkpoint init_checkpoint(const ModelConfig& cfg, uint64_t seed);

bool is_layer_norm_param(const std::string& name);

// ---- Forward passes ----

using ParamNodeMap = std::map<std::string, Graph::NodeId>;

// Registers every parameter as a gradient-tracked leaf.
ParamNodeMap register_params(Graph& g, const Checkpoint& c);
// Registers parameters as constants (forward-only evaluation).
ParamNodeMap register_params_frozen(Graph& g, const Checkpoint& c);

Graph::NodeId encode_image_node(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg,
                                const Tensor& image);
Graph::NodeId encode_text_node(Graph& g, const ParamNodeMap& p, const ModelConfig& cfg,
                               const Tensor& tokens);

// Forward-only conveniences; return unit-norm [1 x d] embeddings.
Tensor encode_image(const Checkpoint& c, const Tensor& image);
Tensor encode_text(const Checkpoint& c, const Tensor& tokens);

/// Forward-only encoder that registers the parameters once and rolls the tape
/// back after every encode; use for evaluation loops over many inputs.
class FrozenEncoder {
  public:
    explicit FrozenEncoder(const Checkpoint& c);

    Tensor image(const Tensor& img);
    Tensor text(const Tensor& tokens);

  private:
    ModelConfig cfg_;
    Graph g_;
    ParamNodeMap p_;
    size_t base_ = 0;
};

// ---- Editable components ----

struct ParamSlice {
    enum class Axis { all, rows, cols };
    std::string tensor;
    Axis axis = Axis::all;
    int begin = 0;
    int end = 0;  // meaningful iff axis != all

    std::string key() const;
    int64_t count(const ModelConfig& cfg) const;
};

std::vector<ComponentId> enumerate_components(const ModelConfig& cfg);
std::vector<ParamSlice> component_params(const ModelConfig& cfg, const ComponentId& id);

// Flat gradient / delta storage keyed by ParamSlice::key().
using GradMap = std::map<std::string, std::vector<double>>;

std::vector<double> slice_extract(const Tensor& t, const ParamSlice& s);
void slice_axpy(Tensor& t, const ParamSlice& s, const std::vector<double>& v, double scale);

// Concatenation of the component's parameter values in canonical slice order.
std::vector<double> flatten_component(const Checkpoint& c, const std::vector<ParamSlice>& slices);
// Slices a full-model gradient map (name -> Tensor-shaped grad) per component.
std::vector<double> flatten_component_grads(const std::map<std::string, Tensor>& grads,
                                            const std::vector<ParamSlice>& slices);

// theta_l <- theta_l + delta, only inside the component; everything else
// bit-identical.
Checkpoint apply_delta(const Checkpoint& c, const ComponentId& id, const GradMap& delta);
// Same, with the delta given as one flat vector in canonical slice order.
Checkpoint apply_flat_delta(const Checkpoint& c, const ComponentId& id,
                            const std::vector<double>& delta, double scale);

GradMap grad_map_from_flat(const ModelConfig& cfg, const ComponentId& id,
                           const std::vector<double>& flat);

}  // namespace razor
