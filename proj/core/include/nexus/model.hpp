#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "nexus/layers.hpp"
#include "nexus/rng.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

enum class Arch { LN, TPN, TLinear, IN, ILinear };

Arch arch_from_string(const std::string& name);
std::string arch_name(Arch arch);
std::vector<Arch> all_archs();

/// Build-time knobs for the reference architectures. Defaults reproduce
/// the reference layer tables; width_scale < 1 shrinks internal map
/// counts for fast tests (the class count and patch geometry stay fixed).
struct ModelConfig {
    double width_scale = 1.0;
    double drop_first = 0.5;  // fraction dropped in first-half conv blocks
    double drop_second = 0.4; // fraction dropped in second-half conv blocks
    double drop_final = 0.3;  // fraction dropped on the flattened features
    double bn_eps = 1e-9;
    double bn_momentum = 0.9;
    double init_std = 0.0; // 0: He scaling sqrt(2/fan_in); otherwise fixed std
    /// The two classifier layers (1x1 projection, output dense) start
    /// small so a fresh model emits near-uniform probabilities; 0 falls
    /// back to the global rule.
    double classifier_std = 0.003;
    double output_bias = 0.2; // bias fill of the softmax-producing dense layer
};

/// One registered parameter or state tensor, in checkpoint order.
struct RegistryEntry {
    ParamRef ref;
    bool output_layer; // true for the final dense layer (phase-2 trainable set)
};

/// Resolved per-edge shapes of a model graph.
struct DimContract {
    struct Edge {
        std::string node;
        std::string layer;
        Shape out; // without the batch dimension
    };
    std::vector<Edge> edges;
    std::size_t flat_features = 0; // features entering the final dense layer

    std::string report() const;
};

/// A directed acyclic graph of layers with the two-patch input contract:
/// first half 4x33x33 -> 5x15x15 (per-position class probabilities),
/// concatenated with the 4x15x15 small patch into 9 planes, second half
/// 9x15x15 -> 5 class probabilities.
class NexusModel {
public:
    NexusModel(std::string arch, ModelConfig cfg);

    NexusModel(NexusModel&&) = default;
    NexusModel& operator=(NexusModel&&) = default;

    // -- graph construction ------------------------------------------------
    int add_input(std::string name, Shape shape);
    int add_layer(std::unique_ptr<Layer> layer, std::vector<int> inputs, std::string name);
    void mark_first_half_output(int node) { fh_out_node_ = node; }
    void mark_concat(int node) { concat_node_ = node; }
    void mark_flatten(int node) { flatten_node_ = node; }
    void mark_output_dense(int node) { dense_node_ = node; }
    void mark_output(int node) { output_node_ = node; }
    /// Freezes the registry; call once after the graph is complete.
    void finalize();

    // -- contracts ---------------------------------------------------------
    const std::string& arch() const { return arch_; }
    const ModelConfig& config() const { return config_; }

    /// Propagates shapes through every edge and verifies the two-half
    /// dimensional contract. Throws ShapeError with the offending edge.
    DimContract check_dims() const;

    std::uint64_t digest() const;

    // -- execution ---------------------------------------------------------
    /// big is [B,4,33,33], small [B,4,15,15]; returns [B,5] probabilities.
    Tensor forward_batch(const Tensor& big, const Tensor& small, Mode mode, Rng* rng = nullptr);

    /// Gradient w.r.t. the final logits (fused softmax+NLL convention);
    /// fills every layer's parameter gradients.
    void backward(const Tensor& grad_logits);

    /// Cheap phase-2 path: only the output dense layer's gradients are
    /// computed (valid after any forward, including infer mode).
    void backward_output_only(const Tensor& grad_logits);

    std::vector<RegistryEntry>& registry() { return registry_; }
    const std::vector<RegistryEntry>& registry() const { return registry_; }

    /// Stops batch-norm running-stat updates (train-mode normalization
    /// still uses batch statistics). Used by phase-2 training so frozen
    /// state stays bit-identical.
    void set_bn_stats_frozen(bool frozen);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::string name;
        std::unique_ptr<Layer> layer; // null for input nodes
        std::vector<int> inputs;
        Shape input_shape; // for input nodes, without batch
    };

    void require_finalized() const;

    std::string arch_;
    ModelConfig config_;
    std::vector<Node> nodes_;
    std::vector<BatchNormLayer*> bn_layers_;
    int input_big_ = -1, input_small_ = -1;
    int fh_out_node_ = -1, concat_node_ = -1, flatten_node_ = -1;
    int dense_node_ = -1, output_node_ = -1;
    bool finalized_ = false;
    std::vector<RegistryEntry> registry_;
};

/// Assembles one of the five reference architectures; the result passes
/// check_dims. Weights drawn from rng (He scaling unless cfg.init_std set),
/// biases zero except the output dense bias at cfg.output_bias.
NexusModel build_model(Arch arch, const ModelConfig& cfg, Rng& rng);

/// Probability vector [5] for one co-centric patch pair.
Tensor forward(NexusModel& model, const Tensor& patch33, const Tensor& patch15,
               Mode mode = Mode::infer, Rng* rng = nullptr);

// Checkpoints: magic "NXCK", u32 version, model name (u32 length + bytes),
// u64 config digest, then every registry tensor in order (NXT1 format).
void save_checkpoint(const NexusModel& model, const std::string& path);
/// Loads into an already-built model; arch name and digest must match.
void load_checkpoint(NexusModel& model, const std::string& path);
/// Reads just the architecture name from a checkpoint header.
std::string checkpoint_arch(const std::string& path);

void save_checkpoint(const NexusModel& model, std::ostream& out);
void load_checkpoint(NexusModel& model, std::istream& in);

} // namespace nexus
