#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nexus/rng.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

enum class Mode { train, infer };

/// Handle to one parameter (or state) tensor of a layer.
/// grad is null for non-trainable state such as batch-norm running stats;
/// those are checkpointed but never touched by the optimizer.
struct ParamRef {
    std::string name;
    Tensor* value;
    Tensor* grad;
    bool trainable;
};

/// A differentiable unit. Activations flow as [batch, channels, H, W]
/// (or [batch, features] past the flatten); rank-3/rank-1 inputs are
/// accepted as an implicit batch of one. forward caches whatever the
/// matching backward needs; backward before forward is a StateError.
class Layer {
public:
    virtual ~Layer() = default;

    /// Stable one-line description (kernel sizes, map counts); feeds the
    /// checkpoint digest and dimension-contract reports.
    virtual std::string describe() const = 0;

    /// Shape propagation without data; throws ShapeError on mismatch.
    virtual Shape out_shape(const std::vector<Shape>& in) const = 0;

    virtual Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) = 0;

    /// Gradients w.r.t. each forward input, in order. Parameter gradients
    /// are accumulated into the tensors exposed via collect_params.
    virtual std::vector<Tensor> backward(const Tensor& grad_out) = 0;

    virtual void collect_params(std::vector<ParamRef>&) {}
};

/// Valid cross-correlation with per-map bias: out = b_a + sum_r K_ar * I_r.
/// Kernels are [outMaps, inPlanes, k, k]; input [B, inPlanes, S, S] shrinks
/// to [B, outMaps, S-k+1, S-k+1].
class ConvLayer : public Layer {
public:
    ConvLayer(std::size_t in_planes, std::size_t out_maps, std::size_t kernel,
              std::string name = "conv");

    /// Zero-mean Gaussian kernels with std = sqrt(2 / fan_in), biases 0.
    void init_he(Rng& rng);
    void init_gaussian(Rng& rng, double std);

    Tensor& kernels() { return kernels_; }
    const Tensor& kernels() const { return kernels_; }
    Tensor& biases() { return biases_; }
    std::size_t kernel() const { return kernel_; }
    std::size_t in_planes() const { return in_planes_; }
    std::size_t out_maps() const { return out_maps_; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;
    void collect_params(std::vector<ParamRef>& out) override;

    const Tensor& kernel_grads() const { return grad_kernels_; }
    const Tensor& bias_grads() const { return grad_biases_; }

private:
    std::size_t in_planes_, out_maps_, kernel_;
    std::string name_;
    Tensor kernels_, biases_;
    Tensor grad_kernels_, grad_biases_;
    Tensor cached_in_;
    bool has_cache_ = false;
    bool cached_rank3_ = false;
};

/// Max pooling over p x p windows at stride s; output extent
/// floor((S - p) / s) + 1. Argmax positions are cached so backward routes
/// the gradient to the max cell only, ties to the first in row-major order.
class PoolLayer : public Layer {
public:
    PoolLayer(std::size_t pool, std::size_t stride, std::string name = "maxpool");

    std::size_t pool() const { return pool_; }
    std::size_t stride() const { return stride_; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::size_t pool_, stride_;
    std::string name_;
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
    bool has_cache_ = false;
    bool cached_rank3_ = false;
};

/// f(z) = max(0, z); the subgradient at 0 is taken as 0.
class ReluLayer : public Layer {
public:
    explicit ReluLayer(std::string name = "relu") : name_(std::move(name)) {}

    std::string describe() const override { return "relu"; }
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::string name_;
    Tensor cached_in_;
    bool has_cache_ = false;
};

/// Max over groups of k adjacent channels: [B, C, H, W] -> [B, C/k, H, W].
class MaxoutLayer : public Layer {
public:
    explicit MaxoutLayer(std::size_t group, std::string name = "maxout");

    std::size_t group() const { return group_; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::size_t group_;
    std::string name_;
    Shape in_shape_;
    std::vector<std::size_t> arg_channel_;
    bool has_cache_ = false;
};

/// Per-channel standardization by batch statistics (train) or running
/// stats (infer), then learned scale/shift. Requires batch >= 2 in train
/// mode. Running stats update: running = momentum*running + (1-m)*batch.
class BatchNormLayer : public Layer {
public:
    BatchNormLayer(std::size_t channels, double eps = 1e-9, double momentum = 0.9,
                   std::string name = "batchnorm");

    Tensor& scale() { return scale_; }
    Tensor& shift() { return shift_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }
    double eps() const { return eps_; }

    /// When frozen, train-mode forward still normalizes by batch
    /// statistics but leaves the running stats untouched (phase-2 freeze).
    void set_freeze_stats(bool frozen) { freeze_stats_ = frozen; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;
    void collect_params(std::vector<ParamRef>& out) override;

private:
    std::size_t channels_;
    double eps_, momentum_;
    bool freeze_stats_ = false;
    std::string name_;
    Tensor scale_, shift_, running_mean_, running_var_;
    Tensor grad_scale_, grad_shift_;
    Tensor cached_xhat_;
    std::vector<double> cached_inv_std_;
    bool has_cache_ = false;
};

/// Inverted dropout: train mode keeps each element with probability
/// keep_prob and rescales by 1/keep_prob so inference is the identity.
class DropoutLayer : public Layer {
public:
    explicit DropoutLayer(double keep_prob, std::string name = "dropout");

    double keep_prob() const { return keep_; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    double keep_;
    std::string name_;
    Tensor mask_; // holds 1/keep at kept positions, 0 elsewhere
    bool has_cache_ = false;
};

/// Affine map on flattened features: out = in.W + bias, W is [features, units].
class DenseLayer : public Layer {
public:
    DenseLayer(std::size_t features, std::size_t units, std::string name = "dense");

    void init_he(Rng& rng);
    void init_gaussian(Rng& rng, double std);

    Tensor& weights() { return weights_; }
    Tensor& biases() { return biases_; }
    std::size_t features() const { return features_; }
    std::size_t units() const { return units_; }

    std::string describe() const override;
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;
    void collect_params(std::vector<ParamRef>& out) override;

    const Tensor& weight_grads() const { return grad_weights_; }
    const Tensor& bias_grads() const { return grad_biases_; }

private:
    std::size_t features_, units_;
    std::string name_;
    Tensor weights_, biases_;
    Tensor grad_weights_, grad_biases_;
    Tensor cached_in_;
    bool has_cache_ = false;
    bool cached_rank1_ = false;
};

/// Row softmax on [B, K], stabilized by max subtraction. backward applies
/// the exact softmax Jacobian (training normally bypasses it through the
/// fused softmax+NLL gradient instead).
class SoftmaxLayer : public Layer {
public:
    explicit SoftmaxLayer(std::string name = "softmax") : name_(std::move(name)) {}

    std::string describe() const override { return "softmax"; }
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::string name_;
    Tensor cached_out_;
    bool has_cache_ = false;
    bool cached_rank1_ = false;
};

/// Softmax across channels independently at every spatial position of a
/// [B, C, H, W] map, turning C maps into a per-position distribution.
class SpatialSoftmaxLayer : public Layer {
public:
    explicit SpatialSoftmaxLayer(std::string name = "spatial_softmax")
        : name_(std::move(name)) {}

    std::string describe() const override { return "spatial_softmax"; }
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::string name_;
    Tensor cached_out_;
    bool has_cache_ = false;
};

/// Stacks inputs along the channel axis; spatial extents must agree.
class ConcatLayer : public Layer {
public:
    explicit ConcatLayer(std::string name = "concat") : name_(std::move(name)) {}

    std::string describe() const override { return "concat"; }
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    std::string name_;
    std::vector<std::size_t> channel_counts_;
    Shape out_shape_;
    bool has_cache_ = false;
};

/// [B, C, H, W] -> [B, C*H*W].
class FlattenLayer : public Layer {
public:
    explicit FlattenLayer(std::string = "flatten") {}

    std::string describe() const override { return "flatten"; }
    Shape out_shape(const std::vector<Shape>& in) const override;
    Tensor forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) override;
    std::vector<Tensor> backward(const Tensor& grad_out) override;

private:
    Shape in_shape_;
    bool has_cache_ = false;
};

// Single-instance convenience wrappers matching the layer contracts on
// unbatched tensors.

Tensor conv_forward(ConvLayer& layer, const Tensor& input);
Tensor maxpool_forward(PoolLayer& layer, const Tensor& input);
Tensor relu(const Tensor& input);
Tensor maxout(const Tensor& input, std::size_t group);
Tensor softmax(const Tensor& logits);

/// Channel concatenation of two [C,H,W] or [B,C,H,W] tensors, a first.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits along channels after the first c1 channels; inverse of concat.
std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t c1);

} // namespace nexus
