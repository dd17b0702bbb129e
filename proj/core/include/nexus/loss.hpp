#pragma once

#include <cstddef>
#include <vector>

#include "nexus/tensor.hpp"

namespace nexus {

/// Per-class weights for the negative-log-likelihood loss. An empty
/// vector means all classes weigh 1.
struct LossConfig {
    std::vector<double> class_weights;

    double weight(std::size_t label) const {
        if (class_weights.empty()) return 1.0;
        return class_weights.at(label);
    }
};

struct LossResult {
    double loss = 0.0;
    /// Gradient of the loss w.r.t. the softmax logits (fused softmax+NLL):
    /// weight * (p - onehot) / B per sample.
    Tensor grad_logits;
    /// Number of target probabilities clamped at 1e-12 before the log.
    std::size_t clamped = 0;
};

/// Weighted mean NLL over a mini-batch: -(1/B) sum_i w(y_i) log P_i(y_i).
/// probs is [B, K] (or [K] for a single sample) with rows summing to 1;
/// targets holds B labels in [0, K).
LossResult nll_loss(const Tensor& probs, const std::vector<int>& targets,
                    const LossConfig& cfg = {});

} // namespace nexus
