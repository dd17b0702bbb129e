#include "nexus/loss.hpp"

#include <cmath>

#include "nexus/error.hpp"

namespace nexus {

LossResult nll_loss(const Tensor& probs, const std::vector<int>& targets,
                    const LossConfig& cfg) {
    const bool unbatched = probs.rank() == 1;
    const Tensor p = unbatched ? probs.reshaped({1, probs.extent(0)}) : probs;
    if (p.rank() != 2) throw ShapeError("nll_loss: probs must be [B,K] or [K]");
    const std::size_t B = p.extent(0), K = p.extent(1);
    if (targets.size() != B)
        throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for batch " +
                         std::to_string(B));
    if (!cfg.class_weights.empty() && cfg.class_weights.size() != K)
        throw ParamError("nll_loss: weight table size does not match class count");
    for (double w : cfg.class_weights)
        if (!(w > 0.0)) throw ParamError("nll_loss: class weights must be positive");

    constexpr double kClamp = 1e-12;
    LossResult res;
    res.grad_logits = Tensor({B, K});
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = p.data() + b * K;
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) sum += row[k];
        if (!std::isfinite(sum))
            throw NumericError("nll_loss: non-finite probabilities in row " + std::to_string(b));
        if (std::abs(sum - 1.0) > 1e-6)
            throw ParamError("nll_loss: probability row " + std::to_string(b) +
                             " sums to " + std::to_string(sum));
        const int t = targets[b];
        if (t < 0 || static_cast<std::size_t>(t) >= K)
            throw ParamError("nll_loss: target " + std::to_string(t) + " outside [0, " +
                             std::to_string(K) + ")");
        const double w = cfg.weight(static_cast<std::size_t>(t));
        double pt = row[static_cast<std::size_t>(t)];
        if (pt < kClamp) {
            pt = kClamp;
            ++res.clamped;
        }
        total += -w * std::log(pt);
        double* grow = res.grad_logits.data() + b * K;
        const double scale = w / static_cast<double>(B);
        for (std::size_t k = 0; k < K; ++k)
            grow[k] = scale * (row[k] - (static_cast<int>(k) == t ? 1.0 : 0.0));
    }
    res.loss = total / static_cast<double>(B);
    if (unbatched) res.grad_logits = res.grad_logits.reshaped({K});
    return res;
}

} // namespace nexus
