#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "nexus/layers.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

enum class SgdMode { plain, classical, nesterov };

/// Geometric learning-rate decay from lr_start at epoch 0 to lr_end at
/// epoch span-1, constant at lr_end afterwards.
struct LrSchedule {
    double lr_start = 0.01;
    double lr_end = 1e-6;
    std::size_t span = 25;

    double at(std::size_t epoch) const;
};

/// Stochastic gradient descent with optional classical or Nesterov momentum.
///
/// classical:  V <- mu*V - lr*g(theta);        theta <- theta + V
/// nesterov:   V <- mu*V - lr*g(theta + mu*V); theta <- theta + V
///
/// Nesterov needs the gradient at the look-ahead point, so a step is a
/// two-call protocol: begin_step() shifts the parameters to
/// theta + mu*V, the caller evaluates gradients there, and apply_step()
/// installs the new velocity and final parameters. For plain/classical
/// modes begin_step is a no-op. Pass the same parameter list to both
/// calls; frozen parameters are simply left out of the list and are
/// never read or moved.
class Sgd {
public:
    explicit Sgd(SgdMode mode = SgdMode::nesterov, double momentum = 0.9);

    SgdMode mode() const { return mode_; }
    double momentum() const { return mu_; }

    void begin_step(const std::vector<ParamRef>& params);
    void apply_step(const std::vector<ParamRef>& params, double lr);

    /// Velocity tensor associated with a parameter (zeros until first step).
    const Tensor& velocity(const Tensor* param) const;

private:
    Tensor& velocity_for(const ParamRef& ref);

    SgdMode mode_;
    double mu_;
    bool look_ahead_applied_ = false;
    std::unordered_map<const Tensor*, Tensor> velocity_;
};

} // namespace nexus
