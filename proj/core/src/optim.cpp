#include "nexus/optim.hpp"

#include <cmath>

#include "nexus/error.hpp"

namespace nexus {

double LrSchedule::at(std::size_t epoch) const {
    if (!(lr_start > 0.0) || !(lr_end > 0.0))
        throw ParamError("LrSchedule: rates must be positive");
    if (span <= 1) return lr_start;
    if (epoch >= span - 1) return lr_end;
    const double t = static_cast<double>(epoch) / static_cast<double>(span - 1);
    return lr_start * std::pow(lr_end / lr_start, t);
}

Sgd::Sgd(SgdMode mode, double momentum) : mode_(mode), mu_(momentum) {
    if (momentum < 0.0 || momentum >= 1.0)
        throw ParamError("Sgd: momentum must be in [0, 1)");
}

Tensor& Sgd::velocity_for(const ParamRef& ref) {
    auto it = velocity_.find(ref.value);
    if (it == velocity_.end())
        it = velocity_.emplace(ref.value, Tensor(ref.value->shape())).first;
    if (!it->second.same_shape(*ref.value))
        throw ShapeError("Sgd: velocity shape does not mirror parameter " + ref.name);
    return it->second;
}

const Tensor& Sgd::velocity(const Tensor* param) const {
    auto it = velocity_.find(param);
    if (it == velocity_.end()) throw StateError("Sgd: no velocity tracked for parameter");
    return it->second;
}

void Sgd::begin_step(const std::vector<ParamRef>& params) {
    if (look_ahead_applied_) throw StateError("Sgd: begin_step called twice");
    if (mode_ != SgdMode::nesterov) return;
    for (const ParamRef& ref : params) {
        if (!ref.trainable) continue;
        Tensor& v = velocity_for(ref);
        double* p = ref.value->data();
        const double* pv = v.data();
        for (std::size_t i = 0; i < v.size(); ++i) p[i] += mu_ * pv[i];
    }
    look_ahead_applied_ = true;
}

void Sgd::apply_step(const std::vector<ParamRef>& params, double lr) {
    if (mode_ == SgdMode::nesterov && !look_ahead_applied_)
        throw StateError("Sgd: nesterov apply_step without begin_step");
    for (const ParamRef& ref : params) {
        if (!ref.trainable) continue;
        if (ref.grad == nullptr || !ref.grad->same_shape(*ref.value))
            throw ShapeError("Sgd: gradient missing or mis-shaped for " + ref.name);
        double* p = ref.value->data();
        const double* g = ref.grad->data();
        switch (mode_) {
            case SgdMode::plain:
                for (std::size_t i = 0; i < ref.value->size(); ++i) p[i] -= lr * g[i];
                break;
            case SgdMode::classical: {
                Tensor& v = velocity_for(ref);
                double* pv = v.data();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    pv[i] = mu_ * pv[i] - lr * g[i];
                    p[i] += pv[i];
                }
                break;
            }
            case SgdMode::nesterov: {
                // Parameters currently sit at theta + mu*V; the final point
                // theta + V_new equals that minus lr*g.
                Tensor& v = velocity_for(ref);
                double* pv = v.data();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    pv[i] = mu_ * pv[i] - lr * g[i];
                    p[i] -= lr * g[i];
                }
                break;
            }
        }
    }
    look_ahead_applied_ = false;
}

} // namespace nexus
