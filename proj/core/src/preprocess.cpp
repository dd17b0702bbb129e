#include "nexus/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "nexus/error.hpp"

namespace nexus {

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ParamError("percentile of an empty sample");
    if (p < 0.0 || p > 100.0) throw ParamError("percentile p must be in [0, 100]");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    const double q = (p / 100.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(q);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = q - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace {

/// Clamp-then-standardize over the nonzero entries of a flat span;
/// zeros are background and stay untouched.
void normalize_span(const double* src, double* dst, std::size_t n) {
    std::vector<double> nonzero;
    nonzero.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (src[i] != 0.0) nonzero.push_back(src[i]);
    if (nonzero.empty()) {
        std::fill(dst, dst + n, 0.0);
        return;
    }
    const double lo = percentile(nonzero, 1.0);
    const double hi = percentile(nonzero, 99.0);

    double mean = 0.0;
    std::size_t count = 0;
    auto clamped = [&](double v) { return std::min(std::max(v, lo), hi); };
    for (std::size_t i = 0; i < n; ++i) {
        if (src[i] == 0.0) continue;
        mean += clamped(src[i]);
        ++count;
    }
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (src[i] == 0.0) continue;
        const double d = clamped(src[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(count);
    const double sigma = std::sqrt(var);
    if (sigma < 1e-8) {
        std::fill(dst, dst + n, 0.0);
        return;
    }
    for (std::size_t i = 0; i < n; ++i)
        dst[i] = src[i] == 0.0 ? 0.0 : (clamped(src[i]) - mean) / sigma;
}

} // namespace

Tensor normalize_slice(const Tensor& slice) {
    if (slice.rank() != 2) throw ShapeError("normalize_slice expects a [H, W] tensor");
    Tensor out(slice.shape());
    normalize_span(slice.data(), out.data(), slice.size());
    return out;
}

VolumeSet preprocess_volume(const VolumeSet& vol, NormScope scope) {
    vol.validate();
    VolumeSet out;
    out.labels = vol.labels;
    const std::size_t D = vol.depth(), HW = vol.height() * vol.width();
    for (const Tensor& m : vol.modalities) {
        Tensor t(m.shape());
        if (scope == NormScope::per_volume) {
            normalize_span(m.data(), t.data(), m.size());
        } else {
            for (std::size_t s = 0; s < D; ++s)
                normalize_span(m.data() + s * HW, t.data() + s * HW, HW);
        }
        out.modalities.push_back(std::move(t));
    }
    return out;
}

} // namespace nexus
