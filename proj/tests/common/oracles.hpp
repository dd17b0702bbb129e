#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (nested loops, explicit offset lists) and must not
// share code with the library paths they check.

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "nexus/tensor.hpp"
#include "nexus/volume.hpp"

namespace testutil {

/// Valid cross-correlation, nested loops.
inline nexus::Tensor naive_correlate(const nexus::Tensor& input, const nexus::Tensor& kernels,
                                     const nexus::Tensor& biases) {
    const std::size_t R = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t A = kernels.extent(0), k = kernels.extent(2);
    nexus::Tensor out({A, H - k + 1, W - k + 1});
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t oi = 0; oi + k <= H; ++oi)
            for (std::size_t oj = 0; oj + k <= W; ++oj) {
                double acc = biases[a];
                for (std::size_t r = 0; r < R; ++r)
                    for (std::size_t ki = 0; ki < k; ++ki)
                        for (std::size_t kj = 0; kj < k; ++kj)
                            acc += kernels[((a * R + r) * k + ki) * k + kj] *
                                   input[(r * H + oi + ki) * W + oj + kj];
                out[(a * (H - k + 1) + oi) * (W - k + 1) + oj] = acc;
            }
    return out;
}

/// Direct per-position max over channel groups.
inline nexus::Tensor naive_maxout(const nexus::Tensor& input, std::size_t group) {
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    nexus::Tensor out({C / group, H, W});
    for (std::size_t oc = 0; oc < C / group; ++oc)
        for (std::size_t i = 0; i < H * W; ++i) {
            double best = input[(oc * group) * H * W + i];
            for (std::size_t g = 1; g < group; ++g)
                best = std::max(best, input[(oc * group + g) * H * W + i]);
            out[oc * H * W + i] = best;
        }
    return out;
}

/// Max pooling, nested loops.
inline nexus::Tensor naive_maxpool(const nexus::Tensor& input, std::size_t p, std::size_t s) {
    const std::size_t C = input.extent(0), H = input.extent(1), W = input.extent(2);
    const std::size_t OH = (H - p) / s + 1, OW = (W - p) / s + 1;
    nexus::Tensor out({C, OH, OW});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oi = 0; oi < OH; ++oi)
            for (std::size_t oj = 0; oj < OW; ++oj) {
                double best = input[(c * H + oi * s) * W + oj * s];
                for (std::size_t pi = 0; pi < p; ++pi)
                    for (std::size_t pj = 0; pj < p; ++pj)
                        best = std::max(best, input[(c * H + oi * s + pi) * W + oj * s + pj]);
                out[(c * OH + oi) * OW + oj] = best;
            }
    return out;
}

struct Counts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Pixel-by-pixel confusion counting for one label set.
inline Counts count_region(const nexus::LabelMap& pred, const nexus::LabelMap& truth,
                           const std::vector<int>& members) {
    auto in_region = [&](std::uint8_t v) {
        for (int m : members)
            if (static_cast<int>(v) == m) return true;
        return false;
    };
    Counts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool l = in_region(pred.labels[i]);
        const bool g = in_region(truth.labels[i]);
        if (l && g)
            ++c.tp;
        else if (l && !g)
            ++c.fp;
        else if (!l && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

/// Binary morphology by explicit structuring-element offset list over a
/// conceptually infinite grid (result reported inside the image).
using Mask = std::vector<std::uint8_t>;

inline Mask oracle_dilate(const Mask& in, long h, long w) {
    Mask out(in.size(), 0);
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
            bool any = false;
            for (long dr = -1; dr <= 1 && !any; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    if (in[rr * w + cc]) {
                        any = true;
                        break;
                    }
                }
            out[r * w + c] = any;
        }
    return out;
}

inline Mask oracle_erode_padded(const Mask& in, long h, long w) {
    // erosion on the infinite grid: out-of-image pixels are background,
    // except that callers wanting closing semantics pre-pad the mask.
    Mask out(in.size(), 0);
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) {
            bool all = true;
            for (long dr = -1; dr <= 1 && all; ++dr)
                for (long dc = -1; dc <= 1; ++dc) {
                    const long rr = r + dr, cc = c + dc;
                    const bool v =
                        rr >= 0 && rr < h && cc >= 0 && cc < w && in[rr * w + cc] != 0;
                    if (!v) {
                        all = false;
                        break;
                    }
                }
            out[r * w + c] = all;
        }
    return out;
}

inline Mask oracle_open(const Mask& in, long h, long w) {
    return oracle_dilate(oracle_erode_padded(in, h, w), h, w);
}

inline Mask oracle_close(const Mask& in, long h, long w) {
    // pad by one so dilation can extend beyond the image edge
    const long ph = h + 2, pw = w + 2;
    Mask padded(ph * pw, 0);
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) padded[(r + 1) * pw + c + 1] = in[r * w + c];
    Mask closed = oracle_erode_padded(oracle_dilate(padded, ph, pw), ph, pw);
    Mask out(in.size(), 0);
    for (long r = 0; r < h; ++r)
        for (long c = 0; c < w; ++c) out[r * w + c] = closed[(r + 1) * pw + c + 1];
    return out;
}

inline double sample_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
    const double m = sample_mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace testutil
