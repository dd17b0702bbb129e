#include "nexus/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nexus/error.hpp"
#include "nexus/parallel.hpp"

namespace nexus {

namespace {

const Tensor& single_input(const std::vector<const Tensor*>& in, const std::string& who) {
    if (in.size() != 1) throw ShapeError(who + ": expects exactly one input");
    return *in[0];
}

// ------------------------------------------------------------- GEMM helpers
//
// Convolution passes are phrased as one row-major GEMM each over an
// im2row patch matrix, so every layer shape gets the same long contiguous
// inner loops. Panels of both operands are packed K-major so the 4x8
// register-tile kernel streams contiguous memory; the summation order is
// fixed by the tiling alone, independent of threading.

constexpr std::size_t kSampleBlock = 16; // samples per parallel task

struct GemmScratch {
    std::vector<double> apack, bpack;
};

void pack_a_panels(const double* A, std::size_t lda, bool a_transposed, std::size_t M,
                   std::size_t K, double* P) {
    for (std::size_t m0 = 0; m0 < M; m0 += 4) {
        double* panel = P + m0 * K;
        if (a_transposed) {
            for (std::size_t k = 0; k < K; ++k) {
                const double* src = A + k * lda + m0;
                const std::size_t lanes = std::min<std::size_t>(4, M - m0);
                for (std::size_t i = 0; i < lanes; ++i) panel[k * 4 + i] = src[i];
                for (std::size_t i = lanes; i < 4; ++i) panel[k * 4 + i] = 0.0;
            }
        } else {
            for (std::size_t k = 0; k < K; ++k)
                for (std::size_t i = 0; i < 4; ++i)
                    panel[k * 4 + i] = (m0 + i < M) ? A[(m0 + i) * lda + k] : 0.0;
        }
    }
}

/// C[M x N] = A[M x K] * B[K x N] (+= C when accumulate), row-major.
/// a_transposed reads the first operand as A[k * lda + m] instead.
void gemm(std::size_t M, std::size_t N, std::size_t K, const double* A, std::size_t lda,
          bool a_transposed, const double* B, std::size_t ldb, double* C, std::size_t ldc,
          bool accumulate, GemmScratch& scratch) {
    const std::size_t Mp = (M + 3) / 4 * 4;
    scratch.apack.resize(Mp * K);
    scratch.bpack.resize(K * 8);
    pack_a_panels(A, lda, a_transposed, M, K, scratch.apack.data());

    for (std::size_t n0 = 0; n0 < N; n0 += 8) {
        const std::size_t nr = std::min<std::size_t>(8, N - n0);
        double* bp = scratch.bpack.data();
        for (std::size_t k = 0; k < K; ++k) {
            const double* src = B + k * ldb + n0;
            double* dst = bp + k * 8;
            for (std::size_t j = 0; j < nr; ++j) dst[j] = src[j];
            for (std::size_t j = nr; j < 8; ++j) dst[j] = 0.0;
        }
        for (std::size_t m0 = 0; m0 < M; m0 += 4) {
            const std::size_t mr = std::min<std::size_t>(4, M - m0);
            const double* ap = scratch.apack.data() + m0 * K;
            double c0[8] = {0}, c1[8] = {0}, c2[8] = {0}, c3[8] = {0};
            for (std::size_t k = 0; k < K; ++k) {
                const double* b = bp + k * 8;
                const double a0 = ap[k * 4 + 0], a1 = ap[k * 4 + 1];
                const double a2 = ap[k * 4 + 2], a3 = ap[k * 4 + 3];
                for (std::size_t j = 0; j < 8; ++j) {
                    const double bj = b[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
            const double* rows[4] = {c0, c1, c2, c3};
            for (std::size_t i = 0; i < mr; ++i) {
                double* c = C + (m0 + i) * ldc + n0;
                if (accumulate)
                    for (std::size_t j = 0; j < nr; ++j) c[j] += rows[i][j];
                else
                    for (std::size_t j = 0; j < nr; ++j) c[j] = rows[i][j];
            }
        }
    }
}

/// Patch matrix of one sample: rows indexed by output position n =
/// oi*OW+oj, columns by kernel tap q = (r*k+ki)*k+kj.
void im2row(const double* in, std::size_t R, std::size_t H, std::size_t W, std::size_t k,
            std::size_t OH, std::size_t OW, double* rows) {
    const std::size_t taps = R * k * k;
    for (std::size_t oi = 0; oi < OH; ++oi) {
        for (std::size_t oj = 0; oj < OW; ++oj) {
            double* row = rows + (oi * OW + oj) * taps;
            for (std::size_t r = 0; r < R; ++r) {
                const double* plane = in + r * H * W;
                for (std::size_t ki = 0; ki < k; ++ki) {
                    const double* src = plane + (oi + ki) * W + oj;
                    double* dst = row + (r * k + ki) * k;
                    for (std::size_t kj = 0; kj < k; ++kj) dst[kj] = src[kj];
                }
            }
        }
    }
}

/// Scatter-add of a patch-matrix gradient back onto the input grid;
/// adjoint of im2row.
void row2im(const double* rows, std::size_t R, std::size_t H, std::size_t W, std::size_t k,
            std::size_t OH, std::size_t OW, double* grad_in) {
    const std::size_t taps = R * k * k;
    for (std::size_t oi = 0; oi < OH; ++oi) {
        for (std::size_t oj = 0; oj < OW; ++oj) {
            const double* row = rows + (oi * OW + oj) * taps;
            for (std::size_t r = 0; r < R; ++r) {
                double* plane = grad_in + r * H * W;
                for (std::size_t ki = 0; ki < k; ++ki) {
                    double* dst = plane + (oi + ki) * W + oj;
                    const double* src = row + (r * k + ki) * k;
                    for (std::size_t kj = 0; kj < k; ++kj) dst[kj] += src[kj];
                }
            }
        }
    }
}

Shape batched(const Shape& s, std::size_t data_rank, bool& was_unbatched) {
    if (s.size() == data_rank + 1) {
        was_unbatched = false;
        return s;
    }
    if (s.size() == data_rank) {
        was_unbatched = true;
        Shape b{1};
        b.insert(b.end(), s.begin(), s.end());
        return b;
    }
    throw ShapeError("expected rank " + std::to_string(data_rank) + " or " +
                     std::to_string(data_rank + 1) + " input, got " + shape_str(s));
}

} // namespace

// ---------------------------------------------------------------- ConvLayer

ConvLayer::ConvLayer(std::size_t in_planes, std::size_t out_maps, std::size_t kernel,
                     std::string name)
    : in_planes_(in_planes),
      out_maps_(out_maps),
      kernel_(kernel),
      name_(std::move(name)),
      kernels_({out_maps, in_planes, kernel, kernel}),
      biases_({out_maps}),
      grad_kernels_({out_maps, in_planes, kernel, kernel}),
      grad_biases_({out_maps}) {
    if (kernel == 0) throw ParamError(name_ + ": kernel extent must be >= 1");
}

void ConvLayer::init_he(Rng& rng) {
    init_gaussian(rng, std::sqrt(2.0 / static_cast<double>(in_planes_ * kernel_ * kernel_)));
}

void ConvLayer::init_gaussian(Rng& rng, double std) {
    kernels_.gaussian_fill(rng, std);
    biases_.zero();
}

std::string ConvLayer::describe() const {
    return "conv k=" + std::to_string(kernel_) + " in=" + std::to_string(in_planes_) +
           " out=" + std::to_string(out_maps_);
}

Shape ConvLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    bool unbatched = false;
    Shape s = batched(in[0], 3, unbatched);
    if (s[1] != in_planes_)
        throw ShapeError(name_ + ": input has " + std::to_string(s[1]) + " planes, layer wants " +
                         std::to_string(in_planes_));
    if (s[2] < kernel_ || s[3] < kernel_)
        throw ShapeError(name_ + ": spatial extent " + std::to_string(s[2]) + "x" +
                         std::to_string(s[3]) + " smaller than kernel " + std::to_string(kernel_));
    Shape out{s[0], out_maps_, s[2] - kernel_ + 1, s[3] - kernel_ + 1};
    if (unbatched) out.erase(out.begin());
    return out;
}

Tensor ConvLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& raw = single_input(in, name_);
    bool unbatched = false;
    const Shape s = batched(raw.shape(), 3, unbatched);
    (void)out_shape({raw.shape()}); // validates planes and extents

    cached_in_ = unbatched ? raw.reshaped(s) : raw;
    cached_rank3_ = unbatched;
    has_cache_ = true;

    const std::size_t B = s[0], R = s[1], H = s[2], W = s[3];
    const std::size_t k = kernel_, A = out_maps_;
    const std::size_t OH = H - k + 1, OW = W - k + 1;
    Tensor out({B, A, OH, OW});

    const std::size_t taps = R * k * k;
    const std::size_t positions = OH * OW;

    // Transposed kernels [taps x A], shared across the batch.
    std::vector<double> wt(taps * A);
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t q = 0; q < taps; ++q) wt[q * A + a] = kernels_[a * taps + q];

    const double* bias = biases_.data();
    const double* src = cached_in_.data();
    double* dst = out.data();

    const std::size_t blocks = (B + kSampleBlock - 1) / kSampleBlock;
    parallel_for(blocks, [&](std::size_t block) {
        std::vector<double> rows(positions * taps);
        std::vector<double> out_t(positions * A);
        GemmScratch scratch;
        const std::size_t b_end = std::min(B, (block + 1) * kSampleBlock);
        for (std::size_t b = block * kSampleBlock; b < b_end; ++b) {
            im2row(src + b * R * H * W, R, H, W, k, OH, OW, rows.data());
            gemm(positions, A, taps, rows.data(), taps, false, wt.data(), A, out_t.data(), A,
                 /*accumulate=*/false, scratch);
            double* obase = dst + b * A * positions;
            for (std::size_t a = 0; a < A; ++a) {
                const double bv = bias[a];
                double* orow = obase + a * positions;
                for (std::size_t n = 0; n < positions; ++n) orow[n] = out_t[n * A + a] + bv;
            }
        }
    });

    if (unbatched) return out.reshaped({A, OH, OW});
    return out;
}

std::vector<Tensor> ConvLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    bool unbatched = false;
    const Shape gs = batched(grad_out.shape(), 3, unbatched);
    const Tensor grads = unbatched ? grad_out.reshaped(gs) : grad_out;

    const std::size_t B = cached_in_.extent(0), R = in_planes_, H = cached_in_.extent(2),
                      W = cached_in_.extent(3);
    const std::size_t k = kernel_, A = out_maps_;
    const std::size_t OH = H - k + 1, OW = W - k + 1;
    if (gs != Shape{B, A, OH, OW})
        throw ShapeError(name_ + ": grad shape " + shape_str(grad_out.shape()) +
                         " does not match forward output");

    Tensor grad_in({B, R, H, W});
    grad_kernels_.zero();
    grad_biases_.zero();

    const double* go = grads.data();
    const double* src = cached_in_.data();
    double* gi = grad_in.data();
    double* gk = grad_kernels_.data();
    double* gb = grad_biases_.data();

    const std::size_t taps = R * k * k;
    const std::size_t positions = OH * OW;

    // Per-block partial kernel gradients with a block size fixed by the
    // batch alone, so the reduction tree (and the bits) never depend on
    // the worker count.
    const std::size_t blocks = (B + kSampleBlock - 1) / kSampleBlock;
    std::vector<std::vector<double>> gk_partial(blocks);
    std::vector<std::vector<double>> gb_partial(blocks);

    parallel_for(blocks, [&](std::size_t block) {
        std::vector<double> rows(positions * taps);
        std::vector<double> rows_grad(positions * taps);
        GemmScratch scratch;
        gk_partial[block].assign(A * taps, 0.0);
        gb_partial[block].assign(A, 0.0);
        double* gkp = gk_partial[block].data();
        double* gbp = gb_partial[block].data();

        const std::size_t b_end = std::min(B, (block + 1) * kSampleBlock);
        for (std::size_t b = block * kSampleBlock; b < b_end; ++b) {
            const double* gbase = go + b * A * positions;
            im2row(src + b * R * H * W, R, H, W, k, OH, OW, rows.data());

            for (std::size_t a = 0; a < A; ++a) {
                const double* grow = gbase + a * positions;
                double acc = 0.0;
                for (std::size_t n = 0; n < positions; ++n) acc += grow[n];
                gbp[a] += acc;
            }

            // gradK += G . rows  (M=A, K=positions, N=taps)
            gemm(A, taps, positions, gbase, positions, false, rows.data(), taps, gkp, taps,
                 /*accumulate=*/true, scratch);

            // gradIn rows = G^T . W  (M=positions, K=A, N=taps), then
            // scatter-add back onto the input grid.
            gemm(positions, taps, A, gbase, positions, /*a_transposed=*/true, kernels_.data(),
                 taps, rows_grad.data(), taps, /*accumulate=*/false, scratch);
            row2im(rows_grad.data(), R, H, W, k, OH, OW, gi + b * R * H * W);
        }
    });

    for (std::size_t block = 0; block < blocks; ++block) {
        const double* gkp = gk_partial[block].data();
        const double* gbp = gb_partial[block].data();
        for (std::size_t i = 0; i < A * taps; ++i) gk[i] += gkp[i];
        for (std::size_t a = 0; a < A; ++a) gb[a] += gbp[a];
    }

    if (cached_rank3_) return {grad_in.reshaped({R, H, W})};
    return {grad_in};
}

void ConvLayer::collect_params(std::vector<ParamRef>& out) {
    out.push_back({name_ + ".kernels", &kernels_, &grad_kernels_, true});
    out.push_back({name_ + ".biases", &biases_, &grad_biases_, true});
}

// ---------------------------------------------------------------- PoolLayer

PoolLayer::PoolLayer(std::size_t pool, std::size_t stride, std::string name)
    : pool_(pool), stride_(stride), name_(std::move(name)) {
    if (pool == 0 || stride == 0) throw ParamError(name_ + ": pool and stride must be >= 1");
}

std::string PoolLayer::describe() const {
    return "maxpool p=" + std::to_string(pool_) + " s=" + std::to_string(stride_);
}

Shape PoolLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    bool unbatched = false;
    Shape s = batched(in[0], 3, unbatched);
    if (s[2] < pool_ || s[3] < pool_)
        throw ShapeError(name_ + ": spatial extent " + std::to_string(s[2]) + "x" +
                         std::to_string(s[3]) + " smaller than pool " + std::to_string(pool_));
    Shape out{s[0], s[1], (s[2] - pool_) / stride_ + 1, (s[3] - pool_) / stride_ + 1};
    if (unbatched) out.erase(out.begin());
    return out;
}

Tensor PoolLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& raw = single_input(in, name_);
    bool unbatched = false;
    const Shape s = batched(raw.shape(), 3, unbatched);
    (void)out_shape({raw.shape()});
    const Tensor src_t = unbatched ? raw.reshaped(s) : raw;

    const std::size_t B = s[0], C = s[1], H = s[2], W = s[3];
    const std::size_t OH = (H - pool_) / stride_ + 1, OW = (W - pool_) / stride_ + 1;

    in_shape_ = s;
    argmax_.assign(B * C * OH * OW, 0);
    cached_rank3_ = unbatched;
    has_cache_ = true;

    Tensor out({B, C, OH, OW});
    const double* src = src_t.data();
    double* dst = out.data();

    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* ibase = src + bc * H * W;
        double* obase = dst + bc * OH * OW;
        std::size_t* abase = argmax_.data() + bc * OH * OW;
        for (std::size_t oi = 0; oi < OH; ++oi) {
            for (std::size_t oj = 0; oj < OW; ++oj) {
                const std::size_t i0 = oi * stride_, j0 = oj * stride_;
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_at = i0 * W + j0;
                for (std::size_t pi = 0; pi < pool_; ++pi) {
                    const double* row = ibase + (i0 + pi) * W + j0;
                    for (std::size_t pj = 0; pj < pool_; ++pj) {
                        if (row[pj] > best) { // strict: ties keep the first cell
                            best = row[pj];
                            best_at = (i0 + pi) * W + j0 + pj;
                        }
                    }
                }
                obase[oi * OW + oj] = best;
                abase[oi * OW + oj] = best_at;
            }
        }
    }

    if (unbatched) return out.reshaped({C, OH, OW});
    return out;
}

std::vector<Tensor> PoolLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    bool unbatched = false;
    const Shape gs = batched(grad_out.shape(), 3, unbatched);
    const Tensor go_t = unbatched ? grad_out.reshaped(gs) : grad_out;

    const std::size_t B = in_shape_[0], C = in_shape_[1], H = in_shape_[2], W = in_shape_[3];
    const std::size_t OH = (H - pool_) / stride_ + 1, OW = (W - pool_) / stride_ + 1;
    if (gs != Shape{B, C, OH, OW})
        throw ShapeError(name_ + ": grad shape " + shape_str(grad_out.shape()) +
                         " does not match forward output");

    Tensor grad_in({B, C, H, W});
    const double* go = go_t.data();
    double* gi = grad_in.data();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const double* gbase = go + bc * OH * OW;
        const std::size_t* abase = argmax_.data() + bc * OH * OW;
        double* ibase = gi + bc * H * W;
        for (std::size_t i = 0; i < OH * OW; ++i) ibase[abase[i]] += gbase[i];
    }

    if (cached_rank3_) return {grad_in.reshaped({C, H, W})};
    return {grad_in};
}

// ---------------------------------------------------------------- ReluLayer

Shape ReluLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    return in[0];
}

Tensor ReluLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& src = single_input(in, name_);
    cached_in_ = src;
    has_cache_ = true;
    Tensor out(src.shape());
    const double* p = src.data();
    double* o = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) o[i] = p[i] > 0.0 ? p[i] : 0.0;
    return out;
}

std::vector<Tensor> ReluLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    if (!grad_out.same_shape(cached_in_))
        throw ShapeError(name_ + ": grad shape mismatch");
    Tensor grad_in(grad_out.shape());
    const double* g = grad_out.data();
    const double* x = cached_in_.data();
    double* gi = grad_in.data();
    for (std::size_t i = 0; i < grad_out.size(); ++i) gi[i] = x[i] > 0.0 ? g[i] : 0.0;
    return {grad_in};
}

// -------------------------------------------------------------- MaxoutLayer

MaxoutLayer::MaxoutLayer(std::size_t group, std::string name)
    : group_(group), name_(std::move(name)) {
    if (group == 0) throw ParamError(name_ + ": group size must be >= 1");
}

std::string MaxoutLayer::describe() const {
    return "maxout k=" + std::to_string(group_);
}

Shape MaxoutLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    bool unbatched = false;
    Shape s = batched(in[0], 3, unbatched);
    if (s[1] % group_ != 0)
        throw ShapeError(name_ + ": channels " + std::to_string(s[1]) +
                         " not divisible by group size " + std::to_string(group_));
    Shape out{s[0], s[1] / group_, s[2], s[3]};
    if (unbatched) out.erase(out.begin());
    return out;
}

Tensor MaxoutLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& raw = single_input(in, name_);
    bool unbatched = false;
    const Shape s = batched(raw.shape(), 3, unbatched);
    (void)out_shape({raw.shape()});
    const Tensor src_t = unbatched ? raw.reshaped(s) : raw;

    const std::size_t B = s[0], C = s[1], HW = s[2] * s[3];
    const std::size_t OC = C / group_;
    in_shape_ = s;
    arg_channel_.assign(B * OC * HW, 0);
    has_cache_ = true;

    Tensor out({B, OC, s[2], s[3]});
    const double* src = src_t.data();
    double* dst = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < OC; ++oc) {
            double* obase = dst + (b * OC + oc) * HW;
            std::size_t* abase = arg_channel_.data() + (b * OC + oc) * HW;
            for (std::size_t g = 0; g < group_; ++g) {
                const std::size_t c = oc * group_ + g;
                const double* ibase = src + (b * C + c) * HW;
                if (g == 0) {
                    for (std::size_t i = 0; i < HW; ++i) {
                        obase[i] = ibase[i];
                        abase[i] = c;
                    }
                } else {
                    for (std::size_t i = 0; i < HW; ++i) {
                        if (ibase[i] > obase[i]) { // ties keep the first channel
                            obase[i] = ibase[i];
                            abase[i] = c;
                        }
                    }
                }
            }
        }
    }
    if (unbatched) return out.reshaped({OC, s[2], s[3]});
    return out;
}

std::vector<Tensor> MaxoutLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    bool unbatched = false;
    const Shape gs = batched(grad_out.shape(), 3, unbatched);
    const Tensor go_t = unbatched ? grad_out.reshaped(gs) : grad_out;

    const std::size_t B = in_shape_[0], C = in_shape_[1], HW = in_shape_[2] * in_shape_[3];
    const std::size_t OC = C / group_;
    if (gs != Shape{B, OC, in_shape_[2], in_shape_[3]})
        throw ShapeError(name_ + ": grad shape mismatch");

    Tensor grad_in(in_shape_);
    const double* go = go_t.data();
    double* gi = grad_in.data();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t oc = 0; oc < OC; ++oc) {
            const double* gbase = go + (b * OC + oc) * HW;
            const std::size_t* abase = arg_channel_.data() + (b * OC + oc) * HW;
            for (std::size_t i = 0; i < HW; ++i)
                gi[(b * C + abase[i]) * HW + i] += gbase[i];
        }
    }
    if (unbatched) return {grad_in.reshaped({C, in_shape_[2], in_shape_[3]})};
    return {grad_in};
}

// ----------------------------------------------------------- BatchNormLayer

BatchNormLayer::BatchNormLayer(std::size_t channels, double eps, double momentum,
                               std::string name)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      name_(std::move(name)),
      scale_({channels}, 1.0),
      shift_({channels}, 0.0),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0),
      grad_scale_({channels}),
      grad_shift_({channels}) {
    if (!(eps > 0.0)) throw ParamError(name_ + ": eps must be positive");
}

std::string BatchNormLayer::describe() const {
    return "batchnorm c=" + std::to_string(channels_);
}

Shape BatchNormLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    if (in[0].size() != 4)
        throw ShapeError(name_ + ": expects [batch, channels, H, W] input, got " +
                         shape_str(in[0]));
    if (in[0][1] != channels_)
        throw ShapeError(name_ + ": input has " + std::to_string(in[0][1]) +
                         " channels, layer wants " + std::to_string(channels_));
    return in[0];
}

Tensor BatchNormLayer::forward(const std::vector<const Tensor*>& in, Mode mode, Rng*) {
    const Tensor& src = single_input(in, name_);
    (void)out_shape({src.shape()});
    const std::size_t B = src.extent(0), C = channels_, HW = src.extent(2) * src.extent(3);
    Tensor out(src.shape());

    if (mode == Mode::train) {
        if (B < 2)
            throw ParamError(name_ + ": train mode needs batch >= 2, got " + std::to_string(B));
        cached_xhat_ = Tensor(src.shape());
        cached_inv_std_.assign(C, 0.0);
        has_cache_ = true;
        const std::size_t N = B * HW;
        const double* x = src.data();
        double* xh = cached_xhat_.data();
        double* y = out.data();
        parallel_for(C, [&](std::size_t c) {
            double mean = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = x + (b * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) mean += p[i];
            }
            mean /= static_cast<double>(N);
            double var = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = x + (b * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(N);
            const double inv = 1.0 / std::sqrt(var + eps_);
            cached_inv_std_[c] = inv;
            const double g = scale_[c], s = shift_[c];
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = x + (b * C + c) * HW;
                double* ph = xh + (b * C + c) * HW;
                double* py = y + (b * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) {
                    const double v = (p[i] - mean) * inv;
                    ph[i] = v;
                    py[i] = g * v + s;
                }
            }
            if (!freeze_stats_) {
                running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean;
                running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var;
            }
        });
    } else {
        const double* x = src.data();
        double* y = out.data();
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
            const double m = running_mean_[c], g = scale_[c], s = shift_[c];
            for (std::size_t b = 0; b < B; ++b) {
                const double* p = x + (b * C + c) * HW;
                double* py = y + (b * C + c) * HW;
                for (std::size_t i = 0; i < HW; ++i) py[i] = g * (p[i] - m) * inv + s;
            }
        }
        has_cache_ = false;
    }
    return out;
}

std::vector<Tensor> BatchNormLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before train-mode forward");
    if (!grad_out.same_shape(cached_xhat_))
        throw ShapeError(name_ + ": grad shape mismatch");
    const std::size_t B = grad_out.extent(0), C = channels_,
                      HW = grad_out.extent(2) * grad_out.extent(3);
    const std::size_t N = B * HW;

    Tensor grad_in(grad_out.shape());
    const double* g = grad_out.data();
    const double* xh = cached_xhat_.data();
    double* gi = grad_in.data();
    parallel_for(C, [&](std::size_t c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double* pg = g + (b * C + c) * HW;
            const double* ph = xh + (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) {
                sum_g += pg[i];
                sum_gx += pg[i] * ph[i];
            }
        }
        grad_shift_[c] = sum_g;
        grad_scale_[c] = sum_gx;
        const double coef = scale_[c] * cached_inv_std_[c];
        const double mg = sum_g / static_cast<double>(N);
        const double mgx = sum_gx / static_cast<double>(N);
        for (std::size_t b = 0; b < B; ++b) {
            const double* pg = g + (b * C + c) * HW;
            const double* ph = xh + (b * C + c) * HW;
            double* pi = gi + (b * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) pi[i] = coef * (pg[i] - mg - ph[i] * mgx);
        }
    });
    return {grad_in};
}

void BatchNormLayer::collect_params(std::vector<ParamRef>& out) {
    out.push_back({name_ + ".scale", &scale_, &grad_scale_, true});
    out.push_back({name_ + ".shift", &shift_, &grad_shift_, true});
    out.push_back({name_ + ".running_mean", &running_mean_, nullptr, false});
    out.push_back({name_ + ".running_var", &running_var_, nullptr, false});
}

// ------------------------------------------------------------- DropoutLayer

DropoutLayer::DropoutLayer(double keep_prob, std::string name)
    : keep_(keep_prob), name_(std::move(name)) {
    if (!(keep_prob > 0.0) || keep_prob > 1.0)
        throw ParamError(name_ + ": keep probability must be in (0, 1]");
}

std::string DropoutLayer::describe() const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "dropout keep=%g", keep_);
    return buf;
}

Shape DropoutLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    return in[0];
}

Tensor DropoutLayer::forward(const std::vector<const Tensor*>& in, Mode mode, Rng* rng) {
    const Tensor& src = single_input(in, name_);
    if (mode == Mode::infer || keep_ == 1.0) {
        mask_ = Tensor(src.shape(), 1.0);
        has_cache_ = true;
        return src;
    }
    if (rng == nullptr) throw StateError(name_ + ": train-mode forward needs an rng");
    mask_ = Tensor(src.shape());
    const double inv_keep = 1.0 / keep_;
    double* m = mask_.data();
    for (std::size_t i = 0; i < mask_.size(); ++i) m[i] = rng->bernoulli(keep_) ? inv_keep : 0.0;
    has_cache_ = true;

    Tensor out(src.shape());
    const double* x = src.data();
    double* y = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) y[i] = x[i] * m[i];
    return out;
}

std::vector<Tensor> DropoutLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    if (!grad_out.same_shape(mask_)) throw ShapeError(name_ + ": grad shape mismatch");
    return {grad_out * mask_};
}

// --------------------------------------------------------------- DenseLayer

DenseLayer::DenseLayer(std::size_t features, std::size_t units, std::string name)
    : features_(features),
      units_(units),
      name_(std::move(name)),
      weights_({features, units}),
      biases_({units}),
      grad_weights_({features, units}),
      grad_biases_({units}) {}

void DenseLayer::init_he(Rng& rng) {
    init_gaussian(rng, std::sqrt(2.0 / static_cast<double>(features_)));
}

void DenseLayer::init_gaussian(Rng& rng, double std) {
    weights_.gaussian_fill(rng, std);
    biases_.zero();
}

std::string DenseLayer::describe() const {
    return "dense in=" + std::to_string(features_) + " out=" + std::to_string(units_);
}

Shape DenseLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    bool unbatched = false;
    Shape s = batched(in[0], 1, unbatched);
    if (s[1] != features_)
        throw ShapeError(name_ + ": input has " + std::to_string(s[1]) + " features, layer wants " +
                         std::to_string(features_));
    if (unbatched) return {units_};
    return {s[0], units_};
}

Tensor DenseLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& raw = single_input(in, name_);
    bool unbatched = false;
    const Shape s = batched(raw.shape(), 1, unbatched);
    (void)out_shape({raw.shape()});
    cached_in_ = unbatched ? raw.reshaped(s) : raw;
    cached_rank1_ = unbatched;
    has_cache_ = true;

    const std::size_t B = s[0];
    Tensor out({B, units_});
    const double* x = cached_in_.data();
    const double* w = weights_.data();
    double* y = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        double* yr = y + b * units_;
        for (std::size_t u = 0; u < units_; ++u) yr[u] = biases_[u];
        const double* xr = x + b * features_;
        for (std::size_t f = 0; f < features_; ++f) {
            const double xv = xr[f];
            const double* wr = w + f * units_;
            for (std::size_t u = 0; u < units_; ++u) yr[u] += xv * wr[u];
        }
    }
    if (unbatched) return out.reshaped({units_});
    return out;
}

std::vector<Tensor> DenseLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    bool unbatched = false;
    const Shape gs = batched(grad_out.shape(), 1, unbatched);
    const Tensor go_t = unbatched ? grad_out.reshaped(gs) : grad_out;
    const std::size_t B = cached_in_.extent(0);
    if (gs != Shape{B, units_}) throw ShapeError(name_ + ": grad shape mismatch");

    grad_weights_.zero();
    grad_biases_.zero();
    Tensor grad_in({B, features_});
    const double* g = go_t.data();
    const double* x = cached_in_.data();
    const double* w = weights_.data();
    double* gw = grad_weights_.data();
    double* gi = grad_in.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* gr = g + b * units_;
        const double* xr = x + b * features_;
        double* gir = gi + b * features_;
        for (std::size_t u = 0; u < units_; ++u) grad_biases_[u] += gr[u];
        for (std::size_t f = 0; f < features_; ++f) {
            const double xv = xr[f];
            const double* wr = w + f * units_;
            double* gwr = gw + f * units_;
            double acc = 0.0;
            for (std::size_t u = 0; u < units_; ++u) {
                gwr[u] += xv * gr[u];
                acc += wr[u] * gr[u];
            }
            gir[f] = acc;
        }
    }
    if (cached_rank1_) return {grad_in.reshaped({features_})};
    return {grad_in};
}

void DenseLayer::collect_params(std::vector<ParamRef>& out) {
    out.push_back({name_ + ".weights", &weights_, &grad_weights_, true});
    out.push_back({name_ + ".biases", &biases_, &grad_biases_, true});
}

// ------------------------------------------------------------- SoftmaxLayer

Shape SoftmaxLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    bool unbatched = false;
    Shape s = batched(in[0], 1, unbatched);
    if (s[1] < 2) throw ShapeError(name_ + ": needs at least 2 classes");
    return in[0];
}

Tensor SoftmaxLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& raw = single_input(in, name_);
    bool unbatched = false;
    const Shape s = batched(raw.shape(), 1, unbatched);
    (void)out_shape({raw.shape()});
    const Tensor src_t = unbatched ? raw.reshaped(s) : raw;
    const std::size_t B = s[0], K = s[1];

    Tensor out({B, K});
    const double* x = src_t.data();
    double* y = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* xr = x + b * K;
        double* yr = y + b * K;
        double mx = xr[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, xr[k]);
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            yr[k] = std::exp(xr[k] - mx);
            sum += yr[k];
        }
        for (std::size_t k = 0; k < K; ++k) yr[k] /= sum;
    }
    cached_out_ = out;
    cached_rank1_ = unbatched;
    has_cache_ = true;
    if (unbatched) return out.reshaped({K});
    return out;
}

std::vector<Tensor> SoftmaxLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    bool unbatched = false;
    const Shape gs = batched(grad_out.shape(), 1, unbatched);
    const Tensor go_t = unbatched ? grad_out.reshaped(gs) : grad_out;
    if (!go_t.same_shape(cached_out_)) throw ShapeError(name_ + ": grad shape mismatch");
    const std::size_t B = cached_out_.extent(0), K = cached_out_.extent(1);

    Tensor grad_in({B, K});
    const double* g = go_t.data();
    const double* p = cached_out_.data();
    double* gi = grad_in.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* gr = g + b * K;
        const double* pr = p + b * K;
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += gr[k] * pr[k];
        double* gir = gi + b * K;
        for (std::size_t k = 0; k < K; ++k) gir[k] = pr[k] * (gr[k] - dot);
    }
    if (cached_rank1_) return {grad_in.reshaped({K})};
    return {grad_in};
}

// ------------------------------------------------------ SpatialSoftmaxLayer

Shape SpatialSoftmaxLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError(name_ + ": expects one input");
    if (in[0].size() != 4)
        throw ShapeError(name_ + ": expects [batch, channels, H, W], got " + shape_str(in[0]));
    return in[0];
}

Tensor SpatialSoftmaxLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& src = single_input(in, name_);
    (void)out_shape({src.shape()});
    const std::size_t B = src.extent(0), C = src.extent(1), HW = src.extent(2) * src.extent(3);

    Tensor out(src.shape());
    const double* x = src.data();
    double* y = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* xb = x + b * C * HW;
        double* yb = y + b * C * HW;
        for (std::size_t i = 0; i < HW; ++i) {
            double mx = xb[i];
            for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, xb[c * HW + i]);
            double sum = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                const double e = std::exp(xb[c * HW + i] - mx);
                yb[c * HW + i] = e;
                sum += e;
            }
            for (std::size_t c = 0; c < C; ++c) yb[c * HW + i] /= sum;
        }
    }
    cached_out_ = out;
    has_cache_ = true;
    return out;
}

std::vector<Tensor> SpatialSoftmaxLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    if (!grad_out.same_shape(cached_out_)) throw ShapeError(name_ + ": grad shape mismatch");
    const std::size_t B = cached_out_.extent(0), C = cached_out_.extent(1),
                      HW = cached_out_.extent(2) * cached_out_.extent(3);

    Tensor grad_in(cached_out_.shape());
    const double* g = grad_out.data();
    const double* p = cached_out_.data();
    double* gi = grad_in.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* gb = g + b * C * HW;
        const double* pb = p + b * C * HW;
        double* gib = gi + b * C * HW;
        for (std::size_t i = 0; i < HW; ++i) {
            double dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += gb[c * HW + i] * pb[c * HW + i];
            for (std::size_t c = 0; c < C; ++c)
                gib[c * HW + i] = pb[c * HW + i] * (gb[c * HW + i] - dot);
        }
    }
    return {grad_in};
}

// -------------------------------------------------------------- ConcatLayer

Shape ConcatLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.empty()) throw ShapeError(name_ + ": needs at least one input");
    for (const Shape& s : in)
        if (s.size() != 4)
            throw ShapeError(name_ + ": expects [batch, channels, H, W] inputs, got " +
                             shape_str(s));
    std::size_t channels = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i][0] != in[0][0] || in[i][2] != in[0][2] || in[i][3] != in[0][3])
            throw ShapeError(name_ + ": input " + std::to_string(i) + " " + shape_str(in[i]) +
                             " does not align with " + shape_str(in[0]));
        channels += in[i][1];
    }
    return {in[0][0], channels, in[0][2], in[0][3]};
}

Tensor ConcatLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    std::vector<Shape> shapes;
    shapes.reserve(in.size());
    for (const Tensor* t : in) shapes.push_back(t->shape());
    out_shape_ = out_shape(shapes);

    channel_counts_.clear();
    for (const Tensor* t : in) channel_counts_.push_back(t->extent(1));
    has_cache_ = true;

    const std::size_t B = out_shape_[0], C = out_shape_[1],
                      HW = out_shape_[2] * out_shape_[3];
    Tensor out(out_shape_);
    double* y = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t c0 = 0;
        for (const Tensor* t : in) {
            const std::size_t ci = t->extent(1);
            const double* x = t->data() + b * ci * HW;
            std::copy(x, x + ci * HW, y + (b * C + c0) * HW);
            c0 += ci;
        }
    }
    return out;
}

std::vector<Tensor> ConcatLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError(name_ + ": backward called before forward");
    if (grad_out.shape() != out_shape_) throw ShapeError(name_ + ": grad shape mismatch");
    const std::size_t B = out_shape_[0], C = out_shape_[1],
                      HW = out_shape_[2] * out_shape_[3];

    std::vector<Tensor> grads;
    grads.reserve(channel_counts_.size());
    std::size_t c0 = 0;
    for (std::size_t ci : channel_counts_) {
        Tensor g({B, ci, out_shape_[2], out_shape_[3]});
        for (std::size_t b = 0; b < B; ++b) {
            const double* src = grad_out.data() + (b * C + c0) * HW;
            std::copy(src, src + ci * HW, g.data() + b * ci * HW);
        }
        grads.push_back(std::move(g));
        c0 += ci;
    }
    return grads;
}

// ------------------------------------------------------------- FlattenLayer

Shape FlattenLayer::out_shape(const std::vector<Shape>& in) const {
    if (in.size() != 1) throw ShapeError("flatten: expects one input");
    if (in[0].size() != 4)
        throw ShapeError("flatten: expects [batch, channels, H, W], got " + shape_str(in[0]));
    return {in[0][0], in[0][1] * in[0][2] * in[0][3]};
}

Tensor FlattenLayer::forward(const std::vector<const Tensor*>& in, Mode, Rng*) {
    const Tensor& src = single_input(in, "flatten");
    const Shape out = out_shape({src.shape()});
    in_shape_ = src.shape();
    has_cache_ = true;
    return src.reshaped(out);
}

std::vector<Tensor> FlattenLayer::backward(const Tensor& grad_out) {
    if (!has_cache_) throw StateError("flatten: backward called before forward");
    return {grad_out.reshaped(in_shape_)};
}

// ------------------------------------------------------------- free helpers

Tensor conv_forward(ConvLayer& layer, const Tensor& input) {
    return layer.forward({&input}, Mode::infer, nullptr);
}

Tensor maxpool_forward(PoolLayer& layer, const Tensor& input) {
    return layer.forward({&input}, Mode::infer, nullptr);
}

Tensor relu(const Tensor& input) {
    ReluLayer l;
    return l.forward({&input}, Mode::infer, nullptr);
}

Tensor maxout(const Tensor& input, std::size_t group) {
    MaxoutLayer l(group);
    return l.forward({&input}, Mode::infer, nullptr);
}

Tensor softmax(const Tensor& logits) {
    SoftmaxLayer l;
    return l.forward({&logits}, Mode::infer, nullptr);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const bool unbatched = a.rank() == 3;
    ConcatLayer l;
    if (!unbatched) return l.forward({&a, &b}, Mode::infer, nullptr);
    Shape sa = a.shape(), sb = b.shape();
    sa.insert(sa.begin(), 1);
    sb.insert(sb.begin(), 1);
    const Tensor ab = a.reshaped(sa), bb = b.reshaped(sb);
    Tensor out = l.forward({&ab, &bb}, Mode::infer, nullptr);
    Shape os = out.shape();
    os.erase(os.begin());
    return out.reshaped(os);
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t c1) {
    const bool unbatched = t.rank() == 3;
    const Tensor src = unbatched
        ? t.reshaped({1, t.extent(0), t.extent(1), t.extent(2)})
        : t;
    if (src.rank() != 4) throw ShapeError("split_channels: expects [B,C,H,W] or [C,H,W]");
    const std::size_t B = src.extent(0), C = src.extent(1), HW = src.extent(2) * src.extent(3);
    if (c1 > C) throw ShapeError("split_channels: split point beyond channel count");
    if (c1 == 0 || c1 == C) throw ShapeError("split_channels: split would produce a zero-channel tensor");
    Tensor a({B, c1, src.extent(2), src.extent(3)});
    Tensor b({B, C - c1, src.extent(2), src.extent(3)});
    for (std::size_t bi = 0; bi < B; ++bi) {
        const double* base = src.data() + bi * C * HW;
        std::copy(base, base + c1 * HW, a.data() + bi * c1 * HW);
        std::copy(base + c1 * HW, base + C * HW, b.data() + bi * (C - c1) * HW);
    }
    if (unbatched) {
        return {a.reshaped({c1, src.extent(2), src.extent(3)}),
                b.reshaped({C - c1, src.extent(2), src.extent(3)})};
    }
    return {std::move(a), std::move(b)};
}

} // namespace nexus
