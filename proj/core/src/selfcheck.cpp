#include "nexus/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "nexus/layers.hpp"
#include "nexus/loss.hpp"
#include "nexus/metrics.hpp"
#include "nexus/model.hpp"
#include "nexus/morphology.hpp"
#include "nexus/rng.hpp"
#include "nexus/tensor.hpp"

namespace nexus::selfcheck {

namespace {

constexpr double kTol = 1e-4;
constexpr double kStep = 1e-5;

bool close_rel(double a, double b, double tol) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) <= tol * scale;
}

/// Central finite difference of loss() w.r.t. t[i] against analytic[i],
/// for every element of t.
bool fd_matches(Tensor& t, const Tensor& analytic, const std::function<double()>& loss) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + kStep;
        const double up = loss();
        t[i] = keep - kStep;
        const double down = loss();
        t[i] = keep;
        const double fd = (up - down) / (2.0 * kStep);
        if (!close_rel(fd, analytic[i], kTol)) return false;
    }
    return true;
}

bool check_conv_grad() {
    Rng rng(11);
    ConvLayer conv(2, 3, 3);
    conv.init_gaussian(rng, 0.5);
    Tensor x({2, 2, 5, 5});
    x.gaussian_fill(rng, 1.0);

    auto loss = [&] { return conv.forward({&x}, Mode::train, nullptr).sum(); };
    loss();
    Tensor ones({2, 3, 3, 3}, 1.0);
    const Tensor gin = conv.backward(ones)[0];
    return fd_matches(x, gin, loss) && fd_matches(conv.kernels(), conv.kernel_grads(), loss) &&
           fd_matches(conv.biases(), conv.bias_grads(), loss);
}

bool check_dense_grad() {
    Rng rng(12);
    DenseLayer dense(6, 4);
    dense.init_gaussian(rng, 0.5);
    Tensor x({3, 6});
    x.gaussian_fill(rng, 1.0);
    auto loss = [&] { return dense.forward({&x}, Mode::train, nullptr).sum(); };
    loss();
    Tensor ones({3, 4}, 1.0);
    const Tensor gin = dense.backward(ones)[0];
    return fd_matches(x, gin, loss) && fd_matches(dense.weights(), dense.weight_grads(), loss) &&
           fd_matches(dense.biases(), dense.bias_grads(), loss);
}

bool check_bn_grad() {
    Rng rng(13);
    BatchNormLayer bn(3);
    Tensor x({4, 3, 2, 2});
    x.gaussian_fill(rng, 2.0);
    auto loss = [&] {
        // Running-stat updates do not feed back into the train-mode output.
        Tensor out = bn.forward({&x}, Mode::train, nullptr);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * out[i];
        return 0.5 * s;
    };
    Tensor out = bn.forward({&x}, Mode::train, nullptr);
    const Tensor gin = bn.backward(out)[0]; // dL/dy = y for L = 0.5*sum(y^2)
    return fd_matches(x, gin, loss);
}

bool check_relu_pool_maxout_grad() {
    Rng rng(14);
    Tensor x({2, 4, 4, 4});
    x.gaussian_fill(rng, 1.0);

    ReluLayer relu_l;
    auto relu_loss = [&] { return relu_l.forward({&x}, Mode::train, nullptr).sum(); };
    relu_loss();
    Tensor ones = Tensor({2, 4, 4, 4}, 1.0);
    if (!fd_matches(x, relu_l.backward(ones)[0], relu_loss)) return false;

    PoolLayer pool(2, 2);
    auto pool_loss = [&] { return pool.forward({&x}, Mode::train, nullptr).sum(); };
    pool_loss();
    Tensor pones({2, 4, 2, 2}, 1.0);
    if (!fd_matches(x, pool.backward(pones)[0], pool_loss)) return false;

    MaxoutLayer mx(2);
    auto mx_loss = [&] { return mx.forward({&x}, Mode::train, nullptr).sum(); };
    mx_loss();
    Tensor mones({2, 2, 4, 4}, 1.0);
    return fd_matches(x, mx.backward(mones)[0], mx_loss);
}

bool check_softmax_nll_grad() {
    Rng rng(15);
    Tensor logits({3, 5});
    logits.gaussian_fill(rng, 1.5);
    const std::vector<int> targets = {0, 3, 2};
    LossConfig cfg{{2.0, 1.0, 1.0, 0.5, 1.0}};
    auto loss = [&] { return nll_loss(softmax(logits), targets, cfg).loss; };
    SoftmaxLayer sm;
    const Tensor probs = sm.forward({&logits}, Mode::train, nullptr);
    const LossResult res = nll_loss(probs, targets, cfg);
    return fd_matches(logits, res.grad_logits, loss);
}

bool check_softmax_contract() {
    Rng rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits({7});
        logits.gaussian_fill(rng, 10.0);
        const Tensor p = softmax(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!(p[i] > 0.0 && p[i] < 1.0)) return false;
            sum += p[i];
        }
        if (std::abs(sum - 1.0) > 1e-9) return false;
    }
    Tensor extreme({2});
    extreme[0] = 1000.0;
    extreme[1] = 0.0;
    const Tensor p = softmax(extreme);
    return std::isfinite(p[0]) && p[0] > 0.999999 && p[1] < 1e-6;
}

bool check_dimension_contracts(std::ostream& out) {
    bool ok = true;
    for (Arch arch : all_archs()) {
        Rng rng(1);
        NexusModel m = build_model(arch, ModelConfig{}, rng);
        const DimContract c = m.check_dims();
        const bool good = c.flat_features == 1152;
        out << "  " << arch_name(arch) << ": flat features " << c.flat_features
            << (good ? "" : " (expected 1152)") << "\n";
        ok = ok && good;
    }
    return ok;
}

bool check_morphology() {
    // isolated pixel removed by opening
    morph::Mask m(9 * 9, 0);
    m[4 * 9 + 4] = 1;
    morph::Mask opened = morph::open(m, 9, 9);
    for (std::uint8_t v : opened)
        if (v) return false;

    // single-pixel hole filled by closing
    morph::Mask holed(9 * 9, 0);
    for (std::size_t r = 2; r < 7; ++r)
        for (std::size_t c = 2; c < 7; ++c) holed[r * 9 + c] = 1;
    holed[4 * 9 + 4] = 0;
    morph::Mask closed = morph::close(holed, 9, 9);
    for (std::size_t r = 2; r < 7; ++r)
        for (std::size_t c = 2; c < 7; ++c)
            if (!closed[r * 9 + c]) return false;

    // solid block unchanged through open + close
    morph::Mask block(14 * 14, 0);
    for (std::size_t r = 2; r < 12; ++r)
        for (std::size_t c = 2; c < 12; ++c) block[r * 14 + c] = 1;
    morph::Mask cleaned = morph::close(morph::open(block, 14, 14), 14, 14);
    return cleaned == block;
}

bool check_metric_identity() {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        LabelMap pred(1, 16, 16), truth(1, 16, 16);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            pred.labels[i] = static_cast<std::uint8_t>(rng.below(5));
            truth.labels[i] = static_cast<std::uint8_t>(rng.below(5));
        }
        const SegReport rep = evaluate(pred, truth);
        for (const RegionSpec& spec : eval_regions()) {
            std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
            for (std::size_t i = 0; i < pred.size(); ++i) {
                const bool l = spec.contains(pred.labels[i]);
                const bool g = spec.contains(truth.labels[i]);
                tp += l && g;
                fp += l && !g;
                fn += !l && g;
                tn += !l && !g;
            }
            const RegionReport& r = rep.region(spec.name);
            if (r.tp != tp || r.fp != fp || r.tn != tn || r.fn != fn) return false;
            if (tp + fn > 0) {
                const double dice =
                    2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
                if (std::abs(dice - r.dice) > 1e-12) return false;
            }
        }
    }
    return true;
}

bool check_tensor_rng() {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i)
        if (a.next_u64() != b.next_u64()) return false;

    Tensor t({3, 4, 5});
    Rng rng(9);
    t.gaussian_fill(rng, 1.0);
    std::stringstream buf;
    t.write(buf);
    return Tensor::read(buf) == t;
}

} // namespace

bool run_all(std::ostream& out) {
    bool ok = true;
    auto step = [&](const char* name, bool passed) {
        out << (passed ? "[ok]   " : "[FAIL] ") << name << "\n";
        ok = ok && passed;
    };
    step("tensor serialization + rng determinism", check_tensor_rng());
    out << "dimension contracts:\n";
    step("dimension contracts (all architectures)", check_dimension_contracts(out));
    step("conv gradients vs finite differences", check_conv_grad());
    step("dense gradients vs finite differences", check_dense_grad());
    step("batch-norm gradients vs finite differences", check_bn_grad());
    step("relu/pool/maxout gradients vs finite differences", check_relu_pool_maxout_grad());
    step("fused softmax+nll gradient vs finite differences", check_softmax_nll_grad());
    step("softmax probability contract", check_softmax_contract());
    step("morphology exactness", check_morphology());
    step("metric identities vs counting oracle", check_metric_identity());
    out << (ok ? "self-check passed\n" : "self-check FAILED\n");
    return ok;
}

} // namespace nexus::selfcheck
