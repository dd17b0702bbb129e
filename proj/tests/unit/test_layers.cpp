#include <doctest.h>

#include <cmath>

#include "../common/gradsuite.hpp"
#include "../common/oracles.hpp"
#include "nexus/error.hpp"
#include "nexus/layers.hpp"
#include "nexus/rng.hpp"

using namespace nexus;

TEST_CASE("conv forward matches the nested-loop correlation oracle") {
    // 3x3 input, one 2x2 kernel of ones, bias 0
    ConvLayer conv(1, 1, 2);
    conv.kernels().fill(1.0);
    Tensor in({1, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) in[i] = static_cast<double>(i + 1);
    const Tensor out = conv_forward(conv, in);
    CHECK(out.shape() == Shape{1, 2, 2});
    CHECK(out[0] == 12);
    CHECK(out[1] == 16);
    CHECK(out[2] == 24);
    CHECK(out[3] == 28);

    // random cases against the oracle
    Rng rng(1);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t R = 1 + rng.below(3), A = 1 + rng.below(4), k = 1 + rng.below(4);
        const std::size_t S = k + rng.below(5);
        ConvLayer c(R, A, k);
        c.init_gaussian(rng, 1.0);
        c.biases().gaussian_fill(rng, 0.5);
        Tensor x({R, S, S});
        x.gaussian_fill(rng, 1.0);
        const Tensor got = conv_forward(c, x);
        const Tensor want = testutil::naive_correlate(x, c.kernels(), c.biases());
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv identity kernel and bias-only cases") {
    ConvLayer ident(1, 1, 1);
    ident.kernels().fill(1.0);
    Tensor in({1, 4, 4});
    Rng rng(3);
    in.gaussian_fill(rng, 1.0);
    const Tensor out = conv_forward(ident, in);
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(out[i] == in[i]);

    ConvLayer biased(2, 3, 3);
    biased.kernels().zero();
    biased.biases().fill(0.2);
    Tensor zeros({2, 5, 5}, 0.0);
    const Tensor bout = conv_forward(biased, zeros);
    for (std::size_t i = 0; i < bout.size(); ++i) CHECK(bout[i] == doctest::Approx(0.2));
}

TEST_CASE("conv shape errors and state errors") {
    ConvLayer conv(1, 1, 5);
    Tensor small({1, 3, 3});
    CHECK_THROWS_AS(conv_forward(conv, small), ShapeError);

    ConvLayer fresh(1, 1, 3);
    Tensor g({1, 2, 2});
    CHECK_THROWS_AS(fresh.backward(g), StateError);

    Tensor wrong_planes({2, 7, 7});
    CHECK_THROWS_AS(conv_forward(conv, wrong_planes), ShapeError);
}

TEST_CASE("conv backward single-output and zero-grad cases") {
    // single output element: kernel gradient equals the input window
    ConvLayer conv(1, 1, 3);
    Rng rng(5);
    conv.init_gaussian(rng, 1.0);
    Tensor x({1, 3, 3});
    x.gaussian_fill(rng, 1.0);
    conv.forward({&x}, Mode::train, nullptr);
    Tensor one({1, 1, 1}, 1.0);
    conv.backward(one);
    for (std::size_t i = 0; i < 9; ++i)
        CHECK(conv.kernel_grads()[i] == doctest::Approx(x[i]).epsilon(1e-12));

    Tensor zero({1, 1, 1}, 0.0);
    const Tensor gin = conv.backward(zero)[0];
    for (std::size_t i = 0; i < gin.size(); ++i) CHECK(gin[i] == 0.0);
    for (std::size_t i = 0; i < 9; ++i) CHECK(conv.kernel_grads()[i] == 0.0);
}

TEST_CASE("maxpool forward semantics") {
    PoolLayer p22(2, 2);
    Tensor in({1, 2, 2});
    in[0] = 1;
    in[1] = 2;
    in[2] = 3;
    in[3] = 4;
    const Tensor out = maxpool_forward(p22, in);
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == 4);

    // output extent floor((S-p)/s)+1
    PoolLayer p(2, 2);
    Tensor in4({1, 4, 4}, 0.0);
    CHECK(maxpool_forward(p, in4).shape() == Shape{1, 2, 2});

    Tensor constant({3, 5, 5}, 2.5);
    PoolLayer p31(3, 1);
    const Tensor cout = maxpool_forward(p31, constant);
    for (std::size_t i = 0; i < cout.size(); ++i) CHECK(cout[i] == 2.5);

    CHECK_THROWS_AS(maxpool_forward(p31, Tensor({1, 2, 2})), ShapeError);

    Rng rng(8);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t p_ = 1 + rng.below(3), s_ = 1 + rng.below(2);
        const std::size_t S = p_ + rng.below(5), C = 1 + rng.below(3);
        Tensor x({C, S, S});
        x.gaussian_fill(rng, 1.0);
        PoolLayer layer(p_, s_);
        const Tensor got = maxpool_forward(layer, x);
        const Tensor want = testutil::naive_maxpool(x, p_, s_);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }
}

TEST_CASE("maxpool backward routing and tie rule") {
    PoolLayer pool(2, 2);
    Tensor in({1, 2, 2});
    in[0] = 1;
    in[1] = 5;
    in[2] = 3;
    in[3] = 4;
    pool.forward({&in}, Mode::train, nullptr);
    Tensor g({1, 1, 1}, 2.0);
    const Tensor gin = pool.backward(g)[0];
    CHECK(gin[0] == 0);
    CHECK(gin[1] == 2.0); // the distinct max
    CHECK(gin[2] == 0);
    CHECK(gin[3] == 0);

    // all-equal window: the first cell in row-major order wins
    Tensor flat({1, 2, 2}, 7.0);
    pool.forward({&flat}, Mode::train, nullptr);
    const Tensor gflat = pool.backward(g)[0];
    CHECK(gflat[0] == 2.0);
    CHECK(gflat[1] == 0);
    CHECK(gflat[2] == 0);
    CHECK(gflat[3] == 0);

    CHECK_THROWS_AS(PoolLayer(2, 2).backward(g), StateError);
}

TEST_CASE("relu semantics") {
    Tensor in({3});
    in[0] = -1;
    in[1] = 0;
    in[2] = 2;
    const Tensor out = relu(in);
    CHECK(out[0] == 0);
    CHECK(out[1] == 0);
    CHECK(out[2] == 2);

    // all-negative input: zero output and zero gradient
    ReluLayer layer;
    Tensor neg({1, 1, 2, 2}, -3.0);
    const Tensor nout = layer.forward({&neg}, Mode::train, nullptr);
    for (std::size_t i = 0; i < nout.size(); ++i) CHECK(nout[i] == 0.0);
    Tensor ones({1, 1, 2, 2}, 1.0);
    const Tensor gin = layer.backward(ones)[0];
    for (std::size_t i = 0; i < gin.size(); ++i) CHECK(gin[i] == 0.0);
}

TEST_CASE("maxout matches the direct loop oracle") {
    // two channels, k=2
    Tensor two({2, 1, 1});
    two[0] = 1;
    two[1] = 3;
    const Tensor m = maxout(two, 2);
    CHECK(m.shape() == Shape{1, 1, 1});
    CHECK(m[0] == 3);

    // k=1 is the identity
    Rng rng(4);
    Tensor x({4, 3, 3});
    x.gaussian_fill(rng, 1.0);
    const Tensor id = maxout(x, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(id[i] == x[i]);

    // random four-channel pairs against the oracle, exact
    for (int trial = 0; trial < 10; ++trial) {
        Tensor r({4, 4, 4});
        r.gaussian_fill(rng, 1.0);
        const Tensor got = maxout(r, 2);
        const Tensor want = testutil::naive_maxout(r, 2);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
    }

    CHECK_THROWS_AS(maxout(x, 3), ShapeError);
}

TEST_CASE("batchnorm standardizes per channel in train mode") {
    Rng rng(6);
    BatchNormLayer bn(2);
    // per-channel mean 5, variance 4 -> standardized to (0, 1) pre scale/shift
    Tensor x({8, 2, 3, 3});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 5.0 + 2.0 * rng.gaussian(1.0);
    const Tensor out = bn.forward({&x}, Mode::train, nullptr); // scale 1, shift 0
    const std::size_t HW = 9, B = 8;
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) mean += out[(b * 2 + c) * HW + i];
        mean /= static_cast<double>(B * HW);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
                const double d = out[(b * 2 + c) * HW + i] - mean;
                var += d * d;
            }
        var /= static_cast<double>(B * HW);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batchnorm identity on standardized input and guards") {
    // an already-standardized batch passes through scale=1, shift=0
    Rng rng(9);
    BatchNormLayer bn(1);
    Tensor x({4, 1, 4, 4});
    x.gaussian_fill(rng, 1.0);
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean += x[i];
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - mean) / std::sqrt(var);
    const Tensor out = bn.forward({&x}, Mode::train, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-6));

    Tensor single({1, 1, 2, 2});
    CHECK_THROWS_AS(bn.forward({&single}, Mode::train, nullptr), ParamError);
    CHECK_THROWS_AS(BatchNormLayer(1).backward(out), StateError);
}

TEST_CASE("batchnorm infer mode uses running stats") {
    Rng rng(10);
    BatchNormLayer bn(1, 1e-9, 0.0); // momentum 0: running stats = last batch
    Tensor x({4, 1, 2, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 + rng.gaussian(2.0);
    const Tensor trained = bn.forward({&x}, Mode::train, nullptr);
    const Tensor inferred = bn.forward({&x}, Mode::infer, nullptr);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(inferred[i] == doctest::Approx(trained[i]).epsilon(1e-9));
}

TEST_CASE("dropout semantics") {
    Rng rng(11);
    Tensor x({1, 1, 4, 4}, 1.0);

    // keep probability 1 is the identity in both modes
    DropoutLayer full(1.0);
    const Tensor t = full.forward({&x}, Mode::train, &rng);
    const Tensor i = full.forward({&x}, Mode::infer, nullptr);
    for (std::size_t j = 0; j < x.size(); ++j) {
        CHECK(t[j] == 1.0);
        CHECK(i[j] == 1.0);
    }

    // masked positions have zero gradient; kept ones are scaled by 1/p
    DropoutLayer half(0.5);
    const Tensor out = half.forward({&x}, Mode::train, &rng);
    Tensor ones(x.shape(), 1.0);
    const Tensor gin = half.backward(ones)[0];
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (out[j] == 0.0)
            CHECK(gin[j] == 0.0);
        else
            CHECK(gin[j] == doctest::Approx(2.0));
    }

    CHECK_THROWS_AS(DropoutLayer(0.0), ParamError);
    CHECK_THROWS_AS(DropoutLayer(1.5), ParamError);
}

TEST_CASE("dropout expectation matches infer output" * doctest::timeout(120)) {
    // Monte-Carlo: train-mode mean within 2% of the infer-mode value
    Rng rng(12);
    DropoutLayer drop(0.5);
    Tensor unit({1, 1, 10, 10}, 1.0);
    const std::size_t trials = 100000 / unit.size(); // 1e5 masked elements total
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const Tensor out = drop.forward({&unit}, Mode::train, &rng);
        for (std::size_t j = 0; j < out.size(); ++j) {
            sum += out[j];
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    CHECK(std::abs(mean - 1.0) < 0.02);
}

TEST_CASE("dense layer semantics") {
    // identity weights, zero bias
    DenseLayer ident(3, 3);
    for (std::size_t i = 0; i < 3; ++i) ident.weights()[i * 3 + i] = 1.0;
    Tensor x({3});
    x[0] = 4;
    x[1] = -1;
    x[2] = 0.5;
    const Tensor out = ident.forward({&x}, Mode::infer, nullptr);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == x[i]);

    // the reference classifier geometry: 1152 features to 5 classes
    DenseLayer cls(1152, 5);
    Tensor feats({1152}, 0.1);
    CHECK(cls.forward({&feats}, Mode::infer, nullptr).shape() == Shape{5});

    Tensor wrong({7});
    CHECK_THROWS_AS(cls.forward({&wrong}, Mode::infer, nullptr), ShapeError);
}

TEST_CASE("softmax contracts") {
    Tensor equal({5}, 3.7);
    const Tensor p = softmax(equal);
    for (std::size_t i = 0; i < 5; ++i) CHECK(p[i] == doctest::Approx(0.2).epsilon(1e-12));

    Tensor extreme({2});
    extreme[0] = 1000.0;
    extreme[1] = 0.0;
    const Tensor q = softmax(extreme);
    CHECK(std::isfinite(q[0]));
    CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(q[1] == doctest::Approx(0.0).epsilon(1e-9));

    Rng rng(13);
    for (int trial = 0; trial < 25; ++trial) {
        Tensor logits({2 + rng.below(9)});
        logits.gaussian_fill(rng, 5.0);
        const Tensor probs = softmax(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            CHECK(probs[i] > 0.0);
            CHECK(probs[i] < 1.0);
            sum += probs[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("channel concatenation and split") {
    Rng rng(14);
    Tensor a({5, 15, 15});
    Tensor b({4, 15, 15});
    a.gaussian_fill(rng, 1.0);
    b.gaussian_fill(rng, 1.0);
    const Tensor joined = concat_channels(a, b);
    CHECK(joined.shape() == Shape{9, 15, 15});

    const auto [back_a, back_b] = split_channels(joined, 5);
    CHECK(back_a == a);
    CHECK(back_b == b);

    // degenerate concat of a single tensor is the identity
    ConcatLayer single;
    const Tensor sa = a.reshaped({1, 5, 15, 15});
    const Tensor same = single.forward({&sa}, Mode::infer, nullptr);
    CHECK(same == sa);

    Tensor mismatched({2, 7, 7});
    CHECK_THROWS_AS(concat_channels(a, mismatched), ShapeError);
}

TEST_CASE("gradient suite: every layer vs finite differences" * doctest::timeout(120)) {
    const auto res = testutil::run_gradient_suite(20);
    INFO("worst relative error ", res.worst_rel, " first failure: ", res.first_failure);
    CHECK(res.pass);
    CHECK(res.seconds < 120.0);
}
