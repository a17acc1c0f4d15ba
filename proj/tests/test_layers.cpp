#include "doctest.h"

#include <mrgf/layers.hpp>

#include <cmath>
#include <vector>

using namespace mrgf;

namespace {

template <class S>
Tensor<S> rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    auto t = Tensor<S>::zeros(shape);
    for (auto& v : t.v()) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <class S>
BatchNormState<S> fresh_bn(int64_t c) {
    BatchNormState<S> bn;
    bn.gamma = Tensor<S>::ones({c});
    bn.beta = Tensor<S>::zeros({c});
    bn.mov_mean = Tensor<S>::zeros({c});
    bn.mov_var = Tensor<S>::ones({c});
    return bn;
}

}  // namespace

TEST_CASE("dense: identity weights, worked example, shape errors") {
    Tape<float> tp;
    auto x = Tensor<float>::from({2, 2}, {1, 2, 3, 4});
    auto I = Tensor<float>::from({2, 2}, {1, 0, 0, 1});
    auto zero_b = Tensor<float>::zeros({2});
    CHECK(dense(tp, x, I, zero_b).v() == x.v());

    auto x2 = Tensor<float>::from({1, 2}, {1, 2});
    auto w = Tensor<float>::from({2, 2}, {1, 1, 0, 1});  // rows are output units
    auto b = Tensor<float>::from({2}, {1, 0});
    CHECK(dense(tp, x2, w, b).v() == std::vector<float>{4, 2});

    CHECK_THROWS_AS(dense(tp, x2, Tensor<float>::ones({2, 3}), b), TensorError);
    CHECK_THROWS_AS(dense(tp, Tensor<float>::ones({2, 2, 2}), w, b), TensorError);
}

TEST_CASE("dense gradient matches finite differences") {
    Rng rng(1);
    auto x = rand_tensor<double>({3, 4}, rng);
    auto w = rand_tensor<double>({2, 4}, rng);
    auto b = rand_tensor<double>({2}, rng);
    auto err_w = grad_check(
        [&](Tape<double>& t, const Tensor<double>& v) {
            return mean_all(t, square(t, dense(t, x, v, b)));
        },
        w);
    auto err_b = grad_check(
        [&](Tape<double>& t, const Tensor<double>& v) {
            return mean_all(t, square(t, dense(t, x, w, v)));
        },
        b);
    CHECK(err_w < 1e-4);
    CHECK(err_b < 1e-4);
}

TEST_CASE("conv2d wrapper: bias broadcast and stride-2 shape") {
    Tape<float> tp;
    Rng rng(9);
    auto x = rand_tensor<float>({1, 2, 6, 6}, rng);
    auto w = Tensor<float>::zeros({3, 2, 3, 3});
    auto b = Tensor<float>::from({3}, {1, 2, 3});
    auto y = conv2d(tp, x, w, b, 1, Pad::same);
    CHECK(y.shape() == Shape{1, 3, 6, 6});
    // zero weights -> output is the bias per channel
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 36; ++i) CHECK(y.v()[size_t(c * 36 + i)] == float(c + 1));

    auto y2 = conv2d(tp, x, Tensor<float>::ones({4, 2, 5, 5}), Tensor<float>(), 2, Pad::same);
    CHECK(y2.shape() == Shape{1, 4, 3, 3});
}

TEST_CASE("conv2d_transpose wrapper doubles spatial size with bias") {
    Tape<float> tp;
    Rng rng(10);
    auto x = rand_tensor<float>({1, 3, 8, 8}, rng);
    auto w = rand_tensor<float>({3, 2, 5, 5}, rng);
    auto b = Tensor<float>::zeros({2});
    CHECK(conv2d_transpose(tp, x, w, b, 2).shape() == Shape{1, 2, 16, 16});
}

TEST_CASE("batchnorm train: normalizes to zero mean unit variance before gamma/beta") {
    Tape<float> tp;
    Rng rng(21);
    auto x = rand_tensor<float>({4, 3, 5, 5}, rng, -2.0, 5.0);
    auto bn = fresh_bn<float>(3);
    auto y = batchnorm(tp, x, bn, true);
    const int64_t per = 4 * 5 * 5;
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 25; ++i) {
                const double v = y.v()[size_t((n * 3 + c) * 25 + i)];
                s += v;
                s2 += v * v;
            }
        const double mean = s / double(per);
        const double var = s2 / double(per) - mean * mean;
        CHECK(std::abs(mean) < 1e-5);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm: constant channel collapses to beta; batch of 1 rejected") {
    Tape<float> tp;
    auto x = Tensor<float>::full({2, 1, 2, 2}, 3.7f);
    auto bn = fresh_bn<float>(1);
    bn.beta.v()[0] = 0.25f;
    auto y = batchnorm(tp, x, bn, true);
    for (float v : y.v()) CHECK(v == doctest::Approx(0.25f));

    auto one = Tensor<float>::ones({1, 1, 2, 2});
    CHECK_THROWS_AS(batchnorm(tp, one, bn, true), TensorError);
}

TEST_CASE("batchnorm eval uses moving statistics, not batch values") {
    Tape<float> tp;
    auto bn = fresh_bn<float>(1);
    bn.mov_mean.v()[0] = 2.0f;
    bn.mov_var.v()[0] = 4.0f;
    auto x = Tensor<float>::full({1, 1, 1, 2}, 4.0f);
    auto y = batchnorm(tp, x, bn, false);
    // (4-2)/sqrt(4+1e-5) ~= 1
    CHECK(y.v()[0] == doctest::Approx(1.0f).epsilon(1e-4));
}

TEST_CASE("batchnorm updates moving stats with momentum 0.9 from batch statistics") {
    Tape<float> tp;
    auto bn = fresh_bn<float>(1);
    // batch with mean 1, population variance 1 (values 0 and 2)
    auto x = Tensor<float>::from({2, 1, 1, 1}, {0, 2});
    (void)batchnorm(tp, x, bn, true);
    CHECK(bn.mov_mean.v()[0] == doctest::Approx(0.1f));        // 0.9*0 + 0.1*1
    CHECK(bn.mov_var.v()[0] == doctest::Approx(1.0f));         // 0.9*1 + 0.1*1
    (void)batchnorm(tp, x, bn, true);
    CHECK(bn.mov_mean.v()[0] == doctest::Approx(0.19f));       // 0.9*0.1 + 0.1
}

TEST_CASE("batchnorm gradient matches finite differences") {
    // Probe with a random linear functional: the squared norm of a normalized
    // output is constant by construction, which would leave only FD noise.
    Rng rng(31);
    auto x = rand_tensor<double>({3, 2, 4, 4}, rng);
    auto probe = rand_tensor<double>({3, 2, 4, 4}, rng);
    auto err = grad_check(
        [&](Tape<double>& t, const Tensor<double>& v) {
            auto bn = fresh_bn<double>(2);
            return mean_all(t, mul(t, batchnorm(t, v, bn, true), probe));
        },
        x);
    CHECK(err < 1e-4);

    auto g = rand_tensor<double>({2}, rng, 0.5, 1.5);
    auto err_g = grad_check(
        [&](Tape<double>& t, const Tensor<double>& v) {
            auto bn = fresh_bn<double>(2);
            bn.gamma = v;
            bn.gamma.set_requires_grad();
            return mean_all(t, mul(t, batchnorm(t, x, bn, true), probe));
        },
        g);
    CHECK(err_g < 1e-4);
}

TEST_CASE("pixelnorm: constant channels, zero input, worked pair") {
    Tape<float> tp;
    auto x = Tensor<float>::full({1, 4, 2, 2}, 2.0f);
    auto xn = pixelnorm(tp, x);  // named: unrecorded temporaries die with their handle
    for (float v : xn.v()) CHECK(std::abs(v - 1.0f) < 1e-6f);

    auto z = Tensor<float>::zeros({1, 3, 2, 2});
    auto zn = pixelnorm(tp, z);
    for (float v : zn.v()) CHECK(v == 0.0f);

    auto p = Tensor<float>::from({1, 2, 1, 1}, {3, 4});
    auto y = pixelnorm(tp, p).v();
    CHECK(y[0] == doctest::Approx(0.848528f).epsilon(1e-5));
    CHECK(y[1] == doctest::Approx(1.131371f).epsilon(1e-5));
}

TEST_CASE("pixelnorm output RMS is pinned to 1 for non-degenerate inputs") {
    Rng rng(77);
    Tape<float> tp;
    auto x = rand_tensor<float>({2, 8, 3, 3}, rng, -2.0, 2.0);
    // inflate away from zero so channel RMS >= 1e-2 everywhere
    for (auto& v : x.v()) v += (v >= 0 ? 0.5f : -0.5f);
    auto y = pixelnorm(tp, x);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t i = 0; i < 9; ++i) {
            double s = 0;
            for (int64_t c = 0; c < 8; ++c) s += double(y.v()[size_t((b * 8 + c) * 9 + i)]) *
                                                 double(y.v()[size_t((b * 8 + c) * 9 + i)]);
            const double rms = std::sqrt(s / 8.0);
            CHECK(rms <= 1.0 + 1e-6);
            CHECK(rms >= 1.0 - 1e-5);
        }
}

TEST_CASE("pixelnorm gradient matches finite differences") {
    // Linear probe for the same reason as batchnorm: channel RMS is pinned.
    Rng rng(78);
    auto x = rand_tensor<double>({2, 3, 2, 2}, rng, 0.5, 1.5);
    auto probe = rand_tensor<double>({2, 3, 2, 2}, rng);
    auto err = grad_check(
        [&](Tape<double>& t, const Tensor<double>& v) {
            return mean_all(t, mul(t, pixelnorm(t, v), probe));
        },
        x);
    CHECK(err < 1e-4);
}

TEST_CASE("minibatch_stddev: identical samples give a zero map, {0,2} gives 1") {
    Tape<float> tp;
    Rng rng(90);
    auto one = rand_tensor<float>({1, 2, 2, 2}, rng);
    auto two = Tensor<float>::from({2, 2, 2, 2}, [&] {
        std::vector<float> v(one.v());
        v.insert(v.end(), one.v().begin(), one.v().end());
        return v;
    }());
    auto y = minibatch_stddev(tp, two);
    CHECK(y.shape() == Shape{2, 3, 2, 2});
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 4; ++i) CHECK(y.v()[size_t((b * 3 + 2) * 4 + i)] == 0.0f);

    std::vector<float> alt(16);
    for (int i = 0; i < 8; ++i) alt[size_t(i)] = 0.0f;
    for (int i = 8; i < 16; ++i) alt[size_t(i)] = 2.0f;
    auto z = minibatch_stddev(tp, Tensor<float>::from({2, 2, 2, 2}, std::move(alt)));
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 4; ++i)
            CHECK(z.v()[size_t((b * 3 + 2) * 4 + i)] == doctest::Approx(1.0f));

    CHECK_THROWS_AS(minibatch_stddev(tp, one), TensorError);
}

TEST_CASE("minibatch_stddev appended channel is constant across the whole batch") {
    Tape<float> tp;
    Rng rng(91);
    auto x = rand_tensor<float>({4, 3, 2, 2}, rng);
    auto y = minibatch_stddev(tp, x);
    const float ref = y.v()[size_t(3 * 4)];
    for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 4; ++i) CHECK(y.v()[size_t((b * 4 + 3) * 4 + i)] == ref);
}

TEST_CASE("minibatch_stddev gradient matches finite differences") {
    Rng rng(92);
    auto x = rand_tensor<double>({3, 2, 2, 2}, rng);
    auto err = grad_check(
        [](Tape<double>& t, const Tensor<double>& v) {
            return mean_all(t, square(t, minibatch_stddev(t, v)));
        },
        x);
    CHECK(err < 1e-4);
}

TEST_CASE("dropout: rate 0 identity, rate bounds, survivor scaling") {
    Tape<float> tp;
    Rng rng(100);
    auto x = Tensor<float>::ones({100, 1000});
    CHECK(dropout(tp, x, 0.0, rng).v() == x.v());
    CHECK_THROWS_AS(dropout(tp, x, 1.0, rng), TensorError);
    CHECK_THROWS_AS(dropout(tp, x, -0.1, rng), TensorError);

    auto y = dropout(tp, x, 0.5, rng);
    double sum = 0;
    int zeros = 0;
    for (float v : y.v()) {
        if (v == 0.0f) ++zeros;
        else CHECK(v == 2.0f);  // inverted scaling
        sum += v;
    }
    const double mean = sum / double(x.size());
    CHECK(std::abs(mean - 1.0) < 0.05);  // survivor mean ~ input mean
    CHECK(zeros > 45000);
    CHECK(zeros < 55000);
}

TEST_CASE("bias-free layers are homogeneous: f(a*x) = a*f(x)") {
    Rng rng(200);
    const double a = 3.25;
    auto x = rand_tensor<double>({2, 4, 4, 4}, rng);
    auto w = rand_tensor<double>({3, 4, 3, 3}, rng);
    auto wt = rand_tensor<double>({4, 2, 5, 5}, rng);
    auto wd = rand_tensor<double>({5, 64}, rng);
    Tape<double> tp;
    auto ax = muls(tp, x, a);

    auto pairs = std::vector<std::pair<Tensor<double>, Tensor<double>>>{
        {conv2d(tp, ax, w, Tensor<double>(), 1), conv2d(tp, x, w, Tensor<double>(), 1)},
        {conv2d_transpose(tp, ax, wt, Tensor<double>(), 2),
         conv2d_transpose(tp, x, wt, Tensor<double>(), 2)},
        {avgpool2(tp, ax), avgpool2(tp, x)},
        {upsample2(tp, ax), upsample2(tp, x)},
        {pixelshuffle(tp, ax, 2), pixelshuffle(tp, x, 2)},
        {dense(tp, reshape(tp, ax, {2, 64}), wd, Tensor<double>()),
         dense(tp, reshape(tp, x, {2, 64}), wd, Tensor<double>())},
    };
    for (auto& [lhs, rhs] : pairs) {
        REQUIRE(lhs.size() == rhs.size());
        for (int64_t i = 0; i < lhs.size(); ++i)
            CHECK(lhs.v()[size_t(i)] ==
                  doctest::Approx(a * rhs.v()[size_t(i)]).epsilon(1e-12));
    }
}

TEST_CASE("apply_act dispatches by name") {
    Tape<float> tp;
    auto x = Tensor<float>::from({2}, {-1, 1});
    CHECK(apply_act(tp, x, Act::none).v() == x.v());
    CHECK(apply_act(tp, x, Act::relu).v() == std::vector<float>{0, 1});
    CHECK(apply_act(tp, x, Act::lrelu).v()[0] == doctest::Approx(-0.2f));
    CHECK(act_name(Act::lrelu) == std::string("LReLU"));
    CHECK(act_name(Act::none) == std::string("-"));
}
