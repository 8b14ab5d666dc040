#include <doctest.h>

#include "strans/optimizer.hpp"
#include "oracles.hpp"

using namespace strans;

TEST_SUITE("optimizer") {

TEST_CASE("three updates reproduce the bias-corrected moment recurrence") {
    // nonzero betas so both moments and both corrections are exercised
    Adam<double> opt;
    opt.lr = 0.05;
    opt.beta1 = 0.5;
    opt.beta2 = 0.9;
    opt.eps = 1e-8;

    Tensor<double> w({3}, {1.0, -2.0, 0.5});
    ParamList<double> params;
    params.add("w", w);
    opt.attach(params);

    oracle::AdamTrace ref;
    ref.w = w.values();
    ref.m.assign(3, 0.0);
    ref.v.assign(3, 0.0);

    Rng rng(101);
    for (int step = 0; step < 3; ++step) {
        std::vector<double> g(3);
        for (auto& v : g) v = rng.normal();
        params.items[0].tensor.accumulate_grad(g);
        opt.step(params);
        oracle::adam_step(ref, g, opt.lr, opt.beta1, opt.beta2, opt.eps);
        for (index_t i = 0; i < 3; ++i)
            CHECK(params.items[0].tensor.values()[i] ==
                  doctest::Approx(ref.w[i]).epsilon(1e-14));
    }
    CHECK(opt.state.t == 3);
}

TEST_CASE("gradient descent on a parabola actually descends") {
    // minimize f(w) = w^2 by feeding its analytic gradient
    Adam<double> opt;
    opt.lr = 0.1;
    opt.beta1 = 0.0;
    opt.beta2 = 0.99;
    Tensor<double> w({1}, {3.0});
    ParamList<double> params;
    params.add("w", w);
    opt.attach(params);
    for (int i = 0; i < 50; ++i) {
        params.items[0].tensor.accumulate_grad({2.0 * params.items[0].tensor.values()[0]});
        opt.step(params);
    }
    CHECK(std::abs(params.items[0].tensor.values()[0]) < 0.5);
}

TEST_CASE("parameters without an accumulated gradient stay untouched") {
    Adam<double> opt;
    Tensor<double> a({2}, {1.0, 2.0});
    Tensor<double> b({2}, {3.0, 4.0});
    ParamList<double> params;
    params.add("a", a);
    params.add("b", b);
    opt.attach(params);
    params.items[0].tensor.accumulate_grad({1.0, 1.0});
    opt.step(params);
    CHECK(params.items[0].tensor.values()[0] < 1.0);
    CHECK(params.items[1].tensor.values() == std::vector<double>{3.0, 4.0});
    // the consumed gradient is cleared for the next accumulation
    CHECK_FALSE(params.items[0].tensor.has_grad());
}

TEST_CASE("sign-like first step: beta1=0 makes the update magnitude the rate") {
    // after one step from zero state, |dw| = lr * |g| / (|g| + eps): for any
    // gradient far above eps the step size is the learning rate itself. This
    // is what makes runtime weight scaling shrink effective steps linearly.
    Adam<double> opt;
    opt.lr = 0.01;
    opt.beta1 = 0.0;
    opt.beta2 = 0.99;
    for (double g : {1e-3, 0.1, 5.0, -42.0}) {
        Tensor<double> w({1}, {0.0});
        ParamList<double> params;
        params.add("w", w);
        opt.attach(params);
        params.items[0].tensor.accumulate_grad({g});
        opt.step(params);
        const double dw = params.items[0].tensor.values()[0];
        CHECK(std::abs(dw) == doctest::Approx(opt.lr).epsilon(1e-4));
        CHECK(dw * g < 0);  // moves against the gradient
    }
}

TEST_CASE("non-trainable entries are excluded from updates and state") {
    Adam<double> opt;
    Tensor<double> w({2}, {1.0, 1.0});
    Tensor<double> buf({2}, {5.0, 5.0});
    ParamList<double> params;
    params.add("w", w);
    params.add("buf", buf, /*trainable=*/false);
    opt.attach(params);
    CHECK(opt.state.m[1].empty());  // no moments allocated for buffers
    params.items[0].tensor.accumulate_grad({1.0, -1.0});
    opt.step(params);
    CHECK(params.items[1].tensor.values() == std::vector<double>{5.0, 5.0});
}

TEST_CASE("stepping an unattached optimizer is an error") {
    Adam<double> opt;
    Tensor<double> w({1}, {1.0});
    ParamList<double> params;
    params.add("w", w);
    CHECK_THROWS_AS(opt.step(params), Error);
}

TEST_CASE("zero_grad clears accumulated gradients across the list") {
    Adam<double> opt;
    Tensor<double> w({2}, {1.0, 2.0});
    ParamList<double> params;
    params.add("w", w);
    opt.attach(params);
    params.items[0].tensor.accumulate_grad({1.0, 1.0});
    CHECK(params.items[0].tensor.has_grad());
    opt.zero_grad(params);
    CHECK_FALSE(params.items[0].tensor.has_grad());
}

}  // TEST_SUITE
