// test_autodiff.cpp — finite-difference oracle for every OpKind, frozen
// close-form cases, and optimizer checks.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lrr/optim.h"
#include "lrr/rng.h"
#include "lrr/tensor.h"

using lrr::OpAttrs;
using lrr::OpKind;
using lrr::Rng;
using DTensor = lrr::Tensor<double>;

namespace {

DTensor rand_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true,
                    double scale = 1.0) {
    DTensor t = DTensor::raw(std::move(shape), requires_grad);
    for (double& v : t.value()) v = rng.uniform(-scale, scale);
    return t;
}

double eval_weighted(OpKind kind, const std::vector<DTensor>& inputs, const OpAttrs& attrs,
                     const std::vector<double>& w) {
    auto out = lrr::forward(kind, inputs, attrs);
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += out.value()[i] * w[i];
    return s;
}

// Central-difference check (h = 1e-5) of d(w·out)/d(input) for every element
// of every requires_grad input. Returns the max relative error.
double fd_check(OpKind kind, std::vector<DTensor> inputs, const OpAttrs& attrs, Rng& rng) {
    auto out = lrr::forward(kind, inputs, attrs);
    std::vector<double> w(static_cast<size_t>(out.numel()));
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    auto loss = lrr::reduce_weighted_sum(out, w);
    lrr::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        analytic.push_back(in.requires_grad() ? in.grad() : std::vector<double>());
    }

    const double h = 1e-5;
    double max_rel = 0;
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        if (!inputs[ii].requires_grad()) continue;
        auto& vals = inputs[ii].value();
        for (size_t j = 0; j < vals.size(); ++j) {
            const double orig = vals[j];
            vals[j] = orig + h;
            const double fp = eval_weighted(kind, inputs, attrs, w);
            vals[j] = orig - h;
            const double fm = eval_weighted(kind, inputs, attrs, w);
            vals[j] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[ii][j];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
        }
    }
    return max_rel;
}

}  // namespace

TEST_CASE("finite differences cover every OpKind") {
    Rng rng(1234);
    constexpr double kTol = 1e-4;

    SUBCASE("matmul, all transpose combinations") {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                OpAttrs at;
                at.trans_a = ta;
                at.trans_b = tb;
                auto a = rand_tensor(ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4}, rng);
                auto b = rand_tensor(tb ? std::vector<int>{5, 4} : std::vector<int>{4, 5}, rng);
                CHECK(fd_check(OpKind::matmul, {a, b}, at, rng) < kTol);
            }
        }
    }
    SUBCASE("add, same shape and trailing-dim bias") {
        CHECK(fd_check(OpKind::add, {rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng)}, {},
                       rng) < kTol);
        CHECK(fd_check(OpKind::add, {rand_tensor({4, 5}, rng), rand_tensor({5}, rng)}, {}, rng) <
              kTol);
    }
    SUBCASE("mul") {
        CHECK(fd_check(OpKind::mul, {rand_tensor({2, 3}, rng), rand_tensor({2, 3}, rng)}, {},
                       rng) < kTol);
    }
    SUBCASE("concat") {
        for (int axis : {0, 1}) {
            OpAttrs at;
            at.axis = axis;
            auto a = rand_tensor(axis == 0 ? std::vector<int>{2, 3} : std::vector<int>{3, 2}, rng);
            auto b = rand_tensor(axis == 0 ? std::vector<int>{4, 3} : std::vector<int>{3, 5}, rng);
            CHECK(fd_check(OpKind::concat, {a, b}, at, rng) < kTol);
        }
        OpAttrs at;
        at.axis = 2;
        CHECK(fd_check(OpKind::concat, {rand_tensor({2, 2, 3}, rng), rand_tensor({2, 2, 4}, rng)},
                       at, rng) < kTol);
    }
    SUBCASE("slice") {
        OpAttrs at;
        at.offsets = {1, 2};
        at.sizes = {2, 3};
        CHECK(fd_check(OpKind::slice, {rand_tensor({4, 6}, rng)}, at, rng) < kTol);
        OpAttrs at3;
        at3.offsets = {0, 1, 1};
        at3.sizes = {2, 2, 3};
        CHECK(fd_check(OpKind::slice, {rand_tensor({2, 4, 5}, rng)}, at3, rng) < kTol);
    }
    SUBCASE("embedding_lookup with repeated ids") {
        OpAttrs at;
        at.ids = {1, 5, 5, 0, 6};
        CHECK(fd_check(OpKind::embedding_lookup, {rand_tensor({7, 4}, rng)}, at, rng) < kTol);
    }
    SUBCASE("softmax, unmasked and masked") {
        CHECK(fd_check(OpKind::softmax, {rand_tensor({3, 5}, rng)}, {}, rng) < kTol);
        OpAttrs at;
        auto mask = std::make_shared<std::vector<uint8_t>>(std::vector<uint8_t>{
            1, 0, 1, 1, 0,
            0, 0, 0, 0, 0,
            1, 1, 1, 1, 1});
        at.mask = mask;
        CHECK(fd_check(OpKind::softmax, {rand_tensor({3, 5}, rng)}, at, rng) < kTol);
    }
    SUBCASE("layer_norm") {
        OpAttrs at;
        at.eps = 1e-5;
        auto x = rand_tensor({3, 6}, rng);
        auto gamma = rand_tensor({6}, rng);
        auto beta = rand_tensor({6}, rng);
        CHECK(fd_check(OpKind::layer_norm, {x, gamma, beta}, at, rng) < kTol);
    }
    SUBCASE("gelu") {
        CHECK(fd_check(OpKind::gelu, {rand_tensor({2, 7}, rng, true, 3.0)}, {}, rng) < kTol);
    }
    SUBCASE("conv2d, strided and padded") {
        for (int stride : {1, 2}) {
            OpAttrs at;
            at.stride = stride;
            at.pad = 1;
            auto x = rand_tensor({2, 6, 6}, rng);
            auto w = rand_tensor({3, 2, 3, 3}, rng);
            auto b = rand_tensor({3}, rng);
            CHECK(fd_check(OpKind::conv2d, {x, w, b}, at, rng) < kTol);
        }
    }
    SUBCASE("avg_pool2d") {
        OpAttrs at;
        at.kernel = 2;
        at.stride = 2;
        CHECK(fd_check(OpKind::avg_pool2d, {rand_tensor({2, 6, 6}, rng)}, at, rng) < kTol);
    }
    SUBCASE("linear, with and without bias") {
        auto x = rand_tensor({3, 4}, rng);
        auto w = rand_tensor({5, 4}, rng);
        auto b = rand_tensor({5}, rng);
        CHECK(fd_check(OpKind::linear, {x, w, b}, {}, rng) < kTol);
        CHECK(fd_check(OpKind::linear, {rand_tensor({3, 4}, rng), rand_tensor({5, 4}, rng)}, {},
                       rng) < kTol);
    }
    SUBCASE("cross_entropy with row mask") {
        OpAttrs at;
        at.targets = {2, 0, 5, 1};
        at.mask = std::make_shared<std::vector<uint8_t>>(std::vector<uint8_t>{1, 0, 1, 1});
        CHECK(fd_check(OpKind::cross_entropy, {rand_tensor({4, 6}, rng)}, at, rng) < kTol);
    }
    SUBCASE("scale") {
        OpAttrs at;
        at.factor = -1.7;
        CHECK(fd_check(OpKind::scale, {rand_tensor({2, 3}, rng)}, at, rng) < kTol);
    }
}

TEST_CASE("two-layer MLP gradients match finite differences") {
    Rng rng(77);
    auto x = rand_tensor({2, 5}, rng);
    auto w1 = rand_tensor({8, 5}, rng);
    auto b1 = rand_tensor({8}, rng);
    auto w2 = rand_tensor({3, 8}, rng);
    auto b2 = rand_tensor({3}, rng);
    std::vector<int> targets = {2, 0};

    auto run = [&]() {
        auto h = lrr::gelu(lrr::linear(x, w1, b1));
        return lrr::cross_entropy(lrr::linear(h, w2, b2), targets);
    };
    auto loss = run();
    lrr::backward(loss);

    std::vector<DTensor> leaves = {x, w1, b1, w2, b2};
    std::vector<std::vector<double>> analytic;
    for (auto& t : leaves) analytic.push_back(t.grad());

    const double h = 1e-5;
    double max_rel = 0;
    for (size_t ii = 0; ii < leaves.size(); ++ii) {
        auto& vals = leaves[ii].value();
        for (size_t j = 0; j < vals.size(); ++j) {
            const double orig = vals[j];
            vals[j] = orig + h;
            const double fp = run().item();
            vals[j] = orig - h;
            const double fm = run().item();
            vals[j] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic[ii][j];
            const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
            max_rel = std::max(max_rel, std::fabs(fd - an) / denom);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("frozen forward values") {
    SUBCASE("softmax of equal logits is uniform") {
        auto y = lrr::softmax(DTensor::from_data({2}, {0.0, 0.0}));
        CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(y.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("matmul by identity is a no-op") {
        Rng rng(5);
        auto a = rand_tensor({3, 3}, rng, false);
        auto eye = DTensor::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        auto out = lrr::matmul(eye, a);
        for (int i = 0; i < 9; ++i) CHECK(out.value()[i] == doctest::Approx(a.value()[i]));
    }
    SUBCASE("layer_norm normalizes each row before affine") {
        Rng rng(6);
        auto x = rand_tensor({4, 16}, rng, false, 5.0);
        auto gamma = DTensor::filled({16}, 1.0);
        auto beta = DTensor::filled({16}, 0.0);
        auto y = lrr::layer_norm(x, gamma, beta, 1e-9);
        for (int r = 0; r < 4; ++r) {
            double mean = 0, var = 0;
            for (int j = 0; j < 16; ++j) mean += y.value()[r * 16 + j];
            mean /= 16;
            for (int j = 0; j < 16; ++j) {
                const double d = y.value()[r * 16 + j] - mean;
                var += d * d;
            }
            var /= 16;
            CHECK(std::fabs(mean) < 1e-6);
            CHECK(std::fabs(var - 1.0) < 1e-6);
        }
    }
    SUBCASE("softmax rows sum to 1 and lie in (0,1)") {
        Rng rng(7);
        auto x = rand_tensor({5, 9}, rng, false, 4.0);
        auto y = lrr::softmax(x);
        for (int r = 0; r < 5; ++r) {
            double s = 0;
            for (int j = 0; j < 9; ++j) {
                const double p = y.value()[r * 9 + j];
                CHECK(p > 0.0);
                CHECK(p < 1.0);
                s += p;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    SUBCASE("cross_entropy equals -log softmax[target]") {
        Rng rng(8);
        auto x = rand_tensor({1, 7}, rng, false, 3.0);
        auto probs = lrr::softmax(x);
        for (int t = 0; t < 7; ++t) {
            auto loss = lrr::cross_entropy(x, {t});
            CHECK(loss.item() >= 0.0);
            CHECK(loss.item() == doctest::Approx(-std::log(probs.value()[t])).epsilon(1e-6));
        }
    }
    SUBCASE("deterministic forward within one build") {
        auto run = [](uint64_t seed) {
            Rng rng(seed);
            auto x = rand_tensor({4, 6}, rng, false);
            auto w = rand_tensor({6, 6}, rng, false);
            auto g = DTensor::filled({6}, 1.0);
            auto b = DTensor::filled({6}, 0.0);
            return lrr::softmax(lrr::layer_norm(lrr::matmul(x, w), g, b)).value();
        };
        auto a = run(42);
        auto b = run(42);
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("frozen backward values") {
    SUBCASE("d sum(x*x) / dx = 2x") {
        auto x = DTensor::from_data({1}, {3.0}, true);
        auto loss = lrr::sum(lrr::mul(x, x));
        lrr::backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
    }
    SUBCASE("cross_entropy grad is softmax minus one-hot") {
        auto logits = DTensor::from_data({1, 2}, {0.0, 0.0}, true);
        auto loss = lrr::cross_entropy(logits, {0});
        CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));
        lrr::backward(loss);
        CHECK(logits.grad()[0] == doctest::Approx(-0.5).epsilon(1e-9));
        CHECK(logits.grad()[1] == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("grads accumulate across reuse of a tensor") {
        auto x = DTensor::from_data({1}, {2.0}, true);
        auto loss = lrr::sum(lrr::add(lrr::mul(x, x), x));
        lrr::backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(5.0));
    }
}

TEST_CASE("engine errors") {
    Rng rng(9);
    SUBCASE("shape mismatch names the op") {
        auto a = rand_tensor({2, 3}, rng);
        auto b = rand_tensor({4, 5}, rng);
        CHECK_THROWS_WITH_AS(lrr::matmul(a, b), doctest::Contains("matmul"), lrr::Error);
        CHECK_THROWS_WITH_AS(lrr::add(a, b), doctest::Contains("add"), lrr::Error);
        CHECK_THROWS_WITH_AS(lrr::mul(a, b), doctest::Contains("mul"), lrr::Error);
    }
    SUBCASE("non-finite input rejected") {
        auto a = DTensor::from_data({2}, {1.0, std::nan("")}, true);
        CHECK_THROWS_AS(lrr::gelu(a), lrr::Error);
        auto b = DTensor::from_data({2}, {1.0, INFINITY});
        CHECK_THROWS_AS(lrr::softmax(b), lrr::Error);
    }
    SUBCASE("backward requires a scalar") {
        auto a = rand_tensor({2, 2}, rng);
        auto y = lrr::gelu(a);
        CHECK_THROWS_WITH_AS(lrr::backward(y), doctest::Contains("scalar"), lrr::Error);
    }
    SUBCASE("embedding id out of range") {
        auto table = rand_tensor({4, 3}, rng);
        CHECK_THROWS_AS(lrr::embedding_lookup(table, {4}), lrr::Error);
    }
    SUBCASE("slice window out of range") {
        auto a = rand_tensor({3, 3}, rng);
        CHECK_THROWS_AS(lrr::slice(a, {1, 1}, {3, 2}), lrr::Error);
    }
}

TEST_CASE("clip_global_norm") {
    using lrr::ParamList;
    SUBCASE("3-4-5 triangle") {
        ParamList<double> params;
        params.push_back({"a", DTensor::from_data({1}, {0.0}, true)});
        params.push_back({"b", DTensor::from_data({1}, {0.0}, true)});
        params[0].tensor.grad()[0] = 3.0;
        params[1].tensor.grad()[0] = 4.0;
        const double norm = lrr::clip_global_norm(params, 1.0);
        CHECK(norm == doctest::Approx(5.0).epsilon(1e-12));
        CHECK(params[0].tensor.grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
        CHECK(params[1].tensor.grad()[0] == doctest::Approx(0.8).epsilon(1e-12));
    }
    SUBCASE("no-op when under the limit") {
        ParamList<double> params;
        params.push_back({"a", DTensor::from_data({2}, {0.1, -0.2}, true)});
        params[0].tensor.grad() = {0.1, -0.2};
        lrr::clip_global_norm(params, 1.0);
        CHECK(params[0].tensor.grad()[0] == 0.1);
        CHECK(params[0].tensor.grad()[1] == -0.2);
    }
    SUBCASE("post-clip norm equals max_norm") {
        Rng rng(10);
        ParamList<double> params;
        for (int i = 0; i < 4; ++i) {
            auto t = rand_tensor({5, 3}, rng);
            for (double& g : t.grad()) g = rng.uniform(-2.0, 2.0);
            params.push_back({"p" + std::to_string(i), t});
        }
        lrr::clip_global_norm(params, 1.0);
        double sq = 0;
        for (auto& p : params) {
            for (double g : p.tensor.grad()) sq += g * g;
        }
        CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("empty set returns zero") {
        ParamList<double> params;
        CHECK(lrr::clip_global_norm(params, 1.0) == 0.0);
    }
}

TEST_CASE("adamw") {
    using Config = lrr::AdamW<double>::Config;
    SUBCASE("single step from the reference formula") {
        Config cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.0;
        lrr::AdamW<double> opt(cfg);
        lrr::ParamList<double> params;
        params.push_back({"p", DTensor::from_data({1}, {1.0}, true)});
        params[0].tensor.grad()[0] = 1.0;
        opt.step(params);
        CHECK(opt.t() == 1);
        CHECK(params[0].tensor.value()[0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    SUBCASE("zero grad and zero decay leave params unchanged") {
        lrr::AdamW<double> opt(Config{});
        lrr::ParamList<double> params;
        params.push_back({"p", DTensor::from_data({3}, {1.0, -2.0, 0.5}, true)});
        params[0].tensor.grad();
        lrr::AdamW<double>::Config cfg;
        cfg.weight_decay = 0.0;
        lrr::AdamW<double> opt2(cfg);
        for (int i = 0; i < 3; ++i) opt2.step(params);
        CHECK(params[0].tensor.value()[0] == 1.0);
        CHECK(params[0].tensor.value()[1] == -2.0);
        CHECK(params[0].tensor.value()[2] == 0.5);
    }
    SUBCASE("decoupled decay shrinks by exactly lr*wd*p") {
        Config cfg;
        cfg.lr = 0.01;
        cfg.weight_decay = 0.2;
        lrr::AdamW<double> opt(cfg);
        lrr::ParamList<double> params;
        params.push_back({"p", DTensor::from_data({1}, {3.0}, true)});
        params[0].tensor.grad();
        opt.step(params);
        CHECK(params[0].tensor.value()[0] == 3.0 * (1.0 - 0.01 * 0.2));
    }
    SUBCASE("matches an independent reference over several steps") {
        Rng rng(11);
        Config cfg;
        cfg.lr = 0.003;
        cfg.beta1 = 0.9;
        cfg.beta2 = 0.95;
        cfg.weight_decay = 0.1;
        lrr::AdamW<double> opt(cfg);
        lrr::ParamList<double> params;
        params.push_back({"p", DTensor::from_data({3}, {0.3, -0.7, 1.1}, true)});

        std::vector<double> ref = {0.3, -0.7, 1.1};
        std::vector<double> m(3, 0.0), v(3, 0.0);
        for (int step = 1; step <= 5; ++step) {
            std::vector<double> g(3);
            for (double& x : g) x = rng.uniform(-1.0, 1.0);
            params[0].tensor.grad() = g;
            opt.step(params);
            for (int i = 0; i < 3; ++i) {
                ref[i] *= 1.0 - cfg.lr * cfg.weight_decay;
                m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
                const double mhat = m[i] / (1 - std::pow(cfg.beta1, step));
                const double vhat = v[i] / (1 - std::pow(cfg.beta2, step));
                ref[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
            for (int i = 0; i < 3; ++i) {
                CHECK(params[0].tensor.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
            }
        }
    }
    SUBCASE("state shape drift is an error") {
        lrr::AdamW<double> opt(Config{});
        lrr::ParamList<double> params;
        params.push_back({"p", DTensor::from_data({2}, {1.0, 2.0}, true)});
        params[0].tensor.grad();
        opt.step(params);
        lrr::ParamList<double> drifted;
        drifted.push_back({"p", DTensor::from_data({3}, {1.0, 2.0, 3.0}, true)});
        drifted[0].tensor.grad();
        CHECK_THROWS_AS(opt.step(drifted), lrr::Error);
    }
}
