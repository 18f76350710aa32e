#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nst/autodiff.hpp"
#include "nst/gradcheck.hpp"
#include "oracles.hpp"

using namespace nst;

TEST_CASE("record computes forward values eagerly") {
    Tape tape;
    VarId x = tape.leaf(Tensor::from_data(1, 1, 1, 2, {-1, 2}));
    VarId y = tape.relu(x);
    CHECK(tape.value(y)[0] == 0.0f);
    CHECK(tape.value(y)[1] == 2.0f);

    VarId z = tape.mse(x, x);
    CHECK(tape.value(z)[0] == 0.0f);

    Tensor w(2, 3, 3, 3);
    Tensor b(2, 1, 1, 1);
    VarId wv = tape.leaf(w), bv = tape.leaf(b);
    VarId img = tape.leaf(Tensor(1, 2, 5, 5));
    CHECK_THROWS_AS(tape.conv2d(img, wv, bv, ConvParams{3, 2, 3, 1, 1}, Backend::fast),
                    ShapeError);
}

TEST_CASE("foreign VarId rejected") {
    Tape a, b;
    VarId xa = a.leaf(Tensor(1, 1, 1, 1, 1.0f));
    CHECK_THROWS_AS(b.relu(xa), TapeError);
    CHECK_THROWS_AS(b.value(xa), TapeError);
}

TEST_CASE("backward of mse wrt x is 2(x - x0)/n") {
    Tape tape;
    Tensor xv = Tensor::from_data(1, 1, 2, 2, {1, 2, 3, 4});
    Tensor x0 = Tensor::from_data(1, 1, 2, 2, {0, 1, 1, 1});
    VarId x = tape.leaf(xv, true);
    VarId loss = tape.mse(x, tape.leaf(x0));
    auto grads = tape.backward(loss);
    const Tensor& g = Tape::grad_of(grads, x);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(g[i] == doctest::Approx(2.0f * (xv[i] - x0[i]) / 4.0f));
}

TEST_CASE("relu kills gradient on the negative side and at zero") {
    Tape tape;
    VarId x = tape.leaf(Tensor::from_data(1, 1, 1, 3, {-0.5f, 0.0f, 0.5f}), true);
    VarId loss = tape.mse(tape.relu(x), tape.leaf(Tensor(1, 1, 1, 3, 1.0f)));
    auto grads = tape.backward(loss);
    const Tensor& g = Tape::grad_of(grads, x);
    CHECK(g[0] == 0.0f);
    CHECK(g[1] == 0.0f);
    CHECK(g[2] != 0.0f);
}

TEST_CASE("backward requires scalar loss and zero-fills unused leaves") {
    Tape tape;
    VarId x = tape.leaf(Tensor(1, 1, 2, 2, 1.0f), true);
    VarId unused = tape.leaf(Tensor(1, 1, 3, 3, 2.0f), true);
    VarId y = tape.relu(x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);

    VarId loss = tape.mse(y, tape.leaf(Tensor(1, 1, 2, 2, 0.0f)));
    auto grads = tape.backward(loss);
    const Tensor& gu = Tape::grad_of(grads, unused);
    CHECK(gu.shape() == std::array<std::int64_t, 4>{1, 1, 3, 3});
    for (std::size_t i = 0; i < gu.size(); ++i) CHECK(gu[i] == 0.0f);
}

TEST_CASE("full chain conv-relu-pool-gram-mse passes finite differences") {
    std::mt19937 rng(21);
    Tensor64 x = oracle::random_tensor<double>(rng, 1, 2, 6, 6);
    Tensor64 w = oracle::random_tensor<double>(rng, 3, 2, 3, 3);
    Tensor64 b = oracle::random_tensor<double>(rng, 3, 1, 1, 1);
    Tensor64 target = oracle::random_tensor<double>(rng, 1, 1, 3, 3);
    double err = grad_check(
        [&](Tape64& t, VarId leaf) {
            VarId conv = t.conv2d(leaf, t.leaf(w), t.leaf(b), ConvParams{2, 3, 3, 1, 1},
                                  Backend::fast);
            VarId act = t.relu(conv);
            VarId pooled = t.avg_pool(act, 2, 2);
            VarId g = t.gram(pooled);
            return t.mse(g, t.leaf(target));
        },
        x, 1e-4);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check on a linear loss is essentially exact") {
    std::mt19937 rng(22);
    Tensor64 x = oracle::random_tensor<double>(rng, 1, 1, 2, 2);
    const double n = static_cast<double>(x.size());
    // sum(x) = n/4 * (mse(x,-1) - mse(x,+1)); the quadratic terms cancel
    double err = grad_check(
        [&](Tape64& t, VarId leaf) {
            VarId lo = t.mse(leaf, t.leaf(Tensor64(1, 1, 2, 2, -1.0)));
            VarId hi = t.mse(leaf, t.leaf(Tensor64(1, 1, 2, 2, 1.0)));
            return t.weighted_sum({lo, hi}, {n / 4.0, -n / 4.0});
        },
        x, 1e-4);
    CHECK(err < 1e-9);
}

TEST_CASE("grad_check validates eps") {
    Tensor64 x(1, 1, 1, 1, 1.0);
    auto builder = [](Tape64& t, VarId leaf) { return t.mse(leaf, t.leaf(Tensor64(1, 1, 1, 1))); };
    CHECK_THROWS_AS(grad_check(builder, x, 0.0), ContractError);
    CHECK_THROWS_AS(grad_check(builder, x, -1.0), ContractError);
}

TEST_CASE("gram-based loss gradcheck on 1x3x4x4") {
    std::mt19937 rng(23);
    for (int i = 0; i < 5; ++i) {
        Tensor64 x = oracle::random_tensor<double>(rng, 1, 3, 4, 4);
        Tensor64 target = oracle::random_tensor<double>(rng, 1, 1, 3, 3);
        double err = grad_check(
            [&](Tape64& t, VarId leaf) { return t.mse(t.gram(leaf), t.leaf(target)); }, x,
            1e-4);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("per-op gradcheck suite stays under 1e-4") {
    for (const auto& r : gradcheck_suite(17, 20)) {
        INFO(r.name);
        CHECK(r.max_rel_err < 1e-4);
        CHECK(r.instances >= 1);
    }
}

TEST_CASE("backward linearity in the loss combination") {
    std::mt19937 rng(31);
    Tensor64 xv = oracle::random_tensor<double>(rng, 1, 2, 4, 4);
    Tensor64 t1 = oracle::random_tensor<double>(rng, 1, 2, 4, 4);
    Tensor64 t2 = oracle::random_tensor<double>(rng, 1, 1, 2, 2);
    const double a = 1.7, b = -0.4;

    auto grad_of_combo = [&](double ca, double cb) {
        Tape64 tape;
        VarId x = tape.leaf(xv, true);
        VarId f = tape.mse(x, tape.leaf(t1));
        VarId g = tape.mse(tape.gram(tape.avg_pool(x, 2, 2)), tape.leaf(t2));
        VarId loss = tape.weighted_sum({f, g}, {ca, cb});
        auto grads = tape.backward(loss);
        return Tape64::grad_of(grads, x);
    };

    Tensor64 combo = grad_of_combo(a, b);
    Tensor64 gf = grad_of_combo(1.0, 0.0);
    Tensor64 gg = grad_of_combo(0.0, 1.0);
    for (std::size_t i = 0; i < combo.size(); ++i)
        CHECK(combo[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-6));
}

TEST_CASE("backward visits every contributing node exactly once") {
    Tape tape;
    VarId x = tape.leaf(Tensor(1, 2, 4, 4, 0.5f), true);
    VarId r = tape.relu(x);
    VarId g = tape.gram(r);
    VarId m1 = tape.mse(g, tape.leaf(Tensor(1, 1, 2, 2)));
    VarId m2 = tape.mse(r, tape.leaf(Tensor(1, 2, 4, 4)));
    VarId loss = tape.weighted_sum({m1, m2}, {1.0f, 2.0f});  // r fans out
    tape.backward(loss);
    const auto& visits = tape.last_backward_visits();
    for (int count : visits) CHECK(count <= 1);
    CHECK(visits[static_cast<std::size_t>(loss.index)] == 1);
    CHECK(visits[static_cast<std::size_t>(g.index)] == 1);
    CHECK(visits[static_cast<std::size_t>(r.index)] == 1);
}

TEST_CASE("conv weight gradients available through the same machinery") {
    std::mt19937 rng(37);
    Tensor64 x = oracle::random_tensor<double>(rng, 1, 2, 5, 5);
    Tensor64 w = oracle::random_tensor<double>(rng, 2, 2, 3, 3);
    Tensor64 b = oracle::random_tensor<double>(rng, 2, 1, 1, 1);
    for (Backend backend : {Backend::naive, Backend::fast}) {
        double err = grad_check(
            [&](Tape64& t, VarId leaf) {
                VarId y = t.conv2d(t.leaf(x), leaf, t.leaf(b), ConvParams{2, 2, 3, 1, 0},
                                   backend);
                return t.mse(y, t.leaf(Tensor64(1, 2, 3, 3)));
            },
            w, 1e-4);
        CHECK(err < 1e-4);
    }
}
