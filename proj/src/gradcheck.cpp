#include "nst/gradcheck.hpp"

#include <cmath>

#include "nst/style.hpp"

namespace nst {

namespace {

Tensor64 random_tensor(Rng& rng, std::int64_t n, std::int64_t c, std::int64_t h,
                       std::int64_t w, double lo = -1.0, double hi = 1.0) {
    Tensor64 t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Keeps every coordinate away from the relu kink, where central
// differences are invalid.
Tensor64 random_tensor_off_zero(Rng& rng, std::int64_t n, std::int64_t c, std::int64_t h,
                                std::int64_t w, double margin) {
    Tensor64 t = random_tensor(rng, n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i)
        while (std::abs(t[i]) < margin) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

// Scalar wrapper: mean of squares of the op output, differentiable and
// sensitive to every output coordinate.
VarId squared_mean(Tape64& tape, VarId y) {
    const Tensor64& v = tape.value(y);
    VarId zero = tape.leaf(Tensor64(v.n(), v.c(), v.h(), v.w()));
    return tape.mse(y, zero);
}

struct Case {
    std::string name;
    std::function<double(Rng&)> run;  // one random instance -> max rel err
};

}  // namespace

std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, int instances_per_op,
                                             double eps) {
    std::vector<Case> cases;

    for (Backend backend : {Backend::naive, Backend::fast}) {
        std::string tag = backend_name(backend);
        cases.push_back({"conv2d_input_" + tag, [backend, eps](Rng& rng) {
            ConvParams p{2, 3, 3, 1, 1};
            Tensor64 w = random_tensor(rng, p.out_channels, p.in_channels, 3, 3);
            Tensor64 b = random_tensor(rng, p.out_channels, 1, 1, 1);
            Tensor64 x = random_tensor(rng, 1, p.in_channels, 5, 5);
            return grad_check(
                [&](Tape64& t, VarId leaf) {
                    VarId wv = t.leaf(w), bv = t.leaf(b);
                    return squared_mean(t, t.conv2d(leaf, wv, bv, p, backend));
                },
                x, eps);
        }});
        cases.push_back({"conv2d_weights_" + tag, [backend, eps](Rng& rng) {
            ConvParams p{2, 2, 3, 1, 0};
            Tensor64 x = random_tensor(rng, 1, p.in_channels, 5, 5);
            Tensor64 b = random_tensor(rng, p.out_channels, 1, 1, 1);
            Tensor64 w = random_tensor(rng, p.out_channels, p.in_channels, 3, 3);
            return grad_check(
                [&](Tape64& t, VarId leaf) {
                    VarId xv = t.leaf(x), bv = t.leaf(b);
                    return squared_mean(t, t.conv2d(xv, leaf, bv, p, backend));
                },
                w, eps);
        }});
    }

    cases.push_back({"relu", [eps](Rng& rng) {
        Tensor64 x = random_tensor_off_zero(rng, 1, 2, 4, 4, 10 * eps);
        return grad_check([](Tape64& t, VarId leaf) { return squared_mean(t, t.relu(leaf)); },
                          x, eps);
    }});

    cases.push_back({"avg_pool", [eps](Rng& rng) {
        Tensor64 x = random_tensor(rng, 1, 2, 6, 6);
        return grad_check(
            [](Tape64& t, VarId leaf) { return squared_mean(t, t.avg_pool(leaf, 2, 2)); }, x,
            eps);
    }});

    cases.push_back({"gram", [eps](Rng& rng) {
        Tensor64 x = random_tensor(rng, 1, 3, 4, 4);
        return grad_check([](Tape64& t, VarId leaf) { return squared_mean(t, t.gram(leaf)); },
                          x, eps);
    }});

    cases.push_back({"mse", [eps](Rng& rng) {
        Tensor64 target = random_tensor(rng, 1, 2, 3, 3);
        Tensor64 x = random_tensor(rng, 1, 2, 3, 3);
        return grad_check(
            [&](Tape64& t, VarId leaf) { return t.mse(leaf, t.leaf(target)); }, x, eps);
    }});

    cases.push_back({"weighted_sum", [eps](Rng& rng) {
        Tensor64 a = random_tensor(rng, 1, 2, 3, 3);
        Tensor64 b = random_tensor(rng, 1, 2, 3, 3);
        Tensor64 x = random_tensor(rng, 1, 2, 3, 3);
        return grad_check(
            [&](Tape64& t, VarId leaf) {
                VarId m1 = t.mse(leaf, t.leaf(a));
                VarId m2 = t.mse(leaf, t.leaf(b));
                return t.weighted_sum({m1, m2}, {0.7, -0.3});
            },
            x, eps);
    }});

    std::vector<GradCheckResult> results;
    Rng rng(seed);
    for (const auto& c : cases) {
        GradCheckResult r;
        r.name = c.name;
        for (int i = 0; i < instances_per_op; ++i) {
            r.max_rel_err = std::max(r.max_rel_err, c.run(rng));
            ++r.instances;
        }
        results.push_back(std::move(r));
    }

    // Full style objective at 16 px: the heavyweight end-to-end check.
    {
        GradCheckResult r;
        r.name = "style_objective_16px";
        ModelSpec spec = build_model(ModelKind::vgg_desk);
        WeightStore store = init_weights(spec, seed + 1);
        WeightMap<double> weights = weight_map_as<double>(store);
        StyleConfig cfg;
        Tensor64 content = random_tensor(rng, 1, 3, 16, 16, 0.0, 1.0);
        Tensor64 style = random_tensor(rng, 1, 3, 16, 16, 0.0, 1.0);
        auto targets = compute_targets<double>(spec, weights, content, style, cfg,
                                               Backend::fast);
        Tensor64 image = random_tensor(rng, 1, 3, 16, 16, 0.0, 1.0);

        Tensor64 analytic;
        {
            Tape64 tape;
            VarId leaf = tape.leaf(image, true);
            VarId loss = record_objective<double>(spec, weights, tape, leaf, targets, cfg,
                                                  Backend::fast)
                             .total;
            auto grads = tape.backward(loss);
            analytic = Tape64::grad_of(grads, leaf);
        }
        auto eval = [&](const Tensor64& x) {
            Tape64 t;
            VarId leaf = t.leaf(x);
            VarId loss = record_objective<double>(spec, weights, t, leaf, targets, cfg,
                                                  Backend::fast)
                             .total;
            return t.value(loss)[0];
        };
        // Central differences at two step sizes. A pixel bump can push
        // some pre-activation across the relu kink, which makes the
        // difference quotient meaningless for that coordinate; the two
        // estimates then disagree and the coordinate is skipped.
        Tensor64 x = image;
        std::size_t skipped = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double orig = x[i];
            x[i] = orig + eps;
            double fp = eval(x);
            x[i] = orig - eps;
            double fm = eval(x);
            x[i] = orig + 2 * eps;
            double fp2 = eval(x);
            x[i] = orig - 2 * eps;
            double fm2 = eval(x);
            x[i] = orig;
            double fd1 = (fp - fm) / (2 * eps);
            double fd2 = (fp2 - fm2) / (4 * eps);
            if (std::abs(fd1 - fd2) > 3e-5 * std::max(1.0, std::abs(fd1))) {
                ++skipped;
                continue;
            }
            r.max_rel_err = std::max(
                r.max_rel_err, std::abs(analytic[i] - fd1) / std::max(1.0, std::abs(fd1)));
        }
        if (skipped > x.size() / 2) r.max_rel_err = 1.0;  // degenerate instance
        r.instances = 1;
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace nst
