#include "nst/autodiff.hpp"

namespace nst {

double grad_check(const LossBuilder& builder, const Tensor64& leaf, double eps) {
    if (!(eps > 0)) throw ContractError("grad_check requires eps > 0");

    Tensor64 analytic;
    {
        Tape64 tape;
        VarId x = tape.leaf(leaf, /*requires_grad=*/true);
        VarId loss = builder(tape, x);
        auto grads = tape.backward(loss);
        analytic = Tape64::grad_of(grads, x);
    }

    auto eval = [&](const Tensor64& point) {
        Tape64 tape;
        VarId x = tape.leaf(point, /*requires_grad=*/false);
        VarId loss = builder(tape, x);
        return tape.value(loss)[0];
    };

    double max_err = 0.0;
    Tensor64 probe = leaf;
    for (std::size_t i = 0; i < leaf.size(); ++i) {
        double orig = probe[i];
        probe[i] = orig + eps;
        double up = eval(probe);
        probe[i] = orig - eps;
        double down = eval(probe);
        probe[i] = orig;
        double fd = (up - down) / (2.0 * eps);
        if (!std::isfinite(fd)) throw NumericError("non-finite finite-difference value");
        double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
        if (err > max_err) max_err = err;
    }
    return max_err;
}

}  // namespace nst
