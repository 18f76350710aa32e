// Independent reference implementations used as oracles. These stay
// deliberately dumb (direct definitions, no shared code with the
// library kernels they check).
#pragma once

#include <cmath>
#include <random>

#include "nst/tensor.hpp"

namespace oracle {

// Sliding-window cross-correlation: each output cell is the sum of
// overlapped products plus bias.
template <class T>
nst::TensorT<T> conv_reference(const nst::TensorT<T>& x, const nst::TensorT<T>& w,
                               const nst::TensorT<T>& bias, int stride, int pad) {
    const std::int64_t oc = w.n(), ic = w.c(), k = w.h();
    const std::int64_t oh = (x.h() + 2 * pad - k) / stride + 1;
    const std::int64_t ow = (x.w() + 2 * pad - k) / stride + 1;
    nst::TensorT<T> y(1, oc, oh, ow);
    for (std::int64_t o = 0; o < oc; ++o)
        for (std::int64_t yy = 0; yy < oh; ++yy)
            for (std::int64_t xx = 0; xx < ow; ++xx) {
                double acc = bias[static_cast<std::size_t>(o)];
                for (std::int64_t c = 0; c < ic; ++c)
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            std::int64_t iy = yy * stride + ky - pad;
                            std::int64_t ix = xx * stride + kx - pad;
                            if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                            acc += static_cast<double>(x.at(0, c, iy, ix)) *
                                   static_cast<double>(w.at(o, c, ky, kx));
                        }
                y.at(0, o, yy, xx) = static_cast<T>(acc);
            }
    return y;
}

// Triple-loop matrix product, a: (1,1,M,K), b: (1,1,K,N).
template <class T>
nst::TensorT<T> gemm_reference(const nst::TensorT<T>& a, const nst::TensorT<T>& b) {
    nst::TensorT<T> c(1, 1, a.h(), b.w());
    for (std::int64_t i = 0; i < a.h(); ++i)
        for (std::int64_t j = 0; j < b.w(); ++j) {
            double acc = 0;
            for (std::int64_t k = 0; k < a.w(); ++k)
                acc += static_cast<double>(a.at(0, 0, i, k)) *
                       static_cast<double>(b.at(0, 0, k, j));
            c.at(0, 0, i, j) = static_cast<T>(acc);
        }
    return c;
}

// Brute-force Gram: channel-pair inner products over all positions.
template <class T>
nst::TensorT<T> gram_reference(const nst::TensorT<T>& f) {
    nst::TensorT<T> g(1, 1, f.c(), f.c());
    for (std::int64_t i = 0; i < f.c(); ++i)
        for (std::int64_t j = 0; j < f.c(); ++j) {
            double acc = 0;
            for (std::int64_t y = 0; y < f.h(); ++y)
                for (std::int64_t x = 0; x < f.w(); ++x)
                    acc += static_cast<double>(f.at(0, i, y, x)) *
                           static_cast<double>(f.at(0, j, y, x));
            g.at(0, 0, i, j) = static_cast<T>(acc);
        }
    return g;
}

template <class T>
nst::TensorT<T> random_tensor(std::mt19937& rng, std::int64_t n, std::int64_t c,
                              std::int64_t h, std::int64_t w, double lo = -1.0,
                              double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    nst::TensorT<T> t(n, c, h, w);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
    return t;
}

// Relative with a unit floor: near-zero entries produced by cancelling
// sums would otherwise turn rounding noise into huge ratios.
template <class T>
double max_rel_diff(const nst::TensorT<T>& a, const nst::TensorT<T>& b) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({1.0, std::abs(static_cast<double>(a[i])),
                                 std::abs(static_cast<double>(b[i]))});
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) -
                                         static_cast<double>(b[i])) / denom);
    }
    return worst;
}

template <class T>
bool bit_identical(const nst::TensorT<T>& a, const nst::TensorT<T>& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace oracle
