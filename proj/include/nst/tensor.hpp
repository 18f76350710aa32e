#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "nst/common.hpp"

namespace nst {

enum class Backend { naive, fast };

const char* backend_name(Backend b);
Backend parse_backend(const std::string& name);  // ConfigError on unknown name

// Dense 4-D tensor, row-major (n, c, h, w). Batch is fixed at 1
// throughout the engine but kept in the shape for clarity.
template <class T>
class TensorT {
public:
    TensorT() : shape_{0, 0, 0, 0} {}

    TensorT(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w, T fill = T(0))
        : shape_{n, c, h, w}, data_(checked_size(n, c, h, w), fill) {
        tensor_alloc_count().fetch_add(1, std::memory_order_relaxed);
    }

    static TensorT from_data(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                             std::vector<T> values) {
        std::size_t want = checked_size(n, c, h, w);
        if (values.size() != want) {
            throw ShapeError("tensor from_data: got " + std::to_string(values.size()) +
                             " values, shape needs " + std::to_string(want));
        }
        TensorT t;
        t.shape_ = {n, c, h, w};
        t.data_ = std::move(values);
        tensor_alloc_count().fetch_add(1, std::memory_order_relaxed);
        return t;
    }

    std::int64_t n() const { return shape_[0]; }
    std::int64_t c() const { return shape_[1]; }
    std::int64_t h() const { return shape_[2]; }
    std::int64_t w() const { return shape_[3]; }
    const std::array<std::int64_t, 4>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[index(n, c, h, w)];
    }
    T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[index(n, c, h, w)];
    }

    std::size_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w);
    }

    std::string shape_str() const {
        return "(" + std::to_string(shape_[0]) + "," + std::to_string(shape_[1]) + "," +
               std::to_string(shape_[2]) + "," + std::to_string(shape_[3]) + ")";
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    static std::size_t checked_size(std::int64_t n, std::int64_t c, std::int64_t h,
                                    std::int64_t w) {
        for (std::int64_t d : {n, c, h, w}) {
            if (d < 0) throw SizeError("tensor dim must be >= 0, got " + std::to_string(d));
        }
        // overflow check on the running product
        std::uint64_t total = 1;
        for (std::int64_t d : {n, c, h, w}) {
            std::uint64_t ud = static_cast<std::uint64_t>(d);
            if (ud != 0 && total > UINT64_MAX / ud) throw SizeError("tensor size overflows");
            total *= ud;
        }
        if (total > (1ull << 40)) throw SizeError("tensor size exceeds sanity limit");
        return static_cast<std::size_t>(total);
    }

    std::array<std::int64_t, 4> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

struct ConvParams {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_size = 1;  // square
    int stride = 1;
    int padding = 0;

    void validate() const {
        if (in_channels < 0 || out_channels < 0 || padding < 0)
            throw ShapeError("conv params must be non-negative");
        if (kernel_size < 1) throw ShapeError("conv kernel_size must be >= 1");
        if (stride < 1) throw ShapeError("conv stride must be >= 1");
    }

    // Output spatial size; GeometryError when it does not divide cleanly
    // or is not positive.
    std::int64_t out_size(std::int64_t in) const {
        std::int64_t span = in + 2 * padding - kernel_size;
        if (span < 0 || span % stride != 0)
            throw GeometryError("conv geometry: input " + std::to_string(in) + ", kernel " +
                                std::to_string(kernel_size) + ", stride " +
                                std::to_string(stride) + ", pad " + std::to_string(padding) +
                                " gives no integer output size");
        return span / stride + 1;
    }
};

std::int64_t pool_out_size(std::int64_t in, int k, int s);  // GeometryError on mismatch

namespace detail {

template <class T>
void ensure_finite(const TensorT<T>& t, const char* op) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]))
            throw NumericError(std::string(op) + " produced a non-finite value at index " +
                               std::to_string(i));
    }
}

// C = A(M x K) * B(K x N), row-major. Accumulation over k is strictly
// in-order for every output element; worker partitioning is over fixed
// row blocks with disjoint outputs, so results are bit-identical for
// any worker count.
void gemm_raw(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
              std::int64_t n);
void gemm_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
              std::int64_t n);

template <class T>
void im2col(const TensorT<T>& x, const ConvParams& p, std::int64_t oh, std::int64_t ow,
            std::vector<T>& col) {
    const std::int64_t c = x.c(), h = x.h(), w = x.w();
    const int k = p.kernel_size, s = p.stride, pad = p.padding;
    const std::int64_t m = oh * ow;
    col.assign(static_cast<std::size_t>(c * k * k * m), T(0));
    for (std::int64_t ic = 0; ic < c; ++ic) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                T* dst = col.data() + ((ic * k + kh) * k + kw) * m;
                for (std::int64_t y = 0; y < oh; ++y) {
                    std::int64_t iy = y * s + kh - pad;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = x.data() + x.index(0, ic, iy, 0);
                    if (s == 1) {
                        std::int64_t x0 = kw - pad;
                        std::int64_t lo = std::max<std::int64_t>(0, -x0);
                        std::int64_t hi = std::min<std::int64_t>(ow, w - x0);
                        for (std::int64_t j = lo; j < hi; ++j) dst[y * ow + j] = src[x0 + j];
                    } else {
                        for (std::int64_t j = 0; j < ow; ++j) {
                            std::int64_t ix = j * s + kw - pad;
                            if (ix >= 0 && ix < w) dst[y * ow + j] = src[ix];
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a column matrix back into image layout (backward of im2col).
template <class T>
void col2im_add(const std::vector<T>& col, const ConvParams& p, std::int64_t oh, std::int64_t ow,
                TensorT<T>& x) {
    const std::int64_t c = x.c(), h = x.h(), w = x.w();
    const int k = p.kernel_size, s = p.stride, pad = p.padding;
    const std::int64_t m = oh * ow;
    for (std::int64_t ic = 0; ic < c; ++ic) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const T* src = col.data() + ((ic * k + kh) * k + kw) * m;
                for (std::int64_t y = 0; y < oh; ++y) {
                    std::int64_t iy = y * s + kh - pad;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = x.data() + x.index(0, ic, iy, 0);
                    for (std::int64_t j = 0; j < ow; ++j) {
                        std::int64_t ix = j * s + kw - pad;
                        if (ix >= 0 && ix < w) dst[ix] += src[y * ow + j];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// --- public kernels -------------------------------------------------------

template <class T>
TensorT<T> tensor_new(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                      T fill = T(0)) {
    return TensorT<T>(n, c, h, w, fill);
}

template <class T>
void conv_check_shapes(const TensorT<T>& x, const TensorT<T>& wt, const TensorT<T>& bias,
                       const ConvParams& p) {
    p.validate();
    if (x.c() != p.in_channels)
        throw ShapeError("conv input has " + std::to_string(x.c()) + " channels, params expect " +
                         std::to_string(p.in_channels));
    if (wt.n() != p.out_channels || wt.c() != p.in_channels || wt.h() != p.kernel_size ||
        wt.w() != p.kernel_size)
        throw ShapeError("conv weight shape " + wt.shape_str() + " does not match params");
    if (bias.size() != static_cast<std::size_t>(p.out_channels))
        throw ShapeError("conv bias length " + std::to_string(bias.size()) + ", expected " +
                         std::to_string(p.out_channels));
}

template <class T>
TensorT<T> conv2d_exec(const TensorT<T>& x, const TensorT<T>& wt, const TensorT<T>& bias,
                       const ConvParams& p, Backend backend) {
    conv_check_shapes(x, wt, bias, p);
    const std::int64_t oh = p.out_size(x.h()), ow = p.out_size(x.w());
    TensorT<T> y(x.n(), p.out_channels, oh, ow);
    const int k = p.kernel_size, s = p.stride, pad = p.padding;

    if (backend == Backend::naive) {
        // Direct sliding-window cross-correlation. Each output cell still
        // accumulates its taps in (ic, kh, kw) order; hoisting the kernel
        // loops outside the spatial ones just makes the row updates
        // contiguous instead of gathering cell by cell.
        for (std::int64_t oc = 0; oc < p.out_channels; ++oc) {
            T* plane = y.data() + oc * oh * ow;
            const T bv = bias[static_cast<std::size_t>(oc)];
            for (std::int64_t i = 0; i < oh * ow; ++i) plane[i] = bv;
            for (std::int64_t ic = 0; ic < p.in_channels; ++ic)
                for (int kh = 0; kh < k; ++kh)
                    for (int kw = 0; kw < k; ++kw) {
                        const T wv = wt.at(oc, ic, kh, kw);
                        for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                            const std::int64_t iy = y0 * s + kh - pad;
                            if (iy < 0 || iy >= x.h()) continue;
                            const T* xrow = x.data() + (ic * x.h() + iy) * x.w();
                            T* yrow = plane + y0 * ow;
                            const std::int64_t x_lo =
                                std::max<std::int64_t>(0, (pad - kw + s - 1) / s);
                            const std::int64_t num = x.w() - 1 - kw + pad;
                            const std::int64_t x_hi =
                                num < 0 ? 0 : std::min(ow, num / s + 1);
                            if (s == 1) {
                                const std::int64_t off = kw - pad;
                                for (std::int64_t x0 = x_lo; x0 < x_hi; ++x0)
                                    yrow[x0] += wv * xrow[x0 + off];
                            } else {
                                for (std::int64_t x0 = x_lo; x0 < x_hi; ++x0)
                                    yrow[x0] += wv * xrow[x0 * s + kw - pad];
                            }
                        }
                    }
        }
    } else {
        std::vector<T> col;
        detail::im2col(x, p, oh, ow, col);
        detail::gemm_raw(wt.data(), col.data(), y.data(), p.out_channels,
                         static_cast<std::int64_t>(p.in_channels) * k * k, oh * ow);
        const std::int64_t m = oh * ow;
        for (std::int64_t oc = 0; oc < p.out_channels; ++oc) {
            T b = bias[static_cast<std::size_t>(oc)];
            T* row = y.data() + oc * m;
            for (std::int64_t i = 0; i < m; ++i) row[i] += b;
        }
    }
    detail::ensure_finite(y, "conv2d");
    return y;
}

// a: (1,1,M,K), b: (1,1,K,N) -> (1,1,M,N)
template <class T>
TensorT<T> gemm(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.w() != b.h())
        throw ShapeError("gemm inner dims differ: " + a.shape_str() + " x " + b.shape_str());
    TensorT<T> c(1, 1, a.h(), b.w());
    detail::gemm_raw(a.data(), b.data(), c.data(), a.h(), a.w(), b.w());
    detail::ensure_finite(c, "gemm");
    return c;
}

template <class T>
TensorT<T> relu_exec(const TensorT<T>& x) {
    TensorT<T> y(x.n(), x.c(), x.h(), x.w());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    detail::ensure_finite(y, "relu");
    return y;
}

template <class T>
TensorT<T> avg_pool_exec(const TensorT<T>& x, int k, int s) {
    const std::int64_t oh = pool_out_size(x.h(), k, s), ow = pool_out_size(x.w(), k, s);
    TensorT<T> y(x.n(), x.c(), oh, ow);
    const T inv = T(1) / static_cast<T>(k * k);
    for (std::int64_t c = 0; c < x.c(); ++c) {
        for (std::int64_t y0 = 0; y0 < oh; ++y0) {
            for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                T acc = 0;
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx)
                        acc += x.at(0, c, y0 * s + dy, x0 * s + dx);
                y.at(0, c, y0, x0) = acc * inv;
            }
        }
    }
    detail::ensure_finite(y, "avg_pool");
    return y;
}

}  // namespace nst
