#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "nst/tensor.hpp"

namespace nst {

enum class OpKind { leaf, conv2d, relu, avg_pool, gram, mse, weighted_sum };

// Handle into a Tape. Only valid for the tape that issued it.
struct VarId {
    std::uint64_t tape_id = 0;
    std::int32_t index = -1;
};

namespace detail {
inline std::uint64_t next_tape_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

// C(m1 x m2) = A(m1 x k) * B(m2 x k)^T, plain dot products.
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m1, std::int64_t m2, std::int64_t k) {
    for (std::int64_t i = 0; i < m1; ++i) {
        const T* ar = a + i * k;
        for (std::int64_t j = 0; j < m2; ++j) {
            const T* br = b + j * k;
            T acc = 0;
            for (std::int64_t t = 0; t < k; ++t) acc += ar[t] * br[t];
            c[i * m2 + j] = acc;
        }
    }
}
}  // namespace detail

// Gram matrix of a (1,C,H,W) feature map: flatten each channel over the
// H*W positions and form the C x C matrix of channel-pair inner
// products, unnormalized. Returned as a (1,1,C,C) tensor.
template <class T>
TensorT<T> gram_exec(const TensorT<T>& f) {
    const std::int64_t c = f.c(), m = f.h() * f.w();
    TensorT<T> g(1, 1, c, c);
    // double accumulation keeps the result insensitive to the spatial
    // summation order; the mirrored write keeps it exactly symmetric
    for (std::int64_t i = 0; i < c; ++i) {
        const T* fi = f.data() + i * m;
        for (std::int64_t j = i; j < c; ++j) {
            const T* fj = f.data() + j * m;
            double acc = 0;
            for (std::int64_t t = 0; t < m; ++t)
                acc += static_cast<double>(fi[t]) * static_cast<double>(fj[t]);
            g[static_cast<std::size_t>(i * c + j)] = static_cast<T>(acc);
            g[static_cast<std::size_t>(j * c + i)] = static_cast<T>(acc);
        }
    }
    detail::ensure_finite(g, "gram");
    return g;
}

// Eager-forward tape: each record() computes the forward value
// immediately; backward() replays the nodes in strict reverse order.
template <class T>
class TapeT {
public:
    using GradMap = std::map<std::int32_t, TensorT<T>>;

    TapeT() : id_(detail::next_tape_id()) {}
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    VarId leaf(TensorT<T> value, bool requires_grad = false) {
        Node node;
        node.kind = OpKind::leaf;
        node.value = std::move(value);
        node.requires_grad = requires_grad;
        node.needs_grad = requires_grad;
        return push(std::move(node));
    }

    VarId conv2d(VarId x, VarId w, VarId b, const ConvParams& params, Backend backend) {
        Node node;
        node.kind = OpKind::conv2d;
        node.inputs = {check(x), check(w), check(b)};
        node.conv = params;
        node.backend = backend;
        node.value = conv2d_exec(value(x), value(w), value(b), params, backend);
        return push(std::move(node));
    }

    VarId relu(VarId x) {
        Node node;
        node.kind = OpKind::relu;
        node.inputs = {check(x)};
        node.value = relu_exec(value(x));
        return push(std::move(node));
    }

    VarId avg_pool(VarId x, int k, int s) {
        Node node;
        node.kind = OpKind::avg_pool;
        node.inputs = {check(x)};
        node.pool_k = k;
        node.pool_s = s;
        node.value = avg_pool_exec(value(x), k, s);
        return push(std::move(node));
    }

    VarId gram(VarId x) {
        Node node;
        node.kind = OpKind::gram;
        node.inputs = {check(x)};
        node.value = gram_exec(value(x));
        return push(std::move(node));
    }

    // Mean squared error, scalar output (1,1,1,1).
    VarId mse(VarId a, VarId b) {
        const TensorT<T>&va = value(a), &vb = value(b);
        if (!va.same_shape(vb))
            throw ShapeError("mse operands differ in shape: " + va.shape_str() + " vs " +
                             vb.shape_str());
        Node node;
        node.kind = OpKind::mse;
        node.inputs = {check(a), check(b)};
        T acc = 0;
        for (std::size_t i = 0; i < va.size(); ++i) {
            T d = va[i] - vb[i];
            acc += d * d;
        }
        node.value = TensorT<T>(1, 1, 1, 1, acc / static_cast<T>(va.size()));
        detail::ensure_finite(node.value, "mse");
        return push(std::move(node));
    }

    // Elementwise sum(coeffs[i] * terms[i]); all terms share one shape.
    VarId weighted_sum(const std::vector<VarId>& terms, const std::vector<T>& coeffs) {
        if (terms.empty() || terms.size() != coeffs.size())
            throw ContractError("weighted_sum needs matching, non-empty terms and coeffs");
        Node node;
        node.kind = OpKind::weighted_sum;
        for (VarId t : terms) node.inputs.push_back(check(t));
        node.coeffs = coeffs;
        const TensorT<T>& first = value(terms[0]);
        TensorT<T> out(first.n(), first.c(), first.h(), first.w());
        for (std::size_t t = 0; t < terms.size(); ++t) {
            const TensorT<T>& v = value(terms[t]);
            if (!v.same_shape(first))
                throw ShapeError("weighted_sum term shape " + v.shape_str() + " != " +
                                 first.shape_str());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeffs[t] * v[i];
        }
        node.value = std::move(out);
        detail::ensure_finite(node.value, "weighted_sum");
        return push(std::move(node));
    }

    const TensorT<T>& value(VarId id) const { return nodes_[check(id)].value; }

    std::size_t node_count() const { return nodes_.size(); }

    // Reverse pass from a scalar loss node. Returns one gradient tensor
    // per requires_grad leaf; leaves the loss does not reach get zeros.
    GradMap backward(VarId loss) {
        std::int32_t root = check(loss);
        const TensorT<T>& lv = nodes_[root].value;
        if (lv.n() != 1 || lv.c() != 1 || lv.h() != 1 || lv.w() != 1)
            throw ContractError("backward requires a scalar loss, got " + lv.shape_str());

        std::vector<TensorT<T>> grads(nodes_.size());
        last_visits_.assign(nodes_.size(), 0);
        grads[root] = TensorT<T>(1, 1, 1, 1, T(1));

        for (std::int32_t i = root; i >= 0; --i) {
            Node& node = nodes_[i];
            if (grads[i].size() == 0 || node.kind == OpKind::leaf) continue;
            last_visits_[i]++;
            propagate(node, grads[i], grads);
        }

        GradMap out;
        for (std::int32_t i = 0; i < static_cast<std::int32_t>(nodes_.size()); ++i) {
            if (!nodes_[i].requires_grad) continue;
            if (grads[i].size() != 0) {
                out.emplace(i, std::move(grads[i]));
            } else {
                const TensorT<T>& v = nodes_[i].value;
                out.emplace(i, TensorT<T>(v.n(), v.c(), v.h(), v.w()));
            }
        }
        return out;
    }

    static const TensorT<T>& grad_of(const GradMap& grads, VarId id) {
        auto it = grads.find(id.index);
        if (it == grads.end()) throw ContractError("no gradient recorded for this leaf");
        return it->second;
    }

    // Per-node backward visit counts from the most recent backward().
    const std::vector<int>& last_backward_visits() const { return last_visits_; }

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<std::int32_t> inputs;
        TensorT<T> value;
        ConvParams conv;
        int pool_k = 0, pool_s = 0;
        std::vector<T> coeffs;
        Backend backend = Backend::fast;
        bool requires_grad = false;
        bool needs_grad = false;
    };

    std::int32_t check(VarId id) const {
        if (id.tape_id != id_ || id.index < 0 ||
            id.index >= static_cast<std::int32_t>(nodes_.size()))
            throw TapeError("VarId does not belong to this tape");
        return id.index;
    }

    VarId push(Node node) {
        if (node.kind != OpKind::leaf) {
            for (std::int32_t in : node.inputs)
                if (nodes_[in].needs_grad) node.needs_grad = true;
        }
        nodes_.push_back(std::move(node));
        return VarId{id_, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    static void accumulate(TensorT<T>& dst, const TensorT<T>& src) {
        if (dst.size() == 0) {
            dst = src;
            return;
        }
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    void add_into(std::vector<TensorT<T>>& grads, std::int32_t idx, const TensorT<T>& g) {
        if (!nodes_[idx].needs_grad) return;
        accumulate(grads[idx], g);
    }

    void propagate(Node& node, const TensorT<T>& g, std::vector<TensorT<T>>& grads) {
        switch (node.kind) {
            case OpKind::relu: {
                const TensorT<T>& x = nodes_[node.inputs[0]].value;
                TensorT<T> dx(x.n(), x.c(), x.h(), x.w());
                // gradient at exactly 0 is defined as 0
                for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T(0) ? g[i] : T(0);
                add_into(grads, node.inputs[0], dx);
                break;
            }
            case OpKind::avg_pool: {
                const TensorT<T>& x = nodes_[node.inputs[0]].value;
                TensorT<T> dx(x.n(), x.c(), x.h(), x.w());
                const int k = node.pool_k, s = node.pool_s;
                const T inv = T(1) / static_cast<T>(k * k);
                for (std::int64_t c = 0; c < x.c(); ++c)
                    for (std::int64_t y0 = 0; y0 < node.value.h(); ++y0)
                        for (std::int64_t x0 = 0; x0 < node.value.w(); ++x0) {
                            T gv = g.at(0, c, y0, x0) * inv;
                            for (int dy = 0; dy < k; ++dy)
                                for (int dxi = 0; dxi < k; ++dxi)
                                    dx.at(0, c, y0 * s + dy, x0 * s + dxi) += gv;
                        }
                add_into(grads, node.inputs[0], dx);
                break;
            }
            case OpKind::gram: {
                const TensorT<T>& f = nodes_[node.inputs[0]].value;
                const std::int64_t c = f.c(), m = f.h() * f.w();
                // dF = (dG + dG^T) * F
                TensorT<T> sym(1, 1, c, c);
                for (std::int64_t i = 0; i < c; ++i)
                    for (std::int64_t j = 0; j < c; ++j)
                        sym[i * c + j] = g[i * c + j] + g[j * c + i];
                TensorT<T> df(f.n(), f.c(), f.h(), f.w());
                detail::gemm_raw(sym.data(), f.data(), df.data(), c, c, m);
                add_into(grads, node.inputs[0], df);
                break;
            }
            case OpKind::mse: {
                const TensorT<T>& a = nodes_[node.inputs[0]].value;
                const TensorT<T>& b = nodes_[node.inputs[1]].value;
                const T scale = g[0] * T(2) / static_cast<T>(a.size());
                if (nodes_[node.inputs[0]].needs_grad) {
                    TensorT<T> da(a.n(), a.c(), a.h(), a.w());
                    for (std::size_t i = 0; i < a.size(); ++i) da[i] = scale * (a[i] - b[i]);
                    add_into(grads, node.inputs[0], da);
                }
                if (nodes_[node.inputs[1]].needs_grad) {
                    TensorT<T> db(b.n(), b.c(), b.h(), b.w());
                    for (std::size_t i = 0; i < b.size(); ++i) db[i] = scale * (b[i] - a[i]);
                    add_into(grads, node.inputs[1], db);
                }
                break;
            }
            case OpKind::weighted_sum: {
                for (std::size_t t = 0; t < node.inputs.size(); ++t) {
                    if (!nodes_[node.inputs[t]].needs_grad) continue;
                    TensorT<T> d(g.n(), g.c(), g.h(), g.w());
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] = node.coeffs[t] * g[i];
                    add_into(grads, node.inputs[t], d);
                }
                break;
            }
            case OpKind::conv2d:
                conv_backward(node, g, grads);
                break;
            case OpKind::leaf:
                break;
        }
    }

    void conv_backward(Node& node, const TensorT<T>& g, std::vector<TensorT<T>>& grads) {
        const TensorT<T>& x = nodes_[node.inputs[0]].value;
        const TensorT<T>& w = nodes_[node.inputs[1]].value;
        const ConvParams& p = node.conv;
        const std::int64_t oh = node.value.h(), ow = node.value.w(), m = oh * ow;
        const int k = p.kernel_size, s = p.stride, pad = p.padding;
        const std::int64_t ckk = static_cast<std::int64_t>(p.in_channels) * k * k;

        if (nodes_[node.inputs[2]].needs_grad) {
            TensorT<T> db(p.out_channels, 1, 1, 1);
            for (std::int64_t oc = 0; oc < p.out_channels; ++oc) {
                T acc = 0;
                const T* row = g.data() + oc * m;
                for (std::int64_t i = 0; i < m; ++i) acc += row[i];
                db[static_cast<std::size_t>(oc)] = acc;
            }
            add_into(grads, node.inputs[2], db);
        }

        const bool want_dx = nodes_[node.inputs[0]].needs_grad;
        const bool want_dw = nodes_[node.inputs[1]].needs_grad;

        if (node.backend == Backend::fast) {
            if (want_dx) {
                // dcol = W^T(ckk x oc) * g(oc x m), then scatter back
                TensorT<T> wt(1, 1, ckk, p.out_channels);
                for (std::int64_t oc = 0; oc < p.out_channels; ++oc)
                    for (std::int64_t r = 0; r < ckk; ++r)
                        wt[r * p.out_channels + oc] = w[oc * ckk + r];
                std::vector<T> dcol(static_cast<std::size_t>(ckk * m));
                detail::gemm_raw(wt.data(), g.data(), dcol.data(), ckk, p.out_channels, m);
                TensorT<T> dx(x.n(), x.c(), x.h(), x.w());
                detail::col2im_add(dcol, p, oh, ow, dx);
                add_into(grads, node.inputs[0], dx);
            }
            if (want_dw) {
                std::vector<T> col;
                detail::im2col(x, p, oh, ow, col);
                TensorT<T> dw(p.out_channels, p.in_channels, k, k);
                detail::gemm_nt(g.data(), col.data(), dw.data(), p.out_channels, ckk, m);
                add_into(grads, node.inputs[1], dw);
            }
        } else {
            // Direct accumulation with the spatial loop innermost so the
            // row updates stay contiguous (stride 1 everywhere in the
            // models) instead of scattering cell by cell.
            if (want_dx) {
                TensorT<T> dx(x.n(), x.c(), x.h(), x.w());
                for (std::int64_t oc = 0; oc < p.out_channels; ++oc)
                    for (std::int64_t ic = 0; ic < p.in_channels; ++ic)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                const T wv = w.at(oc, ic, kh, kw);
                                for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                                    const std::int64_t iy = y0 * s + kh - pad;
                                    if (iy < 0 || iy >= x.h()) continue;
                                    const T* grow = g.data() + (oc * oh + y0) * ow;
                                    T* drow = dx.data() + (ic * x.h() + iy) * x.w();
                                    const std::int64_t x_lo =
                                        std::max<std::int64_t>(0, (pad - kw + s - 1) / s);
                                    const std::int64_t num = x.w() - 1 - kw + pad;
                                    const std::int64_t x_hi =
                                        num < 0 ? 0 : std::min(ow, num / s + 1);
                                    if (s == 1) {
                                        const std::int64_t off = kw - pad;
                                        for (std::int64_t x0 = x_lo; x0 < x_hi; ++x0)
                                            drow[x0 + off] += wv * grow[x0];
                                    } else {
                                        for (std::int64_t x0 = x_lo; x0 < x_hi; ++x0)
                                            drow[x0 * s + kw - pad] += wv * grow[x0];
                                    }
                                }
                            }
                add_into(grads, node.inputs[0], dx);
            }
            if (want_dw) {
                TensorT<T> dw(p.out_channels, p.in_channels, k, k);
                for (std::int64_t oc = 0; oc < p.out_channels; ++oc)
                    for (std::int64_t ic = 0; ic < p.in_channels; ++ic)
                        for (int kh = 0; kh < k; ++kh)
                            for (int kw = 0; kw < k; ++kw) {
                                T acc = 0;
                                for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                                    const std::int64_t iy = y0 * s + kh - pad;
                                    if (iy < 0 || iy >= x.h()) continue;
                                    const T* grow = g.data() + (oc * oh + y0) * ow;
                                    const T* xrow = x.data() + (ic * x.h() + iy) * x.w();
                                    for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                                        const std::int64_t ix = x0 * s + kw - pad;
                                        if (ix < 0 || ix >= x.w()) continue;
                                        acc += grow[x0] * xrow[ix];
                                    }
                                }
                                dw.at(oc, ic, kh, kw) = acc;
                            }
                add_into(grads, node.inputs[1], dw);
            }
        }
    }

    std::uint64_t id_;
    std::vector<Node> nodes_;
    std::vector<int> last_visits_;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

// Builds a scalar loss on the given tape from a requires-grad leaf.
using LossBuilder = std::function<VarId(Tape64&, VarId)>;

// Central finite-difference check of the analytic gradient wrt `leaf`.
// Returns max over coordinates of |analytic - fd| / max(1, |fd|).
// Runs in 64-bit precision by construction.
double grad_check(const LossBuilder& builder, const Tensor64& leaf, double eps);

}  // namespace nst
