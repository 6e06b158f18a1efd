#pragma once

#include <functional>
#include <utility>

#include "tipsynth/tensor.hpp"

namespace tipsynth {

// Define-by-run reverse-mode graph. Nodes live in creation order, so a single
// reverse sweep is a valid topological order. Handles are (tape, index) pairs;
// indices stay stable while the node vector grows.
template <typename S>
class Tape;

template <typename S>
struct Val {
    Tape<S>* tape = nullptr;
    int idx = -1;

    const Tens<S>& v() const;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

template <typename S>
class Tape {
public:
    using BackFn = std::function<void(Tape&, int)>;

    struct Node {
        Tens<S> val;
        Tens<S> grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        BackFn back;
    };

    bool check_finite = false;

    Val<S> leaf(Tens<S> v, bool requires_grad = false) {
        return push(std::move(v), requires_grad, nullptr);
    }
    Val<S> constant(Tens<S> v) { return leaf(std::move(v), false); }

    Val<S> push(Tens<S> v, bool requires_grad, BackFn back) {
        if (check_finite && !v.all_finite())
            throw ValidationError("non-finite values produced by op at node " +
                                  std::to_string(nodes.size()));
        nodes.push_back(Node{std::move(v), {}, requires_grad, false, std::move(back)});
        return Val<S>{this, static_cast<int>(nodes.size()) - 1};
    }

    Node& node(int i) { return nodes[static_cast<size_t>(i)]; }
    const Tens<S>& value(int i) const { return nodes[static_cast<size_t>(i)].val; }

    Tens<S>& grad(int i) {
        Node& n = nodes[static_cast<size_t>(i)];
        if (!n.grad_alloc) {
            n.grad = Tens<S>::zeros(n.val.shape);
            n.grad_alloc = true;
        }
        return n.grad;
    }

    void accumulate(int i, const Tens<S>& g) {
        Node& n = nodes[static_cast<size_t>(i)];
        if (!n.requires_grad && n.back == nullptr) return;
        Tens<S>& dst = grad(i);
        if (dst.shape != g.shape) throw ShapeError("gradient shape mismatch");
        for (size_t k = 0; k < dst.data.size(); ++k) dst.data[k] += g.data[k];
    }

    void backward(const Val<S>& loss) {
        if (value(loss.idx).numel() != 1)
            throw ShapeError("backward requires a scalar loss, got " +
                             shape_str(value(loss.idx).shape));
        grad(loss.idx).data[0] = S(1);
        for (int i = loss.idx; i >= 0; --i) {
            Node& n = nodes[static_cast<size_t>(i)];
            if (n.back && n.grad_alloc) n.back(*this, i);
        }
    }

    size_t size() const { return nodes.size(); }

    std::vector<Node> nodes;
};

template <typename S>
const Tens<S>& Val<S>::v() const {
    return tape->value(idx);
}

// ---- elementwise ops ----

namespace detail {

template <typename S>
bool wants_grad(const Val<S>& a) {
    auto& n = a.tape->node(a.idx);
    return n.requires_grad || n.back != nullptr;
}

// Broadcast loop support: "row-repeat" covers the common [rows, inner] op
// [inner] pattern (bias adds, feature-wise modulation) without per-element
// index arithmetic.
inline bool is_trailing_broadcast(const Shape& small, const Shape& big, int64_t& rows,
                                  int64_t& inner) {
    if (small.size() > big.size()) return false;
    inner = 1;
    for (size_t i = 0; i < small.size(); ++i) {
        const size_t bi = big.size() - small.size() + i;
        if (small[i] != big[bi]) return false;
        inner *= small[i];
    }
    rows = 1;
    for (size_t i = 0; i + small.size() < big.size(); ++i) rows *= big[i];
    return true;
}

template <typename S, class FwdF>
Tens<S> ewise_fwd(const Tens<S>& a, const Tens<S>& b, FwdF f) {
    // same-shape fast path
    if (a.shape == b.shape) {
        Tens<S> out(a.shape);
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
        return out;
    }
    int64_t rows = 0, inner = 0;
    if (is_trailing_broadcast(b.shape, a.shape, rows, inner)) {
        Tens<S> out(a.shape);
        for (int64_t r = 0; r < rows; ++r) {
            const S* ap = a.data.data() + r * inner;
            S* op = out.data.data() + r * inner;
            for (int64_t i = 0; i < inner; ++i) op[i] = f(ap[i], b.data[static_cast<size_t>(i)]);
        }
        return out;
    }
    if (is_trailing_broadcast(a.shape, b.shape, rows, inner)) {
        Tens<S> out(b.shape);
        for (int64_t r = 0; r < rows; ++r) {
            const S* bp = b.data.data() + r * inner;
            S* op = out.data.data() + r * inner;
            for (int64_t i = 0; i < inner; ++i) op[i] = f(a.data[static_cast<size_t>(i)], bp[i]);
        }
        return out;
    }
    const Shape out_shape = broadcast_shape(a.shape, b.shape);
    Tens<S> out(out_shape);
    const auto sa = broadcast_strides(a.shape, out_shape);
    const auto sb = broadcast_strides(b.shape, out_shape);
    const size_t rank = out_shape.size();
    std::vector<int64_t> idx(rank, 0);
    for (int64_t lin = 0; lin < out.numel(); ++lin) {
        int64_t oa = 0, ob = 0;
        for (size_t i = 0; i < rank; ++i) {
            oa += idx[i] * sa[i];
            ob += idx[i] * sb[i];
        }
        out.data[static_cast<size_t>(lin)] =
            f(a.data[static_cast<size_t>(oa)], b.data[static_cast<size_t>(ob)]);
        for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

// Per-element chain rule for a binary broadcast op: dA = f(g, a, b) evaluated
// elementwise on the broadcast grid, then reduced to a's shape.
template <typename S, class DF>
Tens<S> ewise_grad(const Tens<S>& g, const Tens<S>& a, const Tens<S>& b, const Shape& target, DF df) {
    if (a.shape == g.shape && b.shape == g.shape) {
        Tens<S> wide(g.shape);
        for (size_t i = 0; i < wide.data.size(); ++i)
            wide.data[i] = df(g.data[i], a.data[i], b.data[i]);
        return target == g.shape ? wide : reduce_to_shape(wide, target);
    }
    int64_t rows_a = 0, inner_a = 0, rows_b = 0, inner_b = 0;
    const bool a_full = a.shape == g.shape;
    const bool b_full = b.shape == g.shape;
    const bool a_small = !a_full && is_trailing_broadcast(a.shape, g.shape, rows_a, inner_a);
    const bool b_small = !b_full && is_trailing_broadcast(b.shape, g.shape, rows_b, inner_b);
    const bool compatible = !(a_small && b_small) || inner_a == inner_b;
    if ((a_full || a_small) && (b_full || b_small) && compatible) {
        Tens<S> wide(g.shape);
        const int64_t inner = a_small ? inner_a : (b_small ? inner_b : g.numel());
        const int64_t rows = g.numel() / inner;
        for (int64_t r = 0; r < rows; ++r) {
            const S* gp = g.data.data() + r * inner;
            const S* ap = a.data.data() + (a_small ? 0 : r * inner);
            const S* bp = b.data.data() + (b_small ? 0 : r * inner);
            S* wp = wide.data.data() + r * inner;
            for (int64_t i = 0; i < inner; ++i) wp[i] = df(gp[i], ap[i], bp[i]);
        }
        return target == g.shape ? wide : reduce_to_shape(wide, target);
    }
    Tens<S> wide(g.shape);
    const auto sa = broadcast_strides(a.shape, g.shape);
    const auto sb = broadcast_strides(b.shape, g.shape);
    const size_t rank = g.shape.size();
    std::vector<int64_t> idx(rank, 0);
    for (int64_t lin = 0; lin < g.numel(); ++lin) {
        int64_t oa = 0, ob = 0;
        for (size_t i = 0; i < rank; ++i) {
            oa += idx[i] * sa[i];
            ob += idx[i] * sb[i];
        }
        wide.data[static_cast<size_t>(lin)] =
            df(g.data[static_cast<size_t>(lin)], a.data[static_cast<size_t>(oa)],
               b.data[static_cast<size_t>(ob)]);
        for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < g.shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return reduce_to_shape(wide, target);
}

}  // namespace detail

template <typename S>
Val<S> add(Val<S> a, Val<S> b) {
    Tape<S>& t = *a.tape;
    Tens<S> out = detail::ewise_fwd(a.v(), b.v(), [](S x, S y) { return x + y; });
    const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
    const int ia = a.idx, ib = b.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, ib](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        tp.accumulate(ia, reduce_to_shape(g, tp.value(ia).shape));
        tp.accumulate(ib, reduce_to_shape(g, tp.value(ib).shape));
    });
}

template <typename S>
Val<S> sub(Val<S> a, Val<S> b) {
    Tape<S>& t = *a.tape;
    Tens<S> out = detail::ewise_fwd(a.v(), b.v(), [](S x, S y) { return x - y; });
    const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
    const int ia = a.idx, ib = b.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, ib](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        tp.accumulate(ia, reduce_to_shape(g, tp.value(ia).shape));
        Tens<S> neg(g.shape);
        for (size_t k = 0; k < g.data.size(); ++k) neg.data[k] = -g.data[k];
        tp.accumulate(ib, reduce_to_shape(neg, tp.value(ib).shape));
    });
}

template <typename S>
Val<S> mul(Val<S> a, Val<S> b) {
    Tape<S>& t = *a.tape;
    Tens<S> out = detail::ewise_fwd(a.v(), b.v(), [](S x, S y) { return x * y; });
    const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
    const int ia = a.idx, ib = b.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, ib](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        const Tens<S>& av = tp.value(ia);
        const Tens<S>& bv = tp.value(ib);
        tp.accumulate(ia, detail::ewise_grad(g, av, bv, av.shape,
                                             [](S gv, S, S y) { return gv * y; }));
        tp.accumulate(ib, detail::ewise_grad(g, av, bv, bv.shape,
                                             [](S gv, S x, S) { return gv * x; }));
    });
}

template <typename S>
Val<S> scale(Val<S> a, double c) {
    Tape<S>& t = *a.tape;
    Tens<S> out(a.v().shape);
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] = a.v().data[k] * static_cast<S>(c);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, c](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        Tens<S> ga(g.shape);
        for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] = g.data[k] * static_cast<S>(c);
        tp.accumulate(ia, ga);
    });
}

template <typename S>
Val<S> add_const(Val<S> a, double c) {
    Tape<S>& t = *a.tape;
    Tens<S> out(a.v().shape);
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] = a.v().data[k] + static_cast<S>(c);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia](Tape<S>& tp, int self) {
        tp.accumulate(ia, tp.node(self).grad);
    });
}

template <typename S, class FwdF, class GradF>
Val<S> unary_op(Val<S> a, FwdF fwd, GradF grad_of_input) {
    Tape<S>& t = *a.tape;
    Tens<S> out(a.v().shape);
    for (size_t k = 0; k < out.data.size(); ++k) out.data[k] = fwd(a.v().data[k]);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    if (!rg) return t.push(std::move(out), false, nullptr);
    return t.push(std::move(out), true, [ia, grad_of_input](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        const Tens<S>& x = tp.value(ia);
        Tens<S> ga(g.shape);
        for (size_t k = 0; k < g.data.size(); ++k) ga.data[k] = g.data[k] * grad_of_input(x.data[k]);
        tp.accumulate(ia, ga);
    });
}

template <typename S>
Val<S> relu(Val<S> a) {
    return unary_op(a, [](S x) { return x > S(0) ? x : S(0); },
                    [](S x) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Val<S> tanh_op(Val<S> a) {
    return unary_op(a, [](S x) { return std::tanh(x); },
                    [](S x) {
                        const S th = std::tanh(x);
                        return S(1) - th * th;
                    });
}

// sqrt with subgradient 0 at the origin so exact-zero losses stay exact
template <typename S>
Val<S> sqrt0(Val<S> a) {
    return unary_op(a, [](S x) { return x > S(0) ? std::sqrt(x) : S(0); },
                    [](S x) { return x > S(0) ? S(0.5) / std::sqrt(x) : S(0); });
}

template <typename S>
Val<S> abs0(Val<S> a) {
    return unary_op(a, [](S x) { return std::abs(x); },
                    [](S x) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Val<S> rsqrt_eps(Val<S> a, double eps) {
    const S e = static_cast<S>(eps);
    return unary_op(a, [e](S x) { return S(1) / std::sqrt(x + e); },
                    [e](S x) {
                        const S y = S(1) / std::sqrt(x + e);
                        return S(-0.5) * y * y * y;
                    });
}

template <typename S>
Val<S> clamp_pm(Val<S> a, double bound) {
    const S b = static_cast<S>(bound);
    return unary_op(a, [b](S x) { return x > b ? b : (x < -b ? -b : x); },
                    [b](S x) { return (x > -b && x < b) ? S(1) : S(0); });
}

template <typename S>
Val<S> atan2_op(Val<S> y, Val<S> x) {
    Tape<S>& t = *y.tape;
    Tens<S> out = detail::ewise_fwd(y.v(), x.v(), [](S yy, S xx) { return std::atan2(yy, xx); });
    const bool rg = detail::wants_grad(y) || detail::wants_grad(x);
    const int iy = y.idx, ix = x.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [iy, ix](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        const Tens<S>& yv = tp.value(iy);
        const Tens<S>& xv = tp.value(ix);
        tp.accumulate(iy, detail::ewise_grad(g, yv, xv, yv.shape, [](S gv, S yy, S xx) {
            const S d = yy * yy + xx * xx;
            return d > S(0) ? gv * xx / d : S(0);
        }));
        tp.accumulate(ix, detail::ewise_grad(g, yv, xv, xv.shape, [](S gv, S yy, S xx) {
            const S d = yy * yy + xx * xx;
            return d > S(0) ? gv * (-yy) / d : S(0);
        }));
    });
}

// ---- reductions ----

template <typename S>
Val<S> sum_all(Val<S> a) {
    Tape<S>& t = *a.tape;
    S acc = 0;
    for (S v : a.v().data) acc += v;
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(Tens<S>::scalar(acc), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia](Tape<S>& tp, int self) {
        const S g = tp.node(self).grad.data[0];
        Tens<S> ga = Tens<S>::full(tp.value(ia).shape, g);
        tp.accumulate(ia, ga);
    });
}

template <typename S>
Val<S> mean_all(Val<S> a) {
    const double inv = 1.0 / static_cast<double>(a.v().numel());
    return scale(sum_all(a), inv);
}

template <typename S>
Val<S> sum_lastdim(Val<S> a, bool keepdim) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    if (sh.empty()) throw ShapeError("sum_lastdim on rank-0 tensor");
    const int64_t d = sh.back();
    const int64_t rows = a.v().numel() / d;
    Shape out_shape(sh.begin(), sh.end() - 1);
    if (keepdim) out_shape.push_back(1);
    if (out_shape.empty()) out_shape.push_back(1);
    Tens<S> out(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
        S acc = 0;
        for (int64_t j = 0; j < d; ++j) acc += a.v().data[static_cast<size_t>(r * d + j)];
        out.data[static_cast<size_t>(r)] = acc;
    }
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, d, rows](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        Tens<S> ga(tp.value(ia).shape);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < d; ++j)
                ga.data[static_cast<size_t>(r * d + j)] = g.data[static_cast<size_t>(r)];
        tp.accumulate(ia, ga);
    });
}

template <typename S>
Val<S> mean_lastdim(Val<S> a, bool keepdim) {
    const int64_t d = a.v().shape.back();
    return scale(sum_lastdim(a, keepdim), 1.0 / static_cast<double>(d));
}

// ---- softmax over the last dimension ----

template <typename S>
Val<S> softmax_lastdim(Val<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    const int64_t d = sh.back();
    const int64_t rows = a.v().numel() / d;
    Tens<S> out(sh);
    for (int64_t r = 0; r < rows; ++r) {
        const S* x = a.v().data.data() + r * d;
        S* y = out.data.data() + r * d;
        S mx = x[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        S denom = 0;
        for (int64_t j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            denom += y[j];
        }
        for (int64_t j = 0; j < d; ++j) y[j] /= denom;
    }
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, d, rows](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        const Tens<S>& y = tp.node(self).val;
        Tens<S> ga(tp.value(ia).shape);
        for (int64_t r = 0; r < rows; ++r) {
            const S* gr = g.data.data() + r * d;
            const S* yr = y.data.data() + r * d;
            S dotv = 0;
            for (int64_t j = 0; j < d; ++j) dotv += gr[j] * yr[j];
            S* out_r = ga.data.data() + r * d;
            for (int64_t j = 0; j < d; ++j) out_r[j] = yr[j] * (gr[j] - dotv);
        }
        tp.accumulate(ia, ga);
    });
}

// ---- shape ops ----

template <typename S>
Val<S> reshape(Val<S> a, Shape new_shape) {
    Tape<S>& t = *a.tape;
    if (shape_numel(new_shape) != a.v().numel())
        throw ShapeError("reshape " + shape_str(a.v().shape) + " -> " + shape_str(new_shape));
    Tens<S> out(new_shape, a.v().data);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia](Tape<S>& tp, int self) {
        const Tens<S>& g = tp.node(self).grad;
        Tens<S> ga(tp.value(ia).shape, g.data);
        tp.accumulate(ia, ga);
    });
}

namespace detail {

template <typename S>
Tens<S> permute_fwd(const Tens<S>& a, const std::vector<int>& axes) {
    const size_t rank = a.shape.size();
    Shape out_shape(rank);
    for (size_t i = 0; i < rank; ++i) out_shape[i] = a.shape[static_cast<size_t>(axes[i])];
    std::vector<int64_t> in_strides(rank, 1);
    for (int i = static_cast<int>(rank) - 2; i >= 0; --i)
        in_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(i) + 1] * a.shape[static_cast<size_t>(i) + 1];
    Tens<S> out(out_shape);
    std::vector<int64_t> idx(rank, 0);
    for (int64_t lin = 0; lin < out.numel(); ++lin) {
        int64_t off = 0;
        for (size_t i = 0; i < rank; ++i) off += idx[i] * in_strides[static_cast<size_t>(axes[i])];
        out.data[static_cast<size_t>(lin)] = a.data[static_cast<size_t>(off)];
        for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

}  // namespace detail

template <typename S>
Val<S> permute(Val<S> a, std::vector<int> axes) {
    Tape<S>& t = *a.tape;
    if (axes.size() != a.v().shape.size()) throw ShapeError("permute axes rank mismatch");
    Tens<S> out = detail::permute_fwd(a.v(), axes);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg, !rg ? typename Tape<S>::BackFn(nullptr) : [ia, axes](Tape<S>& tp, int self) {
        std::vector<int> inv(axes.size());
        for (size_t i = 0; i < axes.size(); ++i) inv[static_cast<size_t>(axes[i])] = static_cast<int>(i);
        tp.accumulate(ia, detail::permute_fwd(tp.node(self).grad, inv));
    });
}

template <typename S>
Val<S> slice_axis(Val<S> a, int axis, int64_t start, int64_t len) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    if (axis < 0 || axis >= static_cast<int>(sh.size())) throw ShapeError("slice axis out of range");
    if (start < 0 || start + len > sh[static_cast<size_t>(axis)]) throw ShapeError("slice out of bounds");
    Shape out_shape = sh;
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < sh.size(); ++i) inner *= sh[i];
    const int64_t dim = sh[static_cast<size_t>(axis)];
    Tens<S> out(out_shape);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < len; ++j)
            std::copy_n(a.v().data.data() + (o * dim + start + j) * inner, inner,
                        out.data.data() + (o * len + j) * inner);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr)
                      : [ia, outer, inner, dim, start, len](Tape<S>& tp, int self) {
                            const Tens<S>& g = tp.node(self).grad;
                            Tens<S> ga(tp.value(ia).shape);
                            for (int64_t o = 0; o < outer; ++o)
                                for (int64_t j = 0; j < len; ++j)
                                    std::copy_n(g.data.data() + (o * len + j) * inner, inner,
                                                ga.data.data() + (o * dim + start + j) * inner);
                            tp.accumulate(ia, ga);
                        });
}

template <typename S>
Val<S> concat_axis(std::vector<Val<S>> parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    Tape<S>& t = *parts[0].tape;
    const Shape& base = parts[0].v().shape;
    Shape out_shape = base;
    int64_t total = 0;
    for (const Val<S>& p : parts) {
        const Shape& sh = p.v().shape;
        if (sh.size() != base.size()) throw ShapeError("concat rank mismatch");
        for (size_t i = 0; i < sh.size(); ++i)
            if (static_cast<int>(i) != axis && sh[i] != base[i])
                throw ShapeError("concat non-axis dim mismatch");
        total += sh[static_cast<size_t>(axis)];
    }
    out_shape[static_cast<size_t>(axis)] = total;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= base[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < base.size(); ++i) inner *= base[i];
    Tens<S> out(out_shape);
    int64_t offset = 0;
    for (const Val<S>& p : parts) {
        const int64_t len = p.v().shape[static_cast<size_t>(axis)];
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(p.v().data.data() + o * len * inner, len * inner,
                        out.data.data() + (o * total + offset) * inner);
        offset += len;
    }
    bool rg = false;
    std::vector<int> ids;
    std::vector<int64_t> lens;
    for (const Val<S>& p : parts) {
        rg = rg || detail::wants_grad(p);
        ids.push_back(p.idx);
        lens.push_back(p.v().shape[static_cast<size_t>(axis)]);
    }
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr)
                      : [ids, lens, outer, inner, total](Tape<S>& tp, int self) {
                            const Tens<S>& g = tp.node(self).grad;
                            int64_t offset2 = 0;
                            for (size_t pi = 0; pi < ids.size(); ++pi) {
                                const int64_t len = lens[pi];
                                Tens<S> ga(tp.value(ids[pi]).shape);
                                for (int64_t o = 0; o < outer; ++o)
                                    std::copy_n(g.data.data() + (o * total + offset2) * inner,
                                                len * inner, ga.data.data() + o * len * inner);
                                tp.accumulate(ids[pi], ga);
                                offset2 += len;
                            }
                        });
}

// Gather rows along `axis` by explicit index list.
template <typename S>
Val<S> index_select(Val<S> a, int axis, std::vector<int64_t> indices) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    Shape out_shape = sh;
    out_shape[static_cast<size_t>(axis)] = static_cast<int64_t>(indices.size());
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= sh[static_cast<size_t>(i)];
    for (size_t i = static_cast<size_t>(axis) + 1; i < sh.size(); ++i) inner *= sh[i];
    const int64_t dim = sh[static_cast<size_t>(axis)];
    for (int64_t ix : indices)
        if (ix < 0 || ix >= dim) throw ShapeError("index_select out of range");
    Tens<S> out(out_shape);
    const int64_t n = static_cast<int64_t>(indices.size());
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < n; ++j)
            std::copy_n(a.v().data.data() + (o * dim + indices[static_cast<size_t>(j)]) * inner,
                        inner, out.data.data() + (o * n + j) * inner);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr)
                      : [ia, indices, outer, inner, dim, n](Tape<S>& tp, int self) {
                            const Tens<S>& g = tp.node(self).grad;
                            Tens<S> ga(tp.value(ia).shape);
                            for (int64_t o = 0; o < outer; ++o)
                                for (int64_t j = 0; j < n; ++j) {
                                    const S* src = g.data.data() + (o * n + j) * inner;
                                    S* dst = ga.data.data() +
                                             (o * dim + indices[static_cast<size_t>(j)]) * inner;
                                    for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                                }
                            tp.accumulate(ia, ga);
                        });
}

// ---- matmul ----

namespace detail {

template <typename S>
void matmul_kernel(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
    // c[m,n] += a[m,k] @ b[k,n], c pre-zeroed; ikj order keeps b row-contiguous
    for (int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            const S av = arow[kk];
            if (av == S(0)) continue;
            const S* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,n] += a[k,m]^T @ b[k,n]
template <typename S>
void matmul_at_b(const S* a, const S* b, S* c, int64_t k, int64_t m, int64_t n) {
    for (int64_t kk = 0; kk < k; ++kk) {
        const S* arow = a + kk * m;
        const S* brow = b + kk * n;
        for (int64_t i = 0; i < m; ++i) {
            const S av = arow[i];
            if (av == S(0)) continue;
            S* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,k] += a[m,n] @ b[k,n]^T
template <typename S>
void matmul_a_bt(const S* a, const S* b, S* c, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * n;
        S* crow = c + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const S* brow = b + kk * n;
            S acc = 0;
            for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[kk] += acc;
        }
    }
}

}  // namespace detail

// a: [batch..., m, k] or [m, k]; b: [batch..., k, n] or [k, n]. A rank-2
// operand broadcasts over the other side's batch dims.
template <typename S>
Val<S> matmul(Val<S> a, Val<S> b) {
    Tape<S>& t = *a.tape;
    const Shape& sa = a.v().shape;
    const Shape& sb = b.v().shape;
    if (sa.size() < 2 || sb.size() < 2) throw ShapeError("matmul needs rank >= 2");
    const int64_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
    const int64_t k2 = sb[sb.size() - 2], n = sb[sb.size() - 1];
    if (k != k2) throw ShapeError("matmul inner dims " + shape_str(sa) + " x " + shape_str(sb));
    Shape batch;
    if (sa.size() > 2 && sb.size() > 2) {
        if (Shape(sa.begin(), sa.end() - 2) != Shape(sb.begin(), sb.end() - 2))
            throw ShapeError("matmul batch dims mismatch");
        batch = Shape(sa.begin(), sa.end() - 2);
    } else if (sa.size() > 2) {
        batch = Shape(sa.begin(), sa.end() - 2);
    } else if (sb.size() > 2) {
        batch = Shape(sb.begin(), sb.end() - 2);
    }
    const int64_t nbatch = shape_numel(batch);
    const bool a_batched = sa.size() > 2;
    const bool b_batched = sb.size() > 2;

    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tens<S> out(out_shape);
    for (int64_t bi = 0; bi < nbatch; ++bi) {
        const S* ap = a.v().data.data() + (a_batched ? bi * m * k : 0);
        const S* bp = b.v().data.data() + (b_batched ? bi * k * n : 0);
        detail::matmul_kernel(ap, bp, out.data.data() + bi * m * n, m, k, n);
    }
    const bool rg = detail::wants_grad(a) || detail::wants_grad(b);
    const int ia = a.idx, ib = b.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr)
                      : [ia, ib, m, k, n, nbatch, a_batched, b_batched](Tape<S>& tp, int self) {
                            const Tens<S>& g = tp.node(self).grad;
                            const Tens<S>& av = tp.value(ia);
                            const Tens<S>& bv = tp.value(ib);
                            Tens<S> ga(av.shape);
                            Tens<S> gb(bv.shape);
                            for (int64_t bi = 0; bi < nbatch; ++bi) {
                                const S* gp = g.data.data() + bi * m * n;
                                const S* ap = av.data.data() + (a_batched ? bi * m * k : 0);
                                const S* bp = bv.data.data() + (b_batched ? bi * k * n : 0);
                                // dA = g @ B^T ; dB = A^T @ g
                                detail::matmul_a_bt(gp, bp, ga.data.data() + (a_batched ? bi * m * k : 0), m, n, k);
                                detail::matmul_at_b(ap, gp, gb.data.data() + (b_batched ? bi * k * n : 0), m, k, n);
                            }
                            tp.accumulate(ia, ga);
                            tp.accumulate(ib, gb);
                        });
}

// ---- temporal convolution ----

// x: [B, T, Cin] or [T, Cin]; w: [K, Cin, Cout]; bias: [Cout]; odd K, zero
// "same" padding over T.
template <typename S>
Val<S> conv1d_time(Val<S> x, Val<S> w, Val<S> bias) {
    Tape<S>& t = *x.tape;
    const Shape& sx = x.v().shape;
    const Shape& sw = w.v().shape;
    if (sw.size() != 3) throw ShapeError("conv1d weight must be [K, Cin, Cout]");
    const bool batched = sx.size() == 3;
    if (!batched && sx.size() != 2) throw ShapeError("conv1d input must be [T,C] or [B,T,C]");
    const int64_t B = batched ? sx[0] : 1;
    const int64_t T = batched ? sx[1] : sx[0];
    const int64_t Cin = batched ? sx[2] : sx[1];
    const int64_t K = sw[0], Cw = sw[1], Cout = sw[2];
    if (Cin != Cw) throw ShapeError("conv1d channel mismatch");
    if (K % 2 == 0) throw ConfigError("conv1d kernel must be odd");
    const int64_t half = K / 2;

    Shape out_shape = batched ? Shape{B, T, Cout} : Shape{T, Cout};
    Tens<S> out(out_shape);
    const S* xb = x.v().data.data();
    const S* wb = w.v().data.data();
    const S* bb = bias.v().data.data();
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t ti = 0; ti < T; ++ti) {
            S* yrow = out.data.data() + (b * T + ti) * Cout;
            for (int64_t co = 0; co < Cout; ++co) yrow[co] = bb[co];
            for (int64_t kk = 0; kk < K; ++kk) {
                const int64_t src = ti + kk - half;
                if (src < 0 || src >= T) continue;
                const S* xrow = xb + (b * T + src) * Cin;
                const S* wrow = wb + kk * Cin * Cout;
                for (int64_t ci = 0; ci < Cin; ++ci) {
                    const S xv = xrow[ci];
                    if (xv == S(0)) continue;
                    const S* wr = wrow + ci * Cout;
                    for (int64_t co = 0; co < Cout; ++co) yrow[co] += xv * wr[co];
                }
            }
        }
    }
    const bool rg = detail::wants_grad(x) || detail::wants_grad(w) || detail::wants_grad(bias);
    const int ixx = x.idx, iw = w.idx, ibias = bias.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr)
                      : [ixx, iw, ibias, B, T, Cin, Cout, K, half](Tape<S>& tp, int self) {
                            const Tens<S>& g = tp.node(self).grad;
                            const Tens<S>& xv = tp.value(ixx);
                            const Tens<S>& wv = tp.value(iw);
                            Tens<S> gx(xv.shape);
                            Tens<S> gw(wv.shape);
                            Tens<S> gbias(tp.value(ibias).shape);
                            for (int64_t b = 0; b < B; ++b) {
                                for (int64_t ti = 0; ti < T; ++ti) {
                                    const S* grow = g.data.data() + (b * T + ti) * Cout;
                                    for (int64_t co = 0; co < Cout; ++co) gbias.data[static_cast<size_t>(co)] += grow[co];
                                    for (int64_t kk = 0; kk < K; ++kk) {
                                        const int64_t src = ti + kk - half;
                                        if (src < 0 || src >= T) continue;
                                        const S* xrow = xv.data.data() + (b * T + src) * Cin;
                                        S* gxrow = gx.data.data() + (b * T + src) * Cin;
                                        const S* wrow = wv.data.data() + kk * Cin * Cout;
                                        S* gwrow = gw.data.data() + kk * Cin * Cout;
                                        for (int64_t ci = 0; ci < Cin; ++ci) {
                                            const S* wr = wrow + ci * Cout;
                                            S* gwr = gwrow + ci * Cout;
                                            S accx = 0;
                                            const S xval = xrow[ci];
                                            for (int64_t co = 0; co < Cout; ++co) {
                                                accx += grow[co] * wr[co];
                                                gwr[co] += grow[co] * xval;
                                            }
                                            gxrow[ci] += accx;
                                        }
                                    }
                                }
                            }
                            tp.accumulate(ixx, gx);
                            tp.accumulate(iw, gw);
                            tp.accumulate(ibias, gbias);
                        });
}

// ---- temporal resampling (axis 0) ----

template <typename S>
Val<S> avgpool2_axis0(Val<S> a) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    const int64_t T = sh[0];
    const int64_t inner = a.v().numel() / T;
    const int64_t To = (T + 1) / 2;
    Shape out_shape = sh;
    out_shape[0] = To;
    Tens<S> out(out_shape);
    for (int64_t o = 0; o < To; ++o) {
        const int64_t i0 = 2 * o;
        const int64_t i1 = std::min<int64_t>(2 * o + 1, T - 1);
        const S* r0 = a.v().data.data() + i0 * inner;
        const S* r1 = a.v().data.data() + i1 * inner;
        S* dst = out.data.data() + o * inner;
        if (i1 == i0) {
            std::copy_n(r0, inner, dst);
        } else {
            for (int64_t k = 0; k < inner; ++k) dst[k] = S(0.5) * (r0[k] + r1[k]);
        }
    }
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr) : [ia, T, To, inner](Tape<S>& tp, int self) {
                      const Tens<S>& g = tp.node(self).grad;
                      Tens<S> ga(tp.value(ia).shape);
                      for (int64_t o = 0; o < To; ++o) {
                          const int64_t i0 = 2 * o;
                          const int64_t i1 = std::min<int64_t>(2 * o + 1, T - 1);
                          const S* src = g.data.data() + o * inner;
                          if (i1 == i0) {
                              S* d0 = ga.data.data() + i0 * inner;
                              for (int64_t k = 0; k < inner; ++k) d0[k] += src[k];
                          } else {
                              S* d0 = ga.data.data() + i0 * inner;
                              S* d1 = ga.data.data() + i1 * inner;
                              for (int64_t k = 0; k < inner; ++k) {
                                  d0[k] += S(0.5) * src[k];
                                  d1[k] += S(0.5) * src[k];
                              }
                          }
                      }
                      tp.accumulate(ia, ga);
                  });
}

template <typename S>
Val<S> upsample2_axis0(Val<S> a, int64_t target_len) {
    Tape<S>& t = *a.tape;
    const Shape& sh = a.v().shape;
    const int64_t T = sh[0];
    const int64_t inner = a.v().numel() / T;
    if (target_len > 2 * T || target_len < 2 * T - 1)
        throw ShapeError("upsample2 target must be 2T or 2T-1");
    Shape out_shape = sh;
    out_shape[0] = target_len;
    Tens<S> out(out_shape);
    for (int64_t o = 0; o < target_len; ++o)
        std::copy_n(a.v().data.data() + (o / 2) * inner, inner, out.data.data() + o * inner);
    const bool rg = detail::wants_grad(a);
    const int ia = a.idx;
    return t.push(std::move(out), rg,
                  !rg ? typename Tape<S>::BackFn(nullptr) : [ia, target_len, inner](Tape<S>& tp, int self) {
                      const Tens<S>& g = tp.node(self).grad;
                      Tens<S> ga(tp.value(ia).shape);
                      for (int64_t o = 0; o < target_len; ++o) {
                          const S* src = g.data.data() + o * inner;
                          S* dst = ga.data.data() + (o / 2) * inner;
                          for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
                      }
                      tp.accumulate(ia, ga);
                  });
}

// operator sugar
template <typename S>
Val<S> operator+(Val<S> a, Val<S> b) {
    return add(a, b);
}
template <typename S>
Val<S> operator-(Val<S> a, Val<S> b) {
    return sub(a, b);
}
template <typename S>
Val<S> operator*(Val<S> a, Val<S> b) {
    return mul(a, b);
}

}  // namespace tipsynth
