#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tipsynth/common.hpp"

namespace tipsynth {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

// Dense row-major tensor. The runtime scalar is float; double instantiations
// exist for the finite-difference shadow path.
template <typename S>
struct Tens {
    Shape shape;
    std::vector<S> data;

    Tens() = default;
    explicit Tens(Shape sh) : shape(std::move(sh)), data(static_cast<size_t>(shape_numel(shape)), S(0)) {}
    Tens(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("tensor data does not match shape " + shape_str(shape));
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    static Tens zeros(Shape sh) { return Tens(std::move(sh)); }
    static Tens full(Shape sh, S v) {
        Tens t(std::move(sh));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tens scalar(S v) { return Tens({1}, {v}); }

    S& operator[](size_t i) { return data[i]; }
    S operator[](size_t i) const { return data[i]; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = Tens<float>;

template <typename To, typename From>
Tens<To> tensor_cast(const Tens<From>& t) {
    Tens<To> out(t.shape);
    for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<To>(t.data[i]);
    return out;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (size_t i = 0; i < rank; ++i) {
        const int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast dimensions, aligned to `out` rank.
inline std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
        const size_t oi = out.size() - in.size() + static_cast<size_t>(i);
        strides[oi] = (in[static_cast<size_t>(i)] == 1 && out[oi] != 1) ? 0 : s;
        s *= in[static_cast<size_t>(i)];
    }
    return strides;
}

// Sum `g` down to `target` shape (inverse of broadcasting).
template <typename S>
Tens<S> reduce_to_shape(const Tens<S>& g, const Shape& target) {
    if (g.shape == target) return g;
    Tens<S> out(target);
    const std::vector<int64_t> strides = broadcast_strides(target, g.shape);
    const size_t rank = g.shape.size();
    std::vector<int64_t> idx(rank, 0);
    for (int64_t lin = 0; lin < g.numel(); ++lin) {
        int64_t off = 0;
        for (size_t i = 0; i < rank; ++i) off += idx[i] * strides[i];
        out.data[static_cast<size_t>(off)] += g.data[static_cast<size_t>(lin)];
        for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
            if (++idx[static_cast<size_t>(i)] < g.shape[static_cast<size_t>(i)]) break;
            idx[static_cast<size_t>(i)] = 0;
        }
    }
    return out;
}

}  // namespace tipsynth
