#pragma once

#include <map>
#include <string>

#include "tipsynth/tape.hpp"

namespace tipsynth {

// Named float32 parameter tensors. File format: magic "TPNN", version, init
// seed, record count, then (name, shape, float32 little-endian payload)
// records and a CRC32 trailer over everything before it.
class ParamStore {
public:
    Tensor& add(const std::string& name, Shape shape);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const std::map<std::string, Tensor>& all() const { return params_; }
    std::map<std::string, Tensor>& all() { return params_; }
    int64_t total_scalars() const;

    uint64_t init_seed = 0;

    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

private:
    std::map<std::string, Tensor> params_;
};

void init_uniform_fanin(Tensor& t, int64_t fan_in, RngState& rng);
void init_normal(Tensor& t, double stddev, RngState& rng);

// Graph-side view of a ParamStore: every parameter uploaded as a grad-enabled
// leaf of scalar type S.
template <typename S>
struct ParamsView {
    Tape<S>* tape = nullptr;
    std::map<std::string, Val<S>> vals;

    static ParamsView upload(Tape<S>& t, const ParamStore& store, bool requires_grad = true) {
        ParamsView pv;
        pv.tape = &t;
        for (const auto& [name, tensor] : store.all()) {
            pv.vals.emplace(name, t.leaf(tensor_cast<S>(tensor), requires_grad));
        }
        return pv;
    }

    Val<S> operator()(const std::string& name) const {
        auto it = vals.find(name);
        if (it == vals.end()) throw ConfigError("missing parameter: " + name);
        return it->second;
    }

    std::map<std::string, Tensor> grads() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, val] : vals) {
            auto& node = tape->node(val.idx);
            if (node.grad_alloc) {
                out.emplace(name, tensor_cast<float>(node.grad));
            } else {
                out.emplace(name, Tensor::zeros(node.val.shape));
            }
        }
        return out;
    }
};

// ---- layers ----
// Layers are descriptors: init() registers parameters, apply() builds graph.

struct Linear {
    std::string prefix;
    int64_t in = 0, out = 0;
    bool zero_init = false;

    void init(ParamStore& ps, RngState& rng) const {
        Tensor& w = ps.add(prefix + ".w", {in, out});
        ps.add(prefix + ".b", {out});
        if (!zero_init) init_uniform_fanin(w, in, rng);
    }

    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x) const {
        return add(matmul(x, p(prefix + ".w")), p(prefix + ".b"));
    }
};

struct LayerNorm {
    std::string prefix;
    int64_t dim = 0;
    double eps = 1e-5;

    void init(ParamStore& ps, RngState&) const {
        Tensor& g = ps.add(prefix + ".g", {dim});
        std::fill(g.data.begin(), g.data.end(), 1.0f);
        ps.add(prefix + ".b", {dim});
    }

    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x) const {
        Val<S> mu = mean_lastdim(x, true);
        Val<S> centered = sub(x, mu);
        Val<S> var = mean_lastdim(mul(centered, centered), true);
        Val<S> inv = rsqrt_eps(var, eps);
        return add(mul(mul(centered, inv), p(prefix + ".g")), p(prefix + ".b"));
    }
};

// Two-layer conditioning MLP predicting per-feature (gamma, beta). Output
// head starts at zero so modulation is the identity at init.
struct FilmGenerator {
    std::string prefix;
    int64_t cond_dim = 0;
    int64_t hidden = 64;
    int64_t feature_dim = 0;

    void init(ParamStore& ps, RngState& rng) const {
        Linear{prefix + ".l1", cond_dim, hidden}.init(ps, rng);
        Linear{prefix + ".l2", hidden, 2 * feature_dim, true}.init(ps, rng);
    }

    // cond: [T, cond_dim] -> pair of [T, feature_dim]
    template <typename S>
    std::pair<Val<S>, Val<S>> apply(const ParamsView<S>& p, Val<S> cond) const {
        Val<S> h = relu(Linear{prefix + ".l1", cond_dim, hidden}.apply(p, cond));
        Val<S> gb = Linear{prefix + ".l2", hidden, 2 * feature_dim, true}.apply(p, h);
        Val<S> gamma = add_const(slice_axis(gb, 1, 0, feature_dim), 1.0);
        Val<S> beta = slice_axis(gb, 1, feature_dim, feature_dim);
        return {gamma, beta};
    }
};

// gamma * x + beta with broadcasting
template <typename S>
Val<S> film(Val<S> x, Val<S> gamma, Val<S> beta) {
    return add(mul(gamma, x), beta);
}

struct MultiHeadAttention {
    std::string prefix;
    int64_t dim = 0;
    int heads = 8;

    void init(ParamStore& ps, RngState& rng) const {
        for (const char* n : {"wq", "wk", "wv", "wo"})
            Linear{prefix + "." + n, dim, dim}.init(ps, rng);
    }

    // x: [T, dim]
    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x) const {
        if (dim % heads != 0) throw ConfigError("attention dim not divisible by heads");
        const int64_t T = x.v().shape[0];
        const int64_t dh = dim / heads;
        auto split = [&](Val<S> v) {
            return permute(reshape(v, {T, heads, dh}), {1, 0, 2});  // [H,T,dh]
        };
        Val<S> q = split(Linear{prefix + ".wq", dim, dim}.apply(p, x));
        Val<S> k = split(Linear{prefix + ".wk", dim, dim}.apply(p, x));
        Val<S> v = split(Linear{prefix + ".wv", dim, dim}.apply(p, x));
        Val<S> kt = permute(k, {0, 2, 1});                            // [H,dh,T]
        Val<S> scores = scale(matmul(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
        Val<S> attn = softmax_lastdim(scores);                        // [H,T,T]
        Val<S> ctx = matmul(attn, v);                                 // [H,T,dh]
        Val<S> merged = reshape(permute(ctx, {1, 0, 2}), {T, dim});
        return Linear{prefix + ".wo", dim, dim}.apply(p, merged);
    }
};

enum class Fusion { Film, Concat };

struct TransformerEncoder {
    std::string prefix;
    int64_t in_dim = 0;
    int64_t dim = 64;
    int layers = 4;
    int heads = 8;
    int64_t ffn_dim = 128;
    int64_t out_dim = 0;
    int64_t cond_dim = 0;  // 0: unconditioned
    Fusion fusion = Fusion::Film;

    void init(ParamStore& ps, RngState& rng) const;

    // x: [T, in_dim]; cond: [T, cond_dim] or invalid when cond_dim == 0.
    // Returns [T, out_dim] from a zero-initialized head.
    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x, Val<S> cond) const;
};

Tensor sinusoidal_positions(int64_t frames, int64_t dim);

struct TemporalResNet {
    std::string prefix;
    int64_t in_dim = 0;
    int64_t channels = 64;
    int blocks = 6;
    int kernel = 5;
    int64_t out_dim = 0;
    int64_t cond_dim = 0;

    void init(ParamStore& ps, RngState& rng) const;

    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x, Val<S> cond) const;
};

inline void TransformerEncoder::init(ParamStore& ps, RngState& rng) const {
    const int64_t proj_in = (cond_dim > 0 && fusion == Fusion::Concat) ? in_dim + cond_dim : in_dim;
    Linear{prefix + ".in", proj_in, dim}.init(ps, rng);
    for (int l = 0; l < layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        LayerNorm{lp + ".ln1", dim}.init(ps, rng);
        MultiHeadAttention{lp + ".attn", dim, heads}.init(ps, rng);
        LayerNorm{lp + ".ln2", dim}.init(ps, rng);
        Linear{lp + ".ffn1", dim, ffn_dim}.init(ps, rng);
        Linear{lp + ".ffn2", ffn_dim, dim}.init(ps, rng);
        if (cond_dim > 0 && fusion == Fusion::Film)
            FilmGenerator{lp + ".film", cond_dim, 64, dim}.init(ps, rng);
    }
    LayerNorm{prefix + ".ln_f", dim}.init(ps, rng);
    Linear{prefix + ".head", dim, out_dim, true}.init(ps, rng);
}

template <typename S>
Val<S> TransformerEncoder::apply(const ParamsView<S>& p, Val<S> x, Val<S> cond) const {
    if (dim % heads != 0) throw ConfigError("encoder dim must be divisible by heads");
    Tape<S>& t = *x.tape;
    const int64_t T = x.v().shape[0];
    Val<S> input = x;
    if (cond_dim > 0 && fusion == Fusion::Concat) input = concat_axis<S>({x, cond}, 1);
    const int64_t proj_in = (cond_dim > 0 && fusion == Fusion::Concat) ? in_dim + cond_dim : in_dim;
    Val<S> h = Linear{prefix + ".in", proj_in, dim}.apply(p, input);
    h = add(h, t.constant(tensor_cast<S>(sinusoidal_positions(T, dim))));
    for (int l = 0; l < layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        Val<S> a = MultiHeadAttention{lp + ".attn", dim, heads}.apply(
            p, LayerNorm{lp + ".ln1", dim}.apply(p, h));
        h = add(h, a);
        Val<S> f = LayerNorm{lp + ".ln2", dim}.apply(p, h);
        f = Linear{lp + ".ffn2", ffn_dim, dim}.apply(
            p, relu(Linear{lp + ".ffn1", dim, ffn_dim}.apply(p, f)));
        h = add(h, f);
        if (cond_dim > 0 && fusion == Fusion::Film) {
            auto [gamma, beta] = FilmGenerator{lp + ".film", cond_dim, 64, dim}.apply(p, cond);
            h = film(h, gamma, beta);
        }
    }
    h = LayerNorm{prefix + ".ln_f", dim}.apply(p, h);
    return Linear{prefix + ".head", dim, out_dim, true}.apply(p, h);
}

inline void TemporalResNet::init(ParamStore& ps, RngState& rng) const {
    Linear{prefix + ".in", in_dim, channels}.init(ps, rng);
    for (int b = 0; b < blocks; ++b) {
        const std::string bp = prefix + ".b" + std::to_string(b);
        Tensor& w1 = ps.add(bp + ".w1", {kernel, channels, channels});
        init_uniform_fanin(w1, kernel * channels, rng);
        ps.add(bp + ".b1", {channels});
        ps.add(bp + ".w2", {kernel, channels, channels});  // zero: block is identity at init
        ps.add(bp + ".b2", {channels});
        if (cond_dim > 0) FilmGenerator{bp + ".film", cond_dim, 64, channels}.init(ps, rng);
    }
    Linear{prefix + ".head", channels, out_dim, true}.init(ps, rng);
}

template <typename S>
Val<S> TemporalResNet::apply(const ParamsView<S>& p, Val<S> x, Val<S> cond) const {
    if (kernel % 2 == 0) throw ConfigError("temporal resnet kernel must be odd");
    Val<S> h = Linear{prefix + ".in", in_dim, channels}.apply(p, x);
    for (int b = 0; b < blocks; ++b) {
        const std::string bp = prefix + ".b" + std::to_string(b);
        Val<S> u = conv1d_time(h, p(bp + ".w1"), p(bp + ".b1"));
        u = relu(u);
        if (cond_dim > 0) {
            auto [gamma, beta] = FilmGenerator{bp + ".film", cond_dim, 64, channels}.apply(p, cond);
            u = film(u, gamma, beta);
        }
        u = conv1d_time(u, p(bp + ".w2"), p(bp + ".b2"));
        h = add(h, u);
    }
    return Linear{prefix + ".head", channels, out_dim, true}.apply(p, h);
}

// Spatial graph convolution: sum_p (A_p @ x) @ W_p + b over partition
// adjacency matrices. x: [T, V, Cin].
struct GraphConv {
    std::string prefix;
    int64_t in = 0, out = 0;
    int partitions = 3;

    void init(ParamStore& ps, RngState& rng) const {
        for (int q = 0; q < partitions; ++q)
            Linear{prefix + ".p" + std::to_string(q), in, out, false}.init(ps, rng);
    }

    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Val<S> x, const std::vector<Val<S>>& adj) const {
        Val<S> acc;
        for (int q = 0; q < partitions; ++q) {
            Val<S> spread = matmul(adj[static_cast<size_t>(q)], x);  // [T,V,Cin]
            Val<S> term = Linear{prefix + ".p" + std::to_string(q), in, out}.apply(p, spread);
            acc = q == 0 ? term : add(acc, term);
        }
        return acc;
    }
};

}  // namespace tipsynth
