#pragma once

#include "tipsynth/hand_graph.hpp"
#include "tipsynth/refine.hpp"

namespace tipsynth {

// Reference bone lengths per hand, ordered as HandGraph::bones.
struct BoneTable {
    std::array<std::array<double, 20>, 2> lengths{};
};

BoneTable bone_table_from_tracks(const std::vector<const MotionTrack*>& left,
                                 const std::vector<const MotionTrack*>& right,
                                 const HandGraph& graph);
std::string bone_table_to_json(const BoneTable& table);
BoneTable bone_table_from_json(const std::string& text);

// Deterministic kinematic initialization: MCP/PIP/DIP on the wrist->tip
// segment at fractions 0.45/0.70/0.88, lifted by a fixed arch height. Anchor
// slots carry the inputs unchanged.
struct RigConfig {
    double arch_mm = 12.0;
    std::array<double, 3> fractions = {0.45, 0.70, 0.88};
};

MotionTrack rig_initialize(const MotionTrack& wrist, const MotionTrack& tips,
                           const RigConfig& rig = {});

// FiLM conditioning for the pose nets: pressed-finger indicator (10, both
// hands) plus per-finger pressed-key Y (10, normalized).
Tensor pose_film_features(const WindowData& window, const KeyboardGeometry& geom);
constexpr int64_t kPoseCondDim = 4 * kFingersPerHand;

struct StgcnBlockSpec {
    std::string prefix;
    int64_t channels = 64;
    int temporal_kernel = 9;
    int64_t cond_dim = 0;

    void init(ParamStore& ps, RngState& rng) const;
    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x,
                 const std::vector<Val<S>>& adj, Val<S> cond) const;
};

// UNet-style STGCN over (time x joints): channel multipliers per level,
// temporal downsampling by 2 between levels, 2 residual blocks per level,
// FiLM on fingering at every level, zero-initialized output head.
struct StgcnUNetConfig {
    std::vector<int64_t> channels = {64, 128, 256};
    int blocks_per_level = 2;
    int temporal_kernel = 9;
    int64_t cond_dim = kPoseCondDim;
    int64_t in_feat = 3 + kJointsPerHand;  // position + joint one-hot
};

struct StgcnUNet {
    std::string prefix;
    StgcnUNetConfig cfg;

    void init(ParamStore& ps, RngState& rng) const;
    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x, Val<S> cond,
                 const HandGraph& graph) const;  // [T,21,3] residual
};

// Joint one-hot plus positions as network input features.
Tensor pose_input_features(const MotionTrack& rig_pose);

// Anchors (wrist + tips) are written back verbatim after the network pass.
MotionTrack stgcn_synthesize(const MotionTrack& wrist, const MotionTrack& tips,
                             const WindowData& window, const ParamStore& params,
                             const StgcnUNet& net, const HandGraph& graph,
                             const KeyboardGeometry& geom, const RigConfig& rig = {});

// Flexion-angle hinge limits in radians, per joint class (MCP, PIP, DIP):
// positive bends toward the palm. Plus a minimum inter-fingertip distance
// proxy against self-intersection.
struct BioLimits {
    std::array<double, 3> flex_min = {-0.5236, -0.1745, -0.1745};  // -30, -10, -10 deg
    std::array<double, 3> flex_max = {1.5708, 1.9199, 1.5708};     //  90, 110,  90 deg
    double min_tip_distance_mm = 8.0;
    double proximity_weight = 0.01;
};

struct PoseLossWeights {
    double lambda_bone = 0.5;
    double lambda_vel = 0.5;
    double lambda_bio = 0.1;
    double fps = 60000.0 / 1001.0;
};

// L_pos + lambda_bone L_bone + lambda_vel L_vel + lambda_bio L_bio on the tape.
// pred/gt are [T,21,3].
template <typename S>
Val<S> pose_loss_graph(Tape<S>& tape, Val<S> pred, Val<S> gt, const HandGraph& graph,
                       const BoneTable& bones, Hand hand, const PoseLossWeights& w,
                       const BioLimits& limits = {});

double pose_loss_value(const MotionTrack& pred, const MotionTrack& gt, const HandGraph& graph,
                       const BoneTable& bones, Hand hand, const PoseLossWeights& w,
                       const BioLimits& limits = {});

// Final MIDI-conditioned refinement: single-level STGCN predicting a residual
// for all 21 joints, FiLM on MIDI features; no hard clamp (the training loss
// regularizes the magnitude instead).
struct PoseRefineNetConfig {
    int64_t channels = 64;
    int blocks = 2;
    int temporal_kernel = 9;
    int64_t midi_dim = 0;
    double residual_penalty = 0.05;  // training-side pull toward small residuals
};

struct PoseRefineNet {
    std::string prefix;
    PoseRefineNetConfig cfg;

    void init(ParamStore& ps, RngState& rng) const;
    template <typename S>
    Val<S> apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x, Val<S> cond,
                 const HandGraph& graph) const;
};

// pose + residual, then smoothing with endpoint constraints: pressed-finger
// tip Y/Z and the first/last frames are restored after the filter.
MotionTrack midi_refine_pose(const MotionTrack& pose, const WindowData& window, Hand hand,
                             const ParamStore& params, const PoseRefineNet& net,
                             const HandGraph& graph, const MidiFeatureTrack* midi,
                             const KeyboardGeometry& geom, int smooth_radius,
                             double* mean_residual_mm = nullptr);

// ---- template definitions ----

inline void StgcnBlockSpec::init(ParamStore& ps, RngState& rng) const {
    GraphConv{prefix + ".gcn", channels, channels, HandGraph::kPartitions}.init(ps, rng);
    Tensor& w1 = ps.add(prefix + ".tconv.w", {temporal_kernel, channels, channels});
    (void)w1;  // zero: block is the identity at init
    ps.add(prefix + ".tconv.b", {channels});
    if (cond_dim > 0) FilmGenerator{prefix + ".film", cond_dim, 64, channels}.init(ps, rng);
}

template <typename S>
Val<S> StgcnBlockSpec::apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x,
                             const std::vector<Val<S>>& adj, Val<S> cond) const {
    (void)tape;
    Val<S> h = GraphConv{prefix + ".gcn", channels, channels, HandGraph::kPartitions}.apply(p, x, adj);
    h = relu(h);
    if (cond_dim > 0) {
        auto [gamma, beta] = FilmGenerator{prefix + ".film", cond_dim, 64, channels}.apply(p, cond);
        const int64_t T = x.v().shape[0];
        h = film(h, reshape(gamma, {T, 1, channels}), reshape(beta, {T, 1, channels}));
    }
    // temporal conv over axis 0 with joints as the batch: [T,V,C] -> [V,T,C]
    Val<S> ht = permute(h, {1, 0, 2});
    ht = conv1d_time(ht, p(prefix + ".tconv.w"), p(prefix + ".tconv.b"));
    h = permute(ht, {1, 0, 2});
    return add(x, h);
}

inline void StgcnUNet::init(ParamStore& ps, RngState& rng) const {
    Linear{prefix + ".in", cfg.in_feat, cfg.channels[0]}.init(ps, rng);
    const size_t L = cfg.channels.size();
    for (size_t l = 0; l < L; ++l) {
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            StgcnBlockSpec{prefix + ".enc" + std::to_string(l) + ".b" + std::to_string(b),
                           cfg.channels[l], cfg.temporal_kernel, cfg.cond_dim}
                .init(ps, rng);
        }
        if (l + 1 < L)
            Linear{prefix + ".down" + std::to_string(l), cfg.channels[l], cfg.channels[l + 1]}.init(ps, rng);
    }
    for (size_t l = L - 1; l > 0; --l) {
        Linear{prefix + ".up" + std::to_string(l), cfg.channels[l], cfg.channels[l - 1]}.init(ps, rng);
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            StgcnBlockSpec{prefix + ".dec" + std::to_string(l - 1) + ".b" + std::to_string(b),
                           cfg.channels[l - 1], cfg.temporal_kernel, cfg.cond_dim}
                .init(ps, rng);
        }
    }
    Linear{prefix + ".head", cfg.channels[0], 3, true}.init(ps, rng);
}

template <typename S>
Val<S> StgcnUNet::apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x, Val<S> cond,
                        const HandGraph& graph) const {
    std::vector<Val<S>> adj;
    for (const Tensor& a : graph.adjacency) adj.push_back(tape.constant(tensor_cast<S>(a)));

    Val<S> h = Linear{prefix + ".in", cfg.in_feat, cfg.channels[0]}.apply(p, x);
    const size_t L = cfg.channels.size();
    std::vector<Val<S>> skips;
    std::vector<Val<S>> conds;
    std::vector<int64_t> lengths;
    Val<S> c = cond;
    for (size_t l = 0; l < L; ++l) {
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            h = StgcnBlockSpec{prefix + ".enc" + std::to_string(l) + ".b" + std::to_string(b),
                               cfg.channels[l], cfg.temporal_kernel, cfg.cond_dim}
                    .apply(p, tape, h, adj, c);
        }
        if (l + 1 < L) {
            skips.push_back(h);
            conds.push_back(c);
            lengths.push_back(h.v().shape[0]);
            h = avgpool2_axis0(h);
            h = Linear{prefix + ".down" + std::to_string(l), cfg.channels[l], cfg.channels[l + 1]}.apply(p, h);
            c = avgpool2_axis0(c);
        }
    }
    for (size_t l = L - 1; l > 0; --l) {
        h = upsample2_axis0(h, lengths[l - 1]);
        h = Linear{prefix + ".up" + std::to_string(l), cfg.channels[l], cfg.channels[l - 1]}.apply(p, h);
        h = add(h, skips[l - 1]);
        c = conds[l - 1];
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            h = StgcnBlockSpec{prefix + ".dec" + std::to_string(l - 1) + ".b" + std::to_string(b),
                               cfg.channels[l - 1], cfg.temporal_kernel, cfg.cond_dim}
                    .apply(p, tape, h, adj, c);
        }
    }
    return Linear{prefix + ".head", cfg.channels[0], 3, true}.apply(p, h);
}

inline void PoseRefineNet::init(ParamStore& ps, RngState& rng) const {
    Linear{prefix + ".in", 3 + kJointsPerHand, cfg.channels}.init(ps, rng);
    for (int b = 0; b < cfg.blocks; ++b) {
        StgcnBlockSpec{prefix + ".b" + std::to_string(b), cfg.channels, cfg.temporal_kernel,
                       cfg.midi_dim}
            .init(ps, rng);
    }
    Linear{prefix + ".head", cfg.channels, 3, true}.init(ps, rng);
}

template <typename S>
Val<S> PoseRefineNet::apply(const ParamsView<S>& p, Tape<S>& tape, Val<S> x, Val<S> cond,
                            const HandGraph& graph) const {
    std::vector<Val<S>> adj;
    for (const Tensor& a : graph.adjacency) adj.push_back(tape.constant(tensor_cast<S>(a)));
    Val<S> h = Linear{prefix + ".in", 3 + kJointsPerHand, cfg.channels}.apply(p, x);
    for (int b = 0; b < cfg.blocks; ++b) {
        h = StgcnBlockSpec{prefix + ".b" + std::to_string(b), cfg.channels, cfg.temporal_kernel,
                           cfg.midi_dim}
                .apply(p, tape, h, adj, cond);
    }
    return Linear{prefix + ".head", cfg.channels, 3, true}.apply(p, h);
}

namespace detail {

template <typename S>
Val<S> cross3(Val<S> a, Val<S> b) {
    // last axis is xyz
    const int axis = a.v().rank() - 1;
    Val<S> a0 = slice_axis(a, axis, 0, 1), a1 = slice_axis(a, axis, 1, 1), a2 = slice_axis(a, axis, 2, 1);
    Val<S> b0 = slice_axis(b, axis, 0, 1), b1 = slice_axis(b, axis, 1, 1), b2 = slice_axis(b, axis, 2, 1);
    Val<S> c0 = sub(mul(a1, b2), mul(a2, b1));
    Val<S> c1 = sub(mul(a2, b0), mul(a0, b2));
    Val<S> c2 = sub(mul(a0, b1), mul(a1, b0));
    return concat_axis<S>({c0, c1, c2}, axis);
}

template <typename S>
Val<S> dot_last(Val<S> a, Val<S> b) {
    return sum_lastdim(mul(a, b), false);
}

}  // namespace detail

// Signed flexion angles for the 15 interior joints: sign from the palm-normal
// frame, positive toward the palm. Returns [T,15].
template <typename S>
Val<S> flexion_angles(Tape<S>& tape, Val<S> pose, Hand hand) {
    (void)tape;
    std::vector<int64_t> parents, centers, children;
    for (int f = 0; f < kFingersPerHand; ++f) {
        parents.insert(parents.end(),
                       {kWristJoint, finger_joint(f, 0), finger_joint(f, 1)});
        centers.insert(centers.end(),
                       {finger_joint(f, 0), finger_joint(f, 1), finger_joint(f, 2)});
        children.insert(children.end(),
                        {finger_joint(f, 1), finger_joint(f, 2), finger_joint(f, 3)});
    }
    Val<S> P = index_select(pose, 1, parents);
    Val<S> J = index_select(pose, 1, centers);
    Val<S> C = index_select(pose, 1, children);
    Val<S> u = sub(J, P);  // [T,15,3]
    Val<S> v = sub(C, J);

    // palm normal from wrist and index/ring MCPs, oriented palm-down for both hands
    Val<S> wr = index_select(pose, 1, {static_cast<int64_t>(kWristJoint)});
    Val<S> idx = index_select(pose, 1, {static_cast<int64_t>(finger_joint(1, 0))});
    Val<S> ring = index_select(pose, 1, {static_cast<int64_t>(finger_joint(3, 0))});
    Val<S> va = sub(idx, wr);
    Val<S> vb = sub(ring, wr);
    Val<S> n = hand == Hand::Right ? detail::cross3(vb, va) : detail::cross3(va, vb);  // [T,1,3]
    Val<S> n_inv = rsqrt_eps(sum_lastdim(mul(n, n), true), 1e-9);
    Val<S> n_hat = mul(n, n_inv);

    Val<S> axis = detail::cross3(u, n_hat);  // [T,15,3]
    Val<S> axis_inv = rsqrt_eps(sum_lastdim(mul(axis, axis), true), 1e-9);
    Val<S> axis_hat = mul(axis, axis_inv);

    Val<S> sin_term = detail::dot_last(detail::cross3(u, v), axis_hat);  // [T,15]
    Val<S> cos_term = detail::dot_last(u, v);
    return atan2_op(sin_term, cos_term);
}

template <typename S>
Val<S> pose_loss_graph(Tape<S>& tape, Val<S> pred, Val<S> gt, const HandGraph& graph,
                       const BoneTable& bones, Hand hand, const PoseLossWeights& w,
                       const BioLimits& limits) {
    const int64_t T = pred.v().shape[0];
    Val<S> d = sub(pred, gt);
    Val<S> loss = mean_all(sqrt0(sum_lastdim(mul(d, d), false)));

    if (w.lambda_bone != 0.0) {
        std::vector<int64_t> parents, children;
        Tens<S> ref({1, 20});
        for (int b = 0; b < 20; ++b) {
            parents.push_back(graph.bones[static_cast<size_t>(b)].first);
            children.push_back(graph.bones[static_cast<size_t>(b)].second);
            ref.data[static_cast<size_t>(b)] =
                static_cast<S>(bones.lengths[static_cast<size_t>(hand)][static_cast<size_t>(b)]);
        }
        Val<S> bonevec = sub(index_select(pred, 1, children), index_select(pred, 1, parents));
        Val<S> len = sqrt0(sum_lastdim(mul(bonevec, bonevec), false));  // [T,20]
        Val<S> dev = abs0(sub(len, tape.constant(std::move(ref))));
        loss = add(loss, scale(mean_all(dev), w.lambda_bone));
    }

    if (w.lambda_vel != 0.0 && T >= 2) {
        Val<S> dp = scale(sub(slice_axis(pred, 0, 1, T - 1), slice_axis(pred, 0, 0, T - 1)), w.fps);
        Val<S> dg = scale(sub(slice_axis(gt, 0, 1, T - 1), slice_axis(gt, 0, 0, T - 1)), w.fps);
        Val<S> dv = sub(dp, dg);
        loss = add(loss, scale(mean_all(sqrt0(sum_lastdim(mul(dv, dv), false))), w.lambda_vel));
    }

    if (w.lambda_bio != 0.0) {
        Val<S> theta = flexion_angles(tape, pred, hand);  // [T,15]
        Tens<S> lo({1, 15}), hi({1, 15});
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int part = 0; part < 3; ++part) {
                lo.data[static_cast<size_t>(f * 3 + part)] = static_cast<S>(limits.flex_min[static_cast<size_t>(part)]);
                hi.data[static_cast<size_t>(f * 3 + part)] = static_cast<S>(limits.flex_max[static_cast<size_t>(part)]);
            }
        }
        Val<S> over = relu(sub(theta, tape.constant(std::move(hi))));
        Val<S> under = relu(sub(tape.constant(std::move(lo)), theta));
        Val<S> bio = add(mean_all(mul(over, over)), mean_all(mul(under, under)));

        // adjacent fingertips closer than the floor distance
        std::vector<int64_t> tips_a, tips_b;
        for (int f = 0; f + 1 < kFingersPerHand; ++f) {
            tips_a.push_back(tip_joint(f));
            tips_b.push_back(tip_joint(f + 1));
        }
        Val<S> gap = sub(index_select(pred, 1, tips_a), index_select(pred, 1, tips_b));
        Val<S> dist = sqrt0(sum_lastdim(mul(gap, gap), false));
        Val<S> close = relu(scale(sub(dist, tape.constant(Tens<S>::full({1, 1}, static_cast<S>(limits.min_tip_distance_mm)))), -1.0));
        bio = add(bio, scale(mean_all(mul(close, close)), limits.proximity_weight));
        loss = add(loss, scale(bio, w.lambda_bio));
    }
    return loss;
}

}  // namespace tipsynth
