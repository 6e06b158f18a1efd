#pragma once

#include "tipsynth/baseline.hpp"
#include "tipsynth/midi_features.hpp"
#include "tipsynth/nn.hpp"

namespace tipsynth {

// Per-hand fingering conditioning, 4 features per finger:
// pressed flag, key index / 87, key center Y / span, black-key flag.
Tensor fingering_features(const WindowData& window, Hand hand, const KeyboardGeometry& geom);
constexpr int64_t kFingeringFeatureDim = 4 * kFingersPerHand;

struct RefineNetConfig {
    int64_t model_dim = 64;
    int layers = 4;
    int heads = 8;
    int64_t ffn_dim = 128;
    int64_t midi_dim = 0;  // 0: stage 2.1 (fingering only), 452: stage 2.2
    Fusion fusion = Fusion::Film;
};

// Residual fingertip refiner over a window: transformer encoder on the
// flattened 5x3 trajectory plus fingering features, FiLM- or concat-fused
// MIDI conditioning when midi_dim > 0. Head is zero-initialized.
struct RefineNet {
    std::string prefix;
    RefineNetConfig cfg;

    TransformerEncoder encoder() const {
        TransformerEncoder e;
        e.prefix = prefix;
        e.in_dim = 3 * kFingersPerHand + kFingeringFeatureDim;
        e.dim = cfg.model_dim;
        e.layers = cfg.layers;
        e.heads = cfg.heads;
        e.ffn_dim = cfg.ffn_dim;
        e.out_dim = 3 * kFingersPerHand;
        e.cond_dim = cfg.midi_dim;
        e.fusion = cfg.fusion;
        return e;
    }
    void init(ParamStore& ps, RngState& rng) const { encoder().init(ps, rng); }
};

// Zero the Y and Z residual components wherever the press mask is set. X is
// never touched; non-press frames pass through.
void apply_geometric_mask(Tensor& residuals, const PressMask& press);

// mask tensor for in-graph training use: 1 everywhere, 0 at pressed Y/Z
Tensor geometric_mask_tensor(const PressMask& press, int frames);

struct ClampConfig {
    double fingertip_mm = 80.0;
    double wrist_mm = 50.0;
};

// Full stage-2 forward on the tape: input + mask(clamp(residual)).
// traj/fing/midi are [T,15], [T,20], [T,F] leaves built by the caller.
template <typename S>
Val<S> refine_forward(Tape<S>& tape, const ParamsView<S>& params, const RefineNet& net,
                      Val<S> traj_flat, Val<S> fing, Val<S> midi, const Tensor& mask_flat,
                      double clamp_mm, bool mask_yz) {
    Val<S> input = concat_axis<S>({traj_flat, fing}, 1);
    Val<S> residual = net.encoder().apply(params, input, midi);
    residual = clamp_pm(residual, clamp_mm);
    if (mask_yz) residual = mul(residual, tape.constant(tensor_cast<S>(mask_flat)));
    return add(traj_flat, residual);
}

// Inference path. Pressed-frame Y/Z are copied from the input bit-exactly.
MotionTrack refine_stage(const MotionTrack& input, const WindowData& window, Hand hand,
                         const ParamStore& params, const RefineNet& net,
                         const KeyboardGeometry& geom, const MidiFeatureTrack* midi,
                         double clamp_mm, bool mask_yz, double* max_abs_residual = nullptr);

// lambda_pos * mean ||pos error|| + lambda_vel * mean ||velocity error||,
// velocities by forward differences scaled by fps. T < 2 drops the velocity
// term.
template <typename S>
Val<S> refine_loss(Tape<S>& tape, Val<S> pred, Val<S> gt, double lambda_pos, double lambda_vel,
                   double fps) {
    (void)tape;
    Val<S> d = sub(pred, gt);
    Val<S> pos = mean_all(sqrt0(sum_lastdim(mul(d, d), false)));
    Val<S> total = scale(pos, lambda_pos);
    const int64_t T = pred.v().shape[0];
    if (T >= 2 && lambda_vel != 0.0) {
        Val<S> dp = scale(sub(slice_axis(pred, 0, 1, T - 1), slice_axis(pred, 0, 0, T - 1)), fps);
        Val<S> dg = scale(sub(slice_axis(gt, 0, 1, T - 1), slice_axis(gt, 0, 0, T - 1)), fps);
        Val<S> dv = sub(dp, dg);
        Val<S> vel = mean_all(sqrt0(sum_lastdim(mul(dv, dv), false)));
        total = add(total, scale(vel, lambda_vel));
    }
    return total;
}

double refine_loss_value(const MotionTrack& pred, const MotionTrack& gt, double lambda_pos,
                         double lambda_vel, double fps);

// Stage 2.3 smoother: residual temporal CNN over the flattened channels.
struct SmootherNet {
    std::string prefix;
    int64_t channels_in = 3 * kFingersPerHand;
    int64_t hidden = 64;
    int blocks = 6;
    int kernel = 5;

    TemporalResNet net() const {
        return TemporalResNet{prefix, channels_in, hidden, blocks, kernel, channels_in, 0};
    }
    void init(ParamStore& ps, RngState& rng) const { net().init(ps, rng); }
};

// Temporal smoothing with press-time hard masking: pressed Y/Z are restored
// from the input afterwards, X smooths everywhere. `press` may be null (wrist
// tracks). With no learned params the symmetric moving average of the given
// radius is used; window ends truncate.
MotionTrack smooth_trajectory(const MotionTrack& traj, const PressMask* press, int window_radius,
                              const ParamStore* learned_params, const SmootherNet* learned_net);

}  // namespace tipsynth
