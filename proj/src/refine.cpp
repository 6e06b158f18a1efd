#include "tipsynth/refine.hpp"

namespace tipsynth {

Tensor fingering_features(const WindowData& window, Hand hand, const KeyboardGeometry& geom) {
    const int h = static_cast<int>(hand);
    Tensor out({window.frames, kFingeringFeatureDim});
    for (int t = 0; t < window.frames; ++t) {
        float* row = out.data.data() + static_cast<size_t>(t) * kFingeringFeatureDim;
        for (int f = 0; f < kFingersPerHand; ++f) {
            const int key = window.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)];
            float* cell = row + 4 * f;
            if (key >= 0) {
                const KeySpec& spec = geom.key(key);
                cell[0] = 1.0f;
                cell[1] = static_cast<float>(key) / 87.0f;
                cell[2] = static_cast<float>(spec.y_center() / geom.span_y());
                cell[3] = spec.is_black ? 1.0f : 0.0f;
            }
        }
    }
    return out;
}

void apply_geometric_mask(Tensor& residuals, const PressMask& press) {
    if (residuals.rank() != 3 || residuals.shape[1] != kFingersPerHand || residuals.shape[2] != 3)
        throw ShapeError("apply_geometric_mask expects [T,5,3]");
    const int T = static_cast<int>(residuals.shape[0]);
    if (press.frames != T) throw ShapeError("press mask frame count mismatch");
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            if (!press.at(t, f)) continue;
            float* cell = residuals.data.data() +
                          (static_cast<size_t>(t) * kFingersPerHand + static_cast<size_t>(f)) * 3;
            cell[1] = 0.0f;  // Y: key identity
            cell[2] = 0.0f;  // Z: press depth
        }
    }
}

Tensor geometric_mask_tensor(const PressMask& press, int frames) {
    Tensor mask = Tensor::full({frames, kFingersPerHand * 3}, 1.0f);
    for (int t = 0; t < frames; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            if (!press.at(t, f)) continue;
            float* row = mask.data.data() + static_cast<size_t>(t) * kFingersPerHand * 3;
            row[3 * f + 1] = 0.0f;
            row[3 * f + 2] = 0.0f;
        }
    }
    return mask;
}

MotionTrack refine_stage(const MotionTrack& input, const WindowData& window, Hand hand,
                         const ParamStore& params, const RefineNet& net,
                         const KeyboardGeometry& geom, const MidiFeatureTrack* midi,
                         double clamp_mm, bool mask_yz, double* max_abs_residual) {
    const int T = input.frames;
    if (T != window.frames) throw ShapeError("refine_stage: trajectory/window length mismatch");
    if (net.cfg.midi_dim > 0 && midi == nullptr)
        throw ConfigError("refine_stage: net expects MIDI features");

    Tape<float> tape;
    ParamsView<float> view = ParamsView<float>::upload(tape, params, false);
    Tensor traj_flat({T, 3 * kFingersPerHand}, input.data);
    Val<float> x = concat_axis<float>(
        {tape.constant(traj_flat), tape.constant(fingering_features(window, hand, geom))}, 1);
    Val<float> cond{};
    if (net.cfg.midi_dim > 0) cond = tape.constant(midi->rows(0, T));
    Val<float> residual = net.encoder().apply(view, x, cond);
    if (!residual.v().all_finite()) throw ValidationError("refine_stage: non-finite network output");

    MotionTrack out(T, kFingersPerHand);
    const int h = static_cast<int>(hand);
    const float bound = static_cast<float>(clamp_mm);
    double max_res = 0.0;
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            const size_t o = out.offset(t, f);
            const float* res = residual.v().data.data() + o;
            const bool pressed = window.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0;
            for (int c = 0; c < 3; ++c) {
                const float r = std::clamp(res[c], -bound, bound);
                max_res = std::max(max_res, static_cast<double>(std::abs(r)));
                out.data[o + static_cast<size_t>(c)] = input.data[o + static_cast<size_t>(c)] + r;
            }
            if (mask_yz && pressed) {
                // masked components are copied, not recomputed, so they stay
                // bit-identical through the cascade
                out.data[o + 1] = input.data[o + 1];
                out.data[o + 2] = input.data[o + 2];
            }
        }
    }
    if (max_abs_residual != nullptr) *max_abs_residual = max_res;
    return out;
}

double refine_loss_value(const MotionTrack& pred, const MotionTrack& gt, double lambda_pos,
                         double lambda_vel, double fps) {
    if (pred.frames != gt.frames || pred.joints != gt.joints)
        throw ShapeError("refine_loss: shape mismatch");
    Tape<double> tape;
    const Shape shape{pred.frames, pred.joints, 3};
    Val<double> p = tape.constant(tensor_cast<double>(Tensor(shape, pred.data)));
    Val<double> g = tape.constant(tensor_cast<double>(Tensor(shape, gt.data)));
    return refine_loss(tape, p, g, lambda_pos, lambda_vel, fps).v().data[0];
}

namespace {

MotionTrack moving_average(const MotionTrack& traj, int radius) {
    const int T = traj.frames;
    MotionTrack out(T, traj.joints);
    const int width = traj.joints * 3;
    for (int t = 0; t < T; ++t) {
        const int lo = std::max(0, t - radius);
        const int hi = std::min(T - 1, t + radius);
        const double inv = 1.0 / (hi - lo + 1);
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int s = lo; s <= hi; ++s)
                acc += traj.data[static_cast<size_t>(s) * width + static_cast<size_t>(c)];
            out.data[static_cast<size_t>(t) * width + static_cast<size_t>(c)] =
                static_cast<float>(acc * inv);
        }
    }
    return out;
}

}  // namespace

MotionTrack smooth_trajectory(const MotionTrack& traj, const PressMask* press, int window_radius,
                              const ParamStore* learned_params, const SmootherNet* learned_net) {
    if (window_radius < 1) throw ConfigError("smoothing radius must be >= 1");
    MotionTrack out(traj.frames, traj.joints);
    if (learned_params != nullptr && learned_net != nullptr) {
        Tape<float> tape;
        ParamsView<float> view = ParamsView<float>::upload(tape, *learned_params, false);
        Tensor flat({traj.frames, traj.joints * 3}, traj.data);
        Val<float> res = learned_net->net().apply(view, tape.constant(flat), Val<float>{});
        if (!res.v().all_finite()) throw ValidationError("smoother produced non-finite output");
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = traj.data[i] + res.v().data[i];
    } else {
        out = moving_average(traj, window_radius);
    }
    if (press != nullptr) {
        for (int t = 0; t < traj.frames; ++t) {
            for (int f = 0; f < std::min(traj.joints, kFingersPerHand); ++f) {
                if (!press->at(t, f)) continue;
                const size_t o = traj.offset(t, f);
                out.data[o + 1] = traj.data[o + 1];
                out.data[o + 2] = traj.data[o + 2];
            }
        }
    }
    return out;
}

}  // namespace tipsynth
