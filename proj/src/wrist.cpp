#include "tipsynth/wrist.hpp"

namespace tipsynth {

namespace {

// rounded mean active key for a hand at a frame, or -1 when silent
int mean_active_key(const WindowData& window, int hand, int t) {
    int64_t sum = 0;
    int n = 0;
    for (int f = 0; f < kFingersPerHand; ++f) {
        const int key = window.pressed_key[hand][static_cast<size_t>(t)][static_cast<size_t>(f)];
        if (key >= 0) {
            sum += key;
            ++n;
        }
    }
    if (n == 0) return -1;
    return std::clamp(static_cast<int>(std::lround(static_cast<double>(sum) / n)), 0, kNumKeys - 1);
}

}  // namespace

Tensor wrist_features(const WindowData& window, Hand hand, const KeyboardGeometry& geom) {
    const int h = static_cast<int>(hand);
    Tensor out({window.frames, kWristFeatureDim});
    float held_y = 0.0f;
    for (int t = 0; t < window.frames; ++t) {
        float* row = out.data.data() + static_cast<size_t>(t) * kWristFeatureDim;
        for (int hh = 0; hh < 2; ++hh) {
            for (int f = 0; f < kFingersPerHand; ++f) {
                if (window.pressed_key[hh][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0)
                    row[hh * kFingersPerHand + f] = 1.0f;
            }
        }
        const int key = mean_active_key(window, h, t);
        if (key >= 0) held_y = static_cast<float>(geom.key(key).y_center() / geom.span_y());
        row[2 * kFingersPerHand] = held_y;
    }
    return out;
}

MotionTrack base_wrist(const MotionTrack& tips, const WindowData& window, Hand hand,
                       const WristOffsetPrior& offsets) {
    const int h = static_cast<int>(hand);
    const int T = tips.frames;
    if (T != window.frames) throw ShapeError("base_wrist: trajectory/window length mismatch");

    // leading silence borrows the first active region; interior and trailing
    // silence hold the previous one
    std::vector<int> region(static_cast<size_t>(T), -1);
    int current = -1;
    for (int t = 0; t < T; ++t) {
        const int key = mean_active_key(window, h, t);
        if (key >= 0) current = region_of(key);
        region[static_cast<size_t>(t)] = current;
    }
    int first = 3;  // middle of the keyboard when the window is fully silent
    for (int t = 0; t < T; ++t) {
        if (region[static_cast<size_t>(t)] >= 0) {
            first = region[static_cast<size_t>(t)];
            break;
        }
    }
    for (int t = 0; t < T; ++t) {
        if (region[static_cast<size_t>(t)] < 0) region[static_cast<size_t>(t)] = first;
        else break;
    }

    MotionTrack out(T, 1);
    for (int t = 0; t < T; ++t) {
        Vec3 centroid;
        int n = 0;
        for (int f = 0; f < kFingersPerHand; ++f) {
            if (window.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0) {
                centroid += tips.get(t, f);
                ++n;
            }
        }
        if (n == 0) {
            for (int f = 0; f < kFingersPerHand; ++f) centroid += tips.get(t, f);
            n = kFingersPerHand;
        }
        centroid = centroid / n;
        const Vec3& delta =
            offsets.offsets[static_cast<size_t>(h)][static_cast<size_t>(region[static_cast<size_t>(t)])];
        out.set(t, 0, centroid + delta);
    }
    return out;
}

MotionTrack refine_wrist(const MotionTrack& base, const WindowData& window, Hand hand,
                         const ParamStore& params, const WristNet& net,
                         const KeyboardGeometry& geom, const MidiFeatureTrack* midi,
                         double clamp_mm, int smooth_radius, const ParamStore* smoother_params,
                         const SmootherNet* smoother_net, double* max_abs_residual) {
    const int T = base.frames;
    if (net.cfg.midi_dim > 0 && midi == nullptr)
        throw ConfigError("refine_wrist: net expects MIDI features");

    Tape<float> tape;
    ParamsView<float> view = ParamsView<float>::upload(tape, params, false);
    Tensor base_flat({T, 3}, base.data);
    Tensor feats = wrist_features(window, hand, geom);
    Val<float> x = concat_axis<float>({tape.constant(base_flat), tape.constant(feats)}, 1);
    Val<float> cond{};
    if (net.cfg.midi_dim > 0) cond = tape.constant(midi->rows(0, T));
    Val<float> residual = net.net().apply(view, x, cond);
    if (!residual.v().all_finite()) throw ValidationError("refine_wrist: non-finite network output");

    MotionTrack refined(T, 1);
    const float bound = static_cast<float>(clamp_mm);
    double max_res = 0.0;
    for (size_t i = 0; i < refined.data.size(); ++i) {
        const float r = std::clamp(residual.v().data[i], -bound, bound);
        max_res = std::max(max_res, static_cast<double>(std::abs(r)));
        refined.data[i] = base.data[i] + r;
    }
    if (max_abs_residual != nullptr) *max_abs_residual = max_res;
    return smooth_trajectory(refined, nullptr, smooth_radius, smoother_params, smoother_net);
}

}  // namespace tipsynth
