#pragma once

#include "tipsynth/refine.hpp"

namespace tipsynth {

// Per-frame wrist conditioning: 10-dim pressed-finger indicator over both
// hands plus this hand's active-key centroid Y (normalized, held through
// silence).
Tensor wrist_features(const WindowData& window, Hand hand, const KeyboardGeometry& geom);
constexpr int64_t kWristFeatureDim = 2 * kFingersPerHand + 1;

// Offset prior applied to the centroid of actively pressing fingertips (all
// five during silence). The region follows the rounded mean active key and
// holds through silent frames.
MotionTrack base_wrist(const MotionTrack& tips, const WindowData& window, Hand hand,
                       const WristOffsetPrior& offsets);

struct WristNetConfig {
    int64_t channels = 64;
    int blocks = 6;
    int kernel = 5;
    int64_t midi_dim = 0;
};

struct WristNet {
    std::string prefix;
    WristNetConfig cfg;

    TemporalResNet net() const {
        return TemporalResNet{prefix,      3 + kWristFeatureDim, cfg.channels, cfg.blocks,
                              cfg.kernel,  3,                    cfg.midi_dim};
    }
    void init(ParamStore& ps, RngState& rng) const { net().init(ps, rng); }
};

// base + clamp(residual, +-clamp_mm), then temporal smoothing. Wrists never
// press keys, so no geometric masking applies.
MotionTrack refine_wrist(const MotionTrack& base, const WindowData& window, Hand hand,
                         const ParamStore& params, const WristNet& net,
                         const KeyboardGeometry& geom, const MidiFeatureTrack* midi,
                         double clamp_mm, int smooth_radius, const ParamStore* smoother_params,
                         const SmootherNet* smoother_net, double* max_abs_residual = nullptr);

}  // namespace tipsynth
