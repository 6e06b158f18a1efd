#pragma once

#include "tipsynth/prior.hpp"

namespace tipsynth {

// Per-window slice of the rasterized piece all stages consume.
struct WindowData {
    int start = 0;
    int frames = 0;  // valid frames only; padded tail is dropped at slicing
    PressMask press[2];
    std::vector<std::array<int, kFingersPerHand>> pressed_key[2];  // [t][finger] -> key or -1
    std::vector<std::vector<ActiveNote>> active;                   // per frame
};

WindowData slice_window(const Raster& raster, const Window& window);

struct BaselineConfig {
    double hover_mm = 14.0;
    double finger_spacing_mm = 23.5;
    std::array<std::array<double, kFingersPerHand>, 2> lateral_corrections{};
    // rest pose anchors: right hand fingers over keys 39..43, left over 39..35
    int rest_key_right_thumb = 39;
    int rest_key_left_thumb = 39;
};

// Stage 1: pressing fingers sit at the prior median, non-pressing fingers hang
// off the nearest pressing anchor at hover height, silent frames hold the last
// placement. Deterministic; no temporal dynamics by construction.
MotionTrack synthesize_baseline(const WindowData& window, Hand hand, const PositionPrior& prior,
                                const KeyboardGeometry& geom, const BaselineConfig& config);

}  // namespace tipsynth
