#include "tipsynth/baseline.hpp"

namespace tipsynth {

WindowData slice_window(const Raster& raster, const Window& window) {
    WindowData out;
    out.start = window.start;
    out.frames = window.valid_length;
    for (int h = 0; h < 2; ++h) {
        out.press[h] = PressMask(out.frames);
        out.pressed_key[h].assign(static_cast<size_t>(out.frames), {-1, -1, -1, -1, -1});
    }
    out.active.resize(static_cast<size_t>(out.frames));
    for (int t = 0; t < out.frames; ++t) {
        const size_t src = static_cast<size_t>(window.start + t);
        out.active[static_cast<size_t>(t)] = raster.active[src];
        for (int h = 0; h < 2; ++h) {
            for (int f = 0; f < kFingersPerHand; ++f) {
                const int key = raster.pressed_key[h][src][static_cast<size_t>(f)];
                out.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] = key;
                out.press[h].set(t, f, key >= 0);
            }
        }
    }
    return out;
}

namespace {

std::array<Vec3, kFingersPerHand> rest_pose(Hand hand, const KeyboardGeometry& geom,
                                            const BaselineConfig& cfg) {
    std::array<Vec3, kFingersPerHand> pose;
    for (int f = 0; f < kFingersPerHand; ++f) {
        const int key = hand == Hand::Right ? cfg.rest_key_right_thumb + f
                                            : cfg.rest_key_left_thumb - f;
        const KeySpec& spec = geom.key(std::clamp(key, 0, kNumKeys - 1));
        pose[static_cast<size_t>(f)] = {spec.x_center(), spec.y_center(),
                                        spec.rest_z + cfg.hover_mm};
    }
    return pose;
}

}  // namespace

MotionTrack synthesize_baseline(const WindowData& window, Hand hand, const PositionPrior& prior,
                                const KeyboardGeometry& geom, const BaselineConfig& config) {
    if (!prior.fully_covered())
        throw ValidationError("synthesize_baseline requires a fully covered prior");
    const int h = static_cast<int>(hand);
    const double dir = hand == Hand::Right ? 1.0 : -1.0;

    MotionTrack out(window.frames, kFingersPerHand);
    std::array<Vec3, kFingersPerHand> placement = rest_pose(hand, geom, config);

    for (int t = 0; t < window.frames; ++t) {
        const auto& pressed = window.pressed_key[h][static_cast<size_t>(t)];
        std::vector<int> anchors;
        for (int f = 0; f < kFingersPerHand; ++f)
            if (pressed[static_cast<size_t>(f)] >= 0) anchors.push_back(f);

        if (!anchors.empty()) {
            std::array<Vec3, kFingersPerHand> next;
            for (int a : anchors) {
                next[static_cast<size_t>(a)] =
                    prior.entry(hand, a, pressed[static_cast<size_t>(a)])->p50;
            }
            for (int f = 0; f < kFingersPerHand; ++f) {
                if (pressed[static_cast<size_t>(f)] >= 0) continue;
                int anchor = anchors.front();
                for (int a : anchors)
                    if (std::abs(a - f) < std::abs(anchor - f)) anchor = a;
                const Vec3& base = next[static_cast<size_t>(anchor)];
                Vec3 p = base;
                p.y += dir * (f - anchor) * config.finger_spacing_mm +
                       config.lateral_corrections[static_cast<size_t>(h)][static_cast<size_t>(f)];
                p.z += config.hover_mm;
                next[static_cast<size_t>(f)] = p;
            }
            placement = next;
        }
        // silent frames keep the previous placement (rest pose before any press)
        for (int f = 0; f < kFingersPerHand; ++f) out.set(t, f, placement[static_cast<size_t>(f)]);
    }
    return out;
}

}  // namespace tipsynth
