#pragma once

#include <cstring>
#include <vector>

#include "tipsynth/common.hpp"

namespace tipsynth {

// T x J x 3 float32 positions in mm on the 59.94 fps grid. J is 5 for
// fingertip tracks, 1 for wrists, 21 for full hands.
struct MotionTrack {
    int frames = 0;
    int joints = 0;
    std::vector<float> data;  // frames * joints * 3, row-major

    MotionTrack() = default;
    MotionTrack(int t, int j) : frames(t), joints(j), data(static_cast<size_t>(t) * j * 3, 0.0f) {}

    size_t offset(int t, int j) const {
        return (static_cast<size_t>(t) * static_cast<size_t>(joints) + static_cast<size_t>(j)) * 3;
    }
    Vec3 get(int t, int j) const {
        const size_t o = offset(t, j);
        return {data[o], data[o + 1], data[o + 2]};
    }
    void set(int t, int j, const Vec3& v) {
        const size_t o = offset(t, j);
        data[o] = static_cast<float>(v.x);
        data[o + 1] = static_cast<float>(v.y);
        data[o + 2] = static_cast<float>(v.z);
    }
    void set_raw(int t, int j, const float* xyz) {
        std::memcpy(data.data() + offset(t, j), xyz, 3 * sizeof(float));
    }
    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
    MotionTrack slice(int start, int len) const {
        MotionTrack out(len, joints);
        const size_t row = static_cast<size_t>(joints) * 3;
        std::memcpy(out.data.data(), data.data() + static_cast<size_t>(start) * row,
                    static_cast<size_t>(len) * row * sizeof(float));
        return out;
    }
};

// Fixed 21-joint ordering: wrist, then thumb..pinky as MCP, PIP, DIP, TIP.
constexpr int kWristJoint = 0;
inline constexpr int finger_joint(int finger, int part) { return 1 + finger * 4 + part; }  // part 0..3
inline constexpr int tip_joint(int finger) { return finger_joint(finger, 3); }
inline const std::array<int, 5> kTipJoints = {4, 8, 12, 16, 20};
inline const std::array<int, 5> kMcpJoints = {1, 5, 9, 13, 17};

}  // namespace tipsynth
