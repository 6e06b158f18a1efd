#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tipsynth/common.hpp"
#include "tipsynth/midi.hpp"

namespace tipsynth {

// 59.94 fps kept as the exact rational 60000/1001. Frame i covers
// [i/fps, (i+1)/fps).
struct FrameGrid {
    int64_t fps_num = 60000;
    int64_t fps_den = 1001;
    int frame_count = 0;

    double fps() const { return static_cast<double>(fps_num) / static_cast<double>(fps_den); }
    double frame_start(int i) const { return static_cast<double>(i) * fps_den / fps_num; }
    double frame_end(int i) const { return static_cast<double>(i + 1) * fps_den / fps_num; }
    // smallest frame count covering [0, seconds)
    static int frames_covering(double seconds);
};

// T x 88 finger assignment. 0 = no press, 1-5 left thumb..pinky, 6-10 right.
class FingeringGrid {
public:
    FingeringGrid() = default;
    FingeringGrid(int frames, uint8_t fill = 0) : frames_(frames), values_(static_cast<size_t>(frames) * kNumKeys, fill) {}

    int frames() const { return frames_; }
    uint8_t at(int t, int key) const { return values_[static_cast<size_t>(t) * kNumKeys + key]; }
    void set(int t, int key, uint8_t finger) { values_[static_cast<size_t>(t) * kNumKeys + key] = finger; }

    static Hand hand_of_value(int v) { return v <= 5 ? Hand::Left : Hand::Right; }
    static int finger_of_value(int v) { return v <= 5 ? v - 1 : v - 6; }  // 0..4

private:
    int frames_ = 0;
    std::vector<uint8_t> values_;
};

// Per-hand T x 5 press flags.
struct PressMask {
    int frames = 0;
    std::vector<uint8_t> flags;  // frames x 5

    explicit PressMask(int t = 0) : frames(t), flags(static_cast<size_t>(t) * kFingersPerHand, 0) {}
    bool at(int t, int finger) const { return flags[static_cast<size_t>(t) * kFingersPerHand + finger] != 0; }
    void set(int t, int finger, bool v) { flags[static_cast<size_t>(t) * kFingersPerHand + finger] = v ? 1 : 0; }
    bool any(int t) const {
        for (int f = 0; f < kFingersPerHand; ++f)
            if (at(t, f)) return true;
        return false;
    }
};

struct ActiveNote {
    int key;
    int velocity;
};

struct Raster {
    PressMask press[2];                              // [Left, Right]
    std::vector<std::vector<ActiveNote>> active;     // per frame, sorted by key
    std::vector<std::vector<int>> pressed_key[2];    // per frame per finger: key or -1
};

struct GestureBoundary {
    int start_frame;
    int end_frame;  // inclusive
    Hand hand;
};

constexpr int kWindowFrames = 480;
constexpr int kWindowStride = 240;

struct Window {
    int start = 0;
    int length = kWindowFrames;
    int valid_length = kWindowFrames;  // < length only for the padded single-window case
};

// CSV with header "frame,key,finger". Cells not listed stay 0. Rows with an
// out-of-range finger or two keys claimed by one (frame, finger) pair are
// collected and reported together.
FingeringGrid parse_fingering(const std::string& text, int min_frames = 0);
FingeringGrid parse_fingering_file(const std::string& path, int min_frames = 0);

std::vector<GestureBoundary> parse_gesture_boundaries(const std::string& text);

Raster rasterize(const std::vector<NoteEvent>& events, const FrameGrid& grid,
                 const FingeringGrid& fingering);

std::vector<Window> make_windows(int frame_count);

std::string raster_to_json(const Raster& raster, const FrameGrid& grid);

}  // namespace tipsynth
