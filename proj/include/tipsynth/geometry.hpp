#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tipsynth/common.hpp"

namespace tipsynth {

// Piano-aligned coordinates, all millimeters:
//   X: key depth, 0 at the front edge (player side), increasing toward the fallboard
//   Y: along the keyboard, 0 at the left edge of key 0 (A0), increasing toward treble
//   Z: vertical, 0 at the white-key rest surface, up positive
// Key 0's front-left corner is the coordinate origin.

struct KeySpec {
    int index = 0;  // 0..87, MIDI pitch = index + 21
    bool is_black = false;
    double y_min = 0.0, y_max = 0.0;
    double x_min = 0.0, x_max = 0.0;
    double rest_z = 0.0;  // white: 0, black: top surface height

    double y_center() const { return 0.5 * (y_min + y_max); }
    double x_center() const { return 0.5 * (x_min + x_max); }
};

struct PressThresholds {
    double white_z = -1.19;               // pressed when tip z <= white_z over a white key
    double black_z = 10.38;               // pressed when tip z <= black_z over a black key
    double acoustic_trigger_depth = 8.0;  // informational, Disklavier trigger depth
};

struct KeyboardConfig {
    double white_key_width = 23.5;
    double white_key_depth = 150.0;
    double black_key_width = 13.7;
    double black_key_depth = 95.0;
    double black_rest_z = 12.5;
    // Per pitch-class lateral shift of black keys off the white-white boundary.
    // Index by pitch class of (key + 9) mod 12; only black classes are read.
    std::array<double, 12> black_offset{};
    PressThresholds thresholds;
};

class KeyboardGeometry {
public:
    const std::vector<KeySpec>& keys() const { return keys_; }
    const KeySpec& key(int index) const;
    double white_key_width() const { return config_.white_key_width; }
    double span_y() const { return span_y_; }  // total keyboard width
    const PressThresholds& thresholds() const { return config_.thresholds; }
    const KeyboardConfig& config() const { return config_; }

    // Which key is under the XY position of `p` (Z ignored). Black keys take
    // precedence inside their X depth; boundary points go to the lower index.
    std::optional<int> key_at(const Vec3& p) const;

    static bool is_black_index(int key);

    friend KeyboardGeometry build_standard_keyboard(const KeyboardConfig& config);

private:
    KeyboardConfig config_;
    std::vector<KeySpec> keys_;
    double span_y_ = 0.0;
};

KeyboardGeometry build_standard_keyboard(const KeyboardConfig& config = {});

// Press test for a point already known to be over `key` (checked; throws
// ValidationError otherwise). Thresholds are absolute Z, boundary inclusive.
bool is_pressed(const Vec3& p, const KeySpec& key, const PressThresholds& thresholds,
                const KeyboardGeometry& geom);

// 8 pitch regions: [0,15) [15,25) [25,35) [35,45) [45,55) [55,65) [65,75) [75,88)
int region_of(int key);
constexpr int kNumRegions = 8;

std::string keyboard_to_json(const KeyboardGeometry& geom);
KeyboardGeometry keyboard_from_json(const std::string& text);

}  // namespace tipsynth
