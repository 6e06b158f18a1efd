#pragma once

#include <optional>

#include "tipsynth/geometry.hpp"
#include "tipsynth/motion.hpp"
#include "tipsynth/score.hpp"

namespace tipsynth {

struct PositionPriorEntry {
    Vec3 mean;
    Vec3 stddev;
    Vec3 p25, p50, p75;
    int64_t count = 0;
    bool interpolated = false;
};

// 880 slots over (hand, finger 0..4, key 0..87). Slots with fewer than
// min_count observations stay empty until interpolate_missing fills them.
class PositionPrior {
public:
    int64_t min_count = 10;

    static size_t slot(Hand h, int finger, int key) {
        return (static_cast<size_t>(h) * kFingersPerHand + static_cast<size_t>(finger)) * kNumKeys +
               static_cast<size_t>(key);
    }
    const std::optional<PositionPriorEntry>& entry(Hand h, int finger, int key) const {
        return entries_[slot(h, finger, key)];
    }
    std::optional<PositionPriorEntry>& entry(Hand h, int finger, int key) {
        return entries_[slot(h, finger, key)];
    }
    int populated_count() const;
    bool fully_covered() const { return populated_count() == 2 * kFingersPerHand * kNumKeys; }

private:
    std::array<std::optional<PositionPriorEntry>, 2 * kFingersPerHand * kNumKeys> entries_;
};

struct WristOffsetPrior {
    // [hand][region] mean (wrist - pressing fingertip centroid)
    std::array<std::array<Vec3, kNumRegions>, 2> offsets{};
    std::array<std::array<int64_t, kNumRegions>, 2> counts{};
};

// One training piece, frame-aligned.
struct PriorObservation {
    const MotionTrack* tips[2] = {nullptr, nullptr};   // T x 5 x 3 per hand
    const MotionTrack* wrist[2] = {nullptr, nullptr};  // T x 1 x 3 per hand (optional)
    const FingeringGrid* fingering = nullptr;
};

PositionPrior build_position_prior(const std::vector<PriorObservation>& pieces,
                                   int64_t min_count = 10);

// Fill empty slots from the nearest populated keys of the same (hand, finger)
// row: X/Z interpolated linearly in key-center Y, Y re-anchored to the target
// key center. One-sided gaps copy the donor's X/Z. A row with no populated
// slot at all is a build error.
PositionPrior interpolate_missing(const PositionPrior& prior, const KeyboardGeometry& geom);

WristOffsetPrior build_wrist_offsets(const std::vector<PriorObservation>& pieces,
                                     const KeyboardGeometry& geom);

// Entries whose median misses its own key or press threshold (possible with
// degenerate training data); checked when a prior is loaded for synthesis.
std::vector<std::string> validate_prior(const PositionPrior& prior, const KeyboardGeometry& geom);

struct PriorBundle {
    PositionPrior position;
    WristOffsetPrior wrist;
};

std::string prior_to_json(const PriorBundle& bundle);
PriorBundle prior_from_json(const std::string& text);
void save_prior(const std::string& path, const PriorBundle& bundle);
PriorBundle load_prior(const std::string& path);

}  // namespace tipsynth
