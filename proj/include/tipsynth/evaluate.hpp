#pragma once

#include <optional>

#include "tipsynth/geometry.hpp"
#include "tipsynth/midi.hpp"
#include "tipsynth/motion.hpp"
#include "tipsynth/score.hpp"

namespace tipsynth {

struct PressEvent {
    int key = 0;
    int start_frame = 0;
    int end_frame = 0;  // inclusive
    int finger = -1;    // diagnostic only; matching is key-only
    Hand hand = Hand::Right;
};

struct EvaluatorConfig {
    int min_frames = 2;         // debounce: shorter runs are discarded
    double onset_tol_ms = 100.0;
    bool frame_level = false;   // sensitivity alternative to event matching
};

// Per fingertip: frames where the tip sits over a key below its press
// threshold; contiguous same-key runs merge into events.
std::vector<PressEvent> detect_presses(const MotionTrack& tips, Hand hand,
                                       const KeyboardGeometry& geom,
                                       const EvaluatorConfig& config = {});

struct F1Scores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    int matched = 0;
    int predicted = 0;
    int ground_truth = 0;
};

// Greedy one-to-one matching, nearest onset difference first; a pair is
// admissible when keys agree and |onset delta| <= tolerance.
F1Scores key_contact_f1(const std::vector<PressEvent>& pred, const std::vector<NoteEvent>& gt,
                        const FrameGrid& grid, double onset_tol_ms = 100.0);

// Frame-level variant: per (frame, key) contact flags.
F1Scores frame_level_f1(const std::vector<PressEvent>& pred, const std::vector<NoteEvent>& gt,
                        const FrameGrid& grid);

struct PositionMetrics {
    double mpjpe_mm = 0.0;
    double fingertip_mm = 0.0;
};

// Mean Euclidean error over frames x joints; fingertip error restricted to
// tip slots (all joints when the track has only 5).
PositionMetrics position_metrics(const MotionTrack& pred, const MotionTrack& gt);

// mean ||second central difference|| ratio; unset when the ground truth has
// no acceleration.
std::optional<double> accel_ratio(const MotionTrack& pred, const MotionTrack& gt);

struct MetricsReport {
    F1Scores contact;
    double mpjpe_mm = 0.0;
    double fingertip_mm = 0.0;
    std::optional<double> accel_full;
    std::optional<double> accel_fingertip;
    std::optional<double> accel_wrist;
};

}  // namespace tipsynth
