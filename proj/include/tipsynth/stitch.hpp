#pragma once

#include "tipsynth/motion.hpp"
#include "tipsynth/score.hpp"

namespace tipsynth {

struct StitchConfig {
    double cutoff_hz = 6.0;   // 4th-order low-pass, zero-phase
    int seam_halfwidth = 12;  // filter written back only this close to a seam
    // a seam is only filtered when the overlapping windows actually disagree
    // there; agreeing windows blend exactly and need no repair
    double seam_tolerance_mm = 0.25;
    double fps = 60000.0 / 1001.0;
};

// Center-weighted blend of overlapping window outputs (raised-cosine weights
// normalized per frame), then a zero-phase low-pass applied around each
// window boundary. A single window passes through bit-exactly.
MotionTrack stitch_windows(const std::vector<MotionTrack>& outputs,
                           const std::vector<Window>& windows, int total_frames,
                           const StitchConfig& config = {});

// Per-frame normalized blend weights; exposed so the partition-of-unity
// property is directly testable.
std::vector<std::vector<double>> stitch_weights(const std::vector<Window>& windows,
                                                int total_frames);

// Forward-backward 4th-order Butterworth low-pass over one channel.
std::vector<double> butterworth_filtfilt(const std::vector<double>& signal, double cutoff_hz,
                                         double fs);

}  // namespace tipsynth
