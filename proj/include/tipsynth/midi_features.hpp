#pragma once

#include "tipsynth/score.hpp"
#include "tipsynth/tensor.hpp"

namespace tipsynth {

// Hand-crafted per-frame MIDI conditioning, 452 dims by default:
//   [0,88)    active-key one-hot
//   [88,176)  active-key velocity / 127
//   [176,264) per-key onset recency ramp        exp(-(t - t_onset)/tau)
//   [264,352) per-key upcoming-onset ramp       exp(-(t_onset - t)/tau)
//   [352,440) per-key release proximity ramp    exp(-(t_release - t)/tau), active notes only
//   [440,452) globals: polyphony, low/high polyphony, mean/max velocity,
//             last/next onset ramps, past/future inter-onset interval,
//             onset densities over +-1 s, sustained-note count
// Built from MIDI alone; a stand-in for the pretrained embedding this
// artifact does not ship.
struct MidiFeatureConfig {
    double tau_onset = 0.25;    // seconds
    double tau_release = 0.25;  // seconds
    int64_t dim() const { return 5 * kNumKeys + 12; }
};

struct MidiFeatureTrack {
    int frames = 0;
    int64_t dim = 0;
    Tensor features;  // frames x dim

    Tensor rows(int start, int count) const;  // contiguous slice
};

MidiFeatureTrack midi_features(const std::vector<NoteEvent>& events, const FrameGrid& grid,
                               const MidiFeatureConfig& config = {});

}  // namespace tipsynth
