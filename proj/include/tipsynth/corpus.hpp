#pragma once

#include <map>

#include "tipsynth/baseline.hpp"
#include "tipsynth/trajectory_io.hpp"

namespace tipsynth {

struct CorpusNoise {
    double jitter_mm = 0.0;     // gaussian, every joint coordinate
    double dropout_rate = 0.0;  // chance a (frame, joint) sample repeats the previous frame
};

struct SyntheticCorpusSpec {
    int pieces = 20;
    double min_seconds = 8.0;
    double max_seconds = 20.0;
    int max_polyphony = 2;  // simultaneous notes per hand
    double min_note_s = 0.15;
    double max_note_s = 0.70;
    double min_gap_s = 0.06;
    double max_gap_s = 0.40;
    double chord_prob = 0.2;
    CorpusNoise noise;
    double train_ratio = 0.70;
    double val_ratio = 0.15;
    uint64_t seed = 1;
};

struct CorpusPiece {
    std::string name;
    std::vector<NoteEvent> notes;
    FrameGrid grid;
    FingeringGrid fingering;
    MotionTrack gt_full[2];  // T x 21 per hand
    std::string split;
};

struct Corpus {
    std::vector<CorpusPiece> pieces;
};

// Random monophonic-to-light-polyphonic pieces with nearest-finger fingerings
// and reference 21-joint trajectories built from canonical contact points,
// the anchor formation, the kinematic rig and optional capture noise.
// Deterministic per seed.
Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const KeyboardGeometry& geom);

// Canonical contact point used by the reference motion (and therefore what a
// self-built prior recovers at zero noise).
Vec3 canonical_contact(Hand hand, int finger, int key, const KeyboardGeometry& geom);

struct ManifestEntry {
    std::string name;
    std::string midi;
    std::string fingering;
    std::string traj_left;
    std::string traj_right;
    std::string split;
    int frames = 0;
};

// Writes <name>.mid, <name>.fingering.csv, <name>_{L,R}.traj per piece plus
// manifest.json into `dir`.
std::vector<ManifestEntry> save_corpus(const std::string& dir, const Corpus& corpus);
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct LoadedPiece {
    std::string name;
    std::string split;
    std::vector<NoteEvent> notes;
    FrameGrid grid;
    FingeringGrid fingering;
    Raster raster;
    MotionTrack gt_full[2];
    bool has_gt = false;
};

LoadedPiece load_piece(const ManifestEntry& entry);

// Split-filtered prior construction with read accounting, so leakage is
// assertable: counters index train/val/test frames actually folded in.
struct PriorBuildStats {
    std::map<std::string, int64_t> frames_read;
};

PriorBundle build_priors_from_manifest(const std::vector<ManifestEntry>& manifest,
                                       const std::string& split, const KeyboardGeometry& geom,
                                       int64_t min_count, PriorBuildStats* stats = nullptr);

}  // namespace tipsynth
