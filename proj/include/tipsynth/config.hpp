#pragma once

#include "tipsynth/evaluate.hpp"
#include "tipsynth/midi_features.hpp"
#include "tipsynth/pose.hpp"
#include "tipsynth/stitch.hpp"
#include "tipsynth/wrist.hpp"

namespace tipsynth {

struct TrainingConfig {
    int steps_stage2 = 120;
    int steps_smoother = 60;
    int steps_wrist = 80;
    int steps_stage4 = 50;
    int steps_pose_refine = 30;
    float lr = 1e-3f;
    int crop_stage2 = 240;  // temporal crop of training windows
    int crop_stage4 = 64;
    double smoother_jitter_mm = 1.5;
};

struct PipelineConfig {
    uint64_t seed = 1;
    std::string keyboard_path;  // empty: built-in standard layout
    std::string prior_path = "out/prior.json";
    std::string models_dir = "out/models";

    BaselineConfig baseline;
    ClampConfig clamps;
    double lambda_pos = 1.0;
    double lambda_vel = 0.5;
    PoseLossWeights pose_weights;
    BioLimits bio_limits;
    int smooth_radius = 4;
    bool use_learned_smoother = true;
    bool mask_y = true;
    std::string conditioning = "raw";  // raw | none
    std::string fusion = "film";       // film | concat

    RefineNetConfig refine_net;  // midi_dim filled per stage
    WristNetConfig wrist_net;
    StgcnUNetConfig stgcn;
    PoseRefineNetConfig pose_refine;

    EvaluatorConfig evaluator;
    std::string tap = "s2.2";  // stage used for contact metrics
    StitchConfig stitch;
    MidiFeatureConfig midi_features;
    TrainingConfig training;

    int64_t midi_dim() const { return conditioning == "raw" ? midi_features.dim() : 0; }
    Fusion fusion_mode() const { return fusion == "concat" ? Fusion::Concat : Fusion::Film; }
};

// JSON round trip; unknown keys rejected so typos fail loudly. TIPSYNTH_SEED
// overrides the stored seed.
PipelineConfig load_config(const std::string& path);
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& config);

KeyboardGeometry load_keyboard(const PipelineConfig& config);

}  // namespace tipsynth
