#pragma once

#include "tipsynth/config.hpp"
#include "tipsynth/corpus.hpp"
#include "tipsynth/train.hpp"

namespace tipsynth {

enum class StageTap { S1, S21, S22, S23, S3, S4, Final };

StageTap tap_from_string(const std::string& name);
const char* tap_tag(StageTap tap);

struct StageModels {
    ParamStore refine1[2];
    ParamStore refine2[2];
    ParamStore smoother[2];
    ParamStore wrist[2];
    ParamStore stgcn[2];
    ParamStore pose_refine[2];
    BoneTable bones;
};

RefineNet make_refine1_net(const PipelineConfig& config);
RefineNet make_refine2_net(const PipelineConfig& config);
SmootherNet make_smoother_net(const PipelineConfig& config);
WristNet make_wrist_net(const PipelineConfig& config);
StgcnUNet make_stgcn_net(const PipelineConfig& config);
PoseRefineNet make_pose_refine_net(const PipelineConfig& config);

// Deterministic initialization of every stage's parameters from the seed.
StageModels init_models(const PipelineConfig& config);
void save_models(const StageModels& models, const std::string& dir);
StageModels load_models(const PipelineConfig& config, const std::string& dir);

// All tracks stitched back to full piece length. Stages beyond `through`
// stay empty.
struct PieceOutputs {
    StageTap through = StageTap::Final;
    MotionTrack tips_s1[2];
    MotionTrack tips_s21[2];
    MotionTrack tips_s22[2];
    MotionTrack tips_s23[2];
    MotionTrack wrist_s3[2];
    MotionTrack pose_s4[2];
    MotionTrack pose_final[2];
    double mean_pose_residual_mm[2] = {0.0, 0.0};
    // instrumentation: largest post-clamp residual seen across all windows
    double max_tip_residual_mm = 0.0;
    double max_wrist_residual_mm = 0.0;
};

PieceOutputs run_piece(const LoadedPiece& piece, const PipelineConfig& config,
                       const KeyboardGeometry& geom, const PriorBundle& prior,
                       const StageModels* models, StageTap through = StageTap::Final);

// Fingertip track at a tap (tip slots extracted from full poses when needed).
MotionTrack tap_tips(const PieceOutputs& outputs, StageTap tap, Hand hand);

struct TrainSummary {
    std::map<std::string, std::vector<double>> loss_curves;
};

// Sequential training 2.1 -> 2.2 -> 2.3 -> 3 -> 4 -> 4-refine on the train
// split, cascading each stage's inference outputs into the next stage's
// inputs. Deterministic for a fixed config seed.
TrainSummary train_all(const PipelineConfig& config, const std::vector<ManifestEntry>& manifest,
                       const KeyboardGeometry& geom, const PriorBundle& prior,
                       StageModels& models);

struct PieceEvaluation {
    std::string name;
    std::string split;
    F1Scores contact;  // at the configured tap, both hands pooled
    double mpjpe_mm = 0.0;      // mean of both hands
    double fingertip_mm = 0.0;
    std::optional<double> accel_full;
    std::optional<double> accel_tips;
    std::optional<double> accel_wrist;
    // per-hand breakdown, indexed [Left, Right]
    double mpjpe_hand_mm[2] = {0.0, 0.0};
    std::optional<double> accel_full_hand[2];
    std::optional<double> accel_tips_hand[2];
    std::optional<double> accel_wrist_hand[2];
    bool has_position_metrics = false;
};

PieceEvaluation evaluate_piece(const LoadedPiece& piece, const PieceOutputs& outputs,
                               const PipelineConfig& config, const KeyboardGeometry& geom);

std::string evaluation_report_json(const std::vector<PieceEvaluation>& evals,
                                   const PipelineConfig& config);

}  // namespace tipsynth
