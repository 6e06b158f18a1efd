#include "tipsynth/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include <json.hpp>

namespace tipsynth {

namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["keyboard_path"] = c.keyboard_path;
    j["prior_path"] = c.prior_path;
    j["models_dir"] = c.models_dir;
    j["hover_mm"] = c.baseline.hover_mm;
    j["finger_spacing_mm"] = c.baseline.finger_spacing_mm;
    j["lateral_corrections"] = c.baseline.lateral_corrections;
    j["fingertip_clamp_mm"] = c.clamps.fingertip_mm;
    j["wrist_clamp_mm"] = c.clamps.wrist_mm;
    j["lambda_pos"] = c.lambda_pos;
    j["lambda_vel"] = c.lambda_vel;
    j["lambda_bone"] = c.pose_weights.lambda_bone;
    j["lambda_vel_pose"] = c.pose_weights.lambda_vel;
    j["lambda_bio"] = c.pose_weights.lambda_bio;
    j["smooth_radius"] = c.smooth_radius;
    j["use_learned_smoother"] = c.use_learned_smoother;
    j["mask_y"] = c.mask_y;
    j["conditioning"] = c.conditioning;
    j["fusion"] = c.fusion;
    j["model_dim"] = c.refine_net.model_dim;
    j["encoder_layers"] = c.refine_net.layers;
    j["encoder_heads"] = c.refine_net.heads;
    j["encoder_ffn_dim"] = c.refine_net.ffn_dim;
    j["wrist_channels"] = c.wrist_net.channels;
    j["wrist_blocks"] = c.wrist_net.blocks;
    j["wrist_kernel"] = c.wrist_net.kernel;
    j["stgcn_channels"] = c.stgcn.channels;
    j["stgcn_blocks_per_level"] = c.stgcn.blocks_per_level;
    j["stgcn_kernel"] = c.stgcn.temporal_kernel;
    j["pose_refine_channels"] = c.pose_refine.channels;
    j["pose_refine_blocks"] = c.pose_refine.blocks;
    j["pose_residual_penalty"] = c.pose_refine.residual_penalty;
    j["evaluator_min_frames"] = c.evaluator.min_frames;
    j["evaluator_onset_tol_ms"] = c.evaluator.onset_tol_ms;
    j["evaluator_frame_level"] = c.evaluator.frame_level;
    j["tap"] = c.tap;
    j["stitch_cutoff_hz"] = c.stitch.cutoff_hz;
    j["stitch_seam_halfwidth"] = c.stitch.seam_halfwidth;
    j["midi_tau_onset"] = c.midi_features.tau_onset;
    j["midi_tau_release"] = c.midi_features.tau_release;
    j["train_steps_stage2"] = c.training.steps_stage2;
    j["train_steps_smoother"] = c.training.steps_smoother;
    j["train_steps_wrist"] = c.training.steps_wrist;
    j["train_steps_stage4"] = c.training.steps_stage4;
    j["train_steps_pose_refine"] = c.training.steps_pose_refine;
    j["train_lr"] = c.training.lr;
    j["train_crop_stage2"] = c.training.crop_stage2;
    j["train_crop_stage4"] = c.training.crop_stage4;
    j["train_smoother_jitter_mm"] = c.training.smoother_jitter_mm;
    return j.dump(2);
}

PipelineConfig config_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    PipelineConfig c;
    static const std::set<std::string> known = {
        "seed", "keyboard_path", "prior_path", "models_dir", "hover_mm", "finger_spacing_mm",
        "lateral_corrections", "fingertip_clamp_mm", "wrist_clamp_mm", "lambda_pos", "lambda_vel",
        "lambda_bone", "lambda_vel_pose", "lambda_bio", "smooth_radius", "use_learned_smoother",
        "mask_y", "conditioning", "fusion", "model_dim", "encoder_layers", "encoder_heads",
        "encoder_ffn_dim", "wrist_channels", "wrist_blocks", "wrist_kernel", "stgcn_channels",
        "stgcn_blocks_per_level", "stgcn_kernel", "pose_refine_channels", "pose_refine_blocks",
        "pose_residual_penalty", "evaluator_min_frames", "evaluator_onset_tol_ms",
        "evaluator_frame_level", "tap", "stitch_cutoff_hz", "stitch_seam_halfwidth",
        "midi_tau_onset", "midi_tau_release", "train_steps_stage2", "train_steps_smoother",
        "train_steps_wrist", "train_steps_stage4", "train_steps_pose_refine", "train_lr",
        "train_crop_stage2", "train_crop_stage4", "train_smoother_jitter_mm"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("unknown config key: " + key);
    }
    get_if(j, "seed", c.seed);
    get_if(j, "keyboard_path", c.keyboard_path);
    get_if(j, "prior_path", c.prior_path);
    get_if(j, "models_dir", c.models_dir);
    get_if(j, "hover_mm", c.baseline.hover_mm);
    get_if(j, "finger_spacing_mm", c.baseline.finger_spacing_mm);
    get_if(j, "lateral_corrections", c.baseline.lateral_corrections);
    get_if(j, "fingertip_clamp_mm", c.clamps.fingertip_mm);
    get_if(j, "wrist_clamp_mm", c.clamps.wrist_mm);
    get_if(j, "lambda_pos", c.lambda_pos);
    get_if(j, "lambda_vel", c.lambda_vel);
    get_if(j, "lambda_bone", c.pose_weights.lambda_bone);
    get_if(j, "lambda_vel_pose", c.pose_weights.lambda_vel);
    get_if(j, "lambda_bio", c.pose_weights.lambda_bio);
    get_if(j, "smooth_radius", c.smooth_radius);
    get_if(j, "use_learned_smoother", c.use_learned_smoother);
    get_if(j, "mask_y", c.mask_y);
    get_if(j, "conditioning", c.conditioning);
    get_if(j, "fusion", c.fusion);
    get_if(j, "model_dim", c.refine_net.model_dim);
    get_if(j, "encoder_layers", c.refine_net.layers);
    get_if(j, "encoder_heads", c.refine_net.heads);
    get_if(j, "encoder_ffn_dim", c.refine_net.ffn_dim);
    get_if(j, "wrist_channels", c.wrist_net.channels);
    get_if(j, "wrist_blocks", c.wrist_net.blocks);
    get_if(j, "wrist_kernel", c.wrist_net.kernel);
    get_if(j, "stgcn_channels", c.stgcn.channels);
    get_if(j, "stgcn_blocks_per_level", c.stgcn.blocks_per_level);
    get_if(j, "stgcn_kernel", c.stgcn.temporal_kernel);
    get_if(j, "pose_refine_channels", c.pose_refine.channels);
    get_if(j, "pose_refine_blocks", c.pose_refine.blocks);
    get_if(j, "pose_residual_penalty", c.pose_refine.residual_penalty);
    get_if(j, "evaluator_min_frames", c.evaluator.min_frames);
    get_if(j, "evaluator_onset_tol_ms", c.evaluator.onset_tol_ms);
    get_if(j, "evaluator_frame_level", c.evaluator.frame_level);
    get_if(j, "tap", c.tap);
    get_if(j, "stitch_cutoff_hz", c.stitch.cutoff_hz);
    get_if(j, "stitch_seam_halfwidth", c.stitch.seam_halfwidth);
    get_if(j, "midi_tau_onset", c.midi_features.tau_onset);
    get_if(j, "midi_tau_release", c.midi_features.tau_release);
    get_if(j, "train_steps_stage2", c.training.steps_stage2);
    get_if(j, "train_steps_smoother", c.training.steps_smoother);
    get_if(j, "train_steps_wrist", c.training.steps_wrist);
    get_if(j, "train_steps_stage4", c.training.steps_stage4);
    get_if(j, "train_steps_pose_refine", c.training.steps_pose_refine);
    get_if(j, "train_lr", c.training.lr);
    get_if(j, "train_crop_stage2", c.training.crop_stage2);
    get_if(j, "train_crop_stage4", c.training.crop_stage4);
    get_if(j, "train_smoother_jitter_mm", c.training.smoother_jitter_mm);

    if (c.conditioning != "raw" && c.conditioning != "none")
        throw ConfigError("conditioning must be raw or none");
    if (c.fusion != "film" && c.fusion != "concat") throw ConfigError("fusion must be film or concat");
    if (c.clamps.fingertip_mm <= 0.0 || c.clamps.wrist_mm <= 0.0)
        throw ConfigError("clamp bounds must be positive");

    if (const char* env = std::getenv("TIPSYNTH_SEED")) {
        c.seed = static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
    }
    return c;
}

PipelineConfig load_config(const std::string& path) {
    if (path.empty()) return config_from_json("{}");
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

KeyboardGeometry load_keyboard(const PipelineConfig& config) {
    if (config.keyboard_path.empty()) return build_standard_keyboard();
    std::ifstream f(config.keyboard_path);
    if (!f) throw ConfigError("cannot open keyboard file: " + config.keyboard_path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return keyboard_from_json(text);
}

}  // namespace tipsynth
