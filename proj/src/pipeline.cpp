#include "tipsynth/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace tipsynth {

StageTap tap_from_string(const std::string& name) {
    if (name == "s1" || name == "1") return StageTap::S1;
    if (name == "s2.1" || name == "2.1") return StageTap::S21;
    if (name == "s2.2" || name == "2.2") return StageTap::S22;
    if (name == "s2.3" || name == "2.3" || name == "2") return StageTap::S23;
    if (name == "s3" || name == "3") return StageTap::S3;
    if (name == "s4" || name == "4") return StageTap::S4;
    if (name == "final") return StageTap::Final;
    throw ConfigError("unknown stage tap: " + name);
}

const char* tap_tag(StageTap tap) {
    switch (tap) {
        case StageTap::S1: return "S1";
        case StageTap::S21: return "S2.1";
        case StageTap::S22: return "S2.2";
        case StageTap::S23: return "S2.3";
        case StageTap::S3: return "S3";
        case StageTap::S4: return "S4";
        case StageTap::Final: return "FINAL";
    }
    return "?";
}

RefineNet make_refine1_net(const PipelineConfig& config) {
    RefineNetConfig cfg = config.refine_net;
    cfg.midi_dim = 0;
    cfg.fusion = config.fusion_mode();
    return RefineNet{"s21", cfg};
}

RefineNet make_refine2_net(const PipelineConfig& config) {
    RefineNetConfig cfg = config.refine_net;
    cfg.midi_dim = config.midi_dim();
    cfg.fusion = config.fusion_mode();
    return RefineNet{"s22", cfg};
}

SmootherNet make_smoother_net(const PipelineConfig& config) {
    SmootherNet net;
    net.prefix = "s23";
    net.hidden = config.refine_net.model_dim;
    return net;
}

WristNet make_wrist_net(const PipelineConfig& config) {
    WristNetConfig cfg = config.wrist_net;
    cfg.midi_dim = config.midi_dim();
    return WristNet{"s3", cfg};
}

StgcnUNet make_stgcn_net(const PipelineConfig& config) {
    StgcnUNetConfig cfg = config.stgcn;
    return StgcnUNet{"s4", cfg};
}

PoseRefineNet make_pose_refine_net(const PipelineConfig& config) {
    PoseRefineNetConfig cfg = config.pose_refine;
    // conditioned on fingering context plus MIDI features when enabled
    cfg.midi_dim = kPoseCondDim + config.midi_dim();
    return PoseRefineNet{"s4r", cfg};
}

StageModels init_models(const PipelineConfig& config) {
    StageModels m;
    for (int h = 0; h < 2; ++h) {
        const uint64_t base = config.seed * 1000 + static_cast<uint64_t>(h);
        RngState r1(base + 11), r2(base + 22), rs(base + 33), rw(base + 44), rg(base + 55),
            rp(base + 66);
        m.refine1[h].init_seed = base + 11;
        make_refine1_net(config).init(m.refine1[h], r1);
        m.refine2[h].init_seed = base + 22;
        make_refine2_net(config).init(m.refine2[h], r2);
        m.smoother[h].init_seed = base + 33;
        make_smoother_net(config).init(m.smoother[h], rs);
        m.wrist[h].init_seed = base + 44;
        make_wrist_net(config).init(m.wrist[h], rw);
        m.stgcn[h].init_seed = base + 55;
        make_stgcn_net(config).init(m.stgcn[h], rg);
        m.pose_refine[h].init_seed = base + 66;
        make_pose_refine_net(config).init(m.pose_refine[h], rp);
    }
    // neutral bone table; proper one comes from training data
    const HandGraph graph = build_hand_graph();
    for (int h = 0; h < 2; ++h)
        for (int b = 0; b < 20; ++b) m.bones.lengths[static_cast<size_t>(h)][static_cast<size_t>(b)] = 30.0;
    (void)graph;
    return m;
}

namespace {

std::string model_path(const std::string& dir, const char* stage, int hand) {
    return dir + "/" + stage + "_" + (hand == 0 ? "L" : "R") + ".tpnn";
}

}  // namespace

void save_models(const StageModels& models, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (int h = 0; h < 2; ++h) {
        models.refine1[h].save(model_path(dir, "stage2.1", h));
        models.refine2[h].save(model_path(dir, "stage2.2", h));
        models.smoother[h].save(model_path(dir, "stage2.3", h));
        models.wrist[h].save(model_path(dir, "stage3", h));
        models.stgcn[h].save(model_path(dir, "stage4", h));
        models.pose_refine[h].save(model_path(dir, "stage4r", h));
    }
    std::ofstream f(dir + "/bones.json");
    f << bone_table_to_json(models.bones);
}

StageModels load_models(const PipelineConfig& config, const std::string& dir) {
    (void)config;
    StageModels m;
    for (int h = 0; h < 2; ++h) {
        m.refine1[h] = ParamStore::load(model_path(dir, "stage2.1", h));
        m.refine2[h] = ParamStore::load(model_path(dir, "stage2.2", h));
        m.smoother[h] = ParamStore::load(model_path(dir, "stage2.3", h));
        m.wrist[h] = ParamStore::load(model_path(dir, "stage3", h));
        m.stgcn[h] = ParamStore::load(model_path(dir, "stage4", h));
        m.pose_refine[h] = ParamStore::load(model_path(dir, "stage4r", h));
    }
    std::ifstream f(dir + "/bones.json");
    if (f) {
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        m.bones = bone_table_from_json(text);
    }
    return m;
}

namespace {

MidiFeatureTrack slice_features(const MidiFeatureTrack& full, int start, int len) {
    MidiFeatureTrack out;
    out.frames = len;
    out.dim = full.dim;
    out.features = full.rows(start, len);
    return out;
}

MotionTrack tips_from_full(const MotionTrack& full) {
    MotionTrack tips(full.frames, kFingersPerHand);
    for (int t = 0; t < full.frames; ++t)
        for (int f = 0; f < kFingersPerHand; ++f)
            tips.set_raw(t, f, full.data.data() + full.offset(t, tip_joint(f)));
    return tips;
}

MotionTrack wrist_from_full(const MotionTrack& full) {
    MotionTrack wrist(full.frames, 1);
    for (int t = 0; t < full.frames; ++t)
        wrist.set_raw(t, 0, full.data.data() + full.offset(t, kWristJoint));
    return wrist;
}

}  // namespace

PieceOutputs run_piece(const LoadedPiece& piece, const PipelineConfig& config,
                       const KeyboardGeometry& geom, const PriorBundle& prior,
                       const StageModels* models, StageTap through) {
    PieceOutputs out;
    out.through = through;
    const int T = piece.grid.frame_count;
    const std::vector<Window> windows = make_windows(T);

    const bool use_midi = config.midi_dim() > 0;
    MidiFeatureTrack features;
    if (use_midi && through >= StageTap::S22)
        features = midi_features(piece.notes, piece.grid, config.midi_features);

    const RefineNet net1 = make_refine1_net(config);
    const RefineNet net2 = make_refine2_net(config);
    const SmootherNet smoother = make_smoother_net(config);
    const WristNet wristnet = make_wrist_net(config);
    const StgcnUNet stgcn = make_stgcn_net(config);
    const PoseRefineNet posenet = make_pose_refine_net(config);
    const HandGraph graph = build_hand_graph();

    if (through >= StageTap::S21 && models == nullptr)
        throw ConfigError("run_piece: stages beyond 1 need trained models");

    std::vector<MotionTrack> acc_s1[2], acc_s21[2], acc_s22[2], acc_s23[2], acc_w[2], acc_s4[2],
        acc_final[2];
    double residual_accum[2] = {0.0, 0.0};
    int residual_windows = 0;

    // stage 1 carries hold state across the whole piece; windows slice it
    const WindowData piece_data = slice_window(piece.raster, Window{0, T, T});
    MotionTrack s1_full[2];
    for (int h = 0; h < 2; ++h) {
        s1_full[h] = synthesize_baseline(piece_data, static_cast<Hand>(h), prior.position, geom,
                                         config.baseline);
    }

    for (const Window& window : windows) {
        const WindowData data = slice_window(piece.raster, window);
        MidiFeatureTrack window_feats;
        if (use_midi && through >= StageTap::S22)
            window_feats = slice_features(features, window.start, data.frames);

        for (int h = 0; h < 2; ++h) {
            const Hand hand = static_cast<Hand>(h);
            MotionTrack s1 = s1_full[h].slice(window.start, data.frames);
            acc_s1[h].push_back(s1);
            if (through < StageTap::S21) continue;

            double res1 = 0.0, res2 = 0.0;
            MotionTrack s21 = refine_stage(s1, data, hand, models->refine1[h], net1, geom, nullptr,
                                           config.clamps.fingertip_mm, config.mask_y, &res1);
            out.max_tip_residual_mm = std::max(out.max_tip_residual_mm, res1);
            acc_s21[h].push_back(s21);
            if (through < StageTap::S22) continue;

            MotionTrack s22 = refine_stage(s21, data, hand, models->refine2[h], net2, geom,
                                           use_midi ? &window_feats : nullptr,
                                           config.clamps.fingertip_mm, config.mask_y, &res2);
            out.max_tip_residual_mm = std::max(out.max_tip_residual_mm, res2);
            acc_s22[h].push_back(s22);
            if (through < StageTap::S23) continue;

            MotionTrack s23 = smooth_trajectory(
                s22, config.mask_y ? &data.press[h] : nullptr, config.smooth_radius,
                config.use_learned_smoother ? &models->smoother[h] : nullptr,
                config.use_learned_smoother ? &smoother : nullptr);
            acc_s23[h].push_back(s23);
            if (through < StageTap::S3) continue;

            const MotionTrack base = base_wrist(s23, data, hand, prior.wrist);
            double res_w = 0.0;
            MotionTrack w3 = refine_wrist(base, data, hand, models->wrist[h], wristnet, geom,
                                          use_midi ? &window_feats : nullptr,
                                          config.clamps.wrist_mm, config.smooth_radius, nullptr,
                                          nullptr, &res_w);
            out.max_wrist_residual_mm = std::max(out.max_wrist_residual_mm, res_w);
            acc_w[h].push_back(w3);
            if (through < StageTap::S4) continue;

            MotionTrack s4 = stgcn_synthesize(w3, s23, data, models->stgcn[h], stgcn, graph, geom);
            acc_s4[h].push_back(s4);
            if (through < StageTap::Final) continue;

            double res_mm = 0.0;
            MotionTrack fin = midi_refine_pose(s4, data, hand, models->pose_refine[h], posenet,
                                               graph, use_midi ? &window_feats : nullptr, geom,
                                               config.smooth_radius, &res_mm);
            residual_accum[h] += res_mm;
            acc_final[h].push_back(fin);
        }
        ++residual_windows;
    }

    for (int h = 0; h < 2; ++h) {
        out.tips_s1[h] = stitch_windows(acc_s1[h], windows, T, config.stitch);
        if (through >= StageTap::S21) out.tips_s21[h] = stitch_windows(acc_s21[h], windows, T, config.stitch);
        if (through >= StageTap::S22) out.tips_s22[h] = stitch_windows(acc_s22[h], windows, T, config.stitch);
        if (through >= StageTap::S23) out.tips_s23[h] = stitch_windows(acc_s23[h], windows, T, config.stitch);
        if (through >= StageTap::S3) out.wrist_s3[h] = stitch_windows(acc_w[h], windows, T, config.stitch);
        if (through >= StageTap::S4) out.pose_s4[h] = stitch_windows(acc_s4[h], windows, T, config.stitch);
        if (through >= StageTap::Final) {
            out.pose_final[h] = stitch_windows(acc_final[h], windows, T, config.stitch);
            out.mean_pose_residual_mm[h] =
                residual_windows > 0 ? residual_accum[h] / residual_windows : 0.0;
        }
    }
    return out;
}

MotionTrack tap_tips(const PieceOutputs& outputs, StageTap tap, Hand hand) {
    const int h = static_cast<int>(hand);
    switch (tap) {
        case StageTap::S1: return outputs.tips_s1[h];
        case StageTap::S21: return outputs.tips_s21[h];
        case StageTap::S22: return outputs.tips_s22[h];
        case StageTap::S23: return outputs.tips_s23[h];
        case StageTap::S3: return outputs.tips_s23[h];
        case StageTap::S4: return tips_from_full(outputs.pose_s4[h]);
        case StageTap::Final: return tips_from_full(outputs.pose_final[h]);
    }
    throw ConfigError("tap_tips: bad tap");
}

// ---- training ----

namespace {

struct TrainWindow {
    WindowData data;
    Tensor fing_feats[2];
    Tensor midi_feats;  // empty when unconditioned
    MotionTrack s1[2];
    MotionTrack gt_tips[2];
    MotionTrack gt_wrist[2];
    MotionTrack gt_full[2];
    // cascade state
    MotionTrack cur_tips[2];
    MotionTrack wrist_out[2];
    MotionTrack pose_out[2];
};

Tensor crop_rows(const Tensor& t, int start, int len) {
    const int64_t inner = t.numel() / t.shape[0];
    Shape shape = t.shape;
    shape[0] = len;
    Tensor out(shape);
    std::copy_n(t.data.data() + static_cast<size_t>(start) * static_cast<size_t>(inner),
                static_cast<size_t>(len) * static_cast<size_t>(inner), out.data.data());
    return out;
}

Tensor track_tensor(const MotionTrack& track, bool flat) {
    if (flat) return Tensor({track.frames, track.joints * 3}, track.data);
    return Tensor({track.frames, track.joints, 3}, track.data);
}

}  // namespace

TrainSummary train_all(const PipelineConfig& config, const std::vector<ManifestEntry>& manifest,
                       const KeyboardGeometry& geom, const PriorBundle& prior,
                       StageModels& models) {
    TrainSummary summary;
    const bool use_midi = config.midi_dim() > 0;

    std::vector<LoadedPiece> pieces;
    for (const ManifestEntry& e : manifest) {
        if (e.split != "train") continue;
        pieces.push_back(load_piece(e));
        if (!pieces.back().has_gt)
            throw ValidationError("training needs ground truth for " + e.name);
    }
    if (pieces.empty()) throw ValidationError("train_all: no training pieces");

    std::vector<TrainWindow> wins;
    std::vector<const MotionTrack*> gt_left, gt_right;
    for (const LoadedPiece& piece : pieces) {
        gt_left.push_back(&piece.gt_full[0]);
        gt_right.push_back(&piece.gt_full[1]);
        MidiFeatureTrack features;
        if (use_midi) features = midi_features(piece.notes, piece.grid, config.midi_features);
        const WindowData piece_data =
            slice_window(piece.raster, Window{0, piece.grid.frame_count, piece.grid.frame_count});
        MotionTrack s1_full[2];
        for (int h = 0; h < 2; ++h) {
            s1_full[h] = synthesize_baseline(piece_data, static_cast<Hand>(h), prior.position,
                                             geom, config.baseline);
        }
        for (const Window& window : make_windows(piece.grid.frame_count)) {
            TrainWindow tw;
            tw.data = slice_window(piece.raster, window);
            if (use_midi) tw.midi_feats = features.rows(window.start, tw.data.frames);
            for (int h = 0; h < 2; ++h) {
                const Hand hand = static_cast<Hand>(h);
                tw.fing_feats[h] = fingering_features(tw.data, hand, geom);
                tw.s1[h] = s1_full[h].slice(window.start, tw.data.frames);
                const MotionTrack full = piece.gt_full[h].slice(window.start, tw.data.frames);
                tw.gt_full[h] = full;
                tw.gt_tips[h] = tips_from_full(full);
                tw.gt_wrist[h] = wrist_from_full(full);
                tw.cur_tips[h] = tw.s1[h];
            }
            wins.push_back(std::move(tw));
        }
    }

    const HandGraph graph = build_hand_graph();
    models.bones = bone_table_from_tracks(gt_left, gt_right, graph);
    const double fps = 60000.0 / 1001.0;

    const RefineNet net1 = make_refine1_net(config);
    const RefineNet net2 = make_refine2_net(config);
    const SmootherNet smoother = make_smoother_net(config);
    const WristNet wristnet = make_wrist_net(config);
    const StgcnUNet stgcn = make_stgcn_net(config);
    const PoseRefineNet posenet = make_pose_refine_net(config);

    TrainConfig tc;
    tc.adam.lr = config.training.lr;
    const bool need_after_s2 = config.training.steps_smoother > 0 ||
                               config.training.steps_wrist > 0 ||
                               config.training.steps_stage4 > 0 ||
                               config.training.steps_pose_refine > 0;
    const bool need_after_s23 = config.training.steps_wrist > 0 ||
                                config.training.steps_stage4 > 0 ||
                                config.training.steps_pose_refine > 0;
    const bool need_after_s3 = config.training.steps_stage4 > 0 ||
                               config.training.steps_pose_refine > 0;
    const bool need_pose_out = config.training.steps_pose_refine > 0;

    // ---- stage 2.1 and 2.2: cascaded fingertip refiners ----
    for (int stage = 0; stage < 2; ++stage) {
        const RefineNet& net = stage == 0 ? net1 : net2;
        const bool midi_stage = stage == 1 && use_midi;
        for (int h = 0; h < 2; ++h) {
            const Hand hand = static_cast<Hand>(h);
            (void)hand;
            auto build = [&, h](Tape<float>& tape, const ParamsView<float>& view, RngState& rng,
                                int) -> Val<float> {
                const TrainWindow& tw = wins[rng.uniform_index(wins.size())];
                const int T = tw.data.frames;
                const int crop = std::min(config.training.crop_stage2, T);
                const int start = T > crop ? static_cast<int>(rng.uniform_index(
                                                 static_cast<uint64_t>(T - crop + 1)))
                                           : 0;
                Tensor input = crop_rows(track_tensor(tw.cur_tips[h], true), start, crop);
                Tensor fing = crop_rows(tw.fing_feats[h], start, crop);
                Tensor mask = crop_rows(geometric_mask_tensor(tw.data.press[h], T), start, crop);
                Val<float> midi{};
                if (midi_stage)
                    midi = tape.constant(crop_rows(tw.midi_feats, start, crop));
                Val<float> refined = refine_forward(tape, view, net, tape.constant(input),
                                                    tape.constant(fing), midi, mask,
                                                    config.clamps.fingertip_mm, config.mask_y);
                Val<float> pred = reshape(refined, {crop, kFingersPerHand, 3});
                Tensor gt = crop_rows(track_tensor(tw.gt_tips[h], false), start, crop);
                return refine_loss(tape, pred, tape.constant(gt), config.lambda_pos,
                                   config.lambda_vel, fps);
            };
            TrainConfig stage_tc = tc;
            stage_tc.steps = config.training.steps_stage2;
            stage_tc.seed = config.seed + 100 + static_cast<uint64_t>(stage) * 10 + static_cast<uint64_t>(h);
            ParamStore& store = stage == 0 ? models.refine1[h] : models.refine2[h];
            const TrainResult res = train_model(store, build, stage_tc);
            summary.loss_curves[std::string("stage2.") + (stage == 0 ? "1" : "2") + "/" +
                                (h == 0 ? "L" : "R")] = res.losses;
        }
        // cascade: push every window through the freshly trained stage
        if (stage == 1 && !need_after_s2) break;
        for (TrainWindow& tw : wins) {
            MidiFeatureTrack mf;
            if (midi_stage) {
                mf.frames = tw.data.frames;
                mf.dim = tw.midi_feats.shape[1];
                mf.features = tw.midi_feats;
            }
            for (int h = 0; h < 2; ++h) {
                tw.cur_tips[h] = refine_stage(
                    tw.cur_tips[h], tw.data, static_cast<Hand>(h),
                    stage == 0 ? models.refine1[h] : models.refine2[h], net, geom,
                    midi_stage ? &mf : nullptr, config.clamps.fingertip_mm, config.mask_y);
            }
        }
    }

    // ---- stage 2.3: smoother trained to denoise jittered ground truth ----
    if (config.training.steps_smoother > 0)
    for (int h = 0; h < 2; ++h) {
        auto build = [&, h](Tape<float>& tape, const ParamsView<float>& view, RngState& rng,
                            int) -> Val<float> {
            const TrainWindow& tw = wins[rng.uniform_index(wins.size())];
            const int T = tw.data.frames;
            const int crop = std::min(config.training.crop_stage2, T);
            const int start = T > crop ? static_cast<int>(rng.uniform_index(
                                             static_cast<uint64_t>(T - crop + 1)))
                                       : 0;
            Tensor gt = crop_rows(track_tensor(tw.gt_tips[h], true), start, crop);
            Tensor noisy = gt;
            for (float& v : noisy.data)
                v += static_cast<float>(rng.normal() * config.training.smoother_jitter_mm);
            Val<float> x = tape.constant(noisy);
            Val<float> res = smoother.net().apply(view, x, Val<float>{});
            Val<float> pred = reshape(add(x, res), {crop, kFingersPerHand, 3});
            Val<float> target = reshape(tape.constant(gt), {crop, kFingersPerHand, 3});
            return refine_loss(tape, pred, target, config.lambda_pos, config.lambda_vel, fps);
        };
        TrainConfig stage_tc = tc;
        stage_tc.steps = config.training.steps_smoother;
        stage_tc.seed = config.seed + 130 + static_cast<uint64_t>(h);
        const TrainResult res = train_model(models.smoother[h], build, stage_tc);
        summary.loss_curves[std::string("stage2.3/") + (h == 0 ? "L" : "R")] = res.losses;
    }
    if (need_after_s23)
    for (TrainWindow& tw : wins) {
        for (int h = 0; h < 2; ++h) {
            tw.cur_tips[h] = smooth_trajectory(
                tw.cur_tips[h], config.mask_y ? &tw.data.press[h] : nullptr, config.smooth_radius,
                config.use_learned_smoother ? &models.smoother[h] : nullptr,
                config.use_learned_smoother ? &smoother : nullptr);
        }
    }

    // ---- stage 3: wrist ----
    if (config.training.steps_wrist > 0)
    for (int h = 0; h < 2; ++h) {
        const Hand hand = static_cast<Hand>(h);
        std::vector<Tensor> bases, feats;
        for (TrainWindow& tw : wins) {
            bases.push_back(track_tensor(base_wrist(tw.cur_tips[h], tw.data, hand, prior.wrist), true));
            feats.push_back(wrist_features(tw.data, hand, geom));
        }
        auto build = [&, h](Tape<float>& tape, const ParamsView<float>& view, RngState& rng,
                            int) -> Val<float> {
            const size_t wi = rng.uniform_index(wins.size());
            const TrainWindow& tw = wins[wi];
            const int T = tw.data.frames;
            const int crop = std::min(config.training.crop_stage2, T);
            const int start = T > crop ? static_cast<int>(rng.uniform_index(
                                             static_cast<uint64_t>(T - crop + 1)))
                                       : 0;
            Val<float> base = tape.constant(crop_rows(bases[wi], start, crop));
            Val<float> x = concat_axis<float>(
                {base, tape.constant(crop_rows(feats[wi], start, crop))}, 1);
            Val<float> cond{};
            if (use_midi) cond = tape.constant(crop_rows(tw.midi_feats, start, crop));
            Val<float> residual = wristnet.net().apply(view, x, cond);
            Val<float> pred = reshape(add(base, clamp_pm(residual, config.clamps.wrist_mm)),
                                      {crop, 1, 3});
            Tensor gt = crop_rows(track_tensor(tw.gt_wrist[h], false), start, crop);
            return refine_loss(tape, pred, tape.constant(gt), config.lambda_pos, config.lambda_vel,
                               fps);
        };
        TrainConfig stage_tc = tc;
        stage_tc.steps = config.training.steps_wrist;
        stage_tc.seed = config.seed + 140 + static_cast<uint64_t>(h);
        const TrainResult res = train_model(models.wrist[h], build, stage_tc);
        summary.loss_curves[std::string("stage3/") + (h == 0 ? "L" : "R")] = res.losses;
    }
    if (need_after_s3)
    for (TrainWindow& tw : wins) {
        for (int h = 0; h < 2; ++h) {
            MidiFeatureTrack mf;
            if (use_midi) {
                mf.frames = tw.data.frames;
                mf.dim = tw.midi_feats.shape[1];
                mf.features = tw.midi_feats;
            }
            const MotionTrack base = base_wrist(tw.cur_tips[h], tw.data, static_cast<Hand>(h), prior.wrist);
            tw.wrist_out[h] = refine_wrist(base, tw.data, static_cast<Hand>(h), models.wrist[h],
                                           wristnet, geom, use_midi ? &mf : nullptr,
                                           config.clamps.wrist_mm, config.smooth_radius, nullptr,
                                           nullptr);
        }
    }

    // ---- stage 4: STGCN pose ----
    Tensor intermediate_mask({kJointsPerHand, 3});
    for (int f = 0; f < kFingersPerHand; ++f)
        for (int part = 0; part < 3; ++part)
            for (int c = 0; c < 3; ++c)
                intermediate_mask.data[static_cast<size_t>(finger_joint(f, part) * 3 + c)] = 1.0f;

    if (config.training.steps_stage4 > 0)
    for (int h = 0; h < 2; ++h) {
        const Hand hand = static_cast<Hand>(h);
        std::vector<MotionTrack> rigs;
        std::vector<Tensor> film_feats;
        for (TrainWindow& tw : wins) {
            rigs.push_back(rig_initialize(tw.wrist_out[h], tw.cur_tips[h], RigConfig{}));
            film_feats.push_back(pose_film_features(tw.data, geom));
        }
        auto build = [&, h](Tape<float>& tape, const ParamsView<float>& view, RngState& rng,
                            int) -> Val<float> {
            const size_t wi = rng.uniform_index(wins.size());
            const TrainWindow& tw = wins[wi];
            const int T = tw.data.frames;
            const int crop = std::min(config.training.crop_stage4, T);
            const int start = T > crop ? static_cast<int>(rng.uniform_index(
                                             static_cast<uint64_t>(T - crop + 1)))
                                       : 0;
            const MotionTrack rig_crop = rigs[wi].slice(start, crop);
            Val<float> x = tape.constant(crop_rows(pose_input_features(rigs[wi]), start, crop));
            Val<float> cond = tape.constant(crop_rows(film_feats[wi], start, crop));
            Val<float> residual = stgcn.apply(view, tape, x, cond, graph);
            Val<float> masked = mul(residual, tape.constant(Tensor({1, kJointsPerHand, 3},
                                                                   intermediate_mask.data)));
            Val<float> pose = add(tape.constant(track_tensor(rig_crop, false)), masked);
            Tensor gt = crop_rows(track_tensor(tw.gt_full[h], false), start, crop);
            return pose_loss_graph(tape, pose, tape.constant(gt), graph, models.bones, hand,
                                   config.pose_weights, config.bio_limits);
        };
        TrainConfig stage_tc = tc;
        stage_tc.steps = config.training.steps_stage4;
        stage_tc.seed = config.seed + 150 + static_cast<uint64_t>(h);
        const TrainResult res = train_model(models.stgcn[h], build, stage_tc);
        summary.loss_curves[std::string("stage4/") + (h == 0 ? "L" : "R")] = res.losses;
    }
    if (need_pose_out)
    for (TrainWindow& tw : wins) {
        for (int h = 0; h < 2; ++h) {
            tw.pose_out[h] = stgcn_synthesize(tw.wrist_out[h], tw.cur_tips[h], tw.data,
                                              models.stgcn[h], stgcn, graph, geom);
        }
    }

    // ---- stage 4 refinement: full-skeleton residual on fingering + MIDI ----
    if (config.training.steps_pose_refine > 0)
    for (int h = 0; h < 2; ++h) {
        const Hand hand = static_cast<Hand>(h);
        std::vector<Tensor> refine_conds;
        for (TrainWindow& tw : wins) {
            Tensor cond = pose_film_features(tw.data, geom);
            if (use_midi) {
                Tensor joined({cond.shape[0], cond.shape[1] + tw.midi_feats.shape[1]});
                for (int64_t t = 0; t < cond.shape[0]; ++t) {
                    std::copy_n(cond.data.data() + t * cond.shape[1], cond.shape[1],
                                joined.data.data() + t * joined.shape[1]);
                    std::copy_n(tw.midi_feats.data.data() + t * tw.midi_feats.shape[1],
                                tw.midi_feats.shape[1],
                                joined.data.data() + t * joined.shape[1] + cond.shape[1]);
                }
                cond = std::move(joined);
            }
            refine_conds.push_back(std::move(cond));
        }
        auto build = [&, h](Tape<float>& tape, const ParamsView<float>& view, RngState& rng,
                            int) -> Val<float> {
            const size_t wi = rng.uniform_index(wins.size());
            const TrainWindow& tw = wins[wi];
            const int T = tw.data.frames;
            const int crop = std::min(config.training.crop_stage4, T);
            const int start = T > crop ? static_cast<int>(rng.uniform_index(
                                             static_cast<uint64_t>(T - crop + 1)))
                                       : 0;
            const MotionTrack pose_crop = tw.pose_out[h].slice(start, crop);
            Val<float> x = tape.constant(crop_rows(pose_input_features(tw.pose_out[h]), start, crop));
            Val<float> cond = tape.constant(crop_rows(refine_conds[wi], start, crop));
            Val<float> residual = posenet.apply(view, tape, x, cond, graph);
            Val<float> pose = add(tape.constant(track_tensor(pose_crop, false)), residual);
            Tensor gt = crop_rows(track_tensor(tw.gt_full[h], false), start, crop);
            Val<float> loss = pose_loss_graph(tape, pose, tape.constant(gt), graph, models.bones,
                                              hand, config.pose_weights, config.bio_limits);
            // keep the final correction small; the stage adds variation, not repositioning
            Val<float> res_norm = mean_all(sqrt0(sum_lastdim(mul(residual, residual), false)));
            return add(loss, scale(res_norm, config.pose_refine.residual_penalty));
        };
        TrainConfig stage_tc = tc;
        stage_tc.steps = config.training.steps_pose_refine;
        stage_tc.seed = config.seed + 160 + static_cast<uint64_t>(h);
        const TrainResult res = train_model(models.pose_refine[h], build, stage_tc);
        summary.loss_curves[std::string("stage4r/") + (h == 0 ? "L" : "R")] = res.losses;
    }

    return summary;
}

PieceEvaluation evaluate_piece(const LoadedPiece& piece, const PieceOutputs& outputs,
                               const PipelineConfig& config, const KeyboardGeometry& geom) {
    PieceEvaluation ev;
    ev.name = piece.name;
    ev.split = piece.split;

    const StageTap tap = tap_from_string(config.tap);
    std::vector<PressEvent> events;
    for (int h = 0; h < 2; ++h) {
        const MotionTrack tips = tap_tips(outputs, std::min(tap, outputs.through), static_cast<Hand>(h));
        std::vector<PressEvent> hand_events =
            detect_presses(tips, static_cast<Hand>(h), geom, config.evaluator);
        events.insert(events.end(), hand_events.begin(), hand_events.end());
    }
    ev.contact = config.evaluator.frame_level
                     ? frame_level_f1(events, piece.notes, piece.grid)
                     : key_contact_f1(events, piece.notes, piece.grid, config.evaluator.onset_tol_ms);

    if (piece.has_gt && outputs.through >= StageTap::Final) {
        double mpjpe = 0.0, tips_mm = 0.0;
        double an = 0.0, at = 0.0, aw = 0.0;
        int acount = 0;
        for (int h = 0; h < 2; ++h) {
            const PositionMetrics pm = position_metrics(outputs.pose_final[h], piece.gt_full[h]);
            mpjpe += pm.mpjpe_mm;
            tips_mm += pm.fingertip_mm;
            ev.mpjpe_hand_mm[h] = pm.mpjpe_mm;
            const MotionTrack gt_tips = tips_from_full(piece.gt_full[h]);
            const MotionTrack gt_wrist = wrist_from_full(piece.gt_full[h]);
            const auto full = accel_ratio(outputs.pose_final[h], piece.gt_full[h]);
            const auto tips = accel_ratio(tips_from_full(outputs.pose_final[h]), gt_tips);
            const auto wrist = accel_ratio(wrist_from_full(outputs.pose_final[h]), gt_wrist);
            ev.accel_full_hand[h] = full;
            ev.accel_tips_hand[h] = tips;
            ev.accel_wrist_hand[h] = wrist;
            if (full && tips && wrist) {
                an += *full;
                at += *tips;
                aw += *wrist;
                ++acount;
            }
        }
        ev.mpjpe_mm = mpjpe / 2.0;
        ev.fingertip_mm = tips_mm / 2.0;
        ev.has_position_metrics = true;
        if (acount == 2) {
            ev.accel_full = an / 2.0;
            ev.accel_tips = at / 2.0;
            ev.accel_wrist = aw / 2.0;
        }
    }
    return ev;
}

std::string evaluation_report_json(const std::vector<PieceEvaluation>& evals,
                                   const PipelineConfig& config) {
    nlohmann::json pieces = nlohmann::json::array();
    double f1_sum = 0.0, prec_sum = 0.0, rec_sum = 0.0, mpjpe_sum = 0.0, tip_sum = 0.0;
    int pos_count = 0;
    int matched = 0, predicted = 0, ground_truth = 0;
    for (const PieceEvaluation& ev : evals) {
        nlohmann::json p;
        p["name"] = ev.name;
        p["split"] = ev.split;
        p["precision"] = ev.contact.precision;
        p["recall"] = ev.contact.recall;
        p["f1"] = ev.contact.f1;
        p["matched"] = ev.contact.matched;
        p["predicted"] = ev.contact.predicted;
        p["ground_truth"] = ev.contact.ground_truth;
        if (ev.has_position_metrics) {
            p["mpjpe_mm"] = ev.mpjpe_mm;
            p["fingertip_mm"] = ev.fingertip_mm;
            if (ev.accel_full) p["accel_full"] = *ev.accel_full;
            if (ev.accel_tips) p["accel_fingertip"] = *ev.accel_tips;
            if (ev.accel_wrist) p["accel_wrist"] = *ev.accel_wrist;
            for (int h = 0; h < 2; ++h) {
                nlohmann::json hand;
                hand["mpjpe_mm"] = ev.mpjpe_hand_mm[h];
                if (ev.accel_full_hand[h]) hand["accel_full"] = *ev.accel_full_hand[h];
                if (ev.accel_tips_hand[h]) hand["accel_fingertip"] = *ev.accel_tips_hand[h];
                if (ev.accel_wrist_hand[h]) hand["accel_wrist"] = *ev.accel_wrist_hand[h];
                p[h == 0 ? "left" : "right"] = std::move(hand);
            }
            mpjpe_sum += ev.mpjpe_mm;
            tip_sum += ev.fingertip_mm;
            ++pos_count;
        }
        f1_sum += ev.contact.f1;
        prec_sum += ev.contact.precision;
        rec_sum += ev.contact.recall;
        matched += ev.contact.matched;
        predicted += ev.contact.predicted;
        ground_truth += ev.contact.ground_truth;
        pieces.push_back(std::move(p));
    }
    nlohmann::json j;
    j["pieces"] = std::move(pieces);
    const double n = evals.empty() ? 1.0 : static_cast<double>(evals.size());
    j["aggregate"] = {
        {"mean_f1", f1_sum / n},
        {"mean_precision", prec_sum / n},
        {"mean_recall", rec_sum / n},
        {"pooled_precision", predicted > 0 ? static_cast<double>(matched) / predicted : 0.0},
        {"pooled_recall", ground_truth > 0 ? static_cast<double>(matched) / ground_truth : 0.0},
    };
    if (pos_count > 0) {
        j["aggregate"]["mean_mpjpe_mm"] = mpjpe_sum / pos_count;
        j["aggregate"]["mean_fingertip_mm"] = tip_sum / pos_count;
    }
    j["config"] = nlohmann::json::parse(config_to_json(config));
    return j.dump(2);
}

}  // namespace tipsynth
