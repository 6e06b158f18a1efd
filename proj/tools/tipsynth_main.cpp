#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tipsynth/gradcheck_battery.hpp"
#include "tipsynth/pipeline.hpp"

using namespace tipsynth;

namespace {

PipelineConfig load_cli_config(const std::string& config_path, const std::string& keyboard,
                               bool no_y_mask, const std::string& conditioning,
                               const std::string& fusion) {
    PipelineConfig config = load_config(config_path);
    if (!keyboard.empty()) config.keyboard_path = keyboard;
    if (no_y_mask) config.mask_y = false;
    if (!conditioning.empty()) config.conditioning = conditioning;
    if (!fusion.empty()) config.fusion = fusion;
    return config;
}

LoadedPiece ingest(const std::string& midi_path, const std::string& fingering_path,
                   const std::string& gt_left, const std::string& gt_right) {
    LoadedPiece piece;
    piece.name = std::filesystem::path(midi_path).stem().string();
    const MidiParseResult midi = parse_midi_file(midi_path);
    for (const std::string& w : midi.warnings) std::cerr << "warning: " << w << "\n";
    piece.notes = midi.notes;

    double end_time = 1.0;
    for (const NoteEvent& n : piece.notes) end_time = std::max(end_time, n.onset + n.duration);
    int frames = FrameGrid::frames_covering(end_time + 0.5);

    if (!gt_left.empty() && !gt_right.empty()) {
        piece.gt_full[0] = load_trajectory(gt_left).track;
        piece.gt_full[1] = load_trajectory(gt_right).track;
        piece.has_gt = true;
        frames = piece.gt_full[0].frames;  // ground truth owns the timeline
    }
    if (!fingering_path.empty()) {
        piece.fingering = parse_fingering_file(fingering_path, frames);
        frames = std::max(frames, piece.fingering.frames());
    }
    piece.grid.frame_count = frames;
    if (piece.fingering.frames() < frames) {
        FingeringGrid padded(frames);
        for (int t = 0; t < piece.fingering.frames(); ++t)
            for (int k = 0; k < kNumKeys; ++k)
                if (piece.fingering.at(t, k)) padded.set(t, k, piece.fingering.at(t, k));
        piece.fingering = std::move(padded);
    }
    piece.raster = rasterize(piece.notes, piece.grid, piece.fingering);
    return piece;
}

int run_gen_corpus(const SyntheticCorpusSpec& spec, const std::string& out_dir) {
    const KeyboardGeometry geom = build_standard_keyboard();
    const Corpus corpus = generate_synthetic_corpus(spec, geom);
    save_corpus(out_dir, corpus);
    int train = 0, val = 0, test = 0;
    for (const CorpusPiece& p : corpus.pieces) {
        if (p.split == "train") ++train;
        else if (p.split == "val") ++val;
        else ++test;
    }
    std::cout << "wrote " << corpus.pieces.size() << " pieces to " << out_dir << " (train " << train
              << ", val " << val << ", test " << test << ")\n";
    return 0;
}

int run_gradcheck() {
    bool ok = true;
    for (const GradCheckRow& row : gradcheck_battery()) {
        const bool pass = row.passed();
        ok = ok && pass;
        std::cout << (pass ? "[PASS] " : "[FAIL] ") << row.name << ": max rel err "
                  << row.report.max_rel_err << " (tol " << row.tolerance << ", "
                  << row.report.checked << " params, worst " << row.report.worst_param << ")\n";
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tipsynth: hierarchical piano hand motion synthesis"};
    app.require_subcommand(1);

    std::string config_path, keyboard_path, conditioning, fusion;
    bool no_y_mask = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config JSON");
        cmd->add_option("--keyboard", keyboard_path, "keyboard geometry JSON override");
        cmd->add_flag("--no-y-mask", no_y_mask, "disable Y/Z geometric masking (ablation)");
        cmd->add_option("--conditioning", conditioning, "raw|none MIDI conditioning (ablation)");
        cmd->add_option("--fusion", fusion, "film|concat conditioning fusion (ablation)");
    };

    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    SyntheticCorpusSpec corpus_spec;
    std::string out_dir = "corpus";
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--pieces", corpus_spec.pieces, "piece count");
    gen->add_option("--seed", corpus_spec.seed, "corpus seed");
    gen->add_option("--min-seconds", corpus_spec.min_seconds, "min duration");
    gen->add_option("--max-seconds", corpus_spec.max_seconds, "max duration");
    gen->add_option("--jitter", corpus_spec.noise.jitter_mm, "capture jitter sigma (mm)");
    gen->add_option("--dropout", corpus_spec.noise.dropout_rate, "capture dropout rate");
    gen->add_option("--chord-prob", corpus_spec.chord_prob, "chord probability");

    auto* bp = app.add_subcommand("build-priors", "build fingertip + wrist priors");
    std::string manifest_path, prior_out = "prior.json", split = "train";
    int64_t min_count = 10;
    bp->add_option("--train", manifest_path, "corpus manifest.json")->required();
    bp->add_option("--out", prior_out, "output prior path");
    bp->add_option("--split", split, "split to read");
    bp->add_option("--min-count", min_count, "minimum observations per slot");
    bp->add_option("--keyboard", keyboard_path, "keyboard geometry JSON override");

    auto* tr = app.add_subcommand("train", "train stage models");
    std::string train_manifest, stage = "all", models_dir, prior_path;
    tr->add_option("--manifest", train_manifest, "corpus manifest.json")->required();
    tr->add_option("--stage", stage, "2.1|2.2|2.3|3|4|4r|all");
    tr->add_option("--models-dir", models_dir, "model output directory");
    tr->add_option("--prior", prior_path, "prior JSON path");
    add_common(tr);

    auto* sy = app.add_subcommand("synthesize", "run the pipeline on MIDI + fingering");
    std::string midi_path, fingering_path, through = "final", tap_name, dump_raster;
    std::string syn_out = "out", syn_models, syn_prior, gt_left, gt_right, report_path;
    sy->add_option("--midi", midi_path, "input .mid")->required();
    sy->add_option("--fingering", fingering_path, "fingering CSV");
    sy->add_option("--out-dir", syn_out, "output directory");
    sy->add_option("--through-stage", through, "1|2.1|2.2|2.3|3|4|final");
    sy->add_option("--tap", tap_name, "stage used for contact metrics");
    sy->add_option("--models-dir", syn_models, "trained models directory");
    sy->add_option("--prior", syn_prior, "prior JSON path");
    sy->add_option("--dump-raster", dump_raster, "write rasterized inputs as JSON");
    sy->add_option("--gt-left", gt_left, "ground-truth left trajectory (enables metrics)");
    sy->add_option("--gt-right", gt_right, "ground-truth right trajectory");
    sy->add_option("--report", report_path, "evaluation report path");
    add_common(sy);

    auto* ev = app.add_subcommand("evaluate", "evaluate trajectory files against MIDI");
    std::vector<std::string> pred_paths;
    std::string ev_midi, ev_fingering, ev_gestures, ev_report = "report.json";
    std::vector<std::string> ev_gt;
    bool frame_level = false;
    ev->add_option("--pred", pred_paths, "predicted trajectory file(s)")->required();
    ev->add_option("--midi", ev_midi, "reference .mid")->required();
    ev->add_option("--fingering", ev_fingering, "fingering CSV (diagnostics)");
    ev->add_option("--gestures", ev_gestures, "gesture boundary CSV: per-segment breakdown");
    ev->add_option("--gt", ev_gt, "ground-truth trajectory file(s) matching --pred order");
    ev->add_option("--report", ev_report, "report output path");
    ev->add_flag("--frame-level", frame_level, "frame-level F1 instead of event matching");
    ev->add_option("--config", config_path, "pipeline config JSON");
    ev->add_option("--keyboard", keyboard_path, "keyboard geometry JSON override");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks for all learned blocks");
    (void)gc;

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_corpus(corpus_spec, out_dir);

        if (bp->parsed()) {
            PipelineConfig config = load_cli_config(config_path, keyboard_path, false, "", "");
            const KeyboardGeometry geom = load_keyboard(config);
            const std::vector<ManifestEntry> manifest = load_manifest(manifest_path);
            PriorBuildStats stats;
            const PriorBundle bundle =
                build_priors_from_manifest(manifest, split, geom, min_count, &stats);
            save_prior(prior_out, bundle);
            const std::vector<std::string> violations = validate_prior(bundle.position, geom);
            std::cout << "prior written to " << prior_out << " ("
                      << bundle.position.populated_count() << "/880 slots";
            for (const auto& [s, frames] : stats.frames_read)
                std::cout << ", " << s << " frames read: " << frames;
            std::cout << ")\n";
            if (!violations.empty()) {
                std::cout << violations.size() << " entries fail the contact check:\n";
                for (size_t i = 0; i < std::min<size_t>(violations.size(), 10); ++i)
                    std::cout << "  " << violations[i] << "\n";
            }
            return 0;
        }

        if (tr->parsed()) {
            PipelineConfig config =
                load_cli_config(config_path, keyboard_path, no_y_mask, conditioning, fusion);
            if (!models_dir.empty()) config.models_dir = models_dir;
            if (!prior_path.empty()) config.prior_path = prior_path;
            const KeyboardGeometry geom = load_keyboard(config);
            const PriorBundle prior = load_prior(config.prior_path);
            const std::vector<ManifestEntry> manifest = load_manifest(train_manifest);

            StageModels models = stage == "all" ? init_models(config)
                                                : load_models(config, config.models_dir);
            PipelineConfig run_config = config;
            if (stage != "all") {
                TrainingConfig zero = config.training;
                zero.steps_stage2 = 0;
                zero.steps_smoother = 0;
                zero.steps_wrist = 0;
                zero.steps_stage4 = 0;
                zero.steps_pose_refine = 0;
                if (stage == "2.1" || stage == "2.2") zero.steps_stage2 = config.training.steps_stage2;
                else if (stage == "2.3") zero.steps_smoother = config.training.steps_smoother;
                else if (stage == "3") zero.steps_wrist = config.training.steps_wrist;
                else if (stage == "4") zero.steps_stage4 = config.training.steps_stage4;
                else if (stage == "4r") zero.steps_pose_refine = config.training.steps_pose_refine;
                else throw ConfigError("unknown stage: " + stage);
                run_config.training = zero;
            }
            const TrainSummary summary = train_all(run_config, manifest, geom, prior, models);
            save_models(models, config.models_dir);
            for (const auto& [name, losses] : summary.loss_curves) {
                if (losses.empty()) continue;
                std::cout << name << ": " << losses.front() << " -> " << losses.back() << " ("
                          << losses.size() << " steps)\n";
            }
            std::cout << "models saved to " << config.models_dir << "\n";
            return 0;
        }

        if (sy->parsed()) {
            PipelineConfig config =
                load_cli_config(config_path, keyboard_path, no_y_mask, conditioning, fusion);
            if (!syn_models.empty()) config.models_dir = syn_models;
            if (!syn_prior.empty()) config.prior_path = syn_prior;
            if (!tap_name.empty()) config.tap = tap_name;
            const KeyboardGeometry geom = load_keyboard(config);
            const PriorBundle prior = load_prior(config.prior_path);
            const StageTap through_tap = tap_from_string(through);

            LoadedPiece piece = ingest(midi_path, fingering_path, gt_left, gt_right);
            if (!dump_raster.empty()) {
                std::ofstream f(dump_raster);
                f << raster_to_json(piece.raster, piece.grid);
            }

            StageModels models;
            const bool need_models = through_tap >= StageTap::S21;
            if (need_models) models = load_models(config, config.models_dir);
            const PieceOutputs outputs =
                run_piece(piece, config, geom, prior, need_models ? &models : nullptr, through_tap);

            std::filesystem::create_directories(syn_out);
            auto dump = [&](const MotionTrack& track, Hand hand, const char* tag) {
                if (track.frames == 0) return;
                const std::string path =
                    syn_out + "/" + piece.name + "_" + tag + "_" + hand_name(hand) + ".traj";
                save_trajectory(path, track, hand, tag, piece.grid);
            };
            for (int h = 0; h < 2; ++h) {
                const Hand hand = static_cast<Hand>(h);
                dump(outputs.tips_s1[h], hand, "S1");
                dump(outputs.tips_s21[h], hand, "S2.1");
                dump(outputs.tips_s22[h], hand, "S2.2");
                dump(outputs.tips_s23[h], hand, "S2.3");
                dump(outputs.wrist_s3[h], hand, "S3");
                dump(outputs.pose_s4[h], hand, "S4");
                dump(outputs.pose_final[h], hand, "FINAL");
            }
            std::cout << "stage outputs written to " << syn_out << " (through "
                      << tap_tag(through_tap) << ")\n";

            if (!report_path.empty() || piece.has_gt) {
                const PieceEvaluation evaluation = evaluate_piece(piece, outputs, config, geom);
                const std::string report = evaluation_report_json({evaluation}, config);
                const std::string path =
                    report_path.empty() ? syn_out + "/report.json" : report_path;
                std::ofstream f(path);
                f << report;
                std::cout << "report: " << path << " (f1 " << evaluation.contact.f1 << ")\n";
            }
            return 0;
        }

        if (ev->parsed()) {
            PipelineConfig config = load_cli_config(config_path, keyboard_path, false, "", "");
            config.evaluator.frame_level = frame_level;
            const KeyboardGeometry geom = load_keyboard(config);
            LoadedPiece piece = ingest(ev_midi, ev_fingering, "", "");

            std::vector<PressEvent> events;
            std::vector<TrajectoryFile> preds;
            for (const std::string& p : pred_paths) preds.push_back(load_trajectory(p));
            for (const TrajectoryFile& tf : preds) {
                MotionTrack tips = tf.track;
                if (tf.track.joints == kJointsPerHand) {
                    MotionTrack only_tips(tf.track.frames, kFingersPerHand);
                    for (int t = 0; t < tf.track.frames; ++t)
                        for (int f = 0; f < kFingersPerHand; ++f)
                            only_tips.set_raw(t, f,
                                              tf.track.data.data() + tf.track.offset(t, tip_joint(f)));
                    tips = only_tips;
                }
                const std::vector<PressEvent> hand_events =
                    detect_presses(tips, tf.hand, geom, config.evaluator);
                events.insert(events.end(), hand_events.begin(), hand_events.end());
            }
            const F1Scores scores = frame_level
                                        ? frame_level_f1(events, piece.notes, piece.grid)
                                        : key_contact_f1(events, piece.notes, piece.grid,
                                                         config.evaluator.onset_tol_ms);

            nlohmann::json j;
            j["precision"] = scores.precision;
            j["recall"] = scores.recall;
            j["f1"] = scores.f1;
            j["matched"] = scores.matched;
            j["predicted"] = scores.predicted;
            j["ground_truth"] = scores.ground_truth;
            if (ev_gt.size() == preds.size() && !ev_gt.empty()) {
                double mpjpe = 0.0, tipmm = 0.0;
                for (size_t i = 0; i < preds.size(); ++i) {
                    const TrajectoryFile gt = load_trajectory(ev_gt[i]);
                    const PositionMetrics pm = position_metrics(preds[i].track, gt.track);
                    mpjpe += pm.mpjpe_mm;
                    tipmm += pm.fingertip_mm;
                    const auto ar = accel_ratio(preds[i].track, gt.track);
                    if (ar) j["accel_ratio_" + std::string(hand_name(preds[i].hand))] = *ar;
                }
                j["mpjpe_mm"] = mpjpe / static_cast<double>(preds.size());
                j["fingertip_mm"] = tipmm / static_cast<double>(preds.size());
            }
            if (!ev_gestures.empty()) {
                std::ifstream gf(ev_gestures);
                if (!gf) throw ConfigError("cannot open gesture csv: " + ev_gestures);
                std::string text((std::istreambuf_iterator<char>(gf)),
                                 std::istreambuf_iterator<char>());
                nlohmann::json segments = nlohmann::json::array();
                for (const GestureBoundary& seg : parse_gesture_boundaries(text)) {
                    std::vector<PressEvent> seg_events;
                    for (const PressEvent& e : events) {
                        if (e.hand == seg.hand && e.start_frame >= seg.start_frame &&
                            e.start_frame <= seg.end_frame)
                            seg_events.push_back(e);
                    }
                    std::vector<NoteEvent> seg_notes;
                    for (const NoteEvent& n : piece.notes) {
                        const double start = piece.grid.frame_start(seg.start_frame);
                        const double end = piece.grid.frame_end(seg.end_frame);
                        if (n.onset >= start && n.onset < end) seg_notes.push_back(n);
                    }
                    const F1Scores seg_scores =
                        key_contact_f1(seg_events, seg_notes, piece.grid,
                                       config.evaluator.onset_tol_ms);
                    segments.push_back({{"start_frame", seg.start_frame},
                                        {"end_frame", seg.end_frame},
                                        {"hand", hand_name(seg.hand)},
                                        {"precision", seg_scores.precision},
                                        {"recall", seg_scores.recall},
                                        {"f1", seg_scores.f1},
                                        {"ground_truth", seg_scores.ground_truth}});
                }
                j["segments"] = std::move(segments);
            }
            j["config"] = nlohmann::json::parse(config_to_json(config));
            std::ofstream f(ev_report);
            f << j.dump(2);
            std::cout << "precision " << scores.precision << " recall " << scores.recall << " f1 "
                      << scores.f1 << " -> " << ev_report << "\n";
            return 0;
        }

        if (gc->parsed()) return run_gradcheck();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
