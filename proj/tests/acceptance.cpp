// End-to-end acceptance suite. Each numbered check prints one PASS/FAIL line;
// the binary exits nonzero if any check fails. Runs against freshly generated
// synthetic corpora under a scratch directory.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "tipsynth/gradcheck_battery.hpp"
#include "tipsynth/pipeline.hpp"

using namespace tipsynth;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << "criterion " << number << " (" << name
              << "): " << detail << "\n"
              << std::flush;
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Scratch {
    fs::path root;
    Scratch() {
        root = fs::temp_directory_path() / "tipsynth_acceptance";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    std::string dir(const std::string& name) const {
        fs::create_directories(root / name);
        return (root / name).string();
    }
};

// ---------- criterion 1: prior recovery ----------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const Vec3 sigma{16.3, 11.4, 7.7};
    const KeyboardGeometry geom = build_standard_keyboard();
    const int n_per_slot = 1000;

    // one synthetic observation set per (hand, finger): every key slot gets
    // n_per_slot gaussian draws around its canonical contact point
    std::vector<FingeringGrid> grids;
    std::vector<MotionTrack> tracks;
    std::vector<PriorObservation> obs;
    grids.reserve(10);
    tracks.reserve(10);
    RngState rng(2024);
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            const int frames = kNumKeys * n_per_slot;
            FingeringGrid grid(frames);
            MotionTrack tips(frames, kFingersPerHand);
            for (int k = 0; k < kNumKeys; ++k) {
                const Vec3 mu = canonical_contact(static_cast<Hand>(h), f, k, geom);
                for (int i = 0; i < n_per_slot; ++i) {
                    const int t = k * n_per_slot + i;
                    grid.set(t, k, static_cast<uint8_t>(h == 0 ? f + 1 : f + 6));
                    tips.set(t, f,
                             {mu.x + rng.normal() * sigma.x, mu.y + rng.normal() * sigma.y,
                              mu.z + rng.normal() * sigma.z});
                }
            }
            grids.push_back(std::move(grid));
            tracks.push_back(std::move(tips));
        }
    }
    for (size_t i = 0; i < grids.size(); ++i) {
        PriorObservation o;
        const int h = static_cast<int>(i) / kFingersPerHand;
        o.tips[h] = &tracks[i];
        o.fingering = &grids[i];
        obs.push_back(o);
    }
    const PositionPrior prior = build_position_prior(obs, 10);

    double worst_sigma_rel = 0.0;
    double worst_median_abs = 0.0;
    Vec3 mean_median_err{0, 0, 0};
    int slots = 0;
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int k = 0; k < kNumKeys; ++k) {
                const auto& e = prior.entry(static_cast<Hand>(h), f, k);
                if (!e.has_value() || e->count != n_per_slot) {
                    report(1, "prior recovery", false, "slot missing or short");
                    return;
                }
                const Vec3 mu = canonical_contact(static_cast<Hand>(h), f, k, geom);
                worst_sigma_rel = std::max({worst_sigma_rel,
                                            std::abs(e->stddev.x - sigma.x) / sigma.x,
                                            std::abs(e->stddev.y - sigma.y) / sigma.y,
                                            std::abs(e->stddev.z - sigma.z) / sigma.z});
                const Vec3 med_err{std::abs(e->p50.x - mu.x), std::abs(e->p50.y - mu.y),
                                   std::abs(e->p50.z - mu.z)};
                mean_median_err += med_err;
                worst_median_abs = std::max({worst_median_abs, med_err.x, med_err.y, med_err.z});
                ++slots;
            }
        }
    }
    mean_median_err = mean_median_err / slots;
    const double elapsed = seconds_since(t0);
    // per-slot 1 mm on the median is statistically unattainable at n=1000
    // (SE ~0.65 mm on the X axis); asserted as the mean over slots, with a
    // per-slot sanity cap -- see the project notes
    const bool pass = worst_sigma_rel < 0.10 && mean_median_err.x < 1.0 &&
                      mean_median_err.y < 1.0 && mean_median_err.z < 1.0 &&
                      worst_median_abs < 3.0 && elapsed < 10.0;
    std::ostringstream detail;
    detail << slots << " slots, worst sigma err " << worst_sigma_rel * 100.0 << "%, mean |median err| ("
           << mean_median_err.x << ", " << mean_median_err.y << ", " << mean_median_err.z
           << ") mm, worst " << worst_median_abs << " mm, " << elapsed << " s";
    report(1, "prior recovery", pass, detail.str());
}

// ---------- shared corpus/pipeline plumbing ----------

struct CorpusSetup {
    std::vector<ManifestEntry> manifest;
    PriorBundle prior;
    KeyboardGeometry geom = build_standard_keyboard();
};

CorpusSetup make_corpus(const std::string& dir, double jitter_mm, uint64_t seed) {
    SyntheticCorpusSpec spec;
    spec.pieces = 20;
    spec.min_seconds = 6.0;
    spec.max_seconds = 14.0;
    spec.seed = seed;
    spec.noise.jitter_mm = jitter_mm;
    CorpusSetup setup;
    const Corpus corpus = generate_synthetic_corpus(spec, setup.geom);
    setup.manifest = save_corpus(dir, corpus);
    setup.prior = build_priors_from_manifest(setup.manifest, "train", setup.geom, 10);
    return setup;
}

PipelineConfig acceptance_config(const std::string& prior_path, const std::string& models_dir) {
    PipelineConfig c;
    c.seed = 1;
    c.prior_path = prior_path;
    c.models_dir = models_dir;
    c.training.steps_stage2 = 120;
    c.training.steps_smoother = 80;
    c.training.steps_wrist = 80;
    c.training.steps_stage4 = 60;
    c.training.steps_pose_refine = 40;
    c.training.crop_stage2 = 240;
    c.training.crop_stage4 = 64;
    return c;
}

struct EvalSummary {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double mean_mpjpe = 0.0;
    double max_tip_residual = 0.0;
    double max_wrist_residual = 0.0;
    int pieces = 0;
};

EvalSummary evaluate_split(const CorpusSetup& setup, const PipelineConfig& config,
                           const StageModels* models, StageTap through, const std::string& split) {
    EvalSummary s;
    int matched = 0, predicted = 0, ground_truth = 0;
    for (const ManifestEntry& entry : setup.manifest) {
        if (entry.split != split) continue;
        const LoadedPiece piece = load_piece(entry);
        const PieceOutputs outputs = run_piece(piece, config, setup.geom, setup.prior, models, through);
        const PieceEvaluation ev = evaluate_piece(piece, outputs, config, setup.geom);
        matched += ev.contact.matched;
        predicted += ev.contact.predicted;
        ground_truth += ev.contact.ground_truth;
        if (ev.has_position_metrics) s.mean_mpjpe += ev.mpjpe_mm;
        s.max_tip_residual = std::max(s.max_tip_residual, outputs.max_tip_residual_mm);
        s.max_wrist_residual = std::max(s.max_wrist_residual, outputs.max_wrist_residual_mm);
        ++s.pieces;
    }
    s.recall = ground_truth > 0 ? static_cast<double>(matched) / ground_truth : 0.0;
    s.precision = predicted > 0 ? static_cast<double>(matched) / predicted : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (s.pieces > 0) s.mean_mpjpe /= s.pieces;
    return s;
}

// write stage-1 trajectories + a report for the determinism comparison
void write_stage1_run(const CorpusSetup& setup, const PipelineConfig& config,
                      const std::string& out_dir) {
    std::vector<PieceEvaluation> evals;
    for (const ManifestEntry& entry : setup.manifest) {
        const LoadedPiece piece = load_piece(entry);
        const PieceOutputs outputs = run_piece(piece, config, setup.geom, setup.prior, nullptr, StageTap::S1);
        for (int h = 0; h < 2; ++h) {
            save_trajectory(out_dir + "/" + piece.name + "_S1_" + hand_name(static_cast<Hand>(h)) +
                                ".traj",
                            outputs.tips_s1[h], static_cast<Hand>(h), "S1", piece.grid);
        }
        evals.push_back(evaluate_piece(piece, outputs, config, setup.geom));
    }
    std::ofstream f(out_dir + "/report.json");
    f << evaluation_report_json(evals, config);
}

bool same_file_bytes(const std::string& a, const std::string& b) {
    return read_file(a) == read_file(b);
}

}  // namespace

int main() {
    Scratch scratch;
    std::cout << "acceptance scratch: " << scratch.root << "\n";

    criterion_1();

    // ---------- criterion 2 + first half of 11: zero-noise corpus, stage 1 ----------
    const auto t2 = std::chrono::steady_clock::now();
    const std::string c2_dir_a = scratch.dir("c2_run_a");
    const std::string c2_dir_b = scratch.dir("c2_run_b");
    CorpusSetup zero_a = make_corpus(c2_dir_a + "/corpus", 0.0, 7);
    PipelineConfig cfg2 = acceptance_config(c2_dir_a + "/prior.json", "");
    cfg2.tap = "s1";
    save_prior(c2_dir_a + "/prior.json", zero_a.prior);
    {
        const EvalSummary s = evaluate_split(zero_a, cfg2, nullptr, StageTap::S1, "train");
        const EvalSummary st = evaluate_split(zero_a, cfg2, nullptr, StageTap::S1, "test");
        // whole-corpus pooled scores
        EvalSummary all = evaluate_split(zero_a, cfg2, nullptr, StageTap::S1, "val");
        const double elapsed = seconds_since(t2);
        // pool across all three splits for the corpus-level statement
        double matched_like_recall =
            (s.recall * 1.0 + st.recall + all.recall) / 3.0;  // reported only
        (void)matched_like_recall;
        std::vector<EvalSummary> parts = {s, st, all};
        // recompute exact pooled numbers
        int pieces = 0;
        double recall_min = 1.0, precision_min = 1.0;
        for (const EvalSummary& part : parts) {
            pieces += part.pieces;
            recall_min = std::min(recall_min, part.recall);
            precision_min = std::min(precision_min, part.precision);
        }
        const bool pass = pieces == 20 && recall_min >= 0.98 && precision_min >= 0.95 &&
                          elapsed < 120.0;
        std::ostringstream detail;
        detail << "20 pieces, worst split recall " << recall_min << ", worst split precision "
               << precision_min << ", " << elapsed << " s";
        report(2, "stage-1 contact guarantee", pass, detail.str());
    }

    // determinism of the criterion-2 artifacts: full rerun, byte comparison
    {
        write_stage1_run(zero_a, cfg2, c2_dir_a);
        CorpusSetup zero_b = make_corpus(c2_dir_b + "/corpus", 0.0, 7);
        PipelineConfig cfg2b = cfg2;
        save_prior(c2_dir_b + "/prior.json", zero_b.prior);
        write_stage1_run(zero_b, cfg2b, c2_dir_b);
        bool identical = same_file_bytes(c2_dir_a + "/report.json", c2_dir_b + "/report.json") &&
                         same_file_bytes(c2_dir_a + "/prior.json", c2_dir_b + "/prior.json");
        for (const ManifestEntry& e : zero_a.manifest) {
            const std::string name = fs::path(e.midi).stem().string();
            for (const char* hand : {"L", "R"}) {
                identical = identical && same_file_bytes(c2_dir_a + "/" + name + "_S1_" + hand + ".traj",
                                                         c2_dir_b + "/" + name + "_S1_" + hand + ".traj");
            }
        }
        report(11, "determinism (criterion-2 rerun)", identical,
               identical ? "trajectory files, prior and report byte-identical"
                         : "byte mismatch between reruns");
    }

    // ---------- criterion 10: train everything on a noisy corpus ----------
    const std::string c10_dir = scratch.dir("c10");
    CorpusSetup noisy = make_corpus(c10_dir + "/corpus", 1.5, 9);
    save_prior(c10_dir + "/prior.json", noisy.prior);
    PipelineConfig cfg10 = acceptance_config(c10_dir + "/prior.json", c10_dir + "/models");

    StageModels models = init_models(cfg10);
    double train_seconds = 0.0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        train_all(cfg10, noisy.manifest, noisy.geom, noisy.prior, models);
        train_seconds = seconds_since(t0);
        save_models(models, cfg10.models_dir);
    }
    EvalSummary closed;
    {
        closed = evaluate_split(noisy, cfg10, &models, StageTap::Final, "test");
        const bool pass = train_seconds < 1800.0 && closed.f1 >= 0.90 && closed.mean_mpjpe < 15.0;
        std::ostringstream detail;
        detail << "train " << train_seconds << " s, test F1 " << closed.f1 << " (P "
               << closed.precision << " R " << closed.recall << "), mean MPJPE "
               << closed.mean_mpjpe << " mm over " << closed.pieces << " pieces";
        report(10, "end-to-end closed loop", pass, detail.str());
    }

    // ---------- criterion 3: masking invariance + ablation delta ----------
    {
        // (a) pressed Y/Z bit-identical from stage 1 through stage 2.3 per window
        bool bit_identical = true;
        const RefineNet net1 = make_refine1_net(cfg10);
        const RefineNet net2 = make_refine2_net(cfg10);
        const SmootherNet smoother = make_smoother_net(cfg10);
        int windows_checked = 0;
        for (const ManifestEntry& entry : noisy.manifest) {
            if (entry.split != "test") continue;
            const LoadedPiece piece = load_piece(entry);
            const MidiFeatureTrack feats = midi_features(piece.notes, piece.grid, cfg10.midi_features);
            const WindowData piece_data = slice_window(
                piece.raster, Window{0, piece.grid.frame_count, piece.grid.frame_count});
            MotionTrack s1_full[2];
            for (int h = 0; h < 2; ++h)
                s1_full[h] = synthesize_baseline(piece_data, static_cast<Hand>(h),
                                                 noisy.prior.position, noisy.geom, cfg10.baseline);
            for (const Window& window : make_windows(piece.grid.frame_count)) {
                const WindowData data = slice_window(piece.raster, window);
                MidiFeatureTrack wfeats;
                wfeats.frames = data.frames;
                wfeats.dim = feats.dim;
                wfeats.features = feats.rows(window.start, data.frames);
                for (int h = 0; h < 2; ++h) {
                    const Hand hand = static_cast<Hand>(h);
                    const MotionTrack s1 = s1_full[h].slice(window.start, data.frames);
                    const MotionTrack s21 = refine_stage(s1, data, hand, models.refine1[h], net1,
                                                         noisy.geom, nullptr, 80.0, true);
                    const MotionTrack s22 = refine_stage(s21, data, hand, models.refine2[h], net2,
                                                         noisy.geom, &wfeats, 80.0, true);
                    const MotionTrack s23 = smooth_trajectory(s22, &data.press[h], cfg10.smooth_radius,
                                                              &models.smoother[h], &smoother);
                    for (int t = 0; t < data.frames && bit_identical; ++t) {
                        for (int f = 0; f < kFingersPerHand; ++f) {
                            if (data.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] < 0)
                                continue;
                            const size_t o = s1.offset(t, f);
                            for (const MotionTrack* stage : {&s21, &s22, &s23}) {
                                bit_identical =
                                    bit_identical &&
                                    std::memcmp(&stage->data[o + 1], &s1.data[o + 1], sizeof(float)) == 0 &&
                                    std::memcmp(&stage->data[o + 2], &s1.data[o + 2], sizeof(float)) == 0;
                            }
                        }
                    }
                    ++windows_checked;
                }
            }
        }

        // (b) ablation: the noise-trained models evaluated with --no-y-mask;
        // press-frame Y/Z residuals never saw mask-off training, so exposing
        // them can only hold or hurt contact recall
        PipelineConfig eval_mask = cfg10;
        eval_mask.tap = "s2.2";
        const EvalSummary masked = evaluate_split(noisy, eval_mask, &models, StageTap::S22, "test");
        PipelineConfig eval_nomask = cfg10;
        eval_nomask.tap = "s2.2";
        eval_nomask.mask_y = false;
        const EvalSummary unmasked = evaluate_split(noisy, eval_nomask, &models, StageTap::S22, "test");
        const double delta = unmasked.recall - masked.recall;

        // supplementary: Table-3-style retrain without masking
        PipelineConfig cfg_retrain = cfg10;
        cfg_retrain.mask_y = false;
        cfg_retrain.models_dir = c10_dir + "/models_nomask";
        cfg_retrain.training.steps_smoother = 0;
        cfg_retrain.training.steps_wrist = 0;
        cfg_retrain.training.steps_stage4 = 0;
        cfg_retrain.training.steps_pose_refine = 0;
        StageModels models_retrain = init_models(cfg_retrain);
        train_all(cfg_retrain, noisy.manifest, noisy.geom, noisy.prior, models_retrain);
        PipelineConfig eval_retrain = cfg_retrain;
        eval_retrain.tap = "s2.2";
        const EvalSummary retrained =
            evaluate_split(noisy, eval_retrain, &models_retrain, StageTap::S22, "test");
        const double delta_retrain = retrained.recall - masked.recall;

        const bool pass = bit_identical && delta <= 0.0 && delta_retrain <= 0.0;
        std::ostringstream detail;
        detail << windows_checked << " hand-windows bit-checked"
               << (bit_identical ? " (pressed Y/Z identical S1..S2.3)" : " (BIT MISMATCH)")
               << "; recall masked " << masked.recall << " -> unmasked " << unmasked.recall
               << ", delta " << delta << "; retrained-unmasked " << retrained.recall
               << " (delta " << delta_retrain << ")";
        report(3, "masking invariance", pass, detail.str());

        // ---------- criterion 4: clamp bounds over all test inference ----------
        const double worst_tip = std::max({closed.max_tip_residual, masked.max_tip_residual,
                                           retrained.max_tip_residual, unmasked.max_tip_residual});
        const double worst_wrist = std::max(closed.max_wrist_residual, masked.max_wrist_residual);
        const bool pass4 = worst_tip <= 80.0 && worst_wrist <= 50.0 && worst_tip > 0.0;
        std::ostringstream d4;
        d4 << "max |fingertip residual| " << worst_tip << " mm (bound 80), max |wrist residual| "
           << worst_wrist << " mm (bound 50), zero violations";
        report(4, "clamp bounds", pass4, d4.str());
    }

    // ---------- criterion 5: gradient checks ----------
    {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<GradCheckRow> rows = gradcheck_battery();
        bool pass = true;
        std::ostringstream detail;
        for (const GradCheckRow& row : rows) {
            pass = pass && row.passed();
            detail << row.name << " " << row.report.max_rel_err << (row.passed() ? " ok; " : " FAIL; ");
        }
        const double elapsed = seconds_since(t0);
        pass = pass && elapsed < 300.0;
        detail << elapsed << " s";
        report(5, "gradient checks", pass, detail.str());
    }

    // ---------- criterion 6: anchor preservation on 100 random windows ----------
    {
        const KeyboardGeometry geom = build_standard_keyboard();
        const HandGraph graph = build_hand_graph();
        StgcnUNetConfig net_cfg;
        net_cfg.channels = {8, 16, 32};
        const StgcnUNet net{"u", net_cfg};
        ParamStore ps;
        RngState prng(5);
        net.init(ps, prng);
        init_normal(ps.at("u.head.w"), 1.0, prng);
        init_normal(ps.at("u.head.b"), 10.0, prng);

        RngState rng(2025);
        bool exact = true;
        for (int trial = 0; trial < 100 && exact; ++trial) {
            const int T = 24 + static_cast<int>(rng.uniform_index(96));
            FingeringGrid fing(T);
            for (int t = 0; t < T; t += 4)
                fing.set(t, 30 + static_cast<int>(rng.uniform_index(40)),
                         static_cast<uint8_t>(6 + rng.uniform_index(5)));
            FrameGrid grid;
            grid.frame_count = T;
            const Raster raster = rasterize({}, grid, fing);
            const WindowData data = slice_window(raster, Window{0, T, T});
            MotionTrack wrist(T, 1), tips(T, kFingersPerHand);
            for (int t = 0; t < T; ++t) {
                wrist.set(t, 0, {rng.normal() * 30.0, 500 + rng.normal() * 100.0, 40 + rng.normal() * 5.0});
                for (int f = 0; f < kFingersPerHand; ++f)
                    tips.set(t, f, {rng.normal() * 30.0, 400 + 25.0 * f + rng.normal() * 50.0,
                                    rng.normal() * 10.0});
            }
            const MotionTrack pose = stgcn_synthesize(wrist, tips, data, ps, net, graph, geom);
            for (int t = 0; t < T && exact; ++t) {
                exact = exact && std::memcmp(&pose.data[pose.offset(t, kWristJoint)],
                                             &wrist.data[wrist.offset(t, 0)], 3 * sizeof(float)) == 0;
                for (int f = 0; f < kFingersPerHand; ++f)
                    exact = exact && std::memcmp(&pose.data[pose.offset(t, tip_joint(f))],
                                                 &tips.data[tips.offset(t, f)], 3 * sizeof(float)) == 0;
            }
        }
        report(6, "anchor preservation", exact,
               exact ? "wrist + fingertip anchors bit-exact on 100 random windows"
                     : "anchor drift detected");
    }

    // ---------- criterion 7: pose-loss identities ----------
    {
        const HandGraph graph = build_hand_graph();
        // axis-aligned pose with integer coordinates: exact float arithmetic
        // all chains axis-aligned with integer coordinates: the DIP->TIP bone
        // runs along +Y, so a (0,1,0) displacement is an exactly 1 mm
        // elongation in float and double alike
        MotionTrack pose(3, kJointsPerHand);
        for (int t = 0; t < 3; ++t) {
            pose.set(t, kWristJoint, {0, 0, 0});
            for (int f = 0; f < kFingersPerHand; ++f) {
                const double x = 20.0 * f;
                pose.set(t, finger_joint(f, 0), {x, 40, 8});
                pose.set(t, finger_joint(f, 1), {x, 70, 8});
                pose.set(t, finger_joint(f, 2), {x, 90, 8});
                pose.set(t, finger_joint(f, 3), {x, 100, 8});
            }
        }
        const BoneTable bones = bone_table_from_tracks({&pose}, {&pose}, graph);
        PoseLossWeights w;
        w.lambda_bio = 0.0;  // collinear synthetic chain has no palm frame
        const double zero = pose_loss_value(pose, pose, graph, bones, Hand::Right, w);

        MotionTrack longer = pose;
        for (int t = 0; t < 3; ++t) {
            Vec3 tip = longer.get(t, tip_joint(0));
            tip.y += 1.0;
            longer.set(t, tip_joint(0), tip);
        }
        PoseLossWeights bone_only;
        bone_only.lambda_bone = 1.0;
        bone_only.lambda_vel = 0.0;
        bone_only.lambda_bio = 0.0;
        // DIP(0) at (0,90,8), TIP(0) at (0,100,0): bone (0,10,-8)... use measured delta
        const double before = pose_loss_value(longer, longer, graph, bones, Hand::Right, bone_only);
        // quantify: the only mismatched bone must contribute |delta|/20
        double expect = 0.0;
        {
            const Vec3 dip = pose.get(0, finger_joint(0, 2));
            const Vec3 tip_old = pose.get(0, tip_joint(0));
            const Vec3 tip_new = longer.get(0, tip_joint(0));
            expect = std::abs((tip_new - dip).norm() - (tip_old - dip).norm()) / 20.0;
        }
        const bool pass = zero == 0.0 && std::abs(before - expect) < 1e-9 &&
                          std::abs(before - 0.05) < 1e-9;
        std::ostringstream detail;
        detail << "pose_loss(x,x) = " << zero << " exactly; single-bone L_bone = " << before
               << " vs expected " << expect << " (|diff| " << std::abs(before - expect) << ")";
        report(7, "pose-loss identities", pass, detail.str());
    }

    // ---------- criterion 8: evaluator oracle equivalence ----------
    {
        FrameGrid grid;
        grid.frame_count = 600;
        RngState rng(1234);
        bool equal = true;
        int mismatches = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            const int npred = static_cast<int>(rng.uniform_index(9));
            const int ngt = static_cast<int>(rng.uniform_index(9));
            std::vector<PressEvent> pred;
            std::vector<NoteEvent> gt;
            for (int i = 0; i < npred; ++i) {
                PressEvent e;
                e.key = static_cast<int>(rng.uniform_index(88));
                e.start_frame = static_cast<int>(rng.uniform_index(480));
                e.end_frame = e.start_frame + 3;
                pred.push_back(e);
            }
            for (int i = 0; i < ngt; ++i)
                gt.push_back({rng.uniform() * 8.0, static_cast<int>(rng.uniform_index(88)), 80, 0.2});

            const F1Scores s = key_contact_f1(pred, gt, grid, 100.0);
            // exhaustive optimum
            std::vector<std::vector<int>> adm(pred.size());
            for (size_t p = 0; p < pred.size(); ++p) {
                const double onset = grid.frame_start(pred[p].start_frame);
                for (size_t g = 0; g < gt.size(); ++g)
                    if (pred[p].key == gt[g].key && std::abs(onset - gt[g].onset) <= 0.1)
                        adm[p].push_back(static_cast<int>(g));
            }
            std::vector<bool> used(gt.size(), false);
            std::function<int(size_t)> rec = [&](size_t p) -> int {
                if (p == pred.size()) return 0;
                int best = rec(p + 1);
                for (int g : adm[p]) {
                    if (used[static_cast<size_t>(g)]) continue;
                    used[static_cast<size_t>(g)] = true;
                    best = std::max(best, 1 + rec(p + 1));
                    used[static_cast<size_t>(g)] = false;
                }
                return best;
            };
            const int optimal = rec(0);
            if (s.matched > optimal) equal = false;  // must never exceed
            if (s.matched != optimal) ++mismatches;
        }

        // metric oracles
        RngState mrng(6);
        MotionTrack a(9, kJointsPerHand), b(9, kJointsPerHand);
        for (float& v : a.data) v = static_cast<float>(mrng.normal() * 8.0);
        for (float& v : b.data) v = static_cast<float>(mrng.normal() * 8.0);
        double total = 0.0, num = 0.0, den = 0.0;
        for (int t = 0; t < 9; ++t)
            for (int j = 0; j < kJointsPerHand; ++j) total += (a.get(t, j) - b.get(t, j)).norm();
        for (int t = 1; t < 8; ++t)
            for (int j = 0; j < kJointsPerHand; ++j) {
                num += (a.get(t + 1, j) - a.get(t, j) * 2.0 + a.get(t - 1, j)).norm();
                den += (b.get(t + 1, j) - b.get(t, j) * 2.0 + b.get(t - 1, j)).norm();
            }
        const PositionMetrics pm = position_metrics(a, b);
        const auto ar = accel_ratio(a, b);
        const bool metrics_ok = std::abs(pm.mpjpe_mm - total / (9 * 21)) < 1e-6 && ar.has_value() &&
                                std::abs(*ar - num / den) < 1e-6;

        const bool pass = equal && mismatches == 0 && metrics_ok;
        std::ostringstream detail;
        detail << "greedy = optimal on 1000/1000 instances (" << mismatches
               << " mismatches); MPJPE and accel ratio match scalar oracles to 1e-6";
        report(8, "evaluator oracle equivalence", pass, detail.str());
    }

    // ---------- criterion 9: stitching ----------
    {
        bool pass = true;
        std::ostringstream detail;
        // weights sum to one
        double worst = 0.0;
        for (int T : {700, 960, 1440}) {
            const std::vector<Window> windows = make_windows(T);
            const auto weights = stitch_weights(windows, T);
            std::vector<double> sums(static_cast<size_t>(T), 0.0);
            for (size_t i = 0; i < windows.size(); ++i)
                for (int j = 0; j < windows[i].valid_length; ++j)
                    sums[static_cast<size_t>(windows[i].start + j)] += weights[i][static_cast<size_t>(j)];
            for (double v : sums) worst = std::max(worst, std::abs(v - 1.0));
        }
        pass = pass && worst < 1e-6;
        detail << "weight sum max deviation " << worst;

        // 10 mm seam discontinuity
        const int T = 960;
        const std::vector<Window> windows = make_windows(T);
        std::vector<MotionTrack> outputs;
        for (size_t i = 0; i < windows.size(); ++i) {
            MotionTrack w(windows[i].valid_length, 1);
            std::fill(w.data.begin(), w.data.end(), i == 0 ? 0.0f : 10.0f);
            outputs.push_back(std::move(w));
        }
        const MotionTrack stitched = stitch_windows(outputs, windows, T, {});
        double max_jump = 0.0;
        for (int t = 1; t < T; ++t)
            max_jump = std::max(max_jump, std::abs(static_cast<double>(stitched.get(t, 0).x) -
                                                   stitched.get(t - 1, 0).x));
        pass = pass && max_jump < 5.0;
        detail << "; 10 mm seam -> max per-frame jump " << max_jump << " mm";

        // single-window passthrough
        MotionTrack single(333, 5);
        RngState rng(4);
        for (float& v : single.data) v = static_cast<float>(rng.normal() * 40.0);
        const MotionTrack out = stitch_windows({single}, make_windows(333), 333, {});
        const bool exact = std::memcmp(out.data.data(), single.data.data(),
                                       single.data.size() * sizeof(float)) == 0;
        pass = pass && exact;
        detail << "; single-window passthrough " << (exact ? "bit-exact" : "DIFFERS");
        report(9, "stitching", pass, detail.str());
    }

    // ---------- criterion 11 second half: criterion-10 chain determinism ----------
    {
        StageModels models2 = init_models(cfg10);
        train_all(cfg10, noisy.manifest, noisy.geom, noisy.prior, models2);
        const std::string dir2 = scratch.dir("c10_rerun");
        save_models(models2, dir2 + "/models");
        bool identical = true;
        for (const char* stage : {"stage2.1", "stage2.2", "stage2.3", "stage3", "stage4", "stage4r"}) {
            for (const char* hand : {"L", "R"}) {
                identical = identical &&
                            same_file_bytes(c10_dir + "/models/" + stage + "_" + hand + ".tpnn",
                                            dir2 + "/models/" + stage + "_" + hand + ".tpnn");
            }
        }
        // and the synthesized output of one test piece
        const ManifestEntry* test_entry = nullptr;
        for (const ManifestEntry& e : noisy.manifest)
            if (e.split == "test") {
                test_entry = &e;
                break;
            }
        if (test_entry != nullptr) {
            const LoadedPiece piece = load_piece(*test_entry);
            const PieceOutputs a = run_piece(piece, cfg10, noisy.geom, noisy.prior, &models, StageTap::Final);
            const PieceOutputs b = run_piece(piece, cfg10, noisy.geom, noisy.prior, &models2, StageTap::Final);
            for (int h = 0; h < 2; ++h) {
                identical = identical &&
                            a.pose_final[h].data.size() == b.pose_final[h].data.size() &&
                            std::memcmp(a.pose_final[h].data.data(), b.pose_final[h].data.data(),
                                        a.pose_final[h].data.size() * sizeof(float)) == 0;
            }
            const std::string ra = evaluation_report_json({evaluate_piece(piece, a, cfg10, noisy.geom)}, cfg10);
            const std::string rb = evaluation_report_json({evaluate_piece(piece, b, cfg10, noisy.geom)}, cfg10);
            identical = identical && ra == rb;
        }
        report(11, "determinism (criterion-10 rerun)", identical,
               identical ? "retrained models, trajectories and report byte-identical"
                         : "byte mismatch between training reruns");
    }

    std::cout << (g_failures == 0 ? "ACCEPTANCE: all criteria passed\n"
                                  : "ACCEPTANCE: " + std::to_string(g_failures) + " criterion checks failed\n");
    return g_failures == 0 ? 0 : 1;
}
