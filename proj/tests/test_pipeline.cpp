#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "tipsynth/pipeline.hpp"

using namespace tipsynth;

namespace {

// tiny corpus + config for fast orchestration tests
struct MiniSetup {
    std::string dir;
    std::vector<ManifestEntry> manifest;
    PriorBundle prior;
    KeyboardGeometry geom = build_standard_keyboard();
    PipelineConfig config;

    explicit MiniSetup(const std::string& name, double jitter = 0.5) {
        dir = "/tmp/tipsynth_test_" + name;
        std::filesystem::remove_all(dir);
        SyntheticCorpusSpec spec;
        spec.pieces = 4;
        spec.min_seconds = 4.0;
        spec.max_seconds = 6.0;
        spec.seed = 17;
        spec.noise.jitter_mm = jitter;
        spec.train_ratio = 0.5;
        spec.val_ratio = 0.25;
        const Corpus corpus = generate_synthetic_corpus(spec, geom);
        manifest = save_corpus(dir, corpus);
        prior = build_priors_from_manifest(manifest, "train", geom, 10);

        config.seed = 3;
        config.refine_net.model_dim = 16;
        config.refine_net.layers = 1;
        config.refine_net.heads = 2;
        config.refine_net.ffn_dim = 32;
        config.wrist_net.channels = 16;
        config.wrist_net.blocks = 2;
        config.stgcn.channels = {8, 16, 32};
        config.pose_refine.channels = 16;
        config.pose_refine.blocks = 1;
        config.training.steps_stage2 = 4;
        config.training.steps_smoother = 3;
        config.training.steps_wrist = 3;
        config.training.steps_stage4 = 2;
        config.training.steps_pose_refine = 2;
        config.training.crop_stage2 = 64;
        config.training.crop_stage4 = 24;
    }
};

}  // namespace

TEST_CASE("config json round trip and validation") {
    PipelineConfig c;
    c.seed = 42;
    c.lambda_vel = 0.25;
    c.fusion = "concat";
    const PipelineConfig back = config_from_json(config_to_json(c));
    CHECK(back.seed == 42);
    CHECK(back.lambda_vel == 0.25);
    CHECK(back.fusion_mode() == Fusion::Concat);
    CHECK(back.clamps.fingertip_mm == 80.0);
    CHECK(back.clamps.wrist_mm == 50.0);
    CHECK(back.midi_dim() == 452);

    CHECK_THROWS_AS(config_from_json("{\"no_such_key\": 1}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"fusion\": \"both\"}"), ConfigError);
    CHECK_THROWS_AS(config_from_json("{\"fingertip_clamp_mm\": -1.0}"), ConfigError);

    SUBCASE("environment seed override") {
        setenv("TIPSYNTH_SEED", "777", 1);
        const PipelineConfig env = config_from_json("{\"seed\": 5}");
        unsetenv("TIPSYNTH_SEED");
        CHECK(env.seed == 777);
    }
    SUBCASE("conditioning none removes the midi dim") {
        PipelineConfig none = config_from_json("{\"conditioning\": \"none\"}");
        CHECK(none.midi_dim() == 0);
    }
}

TEST_CASE("run_piece honors the through-stage contract") {
    MiniSetup setup("through");
    const LoadedPiece piece = load_piece(setup.manifest[0]);

    const PieceOutputs s1 = run_piece(piece, setup.config, setup.geom, setup.prior, nullptr, StageTap::S1);
    CHECK(s1.tips_s1[0].frames == piece.grid.frame_count);
    CHECK(s1.tips_s21[0].frames == 0);
    CHECK(s1.pose_final[1].frames == 0);

    // stages beyond 1 need models
    CHECK_THROWS_AS(run_piece(piece, setup.config, setup.geom, setup.prior, nullptr, StageTap::S22),
                    ConfigError);

    StageModels models = init_models(setup.config);
    const PieceOutputs full =
        run_piece(piece, setup.config, setup.geom, setup.prior, &models, StageTap::Final);
    CHECK(full.tips_s22[0].frames == piece.grid.frame_count);
    CHECK(full.wrist_s3[1].frames == piece.grid.frame_count);
    CHECK(full.pose_s4[0].joints == kJointsPerHand);
    CHECK(full.pose_final[1].joints == kJointsPerHand);
    CHECK(full.pose_final[0].all_finite());

    // tap extraction: fingertips from the full pose match its tip slots
    const MotionTrack tips = tap_tips(full, StageTap::Final, Hand::Left);
    CHECK(tips.joints == kFingersPerHand);
    for (int t = 0; t < tips.frames; t += 50)
        for (int f = 0; f < kFingersPerHand; ++f)
            CHECK(tips.get(t, f).x == full.pose_final[0].get(t, tip_joint(f)).x);
}

TEST_CASE("training smoke across conditioning and fusion variants") {
    MiniSetup setup("variants");

    SUBCASE("film fusion with raw conditioning") {
        StageModels models = init_models(setup.config);
        const TrainSummary summary =
            train_all(setup.config, setup.manifest, setup.geom, setup.prior, models);
        CHECK(summary.loss_curves.size() == 12);  // 6 stages x 2 hands
        for (const auto& [name, losses] : summary.loss_curves) {
            CHECK(!losses.empty());
            for (double v : losses) CHECK(std::isfinite(v));
        }
    }
    SUBCASE("concat fusion trains the same data") {
        PipelineConfig cfg = setup.config;
        cfg.fusion = "concat";
        StageModels models = init_models(cfg);
        const TrainSummary summary = train_all(cfg, setup.manifest, setup.geom, setup.prior, models);
        CHECK(summary.loss_curves.count("stage2.2/R") == 1);
    }
    SUBCASE("conditioning none runs the whole cascade without midi features") {
        PipelineConfig cfg = setup.config;
        cfg.conditioning = "none";
        StageModels models = init_models(cfg);
        train_all(cfg, setup.manifest, setup.geom, setup.prior, models);
        const LoadedPiece piece = load_piece(setup.manifest.back());
        const PieceOutputs out = run_piece(piece, cfg, setup.geom, setup.prior, &models, StageTap::Final);
        CHECK(out.pose_final[0].all_finite());
    }
}

TEST_CASE("model save/load round trips through the pipeline") {
    MiniSetup setup("models");
    StageModels models = init_models(setup.config);
    train_all(setup.config, setup.manifest, setup.geom, setup.prior, models);
    const std::string dir = setup.dir + "/models";
    save_models(models, dir);
    const StageModels loaded = load_models(setup.config, dir);

    const LoadedPiece piece = load_piece(setup.manifest[0]);
    const PieceOutputs a =
        run_piece(piece, setup.config, setup.geom, setup.prior, &models, StageTap::Final);
    const PieceOutputs b =
        run_piece(piece, setup.config, setup.geom, setup.prior, &loaded, StageTap::Final);
    for (int h = 0; h < 2; ++h) {
        REQUIRE(a.pose_final[h].data.size() == b.pose_final[h].data.size());
        CHECK(std::memcmp(a.pose_final[h].data.data(), b.pose_final[h].data.data(),
                          a.pose_final[h].data.size() * sizeof(float)) == 0);
    }
    for (int h = 0; h < 2; ++h)
        for (int bn = 0; bn < 20; ++bn)
            CHECK(loaded.bones.lengths[static_cast<size_t>(h)][static_cast<size_t>(bn)] ==
                  models.bones.lengths[static_cast<size_t>(h)][static_cast<size_t>(bn)]);
}

TEST_CASE("evaluation report json carries metrics and config echo") {
    MiniSetup setup("report");
    const LoadedPiece piece = load_piece(setup.manifest[0]);
    PipelineConfig cfg = setup.config;
    cfg.tap = "s1";
    const PieceOutputs outputs = run_piece(piece, cfg, setup.geom, setup.prior, nullptr, StageTap::S1);
    const PieceEvaluation ev = evaluate_piece(piece, outputs, cfg, setup.geom);
    const std::string report = evaluation_report_json({ev}, cfg);
    CHECK(report.find("\"f1\"") != std::string::npos);
    CHECK(report.find("\"config\"") != std::string::npos);
    CHECK(report.find("\"mean_recall\"") != std::string::npos);
    // identical evaluation serializes identically
    const std::string again = evaluation_report_json({ev}, cfg);
    CHECK(report == again);
}
