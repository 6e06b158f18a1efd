#include <doctest.h>

#include "tipsynth/baseline.hpp"
#include "tipsynth/corpus.hpp"

using namespace tipsynth;

namespace {

// fully covered prior with canonical contact medians
PositionPrior canonical_prior(const KeyboardGeometry& geom) {
    PositionPrior prior;
    for (int h = 0; h < 2; ++h)
        for (int f = 0; f < kFingersPerHand; ++f)
            for (int k = 0; k < kNumKeys; ++k) {
                PositionPriorEntry e;
                e.p50 = e.mean = canonical_contact(static_cast<Hand>(h), f, k, geom);
                e.p25 = e.p75 = e.p50;
                e.count = 20;
                prior.entry(static_cast<Hand>(h), f, k) = e;
            }
    return prior;
}

WindowData window_from_fingering(const FingeringGrid& fing, int frames) {
    FrameGrid grid;
    grid.frame_count = frames;
    const Raster raster = rasterize({}, grid, fing);
    return slice_window(raster, Window{0, frames, frames});
}

}  // namespace

TEST_CASE("baseline places pressing fingers at the prior median") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PositionPrior prior = canonical_prior(geom);
    const BaselineConfig cfg;

    FingeringGrid fing(10);
    for (int t = 0; t < 10; ++t) fing.set(t, 40, 8);  // right finger 3 -> index 2
    const WindowData window = window_from_fingering(fing, 10);
    const MotionTrack out = synthesize_baseline(window, Hand::Right, prior, geom, cfg);

    const Vec3 want = prior.entry(Hand::Right, 2, 40)->p50;
    for (int t = 0; t < 10; ++t) {
        CHECK(out.get(t, 2).x == doctest::Approx(want.x));
        CHECK(out.get(t, 2).y == doctest::Approx(want.y));
        CHECK(out.get(t, 2).z == doctest::Approx(want.z));
        // pressing tip is over the fingered key and pressed
        const auto at = geom.key_at(out.get(t, 2));
        REQUIRE(at.has_value());
        CHECK(*at == 40);
        CHECK(is_pressed(out.get(t, 2), geom.key(40), geom.thresholds(), geom));
    }

    // non-pressing fingers hover one spacing apart at anchor Z + hover
    const Vec3 tip3 = out.get(0, 3);
    CHECK(tip3.y == doctest::Approx(want.y + cfg.finger_spacing_mm));
    CHECK(tip3.z == doctest::Approx(want.z + cfg.hover_mm));
    CHECK(tip3.x == doctest::Approx(want.x));
    const Vec3 tip0 = out.get(0, 0);  // thumb, two gaps below
    CHECK(tip0.y == doctest::Approx(want.y - 2 * cfg.finger_spacing_mm));

    // hover must not register as a press anywhere
    for (int f = 0; f < kFingersPerHand; ++f) {
        if (f == 2) continue;
        const auto at = geom.key_at(out.get(0, f));
        if (at) CHECK_FALSE(is_pressed(out.get(0, f), geom.key(*at), geom.thresholds(), geom));
    }
}

TEST_CASE("left hand mirrors the finger direction") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PositionPrior prior = canonical_prior(geom);
    FingeringGrid fing(4);
    for (int t = 0; t < 4; ++t) fing.set(t, 30, 3);  // left finger 3 -> index 2
    const WindowData window = window_from_fingering(fing, 4);
    const MotionTrack out = synthesize_baseline(window, Hand::Left, prior, geom, BaselineConfig{});
    // left hand: higher finger index sits at lower Y
    CHECK(out.get(0, 3).y < out.get(0, 2).y);
    CHECK(out.get(0, 1).y > out.get(0, 2).y);
}

TEST_CASE("all five fingers pressing means no interpolation") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PositionPrior prior = canonical_prior(geom);
    FingeringGrid fing(3);
    for (int t = 0; t < 3; ++t)
        for (int f = 0; f < kFingersPerHand; ++f) fing.set(t, 40 + 2 * f, static_cast<uint8_t>(6 + f));
    const WindowData window = window_from_fingering(fing, 3);
    const MotionTrack out = synthesize_baseline(window, Hand::Right, prior, geom, BaselineConfig{});
    for (int f = 0; f < kFingersPerHand; ++f) {
        const Vec3 want = prior.entry(Hand::Right, f, 40 + 2 * f)->p50;
        CHECK(out.get(1, f).x == doctest::Approx(want.x));
        CHECK(out.get(1, f).y == doctest::Approx(want.y));
        CHECK(out.get(1, f).z == doctest::Approx(want.z));
    }
}

TEST_CASE("zero-order hold during silence") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PositionPrior prior = canonical_prior(geom);
    FingeringGrid fing(30);
    for (int t = 0; t <= 9; ++t) fing.set(t, 45, 7);
    const WindowData window = window_from_fingering(fing, 30);
    const MotionTrack out = synthesize_baseline(window, Hand::Right, prior, geom, BaselineConfig{});
    for (int t = 10; t < 30; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            CHECK(out.get(t, f).x == out.get(9, f).x);
            CHECK(out.get(t, f).y == out.get(9, f).y);
            CHECK(out.get(t, f).z == out.get(9, f).z);
        }
    }
    // within the constant-fingering span the output is constant
    for (int t = 1; t <= 9; ++t)
        for (int f = 0; f < kFingersPerHand; ++f) CHECK(out.get(t, f).y == out.get(0, f).y);
}

TEST_CASE("rest pose before any press, bit-identical reruns") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PositionPrior prior = canonical_prior(geom);
    FingeringGrid fing(12);
    fing.set(8, 50, 9);
    const WindowData window = window_from_fingering(fing, 12);
    const BaselineConfig cfg;
    const MotionTrack a = synthesize_baseline(window, Hand::Right, prior, geom, cfg);
    const MotionTrack b = synthesize_baseline(window, Hand::Right, prior, geom, cfg);
    REQUIRE(a.data.size() == b.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);

    // frames before the press hold the rest pose over keys 39..43
    for (int f = 0; f < kFingersPerHand; ++f) {
        const KeySpec& key = geom.key(cfg.rest_key_right_thumb + f);
        CHECK(a.get(0, f).y == doctest::Approx(key.y_center()));
        CHECK(a.get(0, f).z == doctest::Approx(key.rest_z + cfg.hover_mm));
    }
}

TEST_CASE("partial prior is rejected") {
    const KeyboardGeometry geom = build_standard_keyboard();
    PositionPrior partial;
    FingeringGrid fing(4);
    const WindowData window = window_from_fingering(fing, 4);
    CHECK_THROWS_AS(synthesize_baseline(window, Hand::Right, partial, geom, BaselineConfig{}),
                    ValidationError);
}
