#include <doctest.h>

#include "tipsynth/stitch.hpp"

using namespace tipsynth;

namespace {

MotionTrack window_track(int frames, int joints, float value) {
    MotionTrack t(frames, joints);
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

}  // namespace

TEST_CASE("stitch weights are a partition of unity") {
    for (int T : {700, 960, 1200, 1500}) {
        const std::vector<Window> windows = make_windows(T);
        const auto weights = stitch_weights(windows, T);
        std::vector<double> sums(static_cast<size_t>(T), 0.0);
        for (size_t i = 0; i < windows.size(); ++i)
            for (int j = 0; j < windows[i].valid_length; ++j)
                sums[static_cast<size_t>(windows[i].start + j)] += weights[i][static_cast<size_t>(j)];
        for (int t = 0; t < T; ++t) CHECK(sums[static_cast<size_t>(t)] == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("single window passes through bit-exactly") {
    const std::vector<Window> windows = make_windows(300);
    MotionTrack w(300, 5);
    RngState rng(8);
    for (float& v : w.data) v = static_cast<float>(rng.normal() * 50.0);
    const MotionTrack out = stitch_windows({w}, windows, 300, {});
    REQUIRE(out.frames == 300);
    for (size_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] == w.data[i]);
}

TEST_CASE("identical overlapping windows blend to themselves") {
    const int T = 960;
    const std::vector<Window> windows = make_windows(T);
    REQUIRE(windows.size() == 3);
    // all three windows hold the same smooth signal sampled at their offsets
    auto sample = [](int t) {
        return Vec3{std::sin(0.01 * t) * 30.0, 400.0 + 0.05 * t, std::cos(0.013 * t) * 10.0};
    };
    std::vector<MotionTrack> outputs;
    for (const Window& w : windows) {
        MotionTrack track(w.valid_length, 2);
        for (int j = 0; j < w.valid_length; ++j) {
            track.set(j, 0, sample(w.start + j));
            track.set(j, 1, sample(w.start + j) + Vec3{1, 1, 1});
        }
        outputs.push_back(std::move(track));
    }
    const MotionTrack stitched = stitch_windows(outputs, windows, T, {});
    // equal inputs blend bit-exactly outside the seam filter and within 1e-3
    // of the shared value near seams (low-pass of a smooth signal)
    for (int t = 0; t < T; ++t) {
        const Vec3 want = sample(t);
        CHECK(stitched.get(t, 0).x == doctest::Approx(want.x).epsilon(2e-3));
        CHECK(stitched.get(t, 0).y == doctest::Approx(want.y).epsilon(2e-3));
    }
}

TEST_CASE("constructed seam step is smoothed below 5 mm per frame") {
    const int T = 960;
    const std::vector<Window> windows = make_windows(T);
    std::vector<MotionTrack> outputs;
    // window 0 and 1 disagree by a 10 mm step in X
    for (size_t i = 0; i < windows.size(); ++i) {
        const float level = i == 0 ? 0.0f : 10.0f;
        outputs.push_back(window_track(windows[i].valid_length, 1, level));
    }
    const MotionTrack stitched = stitch_windows(outputs, windows, T, {});
    double max_jump = 0.0;
    for (int t = 1; t < T; ++t) {
        max_jump = std::max(max_jump, std::abs(static_cast<double>(stitched.get(t, 0).x) -
                                               stitched.get(t - 1, 0).x));
    }
    CHECK(max_jump < 5.0);
    // the blend still transitions from 0 to 10
    CHECK(stitched.get(0, 0).x == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(stitched.get(T - 1, 0).x == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("inconsistent window sets are rejected") {
    std::vector<Window> windows = make_windows(960);
    std::vector<MotionTrack> outputs;
    for (const Window& w : windows) outputs.push_back(window_track(w.valid_length, 1, 0.0f));

    SUBCASE("length mismatch") {
        outputs[1] = window_track(100, 1, 0.0f);
        CHECK_THROWS_AS(stitch_windows(outputs, windows, 960, {}), ValidationError);
    }
    SUBCASE("bad stride") {
        windows[1].start = 100;
        CHECK_THROWS_AS(stitch_windows(outputs, windows, 960, {}), ValidationError);
    }
    SUBCASE("count mismatch") {
        outputs.pop_back();
        CHECK_THROWS_AS(stitch_windows(outputs, windows, 960, {}), ValidationError);
    }
}

TEST_CASE("butterworth filtfilt basics") {
    // DC passes unchanged
    std::vector<double> dc(200, 3.5);
    const std::vector<double> out = butterworth_filtfilt(dc, 6.0, 59.94);
    for (double v : out) CHECK(v == doctest::Approx(3.5).epsilon(1e-9));

    // high-frequency alternation is strongly attenuated away from the edges
    std::vector<double> alt(200);
    for (size_t i = 0; i < alt.size(); ++i) alt[i] = (i % 2 == 0) ? 1.0 : -1.0;
    const std::vector<double> filtered = butterworth_filtfilt(alt, 6.0, 59.94);
    for (size_t i = 50; i < 150; ++i) CHECK(std::abs(filtered[i]) < 0.01);

    // zero phase: a symmetric pulse stays centered
    std::vector<double> pulse(101, 0.0);
    pulse[50] = 1.0;
    const std::vector<double> smoothed = butterworth_filtfilt(pulse, 6.0, 59.94);
    double best = 0.0;
    size_t best_i = 0;
    for (size_t i = 0; i < smoothed.size(); ++i) {
        if (smoothed[i] > best) {
            best = smoothed[i];
            best_i = i;
        }
    }
    CHECK(best_i == 50);
}
