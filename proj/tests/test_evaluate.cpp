#include <doctest.h>

#include <algorithm>

#include "tipsynth/evaluate.hpp"

using namespace tipsynth;

namespace {

// exhaustive maximum bipartite matching for small instances
int optimal_matching(const std::vector<PressEvent>& pred, const std::vector<NoteEvent>& gt,
                     const FrameGrid& grid, double tol_s) {
    std::vector<std::vector<int>> adm(pred.size());
    for (size_t p = 0; p < pred.size(); ++p) {
        const double onset = grid.frame_start(pred[p].start_frame);
        for (size_t g = 0; g < gt.size(); ++g) {
            if (pred[p].key == gt[g].key && std::abs(onset - gt[g].onset) <= tol_s)
                adm[p].push_back(static_cast<int>(g));
        }
    }
    std::vector<bool> used(gt.size(), false);
    std::function<int(size_t)> rec = [&](size_t p) -> int {
        if (p == pred.size()) return 0;
        int best = rec(p + 1);  // leave p unmatched
        for (int g : adm[p]) {
            if (used[static_cast<size_t>(g)]) continue;
            used[static_cast<size_t>(g)] = true;
            best = std::max(best, 1 + rec(p + 1));
            used[static_cast<size_t>(g)] = false;
        }
        return best;
    };
    return rec(0);
}

MotionTrack flat_track(int frames) {
    MotionTrack t(frames, kFingersPerHand);
    for (int i = 0; i < frames; ++i)
        for (int f = 0; f < kFingersPerHand; ++f) t.set(i, f, {35.0, 100.0 + 30.0 * f, 20.0});
    return t;
}

}  // namespace

TEST_CASE("press detection") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const KeySpec& key = geom.key(40);

    SUBCASE("held press becomes one event") {
        MotionTrack tips = flat_track(15);
        for (int t = 3; t <= 9; ++t) tips.set(t, 1, {key.x_center(), key.y_center(), key.rest_z - 2.5});
        const std::vector<PressEvent> events = detect_presses(tips, Hand::Right, geom, {});
        REQUIRE(events.size() == 1);
        CHECK(events[0].key == 40);
        CHECK(events[0].start_frame == 3);
        CHECK(events[0].end_frame == 9);
        CHECK(events[0].finger == 1);
    }
    SUBCASE("rest height gives no events") {
        CHECK(detect_presses(flat_track(20), Hand::Right, geom, {}).empty());
    }
    SUBCASE("single-frame dip is debounced at min_frames 2") {
        MotionTrack tips = flat_track(10);
        tips.set(5, 1, {key.x_center(), key.y_center(), key.rest_z - 2.5});
        CHECK(detect_presses(tips, Hand::Right, geom, {}).empty());
        EvaluatorConfig cfg;
        cfg.min_frames = 1;
        CHECK(detect_presses(tips, Hand::Right, geom, cfg).size() == 1);
    }
    SUBCASE("key change splits the run") {
        MotionTrack tips = flat_track(10);
        const KeySpec& other = geom.key(42);
        for (int t = 2; t <= 4; ++t) tips.set(t, 1, {key.x_center(), key.y_center(), -2.5});
        for (int t = 5; t <= 7; ++t) tips.set(t, 1, {other.x_center(), other.y_center(), -2.5});
        const std::vector<PressEvent> events = detect_presses(tips, Hand::Right, geom, {});
        REQUIRE(events.size() == 2);
        CHECK(events[0].key == 40);
        CHECK(events[1].key == 42);
    }
}

TEST_CASE("key contact matching") {
    FrameGrid grid;
    grid.frame_count = 600;

    SUBCASE("exact match") {
        const std::vector<PressEvent> pred = {{40, 30, 40, 0, Hand::Right}};
        const std::vector<NoteEvent> gt = {{grid.frame_start(30), 40, 80, 0.3}};
        const F1Scores s = key_contact_f1(pred, gt, grid, 100.0);
        CHECK(s.precision == 1.0);
        CHECK(s.recall == 1.0);
        CHECK(s.f1 == 1.0);
    }
    SUBCASE("empty predictions give zero across the board") {
        const std::vector<NoteEvent> gt = {{0.5, 40, 80, 0.3}};
        const F1Scores s = key_contact_f1({}, gt, grid, 100.0);
        CHECK(s.precision == 0.0);
        CHECK(s.recall == 0.0);
        CHECK(s.f1 == 0.0);
    }
    SUBCASE("wrong key or late onset does not match") {
        const std::vector<NoteEvent> gt = {{0.5, 40, 80, 0.3}};
        const std::vector<PressEvent> wrong_key = {{41, 30, 40, 0, Hand::Right}};
        CHECK(key_contact_f1(wrong_key, gt, grid, 100.0).matched == 0);
        const std::vector<PressEvent> late = {{40, 45, 50, 0, Hand::Right}};  // ~0.75 s
        CHECK(key_contact_f1(late, gt, grid, 100.0).matched == 0);
    }
    SUBCASE("greedy equals the exhaustive optimum on random small instances") {
        RngState rng(1234);
        int checked = 0;
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
            for (int i = 0; i < ngt; ++i) {
                gt.push_back({rng.uniform() * 8.0, static_cast<int>(rng.uniform_index(88)), 80, 0.2});
            }
            const F1Scores s = key_contact_f1(pred, gt, grid, 100.0);
            const int best = optimal_matching(pred, gt, grid, 0.1);
            CHECK(s.matched <= best);
            CHECK(s.matched == best);
            ++checked;
        }
        CHECK(checked == 1000);
    }
    SUBCASE("result is invariant to event order") {
        RngState rng(77);
        std::vector<PressEvent> pred;
        std::vector<NoteEvent> gt;
        for (int i = 0; i < 8; ++i) {
            const int key = static_cast<int>(rng.uniform_index(10)) + 40;
            const int frame = static_cast<int>(rng.uniform_index(400));
            pred.push_back({key, frame, frame + 3, 0, Hand::Right});
            gt.push_back({grid.frame_start(frame) + rng.uniform() * 0.05, key, 70, 0.2});
        }
        const F1Scores a = key_contact_f1(pred, gt, grid, 100.0);
        std::reverse(pred.begin(), pred.end());
        std::reverse(gt.begin(), gt.end());
        const F1Scores b = key_contact_f1(pred, gt, grid, 100.0);
        CHECK(a.matched == b.matched);
        CHECK(a.f1 == b.f1);
    }
}

TEST_CASE("position metrics") {
    SUBCASE("identical tracks give zero") {
        MotionTrack a(5, kJointsPerHand);
        RngState rng(3);
        for (float& v : a.data) v = static_cast<float>(rng.normal());
        const PositionMetrics m = position_metrics(a, a);
        CHECK(m.mpjpe_mm == 0.0);
        CHECK(m.fingertip_mm == 0.0);
    }
    SUBCASE("uniform (3,4,0) offset gives MPJPE 5") {
        MotionTrack gt(4, kJointsPerHand);
        MotionTrack pred = gt;
        for (int t = 0; t < 4; ++t)
            for (int j = 0; j < kJointsPerHand; ++j) pred.set(t, j, gt.get(t, j) + Vec3{3, 4, 0});
        const PositionMetrics m = position_metrics(pred, gt);
        CHECK(m.mpjpe_mm == doctest::Approx(5.0).epsilon(1e-7));
        CHECK(m.fingertip_mm == doctest::Approx(5.0).epsilon(1e-7));
    }
    SUBCASE("random pair matches the scalar loop to 1e-6") {
        RngState rng(9);
        MotionTrack a(6, kJointsPerHand), b(6, kJointsPerHand);
        for (float& v : a.data) v = static_cast<float>(rng.normal() * 20.0);
        for (float& v : b.data) v = static_cast<float>(rng.normal() * 20.0);
        double total = 0.0, tips = 0.0;
        for (int t = 0; t < 6; ++t)
            for (int j = 0; j < kJointsPerHand; ++j) {
                const double d = (a.get(t, j) - b.get(t, j)).norm();
                total += d;
                if (std::count(kTipJoints.begin(), kTipJoints.end(), j)) tips += d;
            }
        const PositionMetrics m = position_metrics(a, b);
        CHECK(m.mpjpe_mm == doctest::Approx(total / (6 * 21)).epsilon(1e-6));
        CHECK(m.fingertip_mm == doctest::Approx(tips / (6 * 5)).epsilon(1e-6));
    }
    SUBCASE("shape mismatch throws") {
        MotionTrack a(3, 21), b(3, 5);
        CHECK_THROWS_AS(position_metrics(a, b), std::invalid_argument);
    }
}

TEST_CASE("acceleration ratio") {
    SUBCASE("identical signals give exactly 1") {
        MotionTrack a(10, 5);
        RngState rng(4);
        for (float& v : a.data) v = static_cast<float>(rng.normal() * 10.0);
        const auto r = accel_ratio(a, a);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("doubling the motion doubles the ratio") {
        MotionTrack gt(12, 2);
        RngState rng(5);
        for (float& v : gt.data) v = static_cast<float>(rng.normal() * 10.0);
        MotionTrack pred = gt;
        for (float& v : pred.data) v *= 2.0f;
        const auto r = accel_ratio(pred, gt);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(2.0).epsilon(1e-5));
    }
    SUBCASE("constant ground truth is flagged undefined") {
        MotionTrack gt(8, 1);
        for (int t = 0; t < 8; ++t) gt.set(t, 0, {1, 2, 3});
        MotionTrack pred(8, 1);
        for (int t = 0; t < 8; ++t) pred.set(t, 0, {std::sin(0.5 * t), 0, 0});
        CHECK_FALSE(accel_ratio(pred, gt).has_value());
    }
    SUBCASE("matches the scalar-loop oracle to 1e-6") {
        RngState rng(6);
        MotionTrack a(9, 3), b(9, 3);
        for (float& v : a.data) v = static_cast<float>(rng.normal() * 8.0);
        for (float& v : b.data) v = static_cast<float>(rng.normal() * 8.0);
        double num = 0.0, den = 0.0;
        for (int t = 1; t < 8; ++t)
            for (int j = 0; j < 3; ++j) {
                num += (a.get(t + 1, j) - a.get(t, j) * 2.0 + a.get(t - 1, j)).norm();
                den += (b.get(t + 1, j) - b.get(t, j) * 2.0 + b.get(t - 1, j)).norm();
            }
        const auto r = accel_ratio(a, b);
        REQUIRE(r.has_value());
        CHECK(*r == doctest::Approx(num / den).epsilon(1e-6));
    }
}
