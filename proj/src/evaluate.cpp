#include "tipsynth/evaluate.hpp"

#include <algorithm>
#include <map>

namespace tipsynth {

std::vector<PressEvent> detect_presses(const MotionTrack& tips, Hand hand,
                                       const KeyboardGeometry& geom,
                                       const EvaluatorConfig& config) {
    if (!tips.all_finite()) throw ValidationError("detect_presses: trajectory has non-finite values");
    std::vector<PressEvent> events;
    for (int f = 0; f < tips.joints; ++f) {
        int run_key = -1;
        int run_start = 0;
        auto flush = [&](int end_frame) {
            if (run_key >= 0 && end_frame - run_start + 1 >= config.min_frames) {
                events.push_back({run_key, run_start, end_frame, f, hand});
            }
            run_key = -1;
        };
        for (int t = 0; t < tips.frames; ++t) {
            const Vec3 p = tips.get(t, f);
            const std::optional<int> at = geom.key_at(p);
            int key = -1;
            if (at && is_pressed(p, geom.key(*at), geom.thresholds(), geom)) key = *at;
            if (key != run_key) {
                flush(t - 1);
                if (key >= 0) {
                    run_key = key;
                    run_start = t;
                }
            }
        }
        flush(tips.frames - 1);
    }
    std::sort(events.begin(), events.end(), [](const PressEvent& a, const PressEvent& b) {
        if (a.start_frame != b.start_frame) return a.start_frame < b.start_frame;
        if (a.key != b.key) return a.key < b.key;
        return a.finger < b.finger;
    });
    return events;
}

F1Scores key_contact_f1(const std::vector<PressEvent>& pred, const std::vector<NoteEvent>& gt,
                        const FrameGrid& grid, double onset_tol_ms) {
    struct Pair {
        double delta;
        size_t pi, gi;
    };
    const double tol = onset_tol_ms / 1000.0;
    std::vector<Pair> pairs;
    for (size_t pi = 0; pi < pred.size(); ++pi) {
        const double onset = grid.frame_start(pred[pi].start_frame);
        for (size_t gi = 0; gi < gt.size(); ++gi) {
            if (pred[pi].key != gt[gi].key) continue;
            const double delta = std::abs(onset - gt[gi].onset);
            if (delta <= tol) pairs.push_back({delta, pi, gi});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.delta != b.delta) return a.delta < b.delta;
        if (a.pi != b.pi) return a.pi < b.pi;
        return a.gi < b.gi;
    });
    std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
    int matched = 0;
    for (const Pair& pr : pairs) {
        if (pred_used[pr.pi] || gt_used[pr.gi]) continue;
        pred_used[pr.pi] = true;
        gt_used[pr.gi] = true;
        ++matched;
    }
    F1Scores s;
    s.matched = matched;
    s.predicted = static_cast<int>(pred.size());
    s.ground_truth = static_cast<int>(gt.size());
    s.precision = pred.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(pred.size());
    s.recall = gt.empty() ? 0.0 : static_cast<double>(matched) / static_cast<double>(gt.size());
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                          : 0.0;
    return s;
}

F1Scores frame_level_f1(const std::vector<PressEvent>& pred, const std::vector<NoteEvent>& gt,
                        const FrameGrid& grid) {
    std::map<std::pair<int, int>, int> cells;  // (frame,key) -> bit 1 pred, bit 2 gt
    for (const PressEvent& e : pred) {
        for (int t = e.start_frame; t <= e.end_frame; ++t) cells[{t, e.key}] |= 1;
    }
    for (const NoteEvent& n : gt) {
        const double off = n.onset + n.duration;
        for (int t = std::max(0, static_cast<int>(std::floor(n.onset * grid.fps_num / grid.fps_den)));
             t < grid.frame_count && grid.frame_start(t) < off; ++t) {
            if (grid.frame_end(t) > n.onset) cells[{t, n.key}] |= 2;
        }
    }
    int tp = 0, fp = 0, fn = 0;
    for (const auto& [cell, bits] : cells) {
        if (bits == 3) ++tp;
        else if (bits == 1) ++fp;
        else ++fn;
    }
    F1Scores s;
    s.matched = tp;
    s.predicted = tp + fp;
    s.ground_truth = tp + fn;
    s.precision = s.predicted > 0 ? static_cast<double>(tp) / s.predicted : 0.0;
    s.recall = s.ground_truth > 0 ? static_cast<double>(tp) / s.ground_truth : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                                          : 0.0;
    return s;
}

PositionMetrics position_metrics(const MotionTrack& pred, const MotionTrack& gt) {
    if (pred.frames != gt.frames || pred.joints != gt.joints)
        throw std::invalid_argument("position_metrics: shape mismatch");
    PositionMetrics m;
    double total = 0.0, tips = 0.0;
    int64_t tip_count = 0;
    const bool full = pred.joints == kJointsPerHand;
    for (int t = 0; t < pred.frames; ++t) {
        for (int j = 0; j < pred.joints; ++j) {
            const double d = (pred.get(t, j) - gt.get(t, j)).norm();
            total += d;
            const bool is_tip = full ? std::count(kTipJoints.begin(), kTipJoints.end(), j) > 0 : true;
            if (is_tip) {
                tips += d;
                ++tip_count;
            }
        }
    }
    const int64_t n = static_cast<int64_t>(pred.frames) * pred.joints;
    m.mpjpe_mm = n > 0 ? total / static_cast<double>(n) : 0.0;
    m.fingertip_mm = tip_count > 0 ? tips / static_cast<double>(tip_count) : 0.0;
    return m;
}

std::optional<double> accel_ratio(const MotionTrack& pred, const MotionTrack& gt) {
    if (pred.frames != gt.frames || pred.joints != gt.joints)
        throw std::invalid_argument("accel_ratio: shape mismatch");
    if (pred.frames < 3) throw std::invalid_argument("accel_ratio: needs at least 3 frames");
    double num = 0.0, den = 0.0;
    for (int t = 1; t + 1 < pred.frames; ++t) {
        for (int j = 0; j < pred.joints; ++j) {
            const Vec3 ap = pred.get(t + 1, j) - pred.get(t, j) * 2.0 + pred.get(t - 1, j);
            const Vec3 ag = gt.get(t + 1, j) - gt.get(t, j) * 2.0 + gt.get(t - 1, j);
            num += ap.norm();
            den += ag.norm();
        }
    }
    if (den == 0.0) return std::nullopt;
    return num / den;
}

}  // namespace tipsynth
