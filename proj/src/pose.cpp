#include "tipsynth/pose.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace tipsynth {

BoneTable bone_table_from_tracks(const std::vector<const MotionTrack*>& left,
                                 const std::vector<const MotionTrack*>& right,
                                 const HandGraph& graph) {
    BoneTable table;
    for (int h = 0; h < 2; ++h) {
        const auto& tracks = h == 0 ? left : right;
        for (int b = 0; b < 20; ++b) {
            const auto [parent, child] = graph.bones[static_cast<size_t>(b)];
            std::vector<double> lengths;
            for (const MotionTrack* track : tracks) {
                if (!track || track->joints != kJointsPerHand) continue;
                for (int t = 0; t < track->frames; ++t) {
                    lengths.push_back((track->get(t, child) - track->get(t, parent)).norm());
                }
            }
            if (lengths.empty()) throw ValidationError("bone table: no 21-joint tracks supplied");
            std::sort(lengths.begin(), lengths.end());
            table.lengths[static_cast<size_t>(h)][static_cast<size_t>(b)] =
                lengths[lengths.size() / 2];
        }
    }
    return table;
}

std::string bone_table_to_json(const BoneTable& table) {
    nlohmann::json j;
    j["bone_table_version"] = 1;
    for (int h = 0; h < 2; ++h) {
        nlohmann::json arr = nlohmann::json::array();
        for (double v : table.lengths[static_cast<size_t>(h)]) arr.push_back(v);
        j[h == 0 ? "L" : "R"] = std::move(arr);
    }
    return j.dump(2);
}

BoneTable bone_table_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    BoneTable table;
    for (int h = 0; h < 2; ++h) {
        const auto& arr = j.at(h == 0 ? "L" : "R");
        for (size_t b = 0; b < 20; ++b) table.lengths[static_cast<size_t>(h)][b] = arr.at(b).get<double>();
    }
    return table;
}

MotionTrack rig_initialize(const MotionTrack& wrist, const MotionTrack& tips,
                           const RigConfig& rig) {
    const int T = wrist.frames;
    if (tips.frames != T) throw ShapeError("rig_initialize: wrist/tips length mismatch");
    MotionTrack pose(T, kJointsPerHand);
    for (int t = 0; t < T; ++t) {
        const Vec3 w = wrist.get(t, 0);
        pose.set(t, kWristJoint, w);
        for (int f = 0; f < kFingersPerHand; ++f) {
            const Vec3 tip = tips.get(t, f);
            const Vec3 seg = tip - w;
            for (int part = 0; part < 3; ++part) {
                Vec3 p = w + seg * rig.fractions[static_cast<size_t>(part)];
                p.z += rig.arch_mm;
                pose.set(t, finger_joint(f, part), p);
            }
            pose.set(t, tip_joint(f), tip);
        }
    }
    return pose;
}

Tensor pose_film_features(const WindowData& window, const KeyboardGeometry& geom) {
    Tensor out({window.frames, kPoseCondDim});
    for (int t = 0; t < window.frames; ++t) {
        float* row = out.data.data() + static_cast<size_t>(t) * kPoseCondDim;
        for (int h = 0; h < 2; ++h) {
            for (int f = 0; f < kFingersPerHand; ++f) {
                const int key = window.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)];
                if (key < 0) continue;
                row[h * kFingersPerHand + f] = 1.0f;
                row[2 * kFingersPerHand + h * kFingersPerHand + f] =
                    static_cast<float>(geom.key(key).y_center() / geom.span_y());
            }
        }
    }
    return out;
}

Tensor pose_input_features(const MotionTrack& rig_pose) {
    const int T = rig_pose.frames;
    Tensor out({T, kJointsPerHand, 3 + kJointsPerHand});
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < kJointsPerHand; ++j) {
            float* row = out.data.data() +
                         (static_cast<size_t>(t) * kJointsPerHand + static_cast<size_t>(j)) *
                             (3 + kJointsPerHand);
            const size_t src = rig_pose.offset(t, j);
            // positions scaled to keep early activations near unit range
            row[0] = rig_pose.data[src] * 0.01f;
            row[1] = rig_pose.data[src + 1] * 0.01f;
            row[2] = rig_pose.data[src + 2] * 0.01f;
            row[3 + j] = 1.0f;
        }
    }
    return out;
}

MotionTrack stgcn_synthesize(const MotionTrack& wrist, const MotionTrack& tips,
                             const WindowData& window, const ParamStore& params,
                             const StgcnUNet& net, const HandGraph& graph,
                             const KeyboardGeometry& geom, const RigConfig& rig) {
    const int T = wrist.frames;
    MotionTrack pose = rig_initialize(wrist, tips, rig);

    Tape<float> tape;
    ParamsView<float> view = ParamsView<float>::upload(tape, params, false);
    Val<float> x = tape.constant(pose_input_features(pose));
    Val<float> cond = tape.constant(pose_film_features(window, geom));
    Val<float> residual = net.apply(view, tape, x, cond, graph);
    if (!residual.v().all_finite())
        throw ValidationError("stgcn_synthesize: non-finite network output");

    // only intermediate joints receive the prediction
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int part = 0; part < 3; ++part) {
                const int j = finger_joint(f, part);
                const size_t o = pose.offset(t, j);
                const float* res =
                    residual.v().data.data() +
                    (static_cast<size_t>(t) * kJointsPerHand + static_cast<size_t>(j)) * 3;
                pose.data[o] += res[0];
                pose.data[o + 1] += res[1];
                pose.data[o + 2] += res[2];
            }
        }
    }
    // anchors copied through verbatim
    for (int t = 0; t < T; ++t) {
        pose.set_raw(t, kWristJoint, wrist.data.data() + wrist.offset(t, 0));
        for (int f = 0; f < kFingersPerHand; ++f) {
            pose.set_raw(t, tip_joint(f), tips.data.data() + tips.offset(t, f));
        }
    }
    return pose;
}

double pose_loss_value(const MotionTrack& pred, const MotionTrack& gt, const HandGraph& graph,
                       const BoneTable& bones, Hand hand, const PoseLossWeights& w,
                       const BioLimits& limits) {
    if (pred.frames != gt.frames || pred.joints != kJointsPerHand || gt.joints != kJointsPerHand)
        throw ShapeError("pose_loss: expects matching [T,21,3] tracks");
    Tape<double> tape;
    const Shape shape{pred.frames, kJointsPerHand, 3};
    Val<double> p = tape.constant(tensor_cast<double>(Tensor(shape, pred.data)));
    Val<double> g = tape.constant(tensor_cast<double>(Tensor(shape, gt.data)));
    return pose_loss_graph(tape, p, g, graph, bones, hand, w, limits).v().data[0];
}

MotionTrack midi_refine_pose(const MotionTrack& pose, const WindowData& window, Hand hand,
                             const ParamStore& params, const PoseRefineNet& net,
                             const HandGraph& graph, const MidiFeatureTrack* midi,
                             const KeyboardGeometry& geom, int smooth_radius,
                             double* mean_residual_mm) {
    const int T = pose.frames;
    const int64_t want_cond = kPoseCondDim + (midi != nullptr ? midi->dim : 0);
    if (net.cfg.midi_dim > 0 && net.cfg.midi_dim != want_cond)
        throw ConfigError("midi_refine_pose: conditioning width mismatch");

    Tape<float> tape;
    ParamsView<float> view = ParamsView<float>::upload(tape, params, false);
    Val<float> x = tape.constant(pose_input_features(pose));
    Val<float> cond{};
    if (net.cfg.midi_dim > 0) {
        // fingering context plus the MIDI features when present
        cond = tape.constant(pose_film_features(window, geom));
        if (midi != nullptr) cond = concat_axis<float>({cond, tape.constant(midi->rows(0, T))}, 1);
    }
    Val<float> residual = net.apply(view, tape, x, cond, graph);
    if (!residual.v().all_finite())
        throw ValidationError("midi_refine_pose: non-finite network output");

    MotionTrack refined(T, kJointsPerHand);
    double res_accum = 0.0;
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < kJointsPerHand; ++j) {
            const size_t o = refined.offset(t, j);
            const float* res = residual.v().data.data() + o;
            refined.data[o] = pose.data[o] + res[0];
            refined.data[o + 1] = pose.data[o + 1] + res[1];
            refined.data[o + 2] = pose.data[o + 2] + res[2];
            res_accum += Vec3{res[0], res[1], res[2]}.norm();
        }
    }
    if (mean_residual_mm != nullptr)
        *mean_residual_mm = res_accum / (static_cast<double>(T) * kJointsPerHand);

    MotionTrack smoothed = smooth_trajectory(refined, nullptr, smooth_radius, nullptr, nullptr);

    // endpoint constraints: pressed tip Y/Z and the temporal endpoints revert
    const int h = static_cast<int>(hand);
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            if (window.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] < 0) continue;
            const size_t o = smoothed.offset(t, tip_joint(f));
            smoothed.data[o + 1] = refined.data[o + 1];
            smoothed.data[o + 2] = refined.data[o + 2];
        }
    }
    if (T > 0) {
        for (int j = 0; j < kJointsPerHand; ++j) {
            smoothed.set_raw(0, j, refined.data.data() + refined.offset(0, j));
            smoothed.set_raw(T - 1, j, refined.data.data() + refined.offset(T - 1, j));
        }
    }
    return smoothed;
}

}  // namespace tipsynth
