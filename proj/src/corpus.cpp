#include "tipsynth/corpus.hpp"

#include "tipsynth/pose.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace tipsynth {

Vec3 canonical_contact(Hand hand, int finger, int key, const KeyboardGeometry& geom) {
    const KeySpec& spec = geom.key(key);
    const double side = hand == Hand::Right ? 1.0 : -1.0;
    Vec3 p;
    p.x = (spec.is_black ? 75.0 : 35.0) + 0.5 * finger;
    p.y = spec.y_center() + side * 0.6 * (finger - 2);
    // press depths leave >1 mm of threshold margin on both key colors (and
    // past the other color's threshold depth), so median estimates from
    // jittered captures stay on the pressed side even for slots filled from
    // other-color donors
    p.z = spec.is_black ? spec.rest_z - 3.5 : -2.8;
    return p;
}

namespace {

struct PendingNote {
    double onset;
    double duration;
    int key;
    int velocity;
    int finger_value;  // 1..10
};

// nearest free finger for a key given the hand center, right hand fingers
// fan out to higher keys
int pick_finger(Hand hand, int key, int center, const std::array<double, kFingersPerHand>& busy_until,
                double onset) {
    const double offset = (key - center) / 2.0;
    const int ideal = hand == Hand::Right
                          ? std::clamp(static_cast<int>(std::lround(offset)) + 2, 0, 4)
                          : std::clamp(2 - static_cast<int>(std::lround(offset)), 0, 4);
    int best = -1;
    for (int d = 0; d < kFingersPerHand; ++d) {
        for (int sign : {1, -1}) {
            const int f = ideal + sign * d;
            if (f < 0 || f >= kFingersPerHand) continue;
            if (busy_until[static_cast<size_t>(f)] <= onset) {
                best = f;
                break;
            }
        }
        if (best >= 0) break;
    }
    return best;
}

std::vector<PendingNote> generate_hand_notes(Hand hand, double duration, int max_polyphony,
                                             double chord_prob, const SyntheticCorpusSpec& spec,
                                             RngState& rng, std::vector<double>& key_busy_until) {
    std::vector<PendingNote> notes;
    const int lo = hand == Hand::Right ? 39 : 8;
    const int hi = hand == Hand::Right ? 80 : 48;
    int center = (lo + hi) / 2;
    std::array<double, kFingersPerHand> busy_until{};
    std::vector<int> prev_keys;  // the previous event's keys, held until the next press

    double cursor = 0.3 + 0.2 * rng.uniform();
    while (cursor < duration - 0.6) {
        const double note_len = rng.uniform(spec.min_note_s, spec.max_note_s);
        center = std::clamp(center + static_cast<int>(std::lround(rng.normal() * 2.5)), lo, hi);

        int chord = 1;
        if (max_polyphony >= 2 && rng.uniform() < chord_prob) chord = 2;

        std::vector<int> keys;
        for (int c = 0; c < chord; ++c) {
            int key = -1;
            for (int attempt = 0; attempt < 8; ++attempt) {
                int cand = center + static_cast<int>(std::lround(rng.normal() * 2.0)) + 4 * c;
                cand = std::clamp(cand, 0, kNumKeys - 1);
                // a key from the previous event is still held at press depth
                // by the zero-order hold, so striking it again would merge the
                // two notes into one contact; move on
                if (std::count(prev_keys.begin(), prev_keys.end(), cand)) continue;
                // a key already sounding (either hand) cannot be restruck: the
                // fingering grid holds one finger per (frame, key)
                if (cursor < key_busy_until[static_cast<size_t>(cand)]) continue;
                if (std::count(keys.begin(), keys.end(), cand)) continue;
                if (!keys.empty() && std::abs(cand - keys.front()) > 10) continue;
                key = cand;
                break;
            }
            if (key >= 0) keys.push_back(key);
        }
        for (int key : keys) {
            const int finger = pick_finger(hand, key, center, busy_until, cursor);
            if (finger < 0) continue;
            PendingNote n;
            n.onset = cursor;
            n.duration = note_len;
            n.key = key;
            n.velocity = 40 + static_cast<int>(rng.uniform_index(60));
            n.finger_value = hand == Hand::Left ? finger + 1 : finger + 6;
            busy_until[static_cast<size_t>(finger)] = cursor + note_len + 0.02;
            key_busy_until[static_cast<size_t>(key)] = cursor + note_len + 0.05;
            notes.push_back(n);
        }
        if (!keys.empty()) prev_keys = keys;
        cursor += note_len + rng.uniform(spec.min_gap_s, spec.max_gap_s);
    }
    return notes;
}

// stage-1 style anchor formation from canonical points
void reference_tips(const Raster& raster, Hand hand, const KeyboardGeometry& geom,
                    MotionTrack& tips) {
    const int h = static_cast<int>(hand);
    const int T = tips.frames;
    const double dir = hand == Hand::Right ? 1.0 : -1.0;
    const double hover = 14.0;

    std::array<Vec3, kFingersPerHand> placement;
    for (int f = 0; f < kFingersPerHand; ++f) {
        const int key = hand == Hand::Right ? 39 + f : 39 - f;
        const KeySpec& spec = geom.key(key);
        placement[static_cast<size_t>(f)] = {spec.x_center(), spec.y_center(), spec.rest_z + hover};
    }
    for (int t = 0; t < T; ++t) {
        std::vector<int> anchors;
        for (int f = 0; f < kFingersPerHand; ++f) {
            if (raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0)
                anchors.push_back(f);
        }
        if (!anchors.empty()) {
            std::array<Vec3, kFingersPerHand> next;
            for (int a : anchors) {
                next[static_cast<size_t>(a)] = canonical_contact(
                    hand, a, raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(a)], geom);
            }
            for (int f = 0; f < kFingersPerHand; ++f) {
                if (raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0) continue;
                int anchor = anchors.front();
                for (int a : anchors)
                    if (std::abs(a - f) < std::abs(anchor - f)) anchor = a;
                Vec3 p = next[static_cast<size_t>(anchor)];
                p.y += dir * (f - anchor) * 23.5;
                p.z += hover;
                next[static_cast<size_t>(f)] = p;
            }
            placement = next;
        }
        for (int f = 0; f < kFingersPerHand; ++f) tips.set(t, f, placement[static_cast<size_t>(f)]);
    }
}

MotionTrack moving_average_track(const MotionTrack& in, int radius) {
    MotionTrack out(in.frames, in.joints);
    const int width = in.joints * 3;
    for (int t = 0; t < in.frames; ++t) {
        const int lo = std::max(0, t - radius);
        const int hi = std::min(in.frames - 1, t + radius);
        const double inv = 1.0 / (hi - lo + 1);
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int s = lo; s <= hi; ++s)
                acc += in.data[static_cast<size_t>(s) * width + static_cast<size_t>(c)];
            out.data[static_cast<size_t>(t) * width + static_cast<size_t>(c)] = static_cast<float>(acc * inv);
        }
    }
    return out;
}

Vec3 reference_wrist_offset(int region) {
    return {-55.0, 1.5 * (region - 3.5), 38.0};
}

}  // namespace

Corpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const KeyboardGeometry& geom) {
    Corpus corpus;
    RngState root(spec.seed);
    for (int pi = 0; pi < spec.pieces; ++pi) {
        RngState rng = root.fork(static_cast<uint64_t>(pi));
        CorpusPiece piece;
        piece.name = "piece_" + std::string(pi < 10 ? "0" : "") + std::to_string(pi);

        const double duration = rng.uniform(spec.min_seconds, spec.max_seconds);
        std::vector<double> key_busy_until(kNumKeys, -1.0);
        std::vector<PendingNote> all;
        for (Hand hand : {Hand::Left, Hand::Right}) {
            std::vector<PendingNote> notes = generate_hand_notes(
                hand, duration, spec.max_polyphony, spec.chord_prob, spec, rng, key_busy_until);
            all.insert(all.end(), notes.begin(), notes.end());
        }
        std::sort(all.begin(), all.end(), [](const PendingNote& a, const PendingNote& b) {
            if (a.onset != b.onset) return a.onset < b.onset;
            return a.key < b.key;
        });

        // write + reparse so the stored MIDI is the single source of timing
        std::vector<NoteEvent> raw;
        for (const PendingNote& n : all)
            raw.push_back({n.onset, n.key, n.velocity, n.duration});
        const std::vector<uint8_t> midi_bytes = write_midi(raw, {{0, 500000}});
        MidiParseResult parsed = parse_midi(midi_bytes);
        piece.notes = parsed.notes;

        piece.grid.frame_count = FrameGrid::frames_covering(duration + 0.5);
        const int T = piece.grid.frame_count;

        // fingering from the parsed notes: pending notes matched by (onset, key)
        piece.fingering = FingeringGrid(T);
        for (const PendingNote& n : all) {
            const double off = n.onset + n.duration;
            for (int t = std::max(0, static_cast<int>(std::floor(n.onset * piece.grid.fps_num /
                                                                 piece.grid.fps_den)));
                 t < T && piece.grid.frame_start(t) < off; ++t) {
                if (piece.grid.frame_end(t) > n.onset)
                    piece.fingering.set(t, n.key, static_cast<uint8_t>(n.finger_value));
            }
        }

        const Raster raster = rasterize(piece.notes, piece.grid, piece.fingering);

        for (int h = 0; h < 2; ++h) {
            const Hand hand = static_cast<Hand>(h);
            MotionTrack tips(T, kFingersPerHand);
            reference_tips(raster, hand, geom, tips);
            MotionTrack smooth_tips = moving_average_track(tips, 5);
            // presses keep their exact canonical points
            for (int t = 0; t < T; ++t) {
                for (int f = 0; f < kFingersPerHand; ++f) {
                    if (raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] >= 0)
                        smooth_tips.set(t, f, tips.get(t, f));
                }
            }

            MotionTrack wrist(T, 1);
            int region = 3;
            for (int t = 0; t < T; ++t) {
                Vec3 centroid;
                int n = 0;
                int64_t key_sum = 0;
                for (int f = 0; f < kFingersPerHand; ++f) {
                    const int key = raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)];
                    if (key >= 0) {
                        centroid += smooth_tips.get(t, f);
                        key_sum += key;
                        ++n;
                    }
                }
                if (n > 0) {
                    region = region_of(static_cast<int>(std::lround(static_cast<double>(key_sum) / n)));
                } else {
                    for (int f = 0; f < kFingersPerHand; ++f) centroid += smooth_tips.get(t, f);
                    n = kFingersPerHand;
                }
                wrist.set(t, 0, centroid / n + reference_wrist_offset(region));
            }
            wrist = moving_average_track(wrist, 8);

            MotionTrack full = rig_initialize(wrist, smooth_tips, RigConfig{});

            if (spec.noise.jitter_mm > 0.0 || spec.noise.dropout_rate > 0.0) {
                RngState noise_rng = rng.fork(1000 + static_cast<uint64_t>(h));
                for (int t = 0; t < T; ++t) {
                    for (int j = 0; j < kJointsPerHand; ++j) {
                        if (t > 0 && spec.noise.dropout_rate > 0.0 &&
                            noise_rng.uniform() < spec.noise.dropout_rate) {
                            full.set_raw(t, j, full.data.data() + full.offset(t - 1, j));
                            continue;
                        }
                        if (spec.noise.jitter_mm > 0.0) {
                            Vec3 p = full.get(t, j);
                            p.x += noise_rng.normal() * spec.noise.jitter_mm;
                            p.y += noise_rng.normal() * spec.noise.jitter_mm;
                            p.z += noise_rng.normal() * spec.noise.jitter_mm;
                            full.set(t, j, p);
                        }
                    }
                }
            }
            piece.gt_full[h] = std::move(full);
        }
        corpus.pieces.push_back(std::move(piece));
    }

    // deterministic split by index: 70/15/15 style
    const int n = static_cast<int>(corpus.pieces.size());
    const int n_train = static_cast<int>(std::floor(spec.train_ratio * n));
    const int n_val = static_cast<int>(std::floor(spec.val_ratio * n));
    for (int i = 0; i < n; ++i) {
        corpus.pieces[static_cast<size_t>(i)].split =
            i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    }
    return corpus;
}

std::vector<ManifestEntry> save_corpus(const std::string& dir, const Corpus& corpus) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<ManifestEntry> manifest;
    nlohmann::json pieces = nlohmann::json::array();
    for (const CorpusPiece& piece : corpus.pieces) {
        ManifestEntry e;
        e.name = piece.name;
        e.split = piece.split;
        e.frames = piece.grid.frame_count;
        e.midi = piece.name + ".mid";
        e.fingering = piece.name + ".fingering.csv";
        e.traj_left = piece.name + "_L.traj";
        e.traj_right = piece.name + "_R.traj";

        write_midi_file(dir + "/" + e.midi, piece.notes, {{0, 500000}});
        {
            std::ofstream f(dir + "/" + e.fingering);
            f << "frame,key,finger\n";
            for (int t = 0; t < piece.fingering.frames(); ++t)
                for (int k = 0; k < kNumKeys; ++k)
                    if (piece.fingering.at(t, k) != 0)
                        f << t << "," << k << "," << static_cast<int>(piece.fingering.at(t, k)) << "\n";
        }
        save_trajectory(dir + "/" + e.traj_left, piece.gt_full[0], Hand::Left, "GT", piece.grid);
        save_trajectory(dir + "/" + e.traj_right, piece.gt_full[1], Hand::Right, "GT", piece.grid);

        pieces.push_back({{"name", e.name},
                          {"midi", e.midi},
                          {"fingering", e.fingering},
                          {"traj_left", e.traj_left},
                          {"traj_right", e.traj_right},
                          {"split", e.split},
                          {"frames", e.frames}});
        manifest.push_back(std::move(e));
    }
    nlohmann::json j;
    j["corpus_version"] = 1;
    j["fps"] = {{"num", 60000}, {"den", 1001}};
    j["pieces"] = std::move(pieces);
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw ConfigError("cannot write manifest in " + dir);
    f << j.dump(2);

    // manifest entries carry paths relative to the manifest; make them usable
    for (ManifestEntry& e : manifest) {
        e.midi = dir + "/" + e.midi;
        e.fingering = dir + "/" + e.fingering;
        e.traj_left = dir + "/" + e.traj_left;
        e.traj_right = dir + "/" + e.traj_right;
    }
    return manifest;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open manifest: " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    const std::string dir = std::filesystem::path(path).parent_path().string();
    const std::string prefix = dir.empty() ? "" : dir + "/";
    std::vector<ManifestEntry> out;
    for (const auto& p : j.at("pieces")) {
        ManifestEntry e;
        e.name = p.at("name").get<std::string>();
        e.midi = prefix + p.at("midi").get<std::string>();
        e.fingering = prefix + p.at("fingering").get<std::string>();
        e.traj_left = prefix + p.at("traj_left").get<std::string>();
        e.traj_right = prefix + p.at("traj_right").get<std::string>();
        e.split = p.at("split").get<std::string>();
        e.frames = p.at("frames").get<int>();
        out.push_back(std::move(e));
    }
    return out;
}

LoadedPiece load_piece(const ManifestEntry& entry) {
    LoadedPiece piece;
    piece.name = entry.name;
    piece.split = entry.split;
    const MidiParseResult midi = parse_midi_file(entry.midi);
    piece.notes = midi.notes;
    piece.grid.frame_count = entry.frames;
    piece.fingering = parse_fingering_file(entry.fingering, entry.frames);
    if (piece.fingering.frames() > entry.frames)
        throw ValidationError("fingering longer than manifest frame count for " + entry.name);
    piece.raster = rasterize(piece.notes, piece.grid, piece.fingering);
    if (std::filesystem::exists(entry.traj_left) && std::filesystem::exists(entry.traj_right)) {
        piece.gt_full[0] = load_trajectory(entry.traj_left).track;
        piece.gt_full[1] = load_trajectory(entry.traj_right).track;
        piece.has_gt = true;
    }
    return piece;
}

PriorBundle build_priors_from_manifest(const std::vector<ManifestEntry>& manifest,
                                       const std::string& split, const KeyboardGeometry& geom,
                                       int64_t min_count, PriorBuildStats* stats) {
    std::vector<LoadedPiece> pieces;
    for (const ManifestEntry& e : manifest) {
        if (e.split != split) continue;
        pieces.push_back(load_piece(e));
        if (stats) stats->frames_read[e.split] += pieces.back().grid.frame_count;
        if (!pieces.back().has_gt)
            throw ValidationError("prior build needs ground-truth trajectories for " + e.name);
    }
    if (pieces.empty()) throw ValidationError("prior build: no pieces in split " + split);

    std::vector<MotionTrack> tip_tracks(pieces.size() * 2);
    std::vector<MotionTrack> wrist_tracks(pieces.size() * 2);
    std::vector<PriorObservation> obs;
    for (size_t i = 0; i < pieces.size(); ++i) {
        PriorObservation o;
        for (int h = 0; h < 2; ++h) {
            const MotionTrack& full = pieces[i].gt_full[h];
            MotionTrack tips(full.frames, kFingersPerHand);
            MotionTrack wrist(full.frames, 1);
            for (int t = 0; t < full.frames; ++t) {
                wrist.set_raw(t, 0, full.data.data() + full.offset(t, kWristJoint));
                for (int f = 0; f < kFingersPerHand; ++f)
                    tips.set_raw(t, f, full.data.data() + full.offset(t, tip_joint(f)));
            }
            tip_tracks[i * 2 + static_cast<size_t>(h)] = std::move(tips);
            wrist_tracks[i * 2 + static_cast<size_t>(h)] = std::move(wrist);
            o.tips[h] = &tip_tracks[i * 2 + static_cast<size_t>(h)];
            o.wrist[h] = &wrist_tracks[i * 2 + static_cast<size_t>(h)];
        }
        o.fingering = &pieces[i].fingering;
        obs.push_back(o);
    }

    PriorBundle bundle;
    bundle.position = interpolate_missing(build_position_prior(obs, min_count), geom);
    bundle.wrist = build_wrist_offsets(obs, geom);
    return bundle;
}

}  // namespace tipsynth
