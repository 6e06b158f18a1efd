#include "tipsynth/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tipsynth {

int FrameGrid::frames_covering(double seconds) {
    if (seconds <= 0.0) return 1;
    const double frames = seconds * 60000.0 / 1001.0;
    const int n = static_cast<int>(std::ceil(frames));
    return std::max(1, n);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

FingeringGrid parse_fingering(const std::string& text, int min_frames) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    struct Row {
        int frame, key, finger, line;
    };
    std::vector<Row> rows;
    std::vector<std::string> bad;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line_no == 1 && line.rfind("frame", 0) == 0) continue;  // header
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 3) {
            bad.push_back("line " + std::to_string(line_no) + ": expected 3 columns");
            continue;
        }
        try {
            Row r{std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), line_no};
            if (r.frame < 0) bad.push_back("line " + std::to_string(line_no) + ": negative frame");
            else if (r.key < 0 || r.key >= kNumKeys)
                bad.push_back("line " + std::to_string(line_no) + ": key out of range");
            else if (r.finger < 0 || r.finger > 10)
                bad.push_back("line " + std::to_string(line_no) + ": finger out of 0..10");
            else if (r.finger > 0)
                rows.push_back(r);
        } catch (const std::exception&) {
            bad.push_back("line " + std::to_string(line_no) + ": not an integer row");
        }
    }

    int frames = min_frames;
    for (const Row& r : rows) frames = std::max(frames, r.frame + 1);
    FingeringGrid grid(std::max(frames, min_frames));

    // (frame, finger value) -> key, to catch one finger on two keys
    std::vector<std::pair<int64_t, int>> seen;
    for (const Row& r : rows) {
        seen.push_back({static_cast<int64_t>(r.frame) * 16 + r.finger, r.key});
    }
    std::sort(seen.begin(), seen.end());
    for (size_t i = 1; i < seen.size(); ++i) {
        if (seen[i].first == seen[i - 1].first && seen[i].second != seen[i - 1].second) {
            const int frame = static_cast<int>(seen[i].first / 16);
            const int finger = static_cast<int>(seen[i].first % 16);
            bad.push_back("frame " + std::to_string(frame) + ": finger " + std::to_string(finger) +
                          " assigned to keys " + std::to_string(seen[i - 1].second) + " and " +
                          std::to_string(seen[i].second));
        }
    }
    if (!bad.empty()) {
        std::string msg = "fingering validation failed:";
        for (const std::string& b : bad) msg += "\n  " + b;
        throw ValidationError(msg);
    }

    for (const Row& r : rows) grid.set(r.frame, r.key, static_cast<uint8_t>(r.finger));
    return grid;
}

FingeringGrid parse_fingering_file(const std::string& path, int min_frames) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open fingering file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_fingering(ss.str(), min_frames);
}

std::vector<GestureBoundary> parse_gesture_boundaries(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<GestureBoundary> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line_no == 1 && line.rfind("start_frame", 0) == 0) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != 3) throw ParseError("gesture csv line " + std::to_string(line_no) + ": expected 3 columns");
        GestureBoundary g{std::stoi(cells[0]), std::stoi(cells[1]), hand_from_name(cells[2])};
        if (g.end_frame < g.start_frame)
            throw ValidationError("gesture csv line " + std::to_string(line_no) + ": end before start");
        out.push_back(g);
    }
    return out;
}

Raster rasterize(const std::vector<NoteEvent>& events, const FrameGrid& grid,
                 const FingeringGrid& fingering) {
    if (fingering.frames() != grid.frame_count) {
        throw ValidationError("fingering frame count " + std::to_string(fingering.frames()) +
                              " does not match grid " + std::to_string(grid.frame_count));
    }
    const int T = grid.frame_count;
    Raster r;
    r.press[0] = PressMask(T);
    r.press[1] = PressMask(T);
    r.active.assign(static_cast<size_t>(T), {});
    for (int h = 0; h < 2; ++h) {
        r.pressed_key[h].assign(static_cast<size_t>(T), std::vector<int>(kFingersPerHand, -1));
    }

    for (int t = 0; t < T; ++t) {
        for (int k = 0; k < kNumKeys; ++k) {
            const int v = fingering.at(t, k);
            if (v == 0) continue;
            const int h = static_cast<int>(FingeringGrid::hand_of_value(v));
            const int f = FingeringGrid::finger_of_value(v);
            r.press[h].set(t, f, true);
            r.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)] = k;
        }
    }

    // A note is active at frame i iff [onset, onset+duration) intersects the
    // frame interval [start, end).
    for (const NoteEvent& ev : events) {
        const double off = ev.onset + ev.duration;
        int first = static_cast<int>(std::floor(ev.onset * grid.fps_num / grid.fps_den));
        first = std::max(0, first);
        for (int t = first; t < T; ++t) {
            if (grid.frame_start(t) >= off) break;
            if (grid.frame_end(t) > ev.onset && grid.frame_start(t) < off) {
                r.active[static_cast<size_t>(t)].push_back({ev.key, ev.velocity});
            }
        }
    }
    for (auto& frame : r.active) {
        std::sort(frame.begin(), frame.end(),
                  [](const ActiveNote& a, const ActiveNote& b) { return a.key < b.key; });
    }
    return r;
}

std::vector<Window> make_windows(int frame_count) {
    if (frame_count < 1) throw ValidationError("make_windows: frame count must be >= 1");
    std::vector<Window> out;
    if (frame_count <= kWindowFrames) {
        out.push_back({0, kWindowFrames, frame_count});
        return out;
    }
    for (int start = 0; start + kWindowFrames < frame_count; start += kWindowStride) {
        out.push_back({start, kWindowFrames, kWindowFrames});
    }
    const int tail = frame_count - kWindowFrames;
    if (out.empty() || out.back().start != tail) out.push_back({tail, kWindowFrames, kWindowFrames});
    return out;
}

std::string raster_to_json(const Raster& raster, const FrameGrid& grid) {
    nlohmann::json j;
    j["frames"] = grid.frame_count;
    j["fps"] = {{"num", grid.fps_num}, {"den", grid.fps_den}};
    for (int h = 0; h < 2; ++h) {
        nlohmann::json rows = nlohmann::json::array();
        for (int t = 0; t < grid.frame_count; ++t) {
            nlohmann::json fingers = nlohmann::json::array();
            for (int f = 0; f < kFingersPerHand; ++f)
                fingers.push_back(raster.pressed_key[h][static_cast<size_t>(t)][static_cast<size_t>(f)]);
            rows.push_back(fingers);
        }
        j[h == 0 ? "pressed_key_left" : "pressed_key_right"] = std::move(rows);
    }
    nlohmann::json act = nlohmann::json::array();
    for (const auto& frame : raster.active) {
        nlohmann::json keys = nlohmann::json::array();
        for (const ActiveNote& n : frame) keys.push_back({{"key", n.key}, {"velocity", n.velocity}});
        act.push_back(std::move(keys));
    }
    j["active"] = std::move(act);
    return j.dump();
}

}  // namespace tipsynth
