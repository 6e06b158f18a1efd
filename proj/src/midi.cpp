#include "tipsynth/midi.hpp"

#include <algorithm>
#include <fstream>

namespace tipsynth {

namespace {

struct Cursor {
    const std::vector<uint8_t>* bytes;
    size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("midi parse error at byte " + std::to_string(pos) + ": " + what);
    }
    uint8_t u8() {
        if (pos >= bytes->size()) fail("unexpected end of file");
        return (*bytes)[pos++];
    }
    uint8_t peek() const {
        if (pos >= bytes->size()) throw ParseError("midi parse error at byte " + std::to_string(pos) + ": unexpected end of file");
        return (*bytes)[pos];
    }
    uint32_t u16() {
        uint32_t a = u8(), b = u8();
        return (a << 8) | b;
    }
    uint32_t u32() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
        return v;
    }
    uint32_t vlq() {
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            uint8_t b = u8();
            v = (v << 7) | (b & 0x7fu);
            if (!(b & 0x80u)) return v;
        }
        fail("variable-length quantity longer than 4 bytes");
    }
    void skip(size_t n) {
        if (pos + n > bytes->size()) fail("chunk runs past end of file");
        pos += n;
    }
};

struct RawNote {
    int64_t on_tick;
    int64_t off_tick;
    int pitch;
    int velocity;
};

void merge_tempo(std::vector<TempoChange>& map, int64_t tick, uint32_t uspq) {
    map.push_back({tick, uspq});
}

}  // namespace

double ticks_to_seconds(int64_t tick, const std::vector<TempoChange>& tempo_map,
                        int ticks_per_quarter) {
    double seconds = 0.0;
    int64_t prev_tick = 0;
    uint32_t uspq = 500000;
    for (const TempoChange& tc : tempo_map) {
        if (tc.tick >= tick) break;
        if (tc.tick > prev_tick) {
            seconds += static_cast<double>(tc.tick - prev_tick) * uspq * 1e-6 / ticks_per_quarter;
            prev_tick = tc.tick;
        }
        uspq = tc.usec_per_quarter;
    }
    seconds += static_cast<double>(tick - prev_tick) * uspq * 1e-6 / ticks_per_quarter;
    return seconds;
}

MidiParseResult parse_midi(const std::vector<uint8_t>& bytes) {
    Cursor c{&bytes};
    if (bytes.size() < 14) c.fail("file too short for SMF header");
    if (c.u32() != 0x4d546864u) c.fail("missing MThd magic");
    const uint32_t header_len = c.u32();
    if (header_len < 6) c.fail("header chunk too short");
    const uint32_t format = c.u16();
    const uint32_t ntracks = c.u16();
    const uint32_t division = c.u16();
    if (format > 1) c.fail("unsupported SMF format " + std::to_string(format));
    if (division & 0x8000u) c.fail("SMPTE division not supported");
    if (division == 0) c.fail("zero ticks-per-quarter division");
    c.skip(header_len - 6);

    MidiParseResult result;
    result.ticks_per_quarter = static_cast<int>(division);

    std::vector<RawNote> raw;
    for (uint32_t t = 0; t < ntracks; ++t) {
        if (c.u32() != 0x4d54726bu) c.fail("missing MTrk magic for track " + std::to_string(t));
        const uint32_t track_len = c.u32();
        const size_t track_end = c.pos + track_len;
        if (track_end > bytes.size()) c.fail("track length exceeds file size");

        int64_t tick = 0;
        uint8_t running_status = 0;
        // pitch -> (tick, velocity) of the open note
        std::vector<std::pair<int64_t, int>> open(128, {-1, 0});

        while (c.pos < track_end) {
            tick += c.vlq();
            uint8_t status = c.peek();
            if (status & 0x80u) {
                c.u8();
                if (status < 0xf0u) running_status = status;
            } else {
                if (running_status == 0) c.fail("data byte without running status");
                status = running_status;
            }

            if (status == 0xff) {  // meta
                const uint8_t type = c.u8();
                const uint32_t len = c.vlq();
                if (type == 0x51) {
                    if (len != 3) c.fail("tempo meta event with bad length");
                    uint32_t uspq = (static_cast<uint32_t>(c.u8()) << 16) |
                                    (static_cast<uint32_t>(c.u8()) << 8) | c.u8();
                    merge_tempo(result.tempo_map, tick, uspq);
                } else {
                    c.skip(len);
                }
                continue;
            }
            if (status == 0xf0 || status == 0xf7) {  // sysex
                c.skip(c.vlq());
                continue;
            }

            const uint8_t kind = status & 0xf0u;
            switch (kind) {
                case 0x80:
                case 0x90: {
                    const int pitch = c.u8() & 0x7f;
                    const int vel = c.u8() & 0x7f;
                    const bool is_on = kind == 0x90 && vel > 0;
                    if (is_on) {
                        if (open[pitch].first >= 0) {
                            // retrigger: close the previous note at this tick
                            raw.push_back({open[pitch].first, tick, pitch, open[pitch].second});
                        }
                        open[pitch] = {tick, vel};
                    } else {
                        if (open[pitch].first >= 0) {
                            raw.push_back({open[pitch].first, tick, pitch, open[pitch].second});
                            open[pitch] = {-1, 0};
                        }
                    }
                    break;
                }
                case 0xa0:
                case 0xb0:
                case 0xe0:
                    c.skip(2);
                    break;
                case 0xc0:
                case 0xd0:
                    c.skip(1);
                    break;
                default:
                    c.fail("unknown status byte");
            }
        }
        if (c.pos != track_end) c.fail("event ran past declared track length");

        for (int pitch = 0; pitch < 128; ++pitch) {
            if (open[pitch].first >= 0) {
                result.warnings.push_back("dangling note-on for pitch " + std::to_string(pitch) +
                                          " closed at track end");
                raw.push_back({open[pitch].first, tick, pitch, open[pitch].second});
            }
        }
    }

    std::sort(result.tempo_map.begin(), result.tempo_map.end(),
              [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });

    for (const RawNote& rn : raw) {
        const int key = rn.pitch - 21;
        if (key < 0 || key >= kNumKeys) {
            result.warnings.push_back("pitch " + std::to_string(rn.pitch) +
                                      " outside the 88-key range, dropped");
            continue;
        }
        NoteEvent ev;
        ev.onset = ticks_to_seconds(rn.on_tick, result.tempo_map, result.ticks_per_quarter);
        const double off = ticks_to_seconds(rn.off_tick, result.tempo_map, result.ticks_per_quarter);
        ev.duration = off - ev.onset;
        if (ev.duration <= 0.0) continue;  // zero-length after quantization
        ev.key = key;
        ev.velocity = rn.velocity;
        result.notes.push_back(ev);
    }
    std::sort(result.notes.begin(), result.notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        if (a.onset != b.onset) return a.onset < b.onset;
        return a.key < b.key;
    });
    return result;
}

MidiParseResult parse_midi_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open midi file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_midi(bytes);
}

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_u16(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void put_vlq(std::vector<uint8_t>& out, int64_t v) {
    uint8_t stack[5];
    int n = 0;
    do {
        stack[n++] = static_cast<uint8_t>(v & 0x7f);
        v >>= 7;
    } while (v > 0);
    while (n > 1) out.push_back(stack[--n] | 0x80u);
    out.push_back(stack[0]);
}

// invert ticks_to_seconds for monotone tempo maps (nearest tick)
int64_t seconds_to_ticks(double seconds, const std::vector<TempoChange>& map, int tpq) {
    double t = 0.0;
    int64_t prev_tick = 0;
    uint32_t uspq = 500000;
    for (const TempoChange& tc : map) {
        if (tc.tick > prev_tick) {
            const double span = static_cast<double>(tc.tick - prev_tick) * uspq * 1e-6 / tpq;
            if (t + span >= seconds) break;
            t += span;
            prev_tick = tc.tick;
        }
        uspq = tc.usec_per_quarter;
    }
    const double remain = seconds - t;
    return prev_tick + static_cast<int64_t>(std::llround(remain * 1e6 * tpq / uspq));
}

}  // namespace

std::vector<uint8_t> write_midi(const std::vector<NoteEvent>& notes,
                                const std::vector<TempoChange>& tempo_map, int ticks_per_quarter) {
    std::vector<TempoChange> map = tempo_map;
    std::sort(map.begin(), map.end(),
              [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });

    struct Msg {
        int64_t tick;
        int order;  // tempo=0, off=1, on=2 at equal ticks
        std::vector<uint8_t> payload;
    };
    std::vector<Msg> msgs;
    for (const TempoChange& tc : map) {
        Msg m{tc.tick, 0, {0xff, 0x51, 0x03, static_cast<uint8_t>(tc.usec_per_quarter >> 16),
                           static_cast<uint8_t>(tc.usec_per_quarter >> 8),
                           static_cast<uint8_t>(tc.usec_per_quarter)}};
        msgs.push_back(std::move(m));
    }
    for (const NoteEvent& ev : notes) {
        const int pitch = ev.key + 21;
        const int64_t on = seconds_to_ticks(ev.onset, map, ticks_per_quarter);
        int64_t off = seconds_to_ticks(ev.onset + ev.duration, map, ticks_per_quarter);
        if (off <= on) off = on + 1;
        msgs.push_back({on, 2, {0x90, static_cast<uint8_t>(pitch),
                                static_cast<uint8_t>(std::clamp(ev.velocity, 1, 127))}});
        msgs.push_back({off, 1, {0x80, static_cast<uint8_t>(pitch), 0x40}});
    }
    std::stable_sort(msgs.begin(), msgs.end(), [](const Msg& a, const Msg& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        return a.order < b.order;
    });

    std::vector<uint8_t> track;
    int64_t prev = 0;
    for (const Msg& m : msgs) {
        put_vlq(track, m.tick - prev);
        prev = m.tick;
        track.insert(track.end(), m.payload.begin(), m.payload.end());
    }
    put_vlq(track, 0);
    track.insert(track.end(), {0xff, 0x2f, 0x00});

    std::vector<uint8_t> out;
    put_u32(out, 0x4d546864u);
    put_u32(out, 6);
    put_u16(out, 0);  // format 0
    put_u16(out, 1);
    put_u16(out, static_cast<uint32_t>(ticks_per_quarter));
    put_u32(out, 0x4d54726bu);
    put_u32(out, static_cast<uint32_t>(track.size()));
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

void write_midi_file(const std::string& path, const std::vector<NoteEvent>& notes,
                     const std::vector<TempoChange>& tempo_map, int ticks_per_quarter) {
    const std::vector<uint8_t> bytes = write_midi(notes, tempo_map, ticks_per_quarter);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write midi file: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tipsynth
