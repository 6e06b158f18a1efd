#include <doctest.h>

#include "tipsynth/midi.hpp"

using namespace tipsynth;

namespace {

// independent tick-to-seconds oracle: walk tick by tick through the tempo map
double tick_oracle(int64_t tick, std::vector<TempoChange> map, int tpq) {
    std::sort(map.begin(), map.end(),
              [](const TempoChange& a, const TempoChange& b) { return a.tick < b.tick; });
    double seconds = 0.0;
    uint32_t uspq = 500000;
    size_t mi = 0;
    for (int64_t t = 0; t < tick; ++t) {
        while (mi < map.size() && map[mi].tick <= t) uspq = map[mi++].usec_per_quarter;
        seconds += uspq * 1e-6 / tpq;
    }
    return seconds;
}

}  // namespace

TEST_CASE("single note round trip") {
    std::vector<NoteEvent> notes = {{0.0, 39, 80, 1.0}};  // middle C, key 39 = pitch 60
    const std::vector<uint8_t> bytes = write_midi(notes, {{0, 500000}});
    const MidiParseResult result = parse_midi(bytes);
    REQUIRE(result.notes.size() == 1);
    CHECK(result.notes[0].key == 39);
    CHECK(result.notes[0].velocity == 80);
    CHECK(result.notes[0].onset == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(result.notes[0].duration == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("empty track parses to empty list") {
    const std::vector<uint8_t> bytes = write_midi({}, {{0, 500000}});
    CHECK(parse_midi(bytes).notes.empty());
}

TEST_CASE("tempo change mid-note resolves through the tempo map") {
    // note held across a tempo change at tick 480 (1 quarter at 120 bpm)
    const int tpq = 480;
    std::vector<TempoChange> map = {{0, 500000}, {480, 250000}};
    std::vector<uint8_t> bytes;
    {
        // hand-assemble: note-on at tick 0, note-off at tick 960
        std::vector<NoteEvent> notes = {{0.0, 39, 64, /*duration*/ 0.75}};
        // onset 0 -> tick 0; offset 0.75 s = 0.5 s (480 ticks) + 0.25 s (480 ticks) -> tick 960
        bytes = write_midi(notes, map, tpq);
    }
    const MidiParseResult result = parse_midi(bytes);
    REQUIRE(result.notes.size() == 1);
    const double want = tick_oracle(960, map, tpq);
    CHECK(want == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(result.notes[0].duration == doctest::Approx(want).epsilon(1e-6));

    // oracle agreement on a dense tick sweep
    for (int64_t tick : {0, 100, 480, 481, 700, 960, 2000}) {
        CHECK(ticks_to_seconds(tick, map, tpq) == doctest::Approx(tick_oracle(tick, map, tpq)).epsilon(1e-9));
    }
}

TEST_CASE("synthesized round trip is identity up to one tick") {
    RngState rng(17);
    std::vector<NoteEvent> notes;
    double cursor = 0.1;
    for (int i = 0; i < 40; ++i) {
        NoteEvent n;
        n.onset = cursor;
        // overlapping notes on one pitch are ambiguous in SMF itself, so the
        // generator cycles keys; overlaps across keys are fine
        n.key = i % 88;
        n.velocity = 1 + static_cast<int>(rng.uniform_index(127));
        n.duration = 0.1 + rng.uniform() * 0.8;
        notes.push_back(n);
        cursor += rng.uniform() * 0.4 + 0.05;
    }
    const int tpq = 480;
    const std::vector<TempoChange> map = {{0, 500000}};
    const double tick_s = 500000e-6 / tpq;  // one-tick quantization bound
    const MidiParseResult result = parse_midi(write_midi(notes, map, tpq));
    REQUIRE(result.notes.size() == notes.size());
    for (size_t i = 0; i < notes.size(); ++i) {
        CHECK(result.notes[i].key == notes[i].key);
        CHECK(result.notes[i].velocity == notes[i].velocity);
        CHECK(std::abs(result.notes[i].onset - notes[i].onset) <= tick_s + 1e-9);
        CHECK(std::abs(result.notes[i].duration - notes[i].duration) <= 2 * tick_s + 1e-9);
    }
}

TEST_CASE("malformed input reports byte offsets") {
    std::vector<uint8_t> bytes = {'M', 'T', 'h', 'x'};
    CHECK_THROWS_AS(parse_midi(bytes), ParseError);
    try {
        parse_midi(bytes);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }

    // valid header, truncated track
    std::vector<uint8_t> ok = write_midi({{0.0, 39, 80, 1.0}}, {{0, 500000}});
    ok.resize(ok.size() - 5);
    CHECK_THROWS_AS(parse_midi(ok), ParseError);
}

TEST_CASE("dangling note-on closes at track end with warning") {
    // manual file: header + one track with note-on but no off
    const std::vector<uint8_t> bytes = {
        'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xe0,  // format 0, 1 track, 480 tpq
        'M', 'T', 'r', 'k', 0, 0, 0, 9,
        0x00, 0x90, 60, 80,              // note on, never released
        0x83, 0x60, 0xff, 0x2f, 0x00,    // delta 480, end of track
    };
    const MidiParseResult result = parse_midi(bytes);
    REQUIRE(result.notes.size() == 1);
    CHECK(result.notes[0].duration == doctest::Approx(0.5).epsilon(1e-9));
    REQUIRE(!result.warnings.empty());
    CHECK(result.warnings[0].find("dangling") != std::string::npos);
}
