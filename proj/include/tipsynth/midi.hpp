#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tipsynth/common.hpp"

namespace tipsynth {

struct NoteEvent {
    double onset = 0.0;     // seconds
    int key = 0;            // 0..87, MIDI pitch - 21
    int velocity = 0;       // 1..127
    double duration = 0.0;  // seconds, > 0
};

struct TempoChange {
    int64_t tick = 0;
    uint32_t usec_per_quarter = 500000;
};

struct MidiParseResult {
    std::vector<NoteEvent> notes;  // sorted by onset, then key
    std::vector<TempoChange> tempo_map;
    int ticks_per_quarter = 480;
    std::vector<std::string> warnings;
};

// Standard MIDI file formats 0 and 1. Note-on velocity 0 counts as note-off;
// dangling note-ons are closed at track end with a warning. Parse failures
// report the byte offset.
MidiParseResult parse_midi(const std::vector<uint8_t>& bytes);
MidiParseResult parse_midi_file(const std::string& path);

// Single-track format 0 writer used by the corpus generator and round-trip tests.
std::vector<uint8_t> write_midi(const std::vector<NoteEvent>& notes,
                                const std::vector<TempoChange>& tempo_map,
                                int ticks_per_quarter = 480);
void write_midi_file(const std::string& path, const std::vector<NoteEvent>& notes,
                     const std::vector<TempoChange>& tempo_map, int ticks_per_quarter = 480);

// Tick-to-seconds conversion through a tempo map (sorted by tick, tick 0
// implied at 500000 us/qn when absent).
double ticks_to_seconds(int64_t tick, const std::vector<TempoChange>& tempo_map,
                        int ticks_per_quarter);

}  // namespace tipsynth
