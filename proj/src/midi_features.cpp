#include "tipsynth/midi_features.hpp"

#include <algorithm>

namespace tipsynth {

Tensor MidiFeatureTrack::rows(int start, int count) const {
    Tensor out({count, dim});
    std::copy_n(features.data.data() + static_cast<size_t>(start) * static_cast<size_t>(dim),
                static_cast<size_t>(count) * static_cast<size_t>(dim), out.data.data());
    return out;
}

MidiFeatureTrack midi_features(const std::vector<NoteEvent>& events, const FrameGrid& grid,
                               const MidiFeatureConfig& config) {
    const int T = grid.frame_count;
    const int64_t F = config.dim();
    MidiFeatureTrack track;
    track.frames = T;
    track.dim = F;
    track.features = Tensor({T, F});

    std::array<std::vector<double>, kNumKeys> onsets;
    std::vector<double> all_onsets;
    for (const NoteEvent& ev : events) {
        onsets[static_cast<size_t>(ev.key)].push_back(ev.onset);
        all_onsets.push_back(ev.onset);
    }
    for (auto& v : onsets) std::sort(v.begin(), v.end());
    std::sort(all_onsets.begin(), all_onsets.end());

    const double tau = config.tau_onset;
    const double tau_rel = config.tau_release;

    for (int t = 0; t < T; ++t) {
        const double time = grid.frame_start(t);
        float* row = track.features.data.data() + static_cast<size_t>(t) * static_cast<size_t>(F);

        int polyphony = 0, poly_low = 0, poly_high = 0, sustained = 0;
        double vel_sum = 0.0, vel_max = 0.0;
        for (const NoteEvent& ev : events) {
            const double off = ev.onset + ev.duration;
            const bool active = ev.onset <= time && time < off;
            if (active) {
                row[ev.key] = 1.0f;
                row[kNumKeys + ev.key] = static_cast<float>(ev.velocity / 127.0);
                row[4 * kNumKeys + ev.key] =
                    static_cast<float>(std::exp(-(off - time) / tau_rel));
                ++polyphony;
                (ev.key < 44 ? poly_low : poly_high)++;
                vel_sum += ev.velocity;
                vel_max = std::max(vel_max, static_cast<double>(ev.velocity));
                if (time - ev.onset >= 0.5) ++sustained;
            }
        }

        for (int k = 0; k < kNumKeys; ++k) {
            const std::vector<double>& ko = onsets[static_cast<size_t>(k)];
            if (ko.empty()) continue;
            // most recent onset at or before `time`
            auto next = std::upper_bound(ko.begin(), ko.end(), time);
            if (next != ko.begin()) {
                const double last = *(next - 1);
                row[2 * kNumKeys + k] = static_cast<float>(std::exp(-(time - last) / tau));
            }
            if (next != ko.end()) {
                row[3 * kNumKeys + k] = static_cast<float>(std::exp(-(*next - time) / tau));
            }
        }

        float* g = row + 5 * kNumKeys;
        g[0] = static_cast<float>(polyphony / 10.0);
        g[1] = static_cast<float>(poly_low / 10.0);
        g[2] = static_cast<float>(poly_high / 10.0);
        g[3] = polyphony > 0 ? static_cast<float>(vel_sum / polyphony / 127.0) : 0.0f;
        g[4] = static_cast<float>(vel_max / 127.0);

        auto next_any = std::upper_bound(all_onsets.begin(), all_onsets.end(), time);
        if (next_any != all_onsets.begin())
            g[5] = static_cast<float>(std::exp(-(time - *(next_any - 1)) / tau));
        if (next_any != all_onsets.end())
            g[6] = static_cast<float>(std::exp(-(*next_any - time) / tau));
        if (next_any - all_onsets.begin() >= 2) {
            const double ioi = *(next_any - 1) - *(next_any - 2);
            g[7] = static_cast<float>(std::min(ioi, 2.0) / 2.0);
        }
        if (next_any != all_onsets.end() && next_any != all_onsets.begin()) {
            const double ioi = *next_any - *(next_any - 1);
            g[8] = static_cast<float>(std::min(ioi, 2.0) / 2.0);
        }
        const auto past_lo = std::lower_bound(all_onsets.begin(), all_onsets.end(), time - 1.0);
        g[9] = static_cast<float>(static_cast<double>(next_any - past_lo) / 10.0);
        const auto fut_hi = std::upper_bound(all_onsets.begin(), all_onsets.end(), time + 1.0);
        g[10] = static_cast<float>(static_cast<double>(fut_hi - next_any) / 10.0);
        g[11] = static_cast<float>(sustained / 10.0);
    }
    return track;
}

}  // namespace tipsynth
