#include "tipsynth/stitch.hpp"

#include <algorithm>
#include <set>

namespace tipsynth {

namespace {

// strictly positive raised cosine; adjacent 50%-overlap copies sum to 1
double window_weight(int j, int length) {
    return 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * (j + 0.5) / length);
}

struct Biquad {
    double b0, b1, b2, a1, a2;

    void apply(std::vector<double>& x) const {
        if (x.empty()) return;
        // start at the DC steady state of the first sample so constant
        // signals pass through without a startup transient
        double z1 = (b1 + b2 - a1 - a2) * x[0];
        double z2 = (b2 - a2) * x[0];
        for (double& v : x) {
            const double in = v;
            const double out = b0 * in + z1;
            z1 = b1 * in - a1 * out + z2;
            z2 = b2 * in - a2 * out;
            v = out;
        }
    }
};

Biquad lowpass_section(double cutoff_hz, double fs, double q) {
    const double w0 = 2.0 * 3.14159265358979323846 * cutoff_hz / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad s;
    s.b0 = (1.0 - cw) / 2.0 / a0;
    s.b1 = (1.0 - cw) / a0;
    s.b2 = s.b0;
    s.a1 = -2.0 * cw / a0;
    s.a2 = (1.0 - alpha) / a0;
    return s;
}

}  // namespace

std::vector<double> butterworth_filtfilt(const std::vector<double>& signal, double cutoff_hz,
                                         double fs) {
    if (signal.empty()) return {};
    // 4th-order Butterworth as two cascaded biquads (Q from the pole angles)
    const Biquad s1 = lowpass_section(cutoff_hz, fs, 0.54119610);
    const Biquad s2 = lowpass_section(cutoff_hz, fs, 1.30656296);

    const size_t n = signal.size();
    const size_t pad = std::min(n - 1, static_cast<size_t>(3.0 * fs / cutoff_hz));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (size_t i = pad; i >= 1; --i) ext.push_back(2.0 * signal[0] - signal[i]);
    ext.insert(ext.end(), signal.begin(), signal.end());
    for (size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

    s1.apply(ext);
    s2.apply(ext);
    std::reverse(ext.begin(), ext.end());
    s1.apply(ext);
    s2.apply(ext);
    std::reverse(ext.begin(), ext.end());

    return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                               ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<std::vector<double>> stitch_weights(const std::vector<Window>& windows,
                                                int total_frames) {
    std::vector<std::vector<double>> weights(windows.size());
    std::vector<double> sums(static_cast<size_t>(total_frames), 0.0);
    for (size_t i = 0; i < windows.size(); ++i) {
        weights[i].assign(static_cast<size_t>(windows[i].valid_length), 0.0);
        for (int j = 0; j < windows[i].valid_length; ++j) {
            const int t = windows[i].start + j;
            if (t >= total_frames) break;
            const double w = window_weight(j, windows[i].length);
            weights[i][static_cast<size_t>(j)] = w;
            sums[static_cast<size_t>(t)] += w;
        }
    }
    for (size_t i = 0; i < windows.size(); ++i) {
        for (int j = 0; j < windows[i].valid_length; ++j) {
            const int t = windows[i].start + j;
            if (t >= total_frames) break;
            weights[i][static_cast<size_t>(j)] /= sums[static_cast<size_t>(t)];
        }
    }
    return weights;
}

MotionTrack stitch_windows(const std::vector<MotionTrack>& outputs,
                           const std::vector<Window>& windows, int total_frames,
                           const StitchConfig& config) {
    if (outputs.size() != windows.size() || windows.empty())
        throw ValidationError("stitch: window/output count mismatch");
    for (size_t i = 0; i < windows.size(); ++i) {
        if (outputs[i].frames != windows[i].valid_length)
            throw ValidationError("stitch: output length does not match window " + std::to_string(i));
    }
    if (windows[0].start != 0) throw ValidationError("stitch: first window must start at 0");
    for (size_t i = 1; i < windows.size(); ++i) {
        const bool regular = windows[i].start == windows[i - 1].start + kWindowStride;
        const bool tail = i + 1 == windows.size() && windows[i].start + windows[i].length == total_frames;
        if (!(regular || tail))
            throw ValidationError("stitch: window starts inconsistent with the stride");
    }

    const int joints = outputs[0].joints;
    MotionTrack out(total_frames, joints);

    if (windows.size() == 1) {
        // bit-exact passthrough (covers the padded short-piece case)
        std::copy_n(outputs[0].data.data(),
                    static_cast<size_t>(windows[0].valid_length) * static_cast<size_t>(joints) * 3,
                    out.data.data());
        return out;
    }

    const std::vector<std::vector<double>> weights = stitch_weights(windows, total_frames);
    const int width = joints * 3;
    for (int t = 0; t < total_frames; ++t) {
        int base = -1;
        for (size_t i = 0; i < windows.size(); ++i) {
            const int j = t - windows[i].start;
            if (j >= 0 && j < windows[i].valid_length) {
                base = static_cast<int>(i);
                break;
            }
        }
        if (base < 0) throw ValidationError("stitch: frame not covered by any window");
        const int jb = t - windows[static_cast<size_t>(base)].start;
        for (int c = 0; c < width; ++c) {
            const float vb =
                outputs[static_cast<size_t>(base)].data[static_cast<size_t>(jb) * width + static_cast<size_t>(c)];
            // base + weighted deviations: equal inputs pass through unchanged
            double acc = vb;
            for (size_t i = static_cast<size_t>(base) + 1; i < windows.size(); ++i) {
                const int j = t - windows[i].start;
                if (j < 0 || j >= windows[i].valid_length) continue;
                const double w = weights[i][static_cast<size_t>(j)];
                const float vi = outputs[i].data[static_cast<size_t>(j) * width + static_cast<size_t>(c)];
                acc += w * (static_cast<double>(vi) - static_cast<double>(vb));
            }
            out.data[static_cast<size_t>(t) * width + static_cast<size_t>(c)] = static_cast<float>(acc);
        }
    }

    // seam-local zero-phase low-pass
    std::set<int> seams;
    for (size_t i = 1; i < windows.size(); ++i) seams.insert(windows[i].start);
    for (size_t i = 0; i + 1 < windows.size(); ++i) {
        const int end = windows[i].start + windows[i].valid_length;
        if (end < total_frames) seams.insert(end);
    }
    const int half = config.seam_halfwidth;
    const int context = std::max(4 * half, 48);

    // largest cross-window disagreement near a seam; zero when only one
    // window covers or all covering windows agree
    auto seam_mismatch = [&](int seam) {
        double worst = 0.0;
        for (int t = std::max(0, seam - half); t <= std::min(total_frames - 1, seam + half); ++t) {
            for (int c = 0; c < width; ++c) {
                float lo = 0.0f, hi = 0.0f;
                bool first = true;
                for (size_t i = 0; i < windows.size(); ++i) {
                    const int j = t - windows[i].start;
                    if (j < 0 || j >= windows[i].valid_length) continue;
                    const float v = outputs[i].data[static_cast<size_t>(j) * width + static_cast<size_t>(c)];
                    if (first) {
                        lo = hi = v;
                        first = false;
                    } else {
                        lo = std::min(lo, v);
                        hi = std::max(hi, v);
                    }
                }
                worst = std::max(worst, static_cast<double>(hi - lo));
            }
        }
        return worst;
    };

    for (int seam : seams) {
        if (seam_mismatch(seam) <= config.seam_tolerance_mm) continue;
        const int lo = std::max(0, seam - context);
        const int hi = std::min(total_frames - 1, seam + context);
        const int seg = hi - lo + 1;
        if (seg < 8) continue;
        for (int c = 0; c < width; ++c) {
            std::vector<double> channel(static_cast<size_t>(seg));
            for (int t = 0; t < seg; ++t)
                channel[static_cast<size_t>(t)] =
                    out.data[static_cast<size_t>(lo + t) * width + static_cast<size_t>(c)];
            const std::vector<double> filtered =
                butterworth_filtfilt(channel, config.cutoff_hz, config.fps);
            const int wlo = std::max(lo, seam - half);
            const int whi = std::min(hi, seam + half);
            for (int t = wlo; t <= whi; ++t) {
                out.data[static_cast<size_t>(t) * width + static_cast<size_t>(c)] =
                    static_cast<float>(filtered[static_cast<size_t>(t - lo)]);
            }
        }
    }
    return out;
}

}  // namespace tipsynth
