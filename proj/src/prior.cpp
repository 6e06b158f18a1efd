#include "tipsynth/prior.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace tipsynth {

int PositionPrior::populated_count() const {
    int n = 0;
    for (const auto& e : entries_)
        if (e.has_value()) ++n;
    return n;
}

namespace {

double nearest_rank(std::vector<double>& values, double p) {
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    const size_t rank = static_cast<size_t>(std::ceil(p * static_cast<double>(n)));
    const size_t idx = std::min(n - 1, rank == 0 ? 0 : rank - 1);
    return values[idx];
}

PositionPriorEntry stats_from(const std::vector<Vec3>& obs) {
    PositionPriorEntry e;
    e.count = static_cast<int64_t>(obs.size());
    Vec3 sum;
    for (const Vec3& v : obs) sum += v;
    e.mean = sum / static_cast<double>(obs.size());
    Vec3 var;
    for (const Vec3& v : obs) {
        const Vec3 d = v - e.mean;
        var.x += d.x * d.x;
        var.y += d.y * d.y;
        var.z += d.z * d.z;
    }
    var = var / static_cast<double>(obs.size());
    e.stddev = {std::sqrt(var.x), std::sqrt(var.y), std::sqrt(var.z)};

    std::vector<double> axis(obs.size());
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < obs.size(); ++i)
            axis[i] = c == 0 ? obs[i].x : (c == 1 ? obs[i].y : obs[i].z);
        double* p25 = c == 0 ? &e.p25.x : (c == 1 ? &e.p25.y : &e.p25.z);
        double* p50 = c == 0 ? &e.p50.x : (c == 1 ? &e.p50.y : &e.p50.z);
        double* p75 = c == 0 ? &e.p75.x : (c == 1 ? &e.p75.y : &e.p75.z);
        *p25 = nearest_rank(axis, 0.25);
        *p50 = nearest_rank(axis, 0.50);
        *p75 = nearest_rank(axis, 0.75);
    }
    return e;
}

}  // namespace

PositionPrior build_position_prior(const std::vector<PriorObservation>& pieces,
                                   int64_t min_count) {
    // gather observations per slot in deterministic piece/frame order
    std::vector<std::vector<Vec3>> buckets(2 * kFingersPerHand * kNumKeys);
    for (const PriorObservation& piece : pieces) {
        if (!piece.fingering) throw ValidationError("prior observation missing fingering");
        const int T = piece.fingering->frames();
        for (int h = 0; h < 2; ++h) {
            if (!piece.tips[h]) continue;
            if (piece.tips[h]->frames != T)
                throw ValidationError("prior observation trajectory/fingering length mismatch");
        }
        for (int t = 0; t < T; ++t) {
            for (int k = 0; k < kNumKeys; ++k) {
                const int v = piece.fingering->at(t, k);
                if (v == 0) continue;
                const Hand h = FingeringGrid::hand_of_value(v);
                const int f = FingeringGrid::finger_of_value(v);
                const MotionTrack* tips = piece.tips[static_cast<int>(h)];
                if (!tips) continue;
                buckets[PositionPrior::slot(h, f, k)].push_back(tips->get(t, f));
            }
        }
    }

    PositionPrior prior;
    prior.min_count = min_count;
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int k = 0; k < kNumKeys; ++k) {
                const auto& obs = buckets[PositionPrior::slot(static_cast<Hand>(h), f, k)];
                if (static_cast<int64_t>(obs.size()) >= min_count) {
                    prior.entry(static_cast<Hand>(h), f, k) = stats_from(obs);
                }
            }
        }
    }
    return prior;
}

namespace {

Vec3 lerp(const Vec3& a, const Vec3& b, double w) { return a + (b - a) * w; }

// Positions move between keys in the key-local frame: X as a fraction of the
// key's depth, Z as height over the key's rest surface, so a slot filled from
// other-color donors still lands on its own key below the press threshold.
Vec3 to_key_local(const Vec3& p, const KeySpec& key) {
    return {(p.x - key.x_min) / (key.x_max - key.x_min), p.y - key.y_center(), p.z - key.rest_z};
}

Vec3 from_key_local(const Vec3& local, const KeySpec& key) {
    return {key.x_min + local.x * (key.x_max - key.x_min), key.y_center() + local.y,
            key.rest_z + local.z};
}

PositionPriorEntry interpolate_entry(const PositionPriorEntry& lo, const KeySpec& key_lo,
                                     const PositionPriorEntry& hi, const KeySpec& key_hi,
                                     const KeySpec& target) {
    const double y_lo = key_lo.y_center();
    const double y_hi = key_hi.y_center();
    const double w = y_hi == y_lo ? 0.0 : (target.y_center() - y_lo) / (y_hi - y_lo);
    PositionPriorEntry e;
    Vec3 local_p50 = lerp(to_key_local(lo.p50, key_lo), to_key_local(hi.p50, key_hi), w);
    Vec3 local_mean = lerp(to_key_local(lo.mean, key_lo), to_key_local(hi.mean, key_hi), w);
    local_p50.y = 0.0;  // Y re-anchored to the target key center
    local_mean.y = 0.0;
    e.p50 = from_key_local(local_p50, target);
    e.mean = from_key_local(local_mean, target);
    e.stddev = lerp(lo.stddev, hi.stddev, w);
    // quartiles carried as offsets from the median so ordering survives
    e.p25 = e.p50 + lerp(lo.p25 - lo.p50, hi.p25 - hi.p50, w);
    e.p75 = e.p50 + lerp(lo.p75 - lo.p50, hi.p75 - hi.p50, w);
    e.count = 0;
    e.interpolated = true;
    return e;
}

PositionPriorEntry copy_entry_reanchored(const PositionPriorEntry& donor, const KeySpec& donor_key,
                                         const KeySpec& target) {
    PositionPriorEntry e = donor;
    Vec3 local_p50 = to_key_local(donor.p50, donor_key);
    Vec3 local_mean = to_key_local(donor.mean, donor_key);
    local_p50.y = 0.0;
    local_mean.y = 0.0;
    e.p50 = from_key_local(local_p50, target);
    e.mean = from_key_local(local_mean, target);
    e.p25 = e.p50 + (donor.p25 - donor.p50);
    e.p75 = e.p50 + (donor.p75 - donor.p50);
    e.count = 0;
    e.interpolated = true;
    return e;
}

}  // namespace

PositionPrior interpolate_missing(const PositionPrior& prior, const KeyboardGeometry& geom) {
    PositionPrior out = prior;
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            std::vector<int> donors;
            for (int k = 0; k < kNumKeys; ++k) {
                if (prior.entry(static_cast<Hand>(h), f, k).has_value()) donors.push_back(k);
            }
            if (donors.empty()) {
                throw ValidationError(std::string("prior row has no populated slots: hand ") +
                                      hand_name(static_cast<Hand>(h)) + " finger " +
                                      std::to_string(f + 1));
            }
            for (int k = 0; k < kNumKeys; ++k) {
                if (out.entry(static_cast<Hand>(h), f, k).has_value()) continue;
                const KeySpec& target = geom.key(k);
                const auto above = std::lower_bound(donors.begin(), donors.end(), k);
                if (above == donors.begin() || above == donors.end()) {
                    const int dk = above == donors.begin() ? donors.front() : donors.back();
                    out.entry(static_cast<Hand>(h), f, k) = copy_entry_reanchored(
                        *prior.entry(static_cast<Hand>(h), f, dk), geom.key(dk), target);
                } else {
                    const int k_hi = *above;
                    const int k_lo = *(above - 1);
                    out.entry(static_cast<Hand>(h), f, k) = interpolate_entry(
                        *prior.entry(static_cast<Hand>(h), f, k_lo), geom.key(k_lo),
                        *prior.entry(static_cast<Hand>(h), f, k_hi), geom.key(k_hi), target);
                }
            }
        }
    }
    return out;
}

WristOffsetPrior build_wrist_offsets(const std::vector<PriorObservation>& pieces,
                                     const KeyboardGeometry& geom) {
    (void)geom;
    WristOffsetPrior prior;
    std::array<std::array<Vec3, kNumRegions>, 2> sums{};
    Vec3 global_sum;
    int64_t global_count = 0;

    for (const PriorObservation& piece : pieces) {
        if (!piece.fingering) throw ValidationError("wrist prior observation missing fingering");
        const int T = piece.fingering->frames();
        for (int t = 0; t < T; ++t) {
            for (int h = 0; h < 2; ++h) {
                const MotionTrack* tips = piece.tips[h];
                const MotionTrack* wrist = piece.wrist[h];
                if (!tips || !wrist) continue;
                Vec3 centroid;
                int pressing = 0;
                int64_t key_sum = 0;
                for (int k = 0; k < kNumKeys; ++k) {
                    const int v = piece.fingering->at(t, k);
                    if (v == 0 || static_cast<int>(FingeringGrid::hand_of_value(v)) != h) continue;
                    centroid += tips->get(t, FingeringGrid::finger_of_value(v));
                    key_sum += k;
                    ++pressing;
                }
                if (pressing == 0) continue;
                centroid = centroid / pressing;
                const int mean_key = static_cast<int>(
                    std::lround(static_cast<double>(key_sum) / pressing));
                const int region = region_of(std::clamp(mean_key, 0, kNumKeys - 1));
                const Vec3 delta = wrist->get(t, 0) - centroid;
                sums[static_cast<size_t>(h)][static_cast<size_t>(region)] += delta;
                prior.counts[static_cast<size_t>(h)][static_cast<size_t>(region)] += 1;
                global_sum += delta;
                ++global_count;
            }
        }
    }

    if (global_count == 0) throw ValidationError("wrist offsets: no frames with active presses");
    const Vec3 global_mean = global_sum / static_cast<double>(global_count);

    for (int h = 0; h < 2; ++h) {
        std::vector<int> populated;
        for (int r = 0; r < kNumRegions; ++r) {
            if (prior.counts[static_cast<size_t>(h)][static_cast<size_t>(r)] > 0) {
                prior.offsets[static_cast<size_t>(h)][static_cast<size_t>(r)] =
                    sums[static_cast<size_t>(h)][static_cast<size_t>(r)] /
                    static_cast<double>(prior.counts[static_cast<size_t>(h)][static_cast<size_t>(r)]);
                populated.push_back(r);
            }
        }
        for (int r = 0; r < kNumRegions; ++r) {
            if (prior.counts[static_cast<size_t>(h)][static_cast<size_t>(r)] > 0) continue;
            if (populated.empty()) {
                prior.offsets[static_cast<size_t>(h)][static_cast<size_t>(r)] = global_mean;
                continue;
            }
            // nearest populated region, ties to the lower index
            int best = populated.front();
            for (int cand : populated) {
                if (std::abs(cand - r) < std::abs(best - r)) best = cand;
            }
            prior.offsets[static_cast<size_t>(h)][static_cast<size_t>(r)] =
                prior.offsets[static_cast<size_t>(h)][static_cast<size_t>(best)];
        }
    }
    return prior;
}

std::vector<std::string> validate_prior(const PositionPrior& prior, const KeyboardGeometry& geom) {
    std::vector<std::string> violations;
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int k = 0; k < kNumKeys; ++k) {
                const auto& e = prior.entry(static_cast<Hand>(h), f, k);
                if (!e.has_value()) continue;
                const auto at = geom.key_at(e->p50);
                const std::string tag = std::string(hand_name(static_cast<Hand>(h))) + "/" +
                                        std::to_string(f + 1) + "/" + std::to_string(k);
                if (!at || *at != k) {
                    violations.push_back(tag + ": median not over its key");
                } else if (!is_pressed(e->p50, geom.key(k), geom.thresholds(), geom)) {
                    violations.push_back(tag + ": median does not satisfy press threshold");
                }
            }
        }
    }
    return violations;
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }
Vec3 vec_from(const nlohmann::json& j) { return {j.at(0), j.at(1), j.at(2)}; }

}  // namespace

std::string prior_to_json(const PriorBundle& bundle) {
    nlohmann::json j;
    j["prior_version"] = 1;
    j["min_count"] = bundle.position.min_count;
    nlohmann::json entries = nlohmann::json::object();
    for (int h = 0; h < 2; ++h) {
        for (int f = 0; f < kFingersPerHand; ++f) {
            for (int k = 0; k < kNumKeys; ++k) {
                const auto& e = bundle.position.entry(static_cast<Hand>(h), f, k);
                if (!e.has_value()) continue;
                const std::string key = std::string(hand_name(static_cast<Hand>(h))) + "/" +
                                        std::to_string(f + 1) + "/" + std::to_string(k);
                entries[key] = {{"mean", vec_json(e->mean)},   {"std", vec_json(e->stddev)},
                                {"p25", vec_json(e->p25)},     {"p50", vec_json(e->p50)},
                                {"p75", vec_json(e->p75)},     {"n", e->count},
                                {"interpolated", e->interpolated}};
            }
        }
    }
    j["entries"] = std::move(entries);
    nlohmann::json wrist = nlohmann::json::object();
    for (int h = 0; h < 2; ++h) {
        nlohmann::json regions = nlohmann::json::array();
        for (int r = 0; r < kNumRegions; ++r) {
            regions.push_back({{"offset", vec_json(bundle.wrist.offsets[static_cast<size_t>(h)][static_cast<size_t>(r)])},
                               {"n", bundle.wrist.counts[static_cast<size_t>(h)][static_cast<size_t>(r)]}});
        }
        wrist[hand_name(static_cast<Hand>(h))] = std::move(regions);
    }
    j["wrist_offsets"] = std::move(wrist);
    return j.dump(2);
}

PriorBundle prior_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("prior_version").get<int>() != 1) throw ParseError("unsupported prior version");
    PriorBundle bundle;
    bundle.position.min_count = j.value("min_count", 10);
    for (const auto& [key, val] : j.at("entries").items()) {
        const Hand h = hand_from_name(key.substr(0, 1));
        const size_t s1 = key.find('/');
        const size_t s2 = key.find('/', s1 + 1);
        const int f = std::stoi(key.substr(s1 + 1, s2 - s1 - 1)) - 1;
        const int k = std::stoi(key.substr(s2 + 1));
        PositionPriorEntry e;
        e.mean = vec_from(val.at("mean"));
        e.stddev = vec_from(val.at("std"));
        e.p25 = vec_from(val.at("p25"));
        e.p50 = vec_from(val.at("p50"));
        e.p75 = vec_from(val.at("p75"));
        e.count = val.at("n").get<int64_t>();
        e.interpolated = val.at("interpolated").get<bool>();
        bundle.position.entry(h, f, k) = e;
    }
    for (int h = 0; h < 2; ++h) {
        const auto& regions = j.at("wrist_offsets").at(hand_name(static_cast<Hand>(h)));
        for (int r = 0; r < kNumRegions; ++r) {
            bundle.wrist.offsets[static_cast<size_t>(h)][static_cast<size_t>(r)] =
                vec_from(regions.at(static_cast<size_t>(r)).at("offset"));
            bundle.wrist.counts[static_cast<size_t>(h)][static_cast<size_t>(r)] =
                regions.at(static_cast<size_t>(r)).at("n").get<int64_t>();
        }
    }
    return bundle;
}

void save_prior(const std::string& path, const PriorBundle& bundle) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write prior file: " + path);
    f << prior_to_json(bundle);
}

PriorBundle load_prior(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open prior file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return prior_from_json(text);
}

}  // namespace tipsynth
