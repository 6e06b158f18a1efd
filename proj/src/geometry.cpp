#include "tipsynth/geometry.hpp"

#include <json.hpp>

namespace tipsynth {

namespace {

// pitch classes relative to C; key 0 is A0 so class = (index + 9) mod 12
constexpr bool kBlackClass[12] = {false, true, false, true, false, false,
                                  true,  false, true, false, true, false};

}  // namespace

bool KeyboardGeometry::is_black_index(int key) { return kBlackClass[(key + 9) % 12]; }

const KeySpec& KeyboardGeometry::key(int index) const {
    if (index < 0 || index >= kNumKeys) throw std::out_of_range("key index out of range");
    return keys_[static_cast<size_t>(index)];
}

KeyboardGeometry build_standard_keyboard(const KeyboardConfig& config) {
    if (config.white_key_width <= 0.0 || config.white_key_depth <= 0.0 ||
        config.black_key_width <= 0.0 || config.black_key_depth <= 0.0) {
        throw ConfigError("keyboard dimensions must be positive");
    }
    if (config.black_key_depth >= config.white_key_depth) {
        throw ConfigError("black key depth must be smaller than white key depth");
    }

    KeyboardGeometry geom;
    geom.config_ = config;
    geom.keys_.resize(kNumKeys);

    const double w = config.white_key_width;
    int white_count = 0;
    // First pass: tile white keys without gaps.
    for (int k = 0; k < kNumKeys; ++k) {
        KeySpec& spec = geom.keys_[static_cast<size_t>(k)];
        spec.index = k;
        spec.is_black = KeyboardGeometry::is_black_index(k);
        if (!spec.is_black) {
            spec.y_min = white_count * w;
            spec.y_max = (white_count + 1) * w;
            spec.x_min = 0.0;
            spec.x_max = config.white_key_depth;
            spec.rest_z = 0.0;
            ++white_count;
        }
    }
    geom.span_y_ = white_count * w;

    // Second pass: black keys straddle the boundary of their white neighbors.
    for (int k = 0; k < kNumKeys; ++k) {
        KeySpec& spec = geom.keys_[static_cast<size_t>(k)];
        if (!spec.is_black) continue;
        const double boundary = geom.keys_[static_cast<size_t>(k - 1)].y_max;
        const double shift = config.black_offset[(k + 9) % 12];
        spec.y_min = boundary - 0.5 * config.black_key_width + shift;
        spec.y_max = boundary + 0.5 * config.black_key_width + shift;
        spec.x_min = config.white_key_depth - config.black_key_depth;
        spec.x_max = config.white_key_depth;
        spec.rest_z = config.black_rest_z;
    }

    for (int k = 1; k < kNumKeys; ++k) {
        const KeySpec& a = geom.keys_[static_cast<size_t>(k - 1)];
        const KeySpec& b = geom.keys_[static_cast<size_t>(k)];
        if (a.is_black && b.is_black && a.y_max > b.y_min)
            throw ConfigError("black key offsets cause overlap at key " + std::to_string(k));
        if (b.y_min >= b.y_max || b.y_center() <= a.y_center())
            throw ConfigError("key extents not monotone at key " + std::to_string(k));
    }
    return geom;
}

std::optional<int> KeyboardGeometry::key_at(const Vec3& p) const {
    if (!p.finite()) throw ValidationError("key_at: point must be finite");
    // Lowest matching index wins, so shared boundaries resolve downward.
    for (const KeySpec& k : keys_) {
        if (!k.is_black) continue;
        if (p.y >= k.y_min && p.y <= k.y_max && p.x >= k.x_min && p.x <= k.x_max) return k.index;
    }
    for (const KeySpec& k : keys_) {
        if (k.is_black) continue;
        if (p.y >= k.y_min && p.y <= k.y_max && p.x >= k.x_min && p.x <= k.x_max) return k.index;
    }
    return std::nullopt;
}

bool is_pressed(const Vec3& p, const KeySpec& key, const PressThresholds& thresholds,
                const KeyboardGeometry& geom) {
    const std::optional<int> at = geom.key_at(p);
    if (!at || *at != key.index) {
        throw ValidationError("is_pressed: point is not over key " + std::to_string(key.index));
    }
    return key.is_black ? p.z <= thresholds.black_z : p.z <= thresholds.white_z;
}

int region_of(int key) {
    if (key < 0 || key >= kNumKeys) throw std::invalid_argument("region_of: key out of range");
    static constexpr int bounds[kNumRegions + 1] = {0, 15, 25, 35, 45, 55, 65, 75, 88};
    for (int r = 0; r < kNumRegions; ++r) {
        if (key < bounds[r + 1]) return r;
    }
    return kNumRegions - 1;
}

std::string keyboard_to_json(const KeyboardGeometry& geom) {
    nlohmann::json j;
    j["white_key_width"] = geom.config().white_key_width;
    j["white_key_depth"] = geom.config().white_key_depth;
    j["black_key_width"] = geom.config().black_key_width;
    j["black_key_depth"] = geom.config().black_key_depth;
    j["black_rest_z"] = geom.config().black_rest_z;
    j["black_offset"] = geom.config().black_offset;
    j["thresholds"] = {{"white_z", geom.thresholds().white_z},
                       {"black_z", geom.thresholds().black_z},
                       {"acoustic_trigger_depth", geom.thresholds().acoustic_trigger_depth}};
    nlohmann::json keys = nlohmann::json::array();
    for (const KeySpec& k : geom.keys()) {
        keys.push_back({{"index", k.index},
                        {"is_black", k.is_black},
                        {"y_min", k.y_min},
                        {"y_max", k.y_max},
                        {"x_min", k.x_min},
                        {"x_max", k.x_max},
                        {"rest_z", k.rest_z}});
    }
    j["keys"] = std::move(keys);
    return j.dump(2);
}

KeyboardGeometry keyboard_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    KeyboardConfig cfg;
    cfg.white_key_width = j.at("white_key_width").get<double>();
    cfg.white_key_depth = j.at("white_key_depth").get<double>();
    cfg.black_key_width = j.at("black_key_width").get<double>();
    cfg.black_key_depth = j.at("black_key_depth").get<double>();
    cfg.black_rest_z = j.at("black_rest_z").get<double>();
    if (j.contains("black_offset")) cfg.black_offset = j.at("black_offset").get<std::array<double, 12>>();
    const auto& t = j.at("thresholds");
    cfg.thresholds.white_z = t.at("white_z").get<double>();
    cfg.thresholds.black_z = t.at("black_z").get<double>();
    if (t.contains("acoustic_trigger_depth"))
        cfg.thresholds.acoustic_trigger_depth = t.at("acoustic_trigger_depth").get<double>();
    // Keys are rebuilt from the config; the stored key list is an export for
    // other tools, not an alternative source of truth.
    return build_standard_keyboard(cfg);
}

}  // namespace tipsynth
