#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tipsynth {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

enum class Hand : int { Left = 0, Right = 1 };

inline const char* hand_name(Hand h) { return h == Hand::Left ? "L" : "R"; }
inline Hand hand_from_name(const std::string& s) {
    if (s == "L" || s == "left") return Hand::Left;
    if (s == "R" || s == "right") return Hand::Right;
    throw std::invalid_argument("unknown hand tag: " + s);
}

constexpr int kNumKeys = 88;
constexpr int kFingersPerHand = 5;
constexpr int kJointsPerHand = 21;

// Errors are split by origin so callers can distinguish bad config from bad data.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG: splitmix64 core, explicit Box-Muller. No stdlib
// distributions so identical seeds give identical streams on every platform.
class RngState {
public:
    explicit RngState(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    uint64_t uniform_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Derive an independent deterministic stream for a named sub-task.
    RngState fork(uint64_t stream) const {
        RngState r(state_ ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        r.next_u64();
        return r;
    }

private:
    uint64_t state_;
};

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

inline uint32_t crc32(const std::vector<uint8_t>& data, uint32_t seed = 0) {
    return crc32(data.data(), data.size(), seed);
}

}  // namespace tipsynth
