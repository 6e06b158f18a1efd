#include "tipsynth/trajectory_io.hpp"

#include <cstring>
#include <fstream>

namespace tipsynth {

namespace {

constexpr char kMagic[4] = {'T', 'P', 'T', 'J'};
constexpr uint32_t kVersion = 1;

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t read_u32le(const std::vector<uint8_t>& bytes, size_t& pos) {
    if (pos + 4 > bytes.size()) throw ParseError("trajectory file truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + static_cast<size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

void save_trajectory(const std::string& path, const MotionTrack& track, Hand hand,
                     const std::string& stage_tag, const FrameGrid& grid) {
    if (stage_tag.size() > 255) throw ConfigError("stage tag too long");
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32le(out, kVersion);
    put_u32le(out, static_cast<uint32_t>(grid.fps_num));
    put_u32le(out, static_cast<uint32_t>(grid.fps_den));
    put_u32le(out, static_cast<uint32_t>(track.frames));
    put_u32le(out, static_cast<uint32_t>(track.joints));
    out.push_back(static_cast<uint8_t>(hand == Hand::Left ? 'L' : 'R'));
    out.push_back(static_cast<uint8_t>(stage_tag.size()));
    out.insert(out.end(), stage_tag.begin(), stage_tag.end());
    const size_t base = out.size();
    out.resize(base + track.data.size() * sizeof(float));
    std::memcpy(out.data() + base, track.data.data(), track.data.size() * sizeof(float));
    put_u32le(out, crc32(out));

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write trajectory file: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

TrajectoryFile load_trajectory(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open trajectory file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 28) throw ParseError("trajectory file too short");

    size_t pos = bytes.size() - 4;
    const uint32_t stored = read_u32le(bytes, pos);
    if (crc32(bytes.data(), bytes.size() - 4) != stored)
        throw ParseError("trajectory file checksum mismatch: " + path);

    pos = 0;
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("bad trajectory magic");
    pos = 4;
    if (read_u32le(bytes, pos) != kVersion) throw ParseError("unsupported trajectory version");
    TrajectoryFile tf;
    tf.fps_num = read_u32le(bytes, pos);
    tf.fps_den = read_u32le(bytes, pos);
    const uint32_t T = read_u32le(bytes, pos);
    const uint32_t J = read_u32le(bytes, pos);
    if (pos + 2 > bytes.size()) throw ParseError("trajectory file truncated");
    tf.hand = bytes[pos++] == 'L' ? Hand::Left : Hand::Right;
    const uint8_t tag_len = bytes[pos++];
    if (pos + tag_len > bytes.size()) throw ParseError("trajectory file truncated");
    tf.stage.assign(reinterpret_cast<const char*>(bytes.data() + pos), tag_len);
    pos += tag_len;

    tf.track = MotionTrack(static_cast<int>(T), static_cast<int>(J));
    const size_t payload = tf.track.data.size() * sizeof(float);
    if (pos + payload + 4 != bytes.size()) throw ParseError("trajectory payload size mismatch");
    std::memcpy(tf.track.data.data(), bytes.data() + pos, payload);
    return tf;
}

}  // namespace tipsynth
