#include "tipsynth/nn.hpp"

#include <cstring>
#include <fstream>

namespace tipsynth {

Tensor& ParamStore::add(const std::string& name, Shape shape) {
    auto [it, inserted] = params_.emplace(name, Tensor(std::move(shape)));
    if (!inserted) throw ConfigError("duplicate parameter name: " + name);
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("missing parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("missing parameter: " + name);
    return it->second;
}

int64_t ParamStore::total_scalars() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void init_uniform_fanin(Tensor& t, int64_t fan_in, RngState& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(1, fan_in)));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
}

void init_normal(Tensor& t, double stddev, RngState& rng) {
    for (float& v : t.data) v = static_cast<float>(rng.normal() * stddev);
}

namespace {

constexpr uint32_t kParamMagic = 0x54504e4eu;  // "TPNN"
constexpr uint32_t kParamVersion = 1;

void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
    const std::vector<uint8_t>* bytes;
    size_t pos = 0;
    void need(size_t n) const {
        if (pos + n > bytes->size()) throw ParseError("param file truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>((*bytes)[pos + static_cast<size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>((*bytes)[pos + static_cast<size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }
};

}  // namespace

void ParamStore::save(const std::string& path) const {
    std::vector<uint8_t> out;
    put_u32le(out, kParamMagic);
    put_u32le(out, kParamVersion);
    put_u64le(out, init_seed);
    put_u32le(out, static_cast<uint32_t>(params_.size()));
    for (const auto& [name, t] : params_) {
        put_u32le(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32le(out, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) put_u64le(out, static_cast<uint64_t>(d));
        const size_t payload = t.data.size() * sizeof(float);
        const size_t base = out.size();
        out.resize(base + payload);
        // float32 little-endian payload; memcpy is fine on LE hosts
        std::memcpy(out.data() + base, t.data.data(), payload);
    }
    put_u32le(out, crc32(out));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write param file: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open param file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 24) throw ParseError("param file too short");
    const uint32_t stored_crc = static_cast<uint32_t>(bytes[bytes.size() - 4]) |
                                static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8 |
                                static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16 |
                                static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24;
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        throw ParseError("param file checksum mismatch: " + path);

    Reader r{&bytes};
    if (r.u32() != kParamMagic) throw ParseError("bad param file magic");
    if (r.u32() != kParamVersion) throw ParseError("unsupported param file version");
    ParamStore ps;
    ps.init_seed = r.u64();
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        r.need(name_len);
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        const uint32_t rank = r.u32();
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(r.u64());
        Tensor& t = ps.add(name, shape);
        const size_t payload = t.data.size() * sizeof(float);
        r.need(payload);
        std::memcpy(t.data.data(), bytes.data() + r.pos, payload);
        r.pos += payload;
    }
    return ps;
}

Tensor sinusoidal_positions(int64_t frames, int64_t dim) {
    Tensor pe({frames, dim});
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t i = 0; i < dim; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
            pe.data[static_cast<size_t>(t * dim + i)] = static_cast<float>(std::sin(t * freq));
            if (i + 1 < dim)
                pe.data[static_cast<size_t>(t * dim + i + 1)] = static_cast<float>(std::cos(t * freq));
        }
    }
    return pe;
}

}  // namespace tipsynth
