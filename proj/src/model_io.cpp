// SPDX-License-Identifier: Apache-2.0
#include "reobj/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace reobj::tripletnet {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'D', 'L'};
constexpr std::uint8_t kVersion = 1;

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> values;
};

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_tensor(std::vector<unsigned char>& out, const NamedTensor& t) {
    out.push_back(static_cast<unsigned char>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<unsigned char>(t.shape.size()));
    for (auto d : t.shape) put_u32(out, d);
    for (float v : t.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
public:
    Reader(std::span<const unsigned char> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    const unsigned char* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw FormatError(FormatErrc::truncated, origin_, what);
        const unsigned char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8(const char* what) { return *take(1, what); }
    std::uint16_t u16(const char* what) {
        const auto* p = take(2, what);
        return static_cast<std::uint16_t>(p[0] | p[1] << 8);
    }
    std::uint32_t u32(const char* what) {
        const auto* p = take(4, what);
        return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
    }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
    const std::string& origin_;
};

std::vector<NamedTensor> model_tensors(const ConvBlockParams<float>& p) {
    const auto& c = p.config;
    const auto u = [](int v) { return static_cast<std::uint32_t>(v); };
    return {
        {"conv1.weight", {3, 3, u(c.in_channels), u(c.conv1_channels)}, p.conv1_weight},
        {"conv1.bias", {u(c.conv1_channels)}, p.conv1_bias},
        {"conv2.weight", {3, 3, u(c.conv1_channels), u(c.conv2_channels)}, p.conv2_weight},
        {"conv2.bias", {u(c.conv2_channels)}, p.conv2_bias},
        {"dense.weight", {u(c.conv2_channels), u(c.embed_dim)}, p.dense_weight},
        {"dense.bias", {u(c.embed_dim)}, p.dense_bias},
        {"c_in", {1}, {static_cast<float>(c.in_channels)}},
        {"embed_dim", {1}, {static_cast<float>(c.embed_dim)}},
    };
}

int hex_value(char ch) {
    if (ch >= '0' && ch <= '9') return ch - '0';
    if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
    return -1;
}

}  // namespace

std::vector<unsigned char> encode_model(const ConvBlockParams<float>& params, const std::string& config_digest) {
    if (!params.consistent()) throw ShapeError("write_model: parameter shapes disagree with the head config");
    if (!params.finite()) throw ShapeError("write_model: parameters contain non-finite values");
    auto tensors = model_tensors(params);
    if (!config_digest.empty()) {
        if (config_digest.size() != 64) throw Error("config digest must be 64 hex characters");
        NamedTensor d{"config_digest", {32}, {}};
        for (std::size_t i = 0; i < 32; ++i) {
            const int hi = hex_value(config_digest[2 * i]);
            const int lo = hex_value(config_digest[2 * i + 1]);
            if (hi < 0 || lo < 0) throw Error("config digest is not hexadecimal");
            d.values.push_back(static_cast<float>(hi * 16 + lo));
        }
        tensors.push_back(std::move(d));
    }
    std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
    out.push_back(kVersion);
    out.push_back(static_cast<unsigned char>(tensors.size() & 0xFF));
    out.push_back(static_cast<unsigned char>(tensors.size() >> 8));
    for (const auto& t : tensors) put_tensor(out, t);
    return out;
}

ModelFile decode_model(std::span<const unsigned char> bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw FormatError(FormatErrc::bad_magic, origin, "expected RMDL");
    if (const auto v = r.u8("version"); v != kVersion)
        throw FormatError(FormatErrc::unsupported_version, origin, "version " + std::to_string(v));
    const std::uint16_t count = r.u16("tensor count");

    std::map<std::string, NamedTensor> tensors;
    for (std::uint16_t i = 0; i < count; ++i) {
        NamedTensor t;
        const std::uint8_t len = r.u8("name length");
        const auto* name = r.take(len, "tensor name");
        t.name.assign(reinterpret_cast<const char*>(name), len);
        const std::uint8_t ndim = r.u8("ndim");
        std::uint64_t n = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            t.shape.push_back(r.u32("shape"));
            n *= t.shape.back();
            if (n > (std::uint64_t{1} << 32)) throw FormatError(FormatErrc::bad_shape, origin, t.name);
        }
        const auto* payload = r.take(static_cast<std::size_t>(n) * 4, "tensor payload");
        t.values.resize(static_cast<std::size_t>(n));
        for (std::size_t k = 0; k < t.values.size(); ++k) {
            const auto* p = payload + 4 * k;
            t.values[k] = std::bit_cast<float>(std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                                               std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24);
        }
        if (!tensors.emplace(t.name, std::move(t)).second)
            throw FormatError(FormatErrc::bad_shape, origin, "duplicate tensor name");
    }
    if (!r.done()) throw FormatError(FormatErrc::trailing_data, origin, "");

    auto get = [&](const char* name) -> NamedTensor& {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw FormatError(FormatErrc::bad_shape, origin, std::string("missing tensor ") + name);
        return it->second;
    };
    auto scalar = [&](const char* name) {
        const auto& t = get(name);
        if (t.values.size() != 1) throw FormatError(FormatErrc::bad_shape, origin, name);
        return static_cast<int>(t.values[0]);
    };

    HeadConfig cfg;
    cfg.in_channels = scalar("c_in");
    cfg.embed_dim = scalar("embed_dim");
    const auto& b1 = get("conv1.bias");
    const auto& b2 = get("conv2.bias");
    cfg.conv1_channels = static_cast<int>(b1.values.size());
    cfg.conv2_channels = static_cast<int>(b2.values.size());
    if (!cfg.valid()) throw FormatError(FormatErrc::bad_shape, origin, "non-positive head width");

    ModelFile model;
    model.params.config = cfg;
    model.params.conv1_weight = std::move(get("conv1.weight").values);
    model.params.conv1_bias = std::move(get("conv1.bias").values);
    model.params.conv2_weight = std::move(get("conv2.weight").values);
    model.params.conv2_bias = std::move(get("conv2.bias").values);
    model.params.dense_weight = std::move(get("dense.weight").values);
    model.params.dense_bias = std::move(get("dense.bias").values);
    if (!model.params.consistent())
        throw FormatError(FormatErrc::bad_shape, origin, "tensor shapes disagree with c_in/embed_dim");
    for (const auto& expected : model_tensors(model.params))
        if (tensors.at(expected.name).shape != expected.shape)
            throw FormatError(FormatErrc::bad_shape, origin, expected.name);

    if (auto it = tensors.find("config_digest"); it != tensors.end()) {
        static constexpr char digits[] = "0123456789abcdef";
        for (float v : it->second.values) {
            const auto byte = static_cast<int>(v);
            if (byte < 0 || byte > 255) throw FormatError(FormatErrc::bad_shape, origin, "config_digest");
            model.config_digest.push_back(digits[byte >> 4]);
            model.config_digest.push_back(digits[byte & 15]);
        }
    }
    return model;
}

void write_model(const std::filesystem::path& path, const ConvBlockParams<float>& params,
                 const std::string& config_digest) {
    const auto bytes = encode_model(params, config_digest);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(FormatErrc::io, path.string(), "cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::io, path.string(), "write failed");
}

ModelFile read_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io, path.string(), "cannot open for reading");
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes, path.string());
}

}  // namespace reobj::tripletnet
