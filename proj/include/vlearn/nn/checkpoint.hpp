#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vlearn/error.hpp"
#include "vlearn/nn/network.hpp"

namespace vlearn::nn {

// Layout (all integers and doubles little-endian):
//   magic "VLNNCKPT", u32 version,
//   u32 metadata count, { str key, str value }...,
//   u32 network count, { str name, u32 layer count, { layer }..., u32 param count, { tensor }... }...
// str = u32 length + bytes; layer = u32 kind, 9 x u64 sizes, f64 rate;
// tensor = u32 rank, rank x u64 dims, f64 values.
inline constexpr std::array<char, 8> kCheckpointMagic = {'V', 'L', 'N', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::map<std::string, std::string> metadata;
    std::vector<std::pair<std::string, Sequential>> networks;

    const Sequential& network(const std::string& name) const {
        for (const auto& [n, net] : networks)
            if (n == name) return net;
        throw FormatError("checkpoint has no network '" + name + "'");
    }

    const std::string& meta(const std::string& key) const {
        auto it = metadata.find(key);
        if (it == metadata.end()) throw FormatError("checkpoint has no metadata '" + key + "'");
        return it->second;
    }
};

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw FormatError("truncated checkpoint");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    const auto n = get_le<std::uint32_t>(in);
    if (n > (1u << 20)) throw FormatError("checkpoint string too long");
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) throw FormatError("truncated checkpoint");
    return s;
}

inline void put_doubles(std::ostream& out, const std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 8));
    } else {
        for (double v : values) put_le(out, v);
    }
}

inline void get_doubles(std::istream& in, std::vector<double>& values) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * 8)))
            throw FormatError("truncated checkpoint");
    } else {
        for (double& v : values) v = get_le<double>(in);
    }
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    using namespace detail;
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
    for (const auto& [k, v] : ckpt.metadata) {
        put_string(out, k);
        put_string(out, v);
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.networks.size()));
    for (const auto& [name, net] : ckpt.networks) {
        put_string(out, name);
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
        for (const auto& s : net.layers()) {
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.kind));
            for (std::size_t v : {s.in, s.out, s.in_channels, s.out_channels, s.kernel, s.stride, s.padding, s.in_height,
                                  s.in_width})
                put_le<std::uint64_t>(out, v);
            put_le<double>(out, s.rate);
        }
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.params().items.size()));
        for (const auto& p : net.params().items) {
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape.size()));
            for (auto d : p.value.shape) put_le<std::uint64_t>(out, d);
            put_doubles(out, p.value.data);
        }
    }
    if (!out) throw FormatError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
    using namespace detail;
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) throw FormatError("not a vlearn checkpoint");
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    const auto n_meta = get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        auto key = get_string(in);
        ckpt.metadata[key] = get_string(in);
    }
    const auto n_nets = get_le<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_nets; ++i) {
        auto name = get_string(in);
        const auto n_layers = get_le<std::uint32_t>(in);
        if (n_layers == 0 || n_layers > 1024) throw FormatError("implausible layer count");
        std::vector<LayerSpec> layers;
        for (std::uint32_t l = 0; l < n_layers; ++l) {
            LayerSpec s;
            const auto kind = get_le<std::uint32_t>(in);
            if (kind > static_cast<std::uint32_t>(LayerKind::dropout)) throw FormatError("unknown layer kind");
            s.kind = static_cast<LayerKind>(kind);
            for (std::size_t* v : {&s.in, &s.out, &s.in_channels, &s.out_channels, &s.kernel, &s.stride, &s.padding,
                                   &s.in_height, &s.in_width})
                *v = static_cast<std::size_t>(get_le<std::uint64_t>(in));
            s.rate = get_le<double>(in);
            layers.push_back(s);
        }
        Sequential net;
        try {
            net = Sequential(std::move(layers));
        } catch (const Error& e) {
            throw FormatError(std::string("checkpoint layer specs are invalid: ") + e.what());
        }
        const auto n_params = get_le<std::uint32_t>(in);
        if (n_params != net.params().items.size()) throw FormatError("checkpoint parameter count mismatch");
        for (auto& p : net.params().items) {
            const auto rank = get_le<std::uint32_t>(in);
            std::vector<std::size_t> shape;
            for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::size_t>(get_le<std::uint64_t>(in)));
            if (shape != p.value.shape) throw FormatError("checkpoint tensor shape mismatch for " + p.name);
            get_doubles(in, p.value.data);
        }
        ckpt.networks.emplace_back(std::move(name), std::move(net));
    }
    return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_checkpoint(in);
}

}  // namespace vlearn::nn
