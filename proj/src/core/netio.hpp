#pragma once
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/mlp.hpp"

namespace wm {

// Checkpoint container: magic "WMNN", u32 version, u32 net count, then per
// net [u32 n_sizes, u32 sizes..., u64 n_params, f64 params...]. All fields
// little-endian; parameters are stored as 64-bit floats so float32 nets
// round-trip exactly (f32 -> f64 -> f32 is lossless).
inline constexpr char kNetMagic[4] = {'W', 'M', 'N', 'N'};
inline constexpr uint32_t kNetVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint i/o assumes a little-endian host");

struct NetIoError : std::runtime_error {
    enum Kind { BadMagic, BadVersion, Truncated };
    Kind kind;
    NetIoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

inline void write_raw(std::FILE* f, const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("checkpoint write failed");
}

inline void read_raw(std::FILE* f, void* p, size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n)
        throw NetIoError(NetIoError::Truncated, "truncated checkpoint: " + path);
}

} // namespace detail

template <typename T>
void save_nets(const std::string& path, const std::vector<const Mlp<T>*>& nets) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    detail::write_raw(f.get(), kNetMagic, 4);
    detail::write_raw(f.get(), &kNetVersion, 4);
    uint32_t count = static_cast<uint32_t>(nets.size());
    detail::write_raw(f.get(), &count, 4);
    for (const auto* net : nets) {
        const auto& sizes = net->sizes();
        uint32_t ns = static_cast<uint32_t>(sizes.size());
        detail::write_raw(f.get(), &ns, 4);
        for (int s : sizes) {
            uint32_t u = static_cast<uint32_t>(s);
            detail::write_raw(f.get(), &u, 4);
        }
        std::vector<T> flat = net->flatten();
        uint64_t n = flat.size();
        detail::write_raw(f.get(), &n, 8);
        std::vector<double> d(flat.begin(), flat.end());
        detail::write_raw(f.get(), d.data(), d.size() * 8);
    }
}

// Loads parameter vectors; callers rebuild nets from the stored layer sizes.
template <typename T>
struct LoadedNet {
    std::vector<int> sizes;
    std::vector<T> params;
};

template <typename T>
std::vector<LoadedNet<T>> load_nets(const std::string& path) {
    std::unique_ptr<std::FILE, detail::FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    char magic[4];
    detail::read_raw(f.get(), magic, 4, path);
    if (std::memcmp(magic, kNetMagic, 4) != 0)
        throw NetIoError(NetIoError::BadMagic, "bad checkpoint magic in " + path);
    uint32_t version = 0;
    detail::read_raw(f.get(), &version, 4, path);
    if (version != kNetVersion)
        throw NetIoError(NetIoError::BadVersion,
                         "unsupported checkpoint version " + std::to_string(version) + " in " + path);
    uint32_t count = 0;
    detail::read_raw(f.get(), &count, 4, path);
    std::vector<LoadedNet<T>> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t ns = 0;
        detail::read_raw(f.get(), &ns, 4, path);
        LoadedNet<T> net;
        for (uint32_t s = 0; s < ns; ++s) {
            uint32_t u = 0;
            detail::read_raw(f.get(), &u, 4, path);
            net.sizes.push_back(static_cast<int>(u));
        }
        uint64_t n = 0;
        detail::read_raw(f.get(), &n, 8, path);
        std::vector<double> d(n);
        detail::read_raw(f.get(), d.data(), n * 8, path);
        net.params.assign(d.begin(), d.end());
        out.push_back(std::move(net));
    }
    return out;
}

// Rebuild a net from a loaded record (initializes then overwrites params).
template <typename T>
Mlp<T> net_from_loaded(const LoadedNet<T>& rec) {
    Rng dummy(0);
    Mlp<T> net(rec.sizes, dummy, true);
    net.unflatten(rec.params);
    return net;
}

} // namespace wm
