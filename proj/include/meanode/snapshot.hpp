#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "meanode/config.hpp"
#include "meanode/resnet.hpp"

namespace meanode {

// Snapshot files: a flat binary layout
//   header: 6 x u64 little-endian  (D, L, M, p, kind tag, iteration)
//   body:   L*M*p  f64 little-endian, unit-major row order
// plus a JSON sidecar holding the TrainConfig.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

inline std::uint64_t kind_tag(const BlockKind& kind) {
    return static_cast<std::uint64_t>(kind.family) |
           (static_cast<std::uint64_t>(kind.act) << 8) |
           (static_cast<std::uint64_t>(kind.key_dim) << 16);
}

inline BlockKind kind_from_tag(std::uint64_t tag) {
    BlockKind kind;
    kind.family = static_cast<BlockFamily>(tag & 0xFF);
    kind.act = static_cast<Activation>((tag >> 8) & 0xFF);
    kind.key_dim = static_cast<int>(tag >> 16);
    return kind;
}

}  // namespace detail

inline void write_snapshot(const std::string& path, const NetParams& net, int iteration) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    std::uint64_t header[6] = {static_cast<std::uint64_t>(net.d),
                               static_cast<std::uint64_t>(net.layers),
                               static_cast<std::uint64_t>(net.units),
                               static_cast<std::uint64_t>(net.p),
                               detail::kind_tag(net.kind),
                               static_cast<std::uint64_t>(iteration)};
    f.write(reinterpret_cast<const char*>(header), sizeof(header));
    f.write(reinterpret_cast<const char*>(net.w.data()),
            static_cast<std::streamsize>(net.w.size() * sizeof(double)));
    if (!f) throw IoError("write failed: " + path);
}

inline NetParams read_snapshot(const std::string& path, int* iteration = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path);
    std::uint64_t header[6];
    f.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!f) throw IoError("truncated snapshot header: " + path);
    BlockKind kind = detail::kind_from_tag(header[4]);
    NetParams net(kind, static_cast<int>(header[0]), static_cast<int>(header[1]),
                  static_cast<int>(header[2]));
    if (net.p != static_cast<int>(header[3]))
        throw IoError("snapshot header inconsistent with block kind: " + path);
    f.read(reinterpret_cast<char*>(net.w.data()),
           static_cast<std::streamsize>(net.w.size() * sizeof(double)));
    if (!f) throw IoError("truncated snapshot body: " + path);
    if (iteration) *iteration = static_cast<int>(header[5]);
    return net;
}

inline void write_sidecar(const std::string& path, const TrainConfig& cfg,
                          bool is_reference = false) {
    json j = to_json(cfg);
    if (is_reference) j["reference"] = true;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace meanode
