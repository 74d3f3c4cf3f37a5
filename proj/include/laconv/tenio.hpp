#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>

#include "laconv/tensor.hpp"

namespace laconv {

static_assert(std::endian::native == std::endian::little,
              ".ten serialization assumes a little-endian host");

/// Tensor file format ".ten":
///   bytes 0-3  magic "TEN1"
///   byte  4    dtype tag (0x01 = f32, 0x02 = f64)
///   byte  5    ndim (must be 4)
///   then  ndim little-endian u32 dims (n, c, h, w)
///   then  data, little-endian, row-major in (n, c, h, w) order
namespace ten {

template <typename Scalar>
constexpr std::uint8_t dtype_tag() {
    if constexpr (std::is_same_v<Scalar, float>) return 0x01;
    else if constexpr (std::is_same_v<Scalar, double>) return 0x02;
    else static_assert(sizeof(Scalar) == 0, "unsupported .ten scalar type");
}

}  // namespace ten

template <typename Scalar>
void write_ten(const std::filesystem::path& path, const Tensor4<Scalar>& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    const char magic[4] = {'T', 'E', 'N', '1'};
    f.write(magic, 4);
    const std::uint8_t tag = ten::dtype_tag<Scalar>();
    const std::uint8_t ndim = 4;
    f.write(reinterpret_cast<const char*>(&tag), 1);
    f.write(reinterpret_cast<const char*>(&ndim), 1);
    const std::uint32_t dims[4] = {
        static_cast<std::uint32_t>(t.n), static_cast<std::uint32_t>(t.c),
        static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(sizeof(Scalar)) * t.size());
    if (!f) throw IoError("short write: " + path.string());
}

/// Write-temp-then-rename, so partially written files are never observed
/// under the final name.
template <typename Scalar>
void write_ten_atomic(const std::filesystem::path& path, const Tensor4<Scalar>& t) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    write_ten(tmp, t);
    std::filesystem::rename(tmp, path);
}

/// 8-bit binary PGM (P5) with per-image min-max normalization; a constant
/// map writes as all zeros.
inline void write_pgm_normalized(const std::filesystem::path& path,
                                 const RowMatX<double>& map) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << "P5\n" << map.cols() << " " << map.rows() << "\n255\n";
    const double lo = map.minCoeff(), hi = map.maxCoeff();
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    for (Index i = 0; i < map.rows(); ++i)
        for (Index j = 0; j < map.cols(); ++j) {
            const auto byte = static_cast<unsigned char>(
                std::lround((map(i, j) - lo) * scale));
            f.write(reinterpret_cast<const char*>(&byte), 1);
        }
    if (!f) throw IoError("short write: " + path.string());
}

template <typename Scalar>
Tensor4<Scalar> read_ten(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "TEN1", 4) != 0)
        throw IoError("bad .ten magic in " + path.string());
    std::uint8_t tag = 0, ndim = 0;
    f.read(reinterpret_cast<char*>(&tag), 1);
    f.read(reinterpret_cast<char*>(&ndim), 1);
    if (!f || tag != ten::dtype_tag<Scalar>())
        throw IoError("dtype tag mismatch in " + path.string());
    if (ndim != 4) throw IoError("expected ndim 4 in " + path.string());
    std::uint32_t dims[4];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw IoError("truncated header in " + path.string());
    Tensor4<Scalar> t(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]),
                      static_cast<Index>(dims[2]), static_cast<Index>(dims[3]));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(sizeof(Scalar)) * t.size());
    if (!f) throw IoError("truncated data in " + path.string());
    return t;
}

}  // namespace laconv
