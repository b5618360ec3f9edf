#pragma once

// EDF1 field snapshots: "EDF1", u32 N, u32 kind (0 scalar, 1 spinor),
// u32 reserved (0), then little-endian binary64 values in storage order.
// Spinors are written as re/im pairs, component-major within each point.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "edflow/errors.hpp"
#include "edflow/torus.hpp"

namespace edflow::snapshot {

enum class Kind : std::uint32_t { scalar = 0, spinor = 1 };

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>((v >> (8 * b)) & 0xffu));
}

inline void put_f64(std::vector<unsigned char>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    return v;
}

inline double get_f64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    return std::bit_cast<double>(v);
}

inline std::vector<unsigned char> header(std::size_t n, Kind kind) {
    std::vector<unsigned char> out{'E', 'D', 'F', '1'};
    put_u32(out, static_cast<std::uint32_t>(n));
    put_u32(out, static_cast<std::uint32_t>(kind));
    put_u32(out, 0);
    return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode(const ScalarField& f) {
    auto out = detail::header(f.grid.n, Kind::scalar);
    out.reserve(out.size() + 8 * f.size());
    for (double v : f.values) detail::put_f64(out, v);
    return out;
}

inline std::vector<unsigned char> encode(const SpinorField& psi) {
    auto out = detail::header(psi.grid.n, Kind::spinor);
    out.reserve(out.size() + 16 * psi.size());
    for (const cplx& v : psi.values) {
        detail::put_f64(out, v.real());
        detail::put_f64(out, v.imag());
    }
    return out;
}

// Grid side length and spin structure are not stored; the caller supplies them.
inline std::variant<ScalarField, SpinorField> decode(const std::vector<unsigned char>& bytes,
                                                     double length = two_pi,
                                                     const SpinStructure& spin = SpinStructure{}) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "EDF1", 4) != 0)
        throw FormatError("snapshot: missing EDF1 magic");
    const std::uint32_t n = detail::get_u32(bytes.data() + 4);
    const std::uint32_t kind = detail::get_u32(bytes.data() + 8);
    const TorusGrid grid(n, length);
    const unsigned char* p = bytes.data() + 16;
    if (kind == static_cast<std::uint32_t>(Kind::scalar)) {
        if (bytes.size() != 16 + 8 * grid.size()) throw FormatError("snapshot: scalar payload has wrong length");
        ScalarField f(grid);
        for (std::size_t i = 0; i < grid.size(); ++i) f.values[i] = detail::get_f64(p + 8 * i);
        return f;
    }
    if (kind == static_cast<std::uint32_t>(Kind::spinor)) {
        if (bytes.size() != 16 + 32 * grid.size()) throw FormatError("snapshot: spinor payload has wrong length");
        SpinorField psi(grid, spin);
        for (std::size_t i = 0; i < psi.size(); ++i)
            psi.values[i] = {detail::get_f64(p + 16 * i), detail::get_f64(p + 16 * i + 8)};
        return psi;
    }
    throw FormatError("snapshot: unknown kind " + std::to_string(kind));
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("snapshot: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("snapshot: cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace edflow::snapshot
