#pragma once

// Binary field dumps ("TFLX") and CSV export of 1D slices.
//
// Layout, all little-endian:
//   char[4]  "TFLX"
//   u32      version (1)
//   u32      dim
//   u32 x dim  points per axis
//   u32      components
//   f64 x (points * components)  component-major, each block row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>

#include "torusflux/grid.hpp"

namespace torusflux {

inline constexpr std::uint32_t kFieldFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated field file");
  return byteswap_if_big(v);
}

}  // namespace detail

/// The period is not stored; readers supply it (default 2 pi).
template <typename Scalar>
void write_field(std::ostream& out, const PeriodicField<Scalar>& f) {
  const auto& grid = f.grid();
  out.write("TFLX", 4);
  detail::write_le<std::uint32_t>(out, kFieldFormatVersion);
  detail::write_le<std::uint32_t>(out, std::uint32_t(grid.dim()));
  for (int a = 0; a < grid.dim(); ++a) detail::write_le<std::uint32_t>(out, std::uint32_t(grid.n()));
  detail::write_le<std::uint32_t>(out, std::uint32_t(f.components()));
  for (int c = 0; c < f.components(); ++c)
    for (Eigen::Index i = 0; i < grid.points(); ++i) detail::write_le<double>(out, double(f(i, c)));
  if (!out) throw FormatError("failed writing field data");
}

template <typename Scalar>
PeriodicField<Scalar> read_field(std::istream& in, Scalar length = two_pi<Scalar>) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "TFLX", 4) != 0) throw FormatError("not a TFLX field file");
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kFieldFormatVersion) throw FormatError("unsupported field file version " + std::to_string(version));
  const auto dim = detail::read_le<std::uint32_t>(in);
  if (dim < 1 || dim > 3) throw FormatError("bad dimension in field file");
  std::uint32_t n = 0;
  for (std::uint32_t a = 0; a < dim; ++a) {
    const auto na = detail::read_le<std::uint32_t>(in);
    if (a > 0 && na != n) throw FormatError("anisotropic grids are not supported");
    n = na;
  }
  const auto components = detail::read_le<std::uint32_t>(in);
  TorusGrid<Scalar> grid(int(dim), int(n), length);
  PeriodicField<Scalar> f(grid, int(components));
  for (std::uint32_t c = 0; c < components; ++c)
    for (Eigen::Index i = 0; i < grid.points(); ++i) f(i, int(c)) = Scalar(detail::read_le<double>(in));
  return f;
}

template <typename Scalar>
void save_field(const std::string& path, const PeriodicField<Scalar>& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_field(out, f);
}

template <typename Scalar>
PeriodicField<Scalar> load_field(const std::string& path, Scalar length = two_pi<Scalar>) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return read_field(in, length);
}

/// CSV of the line through the origin along `axis`: x, then one column per component.
template <typename Scalar>
void write_slice_csv(std::ostream& out, const PeriodicField<Scalar>& f, int axis = 0) {
  const auto& grid = f.grid();
  out << "x";
  for (int c = 0; c < f.components(); ++c) out << ",c" << c;
  out << "\n" << std::setprecision(17);
  for (int j = 0; j < grid.n(); ++j) {
    std::array<int, 3> idx{0, 0, 0};
    idx[axis] = j;
    const Eigen::Index i = grid.flat_index(idx);
    out << j * grid.spacing();
    for (int c = 0; c < f.components(); ++c) out << "," << f(i, c);
    out << "\n";
  }
}

}  // namespace torusflux
