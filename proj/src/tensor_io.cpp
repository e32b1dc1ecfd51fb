#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "hcanet/tensor.hpp"

namespace hcanet {

namespace {

constexpr std::array<char, 4> kMagic{'H', 'C', 'A', 'T'};
// Guards against absurd allocations when a corrupted header is read.
constexpr std::uint64_t kMaxElements = 1ULL << 32;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, std::size_t& offset, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes;
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(std::string("HCAT: truncated while reading ") + what, offset);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

void write_hcat(std::ostream& out, const Tensor& t) {
  if (t.rank() == 0) throw ArgumentError("HCAT: cannot encode a rank-0 tensor");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  } else {
    for (double v : t.values()) put_le<double>(out, v);
  }
  if (!out) throw std::runtime_error("HCAT: write failed");
}

Tensor read_hcat(std::istream& in, std::size_t& offset) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4) throw FormatError("HCAT: truncated magic", offset);
  if (magic != kMagic) throw FormatError("HCAT: bad magic", offset);
  offset += 4;
  const auto rank = get_le<std::uint32_t>(in, offset, "rank");
  if (rank == 0) throw FormatError("HCAT: rank must be >= 1", offset - 4);
  if (rank > 16) throw FormatError("HCAT: implausible rank " + std::to_string(rank), offset - 4);
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = get_le<std::uint32_t>(in, offset, "dimension");
    if (d == 0) throw FormatError("HCAT: zero dimension", offset - 4);
    count *= d;
    if (count > kMaxElements) throw FormatError("HCAT: tensor too large", offset - 4);
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  if constexpr (std::endian::native == std::endian::little) {
    const auto bytes = static_cast<std::streamsize>(count * sizeof(double));
    in.read(reinterpret_cast<char*>(values.data()), bytes);
    const auto got = in.gcount();
    if (got != bytes) {
      throw FormatError("HCAT: truncated data, expected " + std::to_string(bytes) + " bytes",
                        offset + static_cast<std::size_t>(got) / sizeof(double) * sizeof(double));
    }
    offset += static_cast<std::size_t>(bytes);
  } else {
    for (auto& v : values) v = get_le<double>(in, offset, "value");
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace hcanet
