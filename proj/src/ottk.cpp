#include "otanim/ottk.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace otanim {

namespace {

static_assert(std::endian::native == std::endian::little,
              "file payloads are written little-endian by memcpy");

constexpr char kMagic[4] = {'O', 'T', 'T', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  in.read(buf, sizeof(T));
  if (!in) throw std::runtime_error("ottk: truncated stream");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

void write_ottk(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, kDtypeF64);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (const std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw std::runtime_error("ottk: write failed");
}

void write_ottk(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ottk: cannot open " + path.string() + " for writing");
  write_ottk(f, t);
}

Tensor read_ottk(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("ottk: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("ottk: unsupported version");
  if (get<std::uint8_t>(in) != kDtypeF64) throw std::runtime_error("ottk: unsupported dtype");
  const std::uint8_t rank = get<std::uint8_t>(in);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(in));
  Tensor t(shape);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw std::runtime_error("ottk: truncated payload");
  return t;
}

Tensor read_ottk(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("ottk: cannot open " + path.string());
  return read_ottk(f);
}

namespace {

Tensor from_sizes(std::span<const std::size_t> v) {
  Tensor t({v.size()});
  for (std::size_t i = 0; i < v.size(); ++i) t[i] = static_cast<double>(v[i]);
  return t;
}

std::vector<std::size_t> to_sizes(const Tensor& t) {
  std::vector<std::size_t> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<std::size_t>(t[i]);
  return v;
}

}  // namespace

void write_ottk_sparse(const std::filesystem::path& stem, const SparseMatrix& m) {
  write_ottk(stem.string() + ".offsets.ottk", from_sizes(m.offsets()));
  write_ottk(stem.string() + ".indices.ottk", from_sizes(m.indices()));
  write_ottk(stem.string() + ".values.ottk",
             Tensor({m.nnz()}, std::vector<double>(m.values().begin(), m.values().end())));
}

SparseMatrix read_ottk_sparse(const std::filesystem::path& stem, std::size_t n_cols) {
  auto offsets = to_sizes(read_ottk(stem.string() + ".offsets.ottk"));
  auto indices = to_sizes(read_ottk(stem.string() + ".indices.ottk"));
  const Tensor values = read_ottk(stem.string() + ".values.ottk");
  if (offsets.empty()) throw std::runtime_error("ottk sparse: empty offsets");
  return SparseMatrix(offsets.size() - 1, n_cols, std::move(offsets), std::move(indices),
                      std::vector<double>(values.values().begin(), values.values().end()));
}

}  // namespace otanim
