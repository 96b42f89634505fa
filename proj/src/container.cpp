#include "anchorprop/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "anchorprop/error.hpp"

namespace anchorprop {

namespace {

constexpr unsigned char kMagic[4] = {'A', 'P', 'F', 'T'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const unsigned char> bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[offset + i]) << (8 * i);
  return v;
}

std::size_t header_size(std::size_t ndim) {
  const std::size_t raw = 4 + 2 + 2 + 8 * ndim + 1;
  return (raw + 7) / 8 * 8;
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<unsigned char> encode_tensor(const Tensor& t) {
  if (t.dims.size() > 0xffff) throw FormatError("container: too many dimensions");
  if (t.element_count() != t.values.size()) {
    throw ShapeError("container: dims describe " + std::to_string(t.element_count()) +
                     " values but " + std::to_string(t.values.size()) + " were given");
  }
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(header_size(t.dims.size()) + 4 * t.values.size());
  put_le<std::uint16_t>(out, kContainerVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint64_t>(out, d);
  out.push_back(kDtypeF32);
  out.resize(header_size(t.dims.size()), 0);
  for (float v : t.values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const unsigned char> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("container: bad magic");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kContainerVersion) {
    throw FormatError("container: unsupported version " + std::to_string(version));
  }
  const auto ndim = get_le<std::uint16_t>(bytes, 6);
  const std::size_t header = header_size(ndim);
  if (bytes.size() < header) throw FormatError("container: truncated header");
  Tensor t;
  t.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) t.dims[i] = get_le<std::uint64_t>(bytes, 8 + 8 * i);
  const auto dtype = bytes[8 + 8 * ndim];
  if (dtype != kDtypeF32) throw FormatError("container: unsupported dtype " + std::to_string(dtype));
  for (std::size_t i = 8 + 8 * ndim + 1; i < header; ++i) {
    if (bytes[i] != 0) throw FormatError("container: non-zero header padding");
  }
  const std::uint64_t count = t.element_count();
  if ((bytes.size() - header) / 4 != count || (bytes.size() - header) % 4 != 0) {
    throw FormatError("container: payload length does not match dims");
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, header + 4 * i));
  }
  return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor matrix_to_tensor(const Matrix& m) {
  return {{m.rows(), m.cols()}, m.storage()};
}

Matrix tensor_to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw ShapeError("container: expected a 2-D tensor");
  return Matrix(t.dims[0], t.dims[1], t.values);
}

Tensor frames_to_tensor(std::span<const FrameFeatures> frames) {
  if (frames.empty()) return {{0, 0, 0, 0}, {}};
  const auto& f0 = frames.front();
  Tensor t{{frames.size(), f0.grid_h, f0.grid_w, f0.dim()}, {}};
  t.values.reserve(t.element_count());
  for (const auto& f : frames) {
    f.validate();
    if (f.grid_h != f0.grid_h || f.grid_w != f0.grid_w || f.dim() != f0.dim()) {
      throw ShapeError("container: frames differ in shape");
    }
    t.values.insert(t.values.end(), f.tokens.values().begin(), f.tokens.values().end());
  }
  return t;
}

std::vector<FrameFeatures> tensor_to_frames(const Tensor& t) {
  if (t.dims.size() != 4) throw ShapeError("container: expected an (N, h, w, dim) tensor");
  const std::size_t n = t.dims[0], h = t.dims[1], w = t.dims[2], d = t.dims[3];
  const std::size_t per = h * w * d;
  std::vector<FrameFeatures> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> data(t.values.begin() + static_cast<std::ptrdiff_t>(i * per),
                            t.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    frames.push_back({i, h, w, Matrix(h * w, d, std::move(data))});
  }
  return frames;
}

}  // namespace anchorprop
