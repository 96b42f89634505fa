#pragma once

// APFT tensor container: a fixed little-endian layout
//
//   "APFT" | version u16 | ndim u16 | dims u64[ndim] | dtype u8 | zero pad to 8 | payload
//
// Only dtype 1 (f32) and version 1 exist. Payload is row-major.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "anchorprop/attention.hpp"
#include "anchorprop/tensor.hpp"

namespace anchorprop {

inline constexpr std::uint16_t kContainerVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const;
};

std::vector<unsigned char> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const unsigned char> bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

Tensor matrix_to_tensor(const Matrix& m);
Matrix tensor_to_matrix(const Tensor& t);

// Frames of one grid shape as an (N, h, w, dim) tensor; frame_index = position.
Tensor frames_to_tensor(std::span<const FrameFeatures> frames);
std::vector<FrameFeatures> tensor_to_frames(const Tensor& t);

}  // namespace anchorprop
