#pragma once

#include <cstdint>
#include <filesystem>

#include "sdinet/tensor.hpp"

namespace sdinet {

/// round-half-up of v * 255 after clamping to [0, 1].
std::uint8_t to_byte(double v);
inline float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

/// Reads an 8-bit RGB PNG into a [3,H,W] tensor with values b / 255.
/// Any other bit depth or color layout raises IoError.
Tensor<float> read_image(const std::filesystem::path& path);

/// Writes [3,H,W] as 8-bit RGB or [1,H,W] as 8-bit grayscale.
void write_image(const std::filesystem::path& path, const Tensor<float>& image);

/// Snaps every value to the nearest 8-bit level so in-memory images match
/// what a write/read round trip produces.
Tensor<float> quantize_to_bytes(const Tensor<float>& image);

}  // namespace sdinet
