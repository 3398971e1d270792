#pragma once

#include <string>
#include <vector>

#include "dda/tensor.hpp"

namespace dda {

/// Interleaved 8-bit image, row-major, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
    Index h = 0, w = 0, channels = 0;
    std::vector<unsigned char> pixels;
};

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

/// [1,3,H,W] float tensor in [0,1] <-> 8-bit RGB.
ImageU8 tensor_to_u8(const Tensor<float>& t);
Tensor<float> u8_to_tensor(const ImageU8& img);

} // namespace dda
