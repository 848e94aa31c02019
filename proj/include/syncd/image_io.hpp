#ifndef SYNCD_IMAGE_IO_HPP
#define SYNCD_IMAGE_IO_HPP

#include <filesystem>

#include "syncd/tensor.hpp"

namespace syncd {

// 8-bit PNG preview of an [H x W x C] tensor (C = 1 grayscale, C >= 3 uses the
// first three channels as RGB), per-channel min-max normalized.
void write_png_preview(const std::filesystem::path& path, const Tensor& image);

}  // namespace syncd

#endif
