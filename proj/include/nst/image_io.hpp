#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nst/tensor.hpp"

namespace nst {

struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // interleaved, 3 * width * height samples
};

// Decodes PNG or binary PPM (P6). With target_size the image is center
// cropped to square, then bilinearly resampled to target x target.
// Values are scaled to [0,1] as v/255.
Tensor load_image(const std::string& path, std::optional<int> target_size = std::nullopt);

// Clamps to [0,1], quantizes round(v*255); format chosen by extension
// (.png / .ppm).
void save_image(const Tensor& t, const std::string& path);

// Half-pixel-centered bilinear resampling.
Tensor resize_bilinear(const Tensor& t, std::int64_t out_h, std::int64_t out_w);

// Lower-level codec entry points, exposed for tests.
ImageBuffer decode_image(const std::string& path);
Tensor buffer_to_tensor(const ImageBuffer& buf);
ImageBuffer tensor_to_buffer(const Tensor& t);

}  // namespace nst
