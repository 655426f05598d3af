#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ssit/tensor.hpp"

namespace ssit {

// Raw 8-bit RGB image, row-major, as stored in a binary PPM (P6) file.
struct ImageFile {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;  // width*height*3 bytes
};

ImageFile read_ppm(const std::filesystem::path& path);
ImageFile decode_ppm(const std::vector<uint8_t>& bytes);
void write_ppm(const ImageFile& img, const std::filesystem::path& path,
               const std::string& comment = {});

// Loads a P6 file into a 1 x 3 x S x S tensor in [-1, 1] (v / 127.5 - 1),
// resampling with half-pixel-center bilinear interpolation when the file size
// differs from target_size. target_size 0 keeps the native size (must be
// square... non-square files are resampled to target_size and rejected when
// target_size is 0).
Tensor load_image(Graph& g, const std::filesystem::path& path, int target_size);

// Clamps to [-1, 1], quantizes with v -> round((v + 1) * 127.5), writes P6.
void save_image(const Tensor& image, const std::filesystem::path& path,
                const std::string& comment = {});

// conversions used by both the trainer and the tests
Tensor tensor_from_image(Graph& g, const ImageFile& img);
ImageFile image_from_tensor(const Tensor& t);
ImageFile resize_bilinear(const ImageFile& img, int64_t out_w, int64_t out_h);

}  // namespace ssit
