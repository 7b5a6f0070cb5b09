#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fundus::png_io {

// Interleaved 8-bit RGB.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // 3 * width * height
};

ImageU8 read_rgb8(const std::string& path);
void write_rgb8(const std::string& path, const ImageU8& img);

std::vector<std::uint8_t> read_gray8(const std::string& path, int* width, int* height);
void write_gray8(const std::string& path, int width, int height,
                 const std::vector<std::uint8_t>& pixels);

}  // namespace fundus::png_io
