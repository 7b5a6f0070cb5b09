#include "fundus/png_io.hpp"

#include <png.h>

#include <stdexcept>

#include "fundus/errors.hpp"

namespace fundus::png_io {

namespace {

[[noreturn]] void fail(const std::string& path, const png_image& image, const char* what) {
    throw DataError(std::string(what) + " '" + path + "': " +
                    (image.message[0] ? image.message : "libpng error"));
}

}  // namespace

ImageU8 read_rgb8(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        fail(path, image, "cannot read image");
    image.format = PNG_FORMAT_RGB;
    ImageU8 out;
    out.width = static_cast<int>(image.width);
    out.height = static_cast<int>(image.height);
    out.pixels.resize(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr))
        fail(path, image, "cannot decode image");
    return out;
}

void write_rgb8(const std::string& path, const ImageU8& img) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
        fail(path, image, "cannot write image");
}

std::vector<std::uint8_t> read_gray8(const std::string& path, int* width, int* height) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        fail(path, image, "cannot read mask");
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr))
        fail(path, image, "cannot decode mask");
    *width = static_cast<int>(image.width);
    *height = static_cast<int>(image.height);
    return pixels;
}

void write_gray8(const std::string& path, int width, int height,
                 const std::vector<std::uint8_t>& pixels) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr))
        fail(path, image, "cannot write mask");
}

}  // namespace fundus::png_io
