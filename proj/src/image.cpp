#include "ihcc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "ihcc/common.hpp"

namespace ihcc {

Image resample_window(const Image& src, int x0, int y0, int w, int h, int out_h, int out_w) {
    if (w < 1 || h < 1 || x0 < 0 || y0 < 0 || x0 + w > src.width || y0 + h > src.height) {
        throw ConfigError("resample window outside image bounds");
    }
    Image out(out_h, out_w);
    std::vector<int> xi0(out_w), xi1(out_w);
    std::vector<float> xf(out_w);
    for (int x = 0; x < out_w; ++x) {
        const double pos = (x + 0.5) * static_cast<double>(w) / out_w - 0.5;
        const double fl = std::floor(pos);
        xi0[x] = std::clamp(static_cast<int>(fl), 0, w - 1) + x0;
        xi1[x] = std::clamp(static_cast<int>(fl) + 1, 0, w - 1) + x0;
        xf[x] = static_cast<float>(pos - fl);
        if (pos < 0) xf[x] = 0.0f;
    }
    for (int y = 0; y < out_h; ++y) {
        const double pos = (y + 0.5) * static_cast<double>(h) / out_h - 0.5;
        const double fl = std::floor(pos);
        const int yi0 = std::clamp(static_cast<int>(fl), 0, h - 1) + y0;
        const int yi1 = std::clamp(static_cast<int>(fl) + 1, 0, h - 1) + y0;
        const float yf = pos < 0 ? 0.0f : static_cast<float>(pos - fl);
        for (int x = 0; x < out_w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float top = src.at(yi0, xi0[x], c) * (1 - xf[x]) + src.at(yi0, xi1[x], c) * xf[x];
                const float bot = src.at(yi1, xi0[x], c) * (1 - xf[x]) + src.at(yi1, xi1[x], c) * xf[x];
                out.at(y, x, c) = top * (1 - yf) + bot * yf;
            }
        }
    }
    return out;
}

Image center_view(const Image& src, int size) {
    if (src.height == size && src.width == size) return src;
    const int side = std::min(src.height, src.width);
    return resample_window(src, (src.width - side) / 2, (src.height - side) / 2, side, side, size, size);
}

void clip_unit(Image& img) {
    for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
}

void quantize_8bit(Image& img) {
    for (float& v : img.data) v = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) { throw DataError(std::string("png: ") + msg); }
void png_warning_fn(png_structp, png_const_charp) {}

} // namespace

void write_png(const std::filesystem::path& path, const Image& img) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot open for writing: " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p; png_infop* i;
        ~Guard() { png_destroy_write_struct(p, i); }
    } guard{&png, &info};
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int i = 0; i < img.width * 3; ++i) {
            const float v = std::clamp(img.data[static_cast<std::size_t>(y) * img.width * 3 + i], 0.0f, 1.0f);
            row[i] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
}

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image: " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw DataError("not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    png_infop info = png_create_info_struct(png);
    struct Guard {
        png_structp* p; png_infop* i;
        ~Guard() { png_destroy_read_struct(p, i, nullptr); }
    } guard{&png, &info};
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_gray_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3) throw DataError("unsupported PNG layout: " + path.string());
    Image img(h, w);
    std::vector<png_byte> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int i = 0; i < w * 3; ++i) {
            img.data[static_cast<std::size_t>(y) * w * 3 + i] = row[i] / 255.0f;
        }
    }
    return img;
}

} // namespace ihcc
