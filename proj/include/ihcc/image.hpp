#pragma once

#include <filesystem>
#include <vector>

namespace ihcc {

// Interleaved RGB image, values nominally in [0, 1], row-major (y, x, c).
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Image() = default;
    Image(int h, int w, float fill = 0.0f) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

    bool empty() const { return data.empty(); }
    float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

// Bilinear resample of the window [x0, x0+w) x [y0, y0+h) to out_h x out_w
// using pixel-center alignment; a full window at the same size is an exact copy.
Image resample_window(const Image& src, int x0, int y0, int w, int h, int out_h, int out_w);

// Center square crop covering the shorter side, resampled to size x size.
Image center_view(const Image& src, int size);

void clip_unit(Image& img);

// 8-bit RGB PNG. Values are quantized with round(v * 255).
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

// Quantize in place to the 8-bit grid so a PNG round-trip is exact.
void quantize_8bit(Image& img);

} // namespace ihcc
