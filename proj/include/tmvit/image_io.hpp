#pragma once

#include <string>
#include <vector>

#include "tmvit/tensor.hpp"

namespace tmvit {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> pixels;   // interleaved RGB, row-major

    unsigned char& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    unsigned char at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};

// Binary PPM (P6), maxval 255 only. ASCII P3 is rejected.
RgbImage read_ppm(const std::string& path);
void write_ppm(const RgbImage& img, const std::string& path);

RgbImage nearest_resize(const RgbImage& img, int width, int height);

struct ImageNorm {
    float mean = 0.5f;
    float std = 0.5f;
};

// Reads a P6 image, nearest-resizes to side x side when needed, scales pixels
// to [0,1] and normalizes to (v - mean) / std. Result is [3 x side x side].
Tensor load_image_ppm(const std::string& path, int side, ImageNorm norm = {});

} // namespace tmvit
