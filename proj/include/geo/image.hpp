#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace geo {

// Grayscale raster, row-major, values in [0,1]. Loaded from 8-bit PGM by
// dividing by 255; written back with round-to-nearest.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels; // size() == width*height

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

// Binary mask over the same pixel grid as its companion image.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits; // 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;
};

// Binary PGM (P5, maxval 255) readers/writers. Only this flavor exists in
// our corpora; anything else is rejected with the offending path named.
GrayImage load_gray(const std::string& path);
void write_gray(const std::string& path, const GrayImage& img);

// Masks use the same container format; any nonzero byte counts as set.
BinaryMask load_mask(const std::string& path);
void write_mask(const std::string& path, const BinaryMask& mask);

} // namespace geo
