#pragma once

// Minimal RGB image value type and codec entry points. The codecs are backed
// by OpenCV; nothing OpenCV-specific leaks through this header.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace biasforge {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved R,G,B

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* at(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
};

struct DecodeOutcome {
    std::optional<RgbImage> image;
    std::string error;
};

/// Fully decodes a PNG or JPEG file. Truncated or corrupt files yield an error
/// string rather than an exception.
DecodeOutcome decode_image(const std::filesystem::path& file);

/// Writes a PNG with fixed compression settings (no timestamp chunks).
void write_png(const RgbImage& image, const std::filesystem::path& file);

bool has_image_extension(const std::filesystem::path& file);

/// Decodes, letterboxes to width x height (aspect preserved, black padding)
/// and returns planar float data in [0,1] laid out as C,H,W with C = 3.
std::optional<std::vector<float>> load_letterboxed(const std::filesystem::path& file, int width, int height);

/// Same as load_letterboxed but from an in-memory image.
std::vector<float> letterbox(const RgbImage& image, int width, int height);

}  // namespace biasforge
