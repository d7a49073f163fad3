#pragma once

// Desk-scale stand-in for a real photo dataset: per-class procedural renders
// laid out as `<root>/<class>/<image>.png`, with optional quality degradation
// of one class.

#include "biasforge/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace biasforge {

struct ToyDatasetSpec {
    std::vector<std::string> classes{"bear", "dog", "elephant", "horse", "sheep"};
    int per_class = 500;
    std::optional<std::string> degraded_class;
    int degraded_count = 100;
    double noise_sigma = 40.0;  // on the 0..255 scale
    int image_width = 64;
    int image_height = 48;
    std::int64_t seed = 0;
};

/// Grayscale, additive Gaussian noise, then a 5x5 Gaussian blur.
RgbImage degrade(const RgbImage& image, double noise_sigma, std::uint64_t seed);

/// Writes the training-side dataset under `root`. Returns the number of images.
std::size_t write_toy_dataset(const ToyDatasetSpec& spec, const std::filesystem::path& root);

/// Clean renders for evaluation, drawn from seeds disjoint from the training side.
std::size_t write_toy_eval_set(const ToyDatasetSpec& spec, int per_class, const std::filesystem::path& root);

}  // namespace biasforge
