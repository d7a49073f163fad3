#pragma once

// Procedural training images: a deterministic parametric 2D renderer and an
// adapter for batches produced by external 3D engines.

#include "biasforge/image.hpp"
#include "biasforge/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace biasforge {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    friend bool operator==(const Range&, const Range&) = default;
};

struct RenderSpec {
    std::string spec_id;
    std::string class_label;
    int count = 0;
    int image_width = 640;
    int image_height = 480;
    double field_of_view = 90.0;  // carried for external engines; the 2D renderer has no camera
    std::int64_t texture_seed = 0;
    Range pose_range{-180.0, 180.0};  // degrees
    Range lighting_range{0.4, 1.0};   // intensities in [0,1]
    std::int64_t master_seed = 0;

    friend bool operator==(const RenderSpec&, const RenderSpec&) = default;
};

void validate(const RenderSpec& spec);

struct ImageParams {
    int index = 0;
    std::optional<double> pose_angle;
    std::optional<double> lighting_intensity;
    std::optional<std::int64_t> texture_seed;

    friend bool operator==(const ImageParams&, const ImageParams&) = default;
};

struct RenderBatch {
    RenderSpec spec;
    DatasetManifest manifest;
    std::vector<ImageParams> per_image_params;
    std::vector<std::string> warnings;
};

/// Silhouette family assigned to a class label (keyed by a hash of the label).
struct ShapeFamily {
    enum class Kind { ellipse, star, polygon, ring, cross, crescent };
    Kind kind = Kind::ellipse;
    int lobes = 5;
    double aspect = 0.7;
    std::uint8_t color[3] = {200, 120, 60};
};

ShapeFamily shape_family_for(const std::string& class_label);

/// Parameters of image `index`, derived from (master_seed, index) and
/// (texture_seed, index) only, so any subset of a batch can be rendered alone.
ImageParams sample_image_params(const RenderSpec& spec, int index);

/// Renders one image in memory.
RgbImage render_image(const RenderSpec& spec, const ImageParams& params);

struct RenderOptions {
    std::optional<std::string> created_at;
};

/// Writes `<out_root>/<spec_id>/<class_label>/img_<index>.png` and the sidecar
/// `<out_root>/<spec_id>/params.json`. A zero-count spec writes nothing.
RenderBatch render_batch(const RenderSpec& spec, const std::filesystem::path& out_root, const RenderOptions& options = {});

/// Wraps images exported by an external engine. `dir` must hold image files
/// (searched recursively) plus a `params.json` sidecar with one entry per image.
RenderBatch import_external_batch(const RenderSpec& spec, const std::filesystem::path& dir,
                                  const RenderOptions& options = {});

std::string image_file_name(int index);

std::string render_spec_to_json(const RenderSpec& spec);
RenderSpec render_spec_from_json(const std::string& text);

std::string params_to_json(const std::vector<ImageParams>& params);
std::vector<ImageParams> params_from_json(const std::string& text);

}  // namespace biasforge
