#include "biasforge/render.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace biasforge {

namespace fs = std::filesystem;
using detail::json;

void validate(const RenderSpec& spec) {
    auto bad = [&](const std::string& what) {
        throw Error(ErrorKind::invalid_argument, "render spec '" + spec.spec_id + "': " + what);
    };
    if (spec.spec_id.empty()) bad("spec_id is empty");
    if (spec.class_label.empty()) bad("class_label is empty");
    if (spec.count < 0) bad("count must be >= 0");
    if (spec.image_width < 1 || spec.image_height < 1) bad("image size must be at least 1x1");
    if (!(spec.field_of_view > 0.0 && spec.field_of_view < 180.0)) bad("field_of_view must lie in (0, 180)");
    if (spec.pose_range.lo > spec.pose_range.hi) bad("pose_range must be ordered");
    if (spec.lighting_range.lo > spec.lighting_range.hi) bad("lighting_range must be ordered");
    if (spec.lighting_range.lo < 0.0 || spec.lighting_range.hi > 1.0) bad("lighting_range must lie in [0,1]");
}

ShapeFamily shape_family_for(const std::string& class_label) {
    const std::uint64_t h = splitmix64(stable_hash(class_label));
    ShapeFamily f;
    f.kind = static_cast<ShapeFamily::Kind>(h % 6);
    f.lobes = 3 + static_cast<int>((h >> 8) % 5);
    f.aspect = 0.55 + 0.4 * static_cast<double>((h >> 16) & 0xFF) / 255.0;
    // Saturated hue from the hash, mapped through a simple HSV wheel.
    const double hue = static_cast<double>((h >> 24) & 0xFFFF) / 65536.0 * 6.0;
    const int sector = static_cast<int>(hue);
    const double frac = hue - sector;
    const double hi = 230.0, lo = 40.0;
    const double up = lo + (hi - lo) * frac, down = hi - (hi - lo) * frac;
    const std::array<std::array<double, 3>, 6> wheel{{{hi, up, lo}, {down, hi, lo}, {lo, hi, up},
                                                      {lo, down, hi}, {up, lo, hi}, {hi, lo, down}}};
    for (int c = 0; c < 3; ++c) {
        f.color[c] = static_cast<std::uint8_t>(wheel[sector % 6][c]);
    }
    return f;
}

ImageParams sample_image_params(const RenderSpec& spec, int index) {
    Rng rng(derive_seed(static_cast<std::uint64_t>(spec.master_seed), {static_cast<std::uint64_t>(index)}));
    ImageParams p;
    p.index = index;
    p.pose_angle = rng.uniform(spec.pose_range.lo, spec.pose_range.hi);
    p.lighting_intensity = rng.uniform(spec.lighting_range.lo, spec.lighting_range.hi);
    p.texture_seed = static_cast<std::int64_t>(
        derive_seed(static_cast<std::uint64_t>(spec.texture_seed), {static_cast<std::uint64_t>(index)}) >> 1);
    return p;
}

namespace {

double lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9E3779B97F4A7C15ULL ^
                                                         static_cast<std::uint64_t>(iy) * 0xC2B2AE3D27D4EB4FULL));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Two-octave value noise in [0,1].
double value_noise(std::uint64_t seed, double x, double y, double cell) {
    double total = 0.0, weight = 0.0, amp = 1.0;
    for (int octave = 0; octave < 2; ++octave) {
        const double fx = x / cell, fy = y / cell;
        const double gx = std::floor(fx), gy = std::floor(fy);
        const auto ix = static_cast<std::int64_t>(gx), iy = static_cast<std::int64_t>(gy);
        double tx = fx - gx, ty = fy - gy;
        tx = tx * tx * (3.0 - 2.0 * tx);
        ty = ty * ty * (3.0 - 2.0 * ty);
        const std::uint64_t s = seed + static_cast<std::uint64_t>(octave);
        const double a = lattice(s, ix, iy), b = lattice(s, ix + 1, iy);
        const double c = lattice(s, ix, iy + 1), d = lattice(s, ix + 1, iy + 1);
        const double top = a + (b - a) * tx, bottom = c + (d - c) * tx;
        total += amp * (top + (bottom - top) * ty);
        weight += amp;
        amp *= 0.5;
        cell *= 0.5;
    }
    return total / weight;
}

/// Chebyshev T_k(c) = cos(k * theta) when c = cos(theta).
double chebyshev(int k, double c) {
    double t0 = 1.0, t1 = c;
    if (k == 0) return t0;
    for (int i = 1; i < k; ++i) {
        const double t2 = 2.0 * c * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    return t1;
}

struct PolygonNormals {
    std::vector<std::array<double, 2>> normals;
    double apothem = 1.0;
};

PolygonNormals polygon_normals(int sides) {
    PolygonNormals p;
    for (int i = 0; i < sides; ++i) {
        const double a = 2.0 * std::numbers::pi * (i + 0.5) / sides;
        p.normals.push_back({std::cos(a), std::sin(a)});
    }
    p.apothem = std::cos(std::numbers::pi / sides);
    return p;
}

bool inside(const ShapeFamily& f, const PolygonNormals& poly, double u, double v) {
    using Kind = ShapeFamily::Kind;
    switch (f.kind) {
        case Kind::ellipse:
            return (u * u) / (f.aspect * f.aspect) + v * v <= 1.0;
        case Kind::star: {
            const double rho = std::sqrt(u * u + v * v);
            if (rho < 1e-9) return true;
            const double r = 0.55 + 0.45 * chebyshev(f.lobes, u / rho);
            return rho <= r;
        }
        case Kind::polygon: {
            double m = -1e300;
            for (const auto& n : poly.normals) m = std::max(m, u * n[0] + v * n[1]);
            return m <= poly.apothem;
        }
        case Kind::ring: {
            const double q = (u * u) / (f.aspect * f.aspect) + v * v;
            return q <= 1.0 && q >= 0.35;
        }
        case Kind::cross: {
            const double w = 0.18 + 0.2 * (f.aspect - 0.55);
            return (std::abs(u) <= w && std::abs(v) <= 1.0) || (std::abs(v) <= w && std::abs(u) <= f.aspect);
        }
        case Kind::crescent: {
            const double du = u - 0.2 - 0.4 * (f.aspect - 0.55);
            return u * u + v * v <= 1.0 && du * du + v * v > 0.6;
        }
    }
    return false;
}

}  // namespace

RgbImage render_image(const RenderSpec& spec, const ImageParams& params) {
    const ShapeFamily fam = shape_family_for(spec.class_label);
    const PolygonNormals poly = polygon_normals(fam.lobes);
    const int w = spec.image_width, h = spec.image_height;
    RgbImage img(w, h);

    const std::uint64_t tex = static_cast<std::uint64_t>(params.texture_seed.value_or(0));
    const double pose = params.pose_angle.value_or(0.0) * std::numbers::pi / 180.0;
    const double light = params.lighting_intensity.value_or(1.0);

    // Placement jitter and background palette come from the texture seed so
    // the (pose, lighting, texture_seed) triple fully determines the image.
    Rng jitter(derive_seed(tex, {0x51ULL}));
    const double side = std::min(w, h);
    const double cx = w * 0.5 + (jitter.uniform01() - 0.5) * 0.2 * side;
    const double cy = h * 0.5 + (jitter.uniform01() - 0.5) * 0.2 * side;
    const double radius = side * (0.30 + 0.1 * jitter.uniform01());
    std::array<double, 3> bg{};
    for (double& c : bg) c = 60.0 + 90.0 * jitter.uniform01();

    const double cs = std::cos(pose), sn = std::sin(pose);
    const double cell = std::max(2.0, side / 8.0);
    const std::uint64_t obj_seed = derive_seed(tex, {1});
    const std::uint64_t bg_seed = derive_seed(tex, {2});

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dx = (x + 0.5 - cx) / radius, dy = (y + 0.5 - cy) / radius;
            const double u = cs * dx + sn * dy;
            const double v = -sn * dx + cs * dy;
            std::uint8_t* px = img.at(x, y);
            if (inside(fam, poly, u, v)) {
                const double n = value_noise(obj_seed, x, y, cell * 0.5);
                const double shade = light * (0.75 + 0.25 * std::clamp(-dy, -1.0, 1.0)) * (0.65 + 0.35 * n);
                for (int c = 0; c < 3; ++c) {
                    px[c] = static_cast<std::uint8_t>(std::clamp(fam.color[c] * shade, 0.0, 255.0));
                }
            } else {
                const double n = value_noise(bg_seed, x, y, cell);
                const double shade = (0.55 + 0.45 * n) * (0.6 + 0.4 * light);
                for (int c = 0; c < 3; ++c) {
                    px[c] = static_cast<std::uint8_t>(std::clamp(bg[c] * shade, 0.0, 255.0));
                }
            }
        }
    }
    return img;
}

std::string image_file_name(int index) { return fmt::format("img_{:05d}.png", index); }

namespace {

DatasetManifest batch_manifest(const RenderSpec& spec, const RenderOptions& options) {
    DatasetManifest m;
    m.class_set = {spec.class_label};
    m.manifest_id = "render-" + spec.spec_id;
    m.created_at = options.created_at.value_or(current_timestamp());
    return m;
}

json params_json(const std::vector<ImageParams>& params) {
    json arr = json::array();
    for (const auto& p : params) {
        arr.push_back({{"index", p.index},
                       {"pose_angle", p.pose_angle ? json(*p.pose_angle) : json(nullptr)},
                       {"lighting_intensity", p.lighting_intensity ? json(*p.lighting_intensity) : json(nullptr)},
                       {"texture_seed", p.texture_seed ? json(*p.texture_seed) : json(nullptr)}});
    }
    return arr;
}

std::vector<ImageParams> params_from(const json& arr) {
    if (!arr.is_array()) {
        throw Error(ErrorKind::missing_metadata, "sidecar must be a JSON array");
    }
    std::vector<ImageParams> out;
    int position = 0;
    for (const auto& e : arr) {
        ImageParams p;
        p.index = position;
        if (e.is_object()) {
            if (e.contains("index") && e["index"].is_number_integer()) p.index = e["index"].get<int>();
            if (e.contains("pose_angle") && e["pose_angle"].is_number()) p.pose_angle = e["pose_angle"].get<double>();
            if (e.contains("lighting_intensity") && e["lighting_intensity"].is_number())
                p.lighting_intensity = e["lighting_intensity"].get<double>();
            if (e.contains("texture_seed") && e["texture_seed"].is_number_integer())
                p.texture_seed = e["texture_seed"].get<std::int64_t>();
        } else if (!e.is_null()) {
            throw Error(ErrorKind::missing_metadata, "sidecar entries must be objects or null");
        }
        out.push_back(p);
        ++position;
    }
    std::stable_sort(out.begin(), out.end(), [](const ImageParams& a, const ImageParams& b) { return a.index < b.index; });
    return out;
}

}  // namespace

RenderBatch render_batch(const RenderSpec& spec, const fs::path& out_root, const RenderOptions& options) {
    validate(spec);
    RenderBatch batch;
    batch.spec = spec;
    batch.manifest = batch_manifest(spec, options);
    if (spec.count == 0) {
        return batch;
    }
    const fs::path spec_dir = out_root / spec.spec_id;
    const fs::path class_dir = spec_dir / spec.class_label;
    ensure_directory(class_dir);

    for (int i = 0; i < spec.count; ++i) {
        ImageParams p = sample_image_params(spec, i);
        const fs::path file = class_dir / image_file_name(i);
        write_png(render_image(spec, p), file);
        ImageRecord r;
        r.path = fs::absolute(file).lexically_normal();
        r.class_label = spec.class_label;
        r.provenance = Provenance::procedural;
        r.render_spec_id = spec.spec_id;
        r.width = spec.image_width;
        r.height = spec.image_height;
        batch.manifest.records.push_back(std::move(r));
        batch.per_image_params.push_back(p);
    }
    write_text_file(spec_dir / "params.json", params_json(batch.per_image_params).dump(2) + "\n");
    write_text_file(spec_dir / "spec.json", detail::render_spec_json(spec).dump(2) + "\n");
    return batch;
}

RenderBatch import_external_batch(const RenderSpec& spec, const fs::path& dir, const RenderOptions& options) {
    validate(spec);
    if (!fs::is_directory(dir)) {
        throw Error(ErrorKind::io, "render directory does not exist: " + dir.string());
    }
    const fs::path sidecar = dir / "params.json";
    if (!fs::is_regular_file(sidecar)) {
        throw Error(ErrorKind::missing_metadata, "no params.json sidecar in " + dir.string());
    }
    std::vector<ImageParams> params;
    try {
        params = params_from(json::parse(read_text_file(sidecar)));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::missing_metadata, "unreadable sidecar " + sidecar.string() + ": " + e.what());
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && has_image_extension(entry.path())) {
            files.push_back(fs::absolute(entry.path()).lexically_normal());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.size() != params.size()) {
        throw Error(ErrorKind::metadata_mismatch,
                    fmt::format("{} images but {} sidecar entries in {}", files.size(), params.size(), dir.string()));
    }

    RenderBatch batch;
    batch.spec = spec;
    batch.manifest = batch_manifest(spec, options);
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto decoded = decode_image(files[i]);
        if (!decoded.image) {
            throw Error(ErrorKind::corrupt_file, files[i].string() + ": " + decoded.error);
        }
        ImageRecord r;
        r.path = files[i];
        r.class_label = spec.class_label;
        r.provenance = Provenance::procedural;
        r.render_spec_id = spec.spec_id;
        r.width = decoded.image->width;
        r.height = decoded.image->height;
        batch.manifest.records.push_back(std::move(r));
    }
    batch.per_image_params = std::move(params);
    if (static_cast<int>(files.size()) != spec.count) {
        batch.warnings.push_back(fmt::format("spec '{}' requested {} images, imported {}", spec.spec_id, spec.count,
                                             files.size()));
        batch.spec.count = static_cast<int>(files.size());
    }
    return batch;
}

namespace detail {

json render_spec_json(const RenderSpec& s) {
    return {{"spec_id", s.spec_id},
            {"class_label", s.class_label},
            {"count", s.count},
            {"image_width", s.image_width},
            {"image_height", s.image_height},
            {"field_of_view", s.field_of_view},
            {"texture_seed", s.texture_seed},
            {"pose_range", {s.pose_range.lo, s.pose_range.hi}},
            {"lighting_range", {s.lighting_range.lo, s.lighting_range.hi}},
            {"master_seed", s.master_seed}};
}

RenderSpec render_spec_from(const json& j, const RenderSpec& defaults) {
    RenderSpec s = defaults;
    try {
        s.spec_id = j.value("spec_id", s.spec_id);
        s.class_label = j.value("class_label", s.class_label);
        s.count = j.value("count", s.count);
        s.image_width = j.value("image_width", s.image_width);
        s.image_height = j.value("image_height", s.image_height);
        s.field_of_view = j.value("field_of_view", s.field_of_view);
        s.texture_seed = j.value("texture_seed", s.texture_seed);
        s.master_seed = j.value("master_seed", s.master_seed);
        if (j.contains("pose_range")) {
            s.pose_range = {j["pose_range"].at(0).get<double>(), j["pose_range"].at(1).get<double>()};
        }
        if (j.contains("lighting_range")) {
            s.lighting_range = {j["lighting_range"].at(0).get<double>(), j["lighting_range"].at(1).get<double>()};
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed render spec: ") + e.what());
    }
    return s;
}

}  // namespace detail

std::string render_spec_to_json(const RenderSpec& spec) { return detail::render_spec_json(spec).dump(2) + "\n"; }

RenderSpec render_spec_from_json(const std::string& text) {
    try {
        return detail::render_spec_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("render spec is not valid JSON: ") + e.what());
    }
}

std::string params_to_json(const std::vector<ImageParams>& params) { return params_json(params).dump(2) + "\n"; }

std::vector<ImageParams> params_from_json(const std::string& text) {
    try {
        return params_from(json::parse(text));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::missing_metadata, std::string("sidecar is not valid JSON: ") + e.what());
    }
}

}  // namespace biasforge
