#include "biasforge/manifest.hpp"

#include "biasforge/error.hpp"
#include "biasforge/fileio.hpp"
#include "biasforge/hashing.hpp"
#include "biasforge/image.hpp"
#include "biasforge/seeding.hpp"
#include "detail/json_codec.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <map>
#include <set>
#include <unordered_set>

namespace biasforge {

namespace fs = std::filesystem;
using detail::json;

std::string to_string(Provenance p) { return p == Provenance::real ? "real" : "procedural"; }

Provenance provenance_from_string(const std::string& s) {
    if (s == "real") {
        return Provenance::real;
    }
    if (s == "procedural") {
        return Provenance::procedural;
    }
    throw Error(ErrorKind::invalid_argument, "unknown provenance '" + s + "'");
}

std::size_t DatasetManifest::count_class(const std::string& label) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) { return r.class_label == label; }));
}

std::size_t DatasetManifest::count_provenance(Provenance p) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) { return r.provenance == p; }));
}

std::vector<std::string> canonical_class_set(std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

void validate(const DatasetManifest& manifest, bool check_files) {
    if (!std::is_sorted(manifest.class_set.begin(), manifest.class_set.end()) ||
        std::adjacent_find(manifest.class_set.begin(), manifest.class_set.end()) != manifest.class_set.end()) {
        throw Error(ErrorKind::invalid_argument, "class_set must be unique and lexicographically ordered");
    }
    const std::set<std::string> classes(manifest.class_set.begin(), manifest.class_set.end());
    std::unordered_set<std::string> seen;
    for (const auto& r : manifest.records) {
        if (r.class_label.empty() || !classes.contains(r.class_label)) {
            throw Error(ErrorKind::unknown_class, "record " + r.path.string() + " has label '" + r.class_label +
                                                      "' outside the class set");
        }
        if (!seen.insert(r.path.string()).second) {
            throw Error(ErrorKind::duplicate_path, r.path.string());
        }
        if ((r.provenance == Provenance::procedural) != r.render_spec_id.has_value()) {
            throw Error(ErrorKind::invalid_argument,
                        "render_spec_id must be set exactly for procedural records: " + r.path.string());
        }
        if (check_files && !fs::is_regular_file(r.path)) {
            throw Error(ErrorKind::io, "missing image " + r.path.string());
        }
    }
}

std::string format_timestamp(std::int64_t unix_seconds) {
    const auto t = static_cast<std::time_t>(unix_seconds);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string current_timestamp() {
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
        return format_timestamp(std::strtoll(env, nullptr, 10));
    }
    const auto now = std::chrono::system_clock::now();
    return format_timestamp(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool hidden(const fs::path& p) {
    const auto name = p.filename().string();
    return !name.empty() && name[0] == '.';
}

}  // namespace

IngestResult ingest(const fs::path& root, Provenance provenance, const IngestOptions& options) {
    if (!fs::is_directory(root)) {
        throw Error(ErrorKind::io, "dataset root is not a directory: " + root.string());
    }
    if (provenance == Provenance::procedural && !options.render_spec_id) {
        throw Error(ErrorKind::invalid_argument, "procedural ingestion requires a render_spec_id");
    }
    const fs::path abs_root = fs::absolute(root).lexically_normal();

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(abs_root)) {
        if (entry.is_directory() && !hidden(entry.path())) {
            class_dirs.push_back(entry.path());
        }
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) {
        throw Error(ErrorKind::empty_dataset, "no class folders under " + root.string());
    }

    IngestResult result;
    std::map<std::string, std::size_t> per_class;
    std::string fingerprint = to_string(provenance);
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && !hidden(entry.path()) && has_image_extension(entry.path())) {
                files.push_back(entry.path());
            }
        }
        if (files.empty()) {
            throw Error(ErrorKind::empty_class, "class folder '" + dir.filename().string() + "' holds no images");
        }
        std::sort(files.begin(), files.end());
        const std::string label = lower(dir.filename().string());
        for (const auto& file : files) {
            auto decoded = decode_image(file);
            if (!decoded.image) {
                result.rejects.push_back({file, decoded.error});
                continue;
            }
            ImageRecord rec;
            rec.path = file;
            rec.class_label = label;
            rec.provenance = provenance;
            rec.render_spec_id = options.render_spec_id;
            if (provenance == Provenance::real) {
                rec.render_spec_id.reset();
            }
            rec.width = decoded.image->width;
            rec.height = decoded.image->height;
            result.manifest.records.push_back(std::move(rec));
            ++per_class[label];
            fingerprint += "|" + file.lexically_relative(abs_root).generic_string();
        }
        if (per_class[label] == 0) {
            throw Error(ErrorKind::empty_class,
                        "class folder '" + dir.filename().string() + "' holds no decodable images");
        }
    }

    auto& m = result.manifest;
    std::sort(m.records.begin(), m.records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
    for (const auto& [label, n] : per_class) {
        m.class_set.push_back(label);
    }
    m.manifest_id = "ingest-" + sha256_hex(fingerprint).substr(0, 16);
    m.created_at = options.created_at.value_or(current_timestamp());
    return result;
}

std::size_t validation_count(std::size_t n, SplitRatio ratio) {
    return n * static_cast<std::size_t>(ratio.val) / static_cast<std::size_t>(ratio.train + ratio.val);
}

SplitResult stratified_split(const DatasetManifest& manifest, SplitRatio ratio, std::uint64_t seed) {
    if (ratio.train <= 0 || ratio.val <= 0) {
        throw Error(ErrorKind::invalid_argument, fmt::format("split ratio must be positive, got {}:{}", ratio.train, ratio.val));
    }
    const auto min_size = static_cast<std::size_t>(ratio.train + ratio.val);
    std::vector<bool> to_val(manifest.records.size(), false);
    for (const auto& label : manifest.class_set) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            if (manifest.records[i].class_label == label) {
                idx.push_back(i);
            }
        }
        if (idx.size() < min_size) {
            throw Error(ErrorKind::insufficient_class_size,
                        fmt::format("class '{}' has {} records, needs at least {}", label, idx.size(), min_size));
        }
        Rng rng(derive_seed(seed, {stable_hash(label)}));
        rng.shuffle(std::span<std::size_t>(idx));
        const std::size_t n_val = validation_count(idx.size(), ratio);
        for (std::size_t k = 0; k < n_val; ++k) {
            to_val[idx[k]] = true;
        }
    }

    SplitResult out;
    out.ratio = ratio;
    for (auto* part : {&out.train, &out.val}) {
        part->class_set = manifest.class_set;
        part->created_at = manifest.created_at;
    }
    out.train.manifest_id = manifest.manifest_id + "/train";
    out.val.manifest_id = manifest.manifest_id + "/val";
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        (to_val[i] ? out.val : out.train).records.push_back(manifest.records[i]);
    }
    return out;
}

DatasetManifest merge(const DatasetManifest& base, const DatasetManifest& addition) {
    const std::set<std::string> classes(base.class_set.begin(), base.class_set.end());
    for (const auto& c : addition.class_set) {
        if (!classes.contains(c)) {
            throw Error(ErrorKind::unknown_class, "class '" + c + "' is not in the base class set");
        }
    }
    if (addition.records.empty()) {
        return base;
    }
    std::unordered_set<std::string> paths;
    for (const auto& r : base.records) {
        paths.insert(r.path.string());
    }
    DatasetManifest out = base;
    for (const auto& r : addition.records) {
        if (!classes.contains(r.class_label)) {
            throw Error(ErrorKind::unknown_class, "class '" + r.class_label + "' is not in the base class set");
        }
        if (!paths.insert(r.path.string()).second) {
            throw Error(ErrorKind::duplicate_path, r.path.string());
        }
        out.records.push_back(r);
    }
    out.manifest_id = "merge-" + sha256_hex(base.manifest_id + "|" + addition.manifest_id).substr(0, 16);
    out.created_at = std::max(base.created_at, addition.created_at);
    return out;
}

// ---- serialization --------------------------------------------------------

namespace {

/// Path as written to a manifest file: relative to `base` when it lies under `under`.
std::string stored_path(const fs::path& p, const std::optional<fs::path>& base, const std::optional<fs::path>& under) {
    if (!under || !base) return p.generic_string();
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path rel_to_root = abs.lexically_relative(fs::absolute(*under).lexically_normal());
    if (rel_to_root.empty() || *rel_to_root.begin() == "..") return p.generic_string();
    return abs.lexically_relative(fs::absolute(*base).lexically_normal()).generic_string();
}

std::string csv_text(const DatasetManifest& manifest, const std::optional<fs::path>& base,
                     const std::optional<fs::path>& under) {
    std::string out = "path,class_label,provenance,render_spec_id,width,height\n";
    for (const auto& r : manifest.records) {
        out += fmt::format("{},{},{},{},{},{}\n", csv_field(stored_path(r.path, base, under)), csv_field(r.class_label),
                           to_string(r.provenance), csv_field(r.render_spec_id.value_or("")), r.width, r.height);
    }
    return out;
}

}  // namespace

namespace detail {

json manifest_json(const DatasetManifest& m, const std::optional<fs::path>& path_base,
                   const std::optional<fs::path>& relativize_under) {
    json records = json::array();
    for (const auto& r : m.records) {
        records.push_back({{"path", stored_path(r.path, path_base, relativize_under)},
                           {"class_label", r.class_label},
                           {"provenance", to_string(r.provenance)},
                           {"render_spec_id", r.render_spec_id ? json(*r.render_spec_id) : json(nullptr)},
                           {"width", r.width},
                           {"height", r.height}});
    }
    return {{"manifest_id", m.manifest_id},
            {"created_at", m.created_at},
            {"class_set", m.class_set},
            {"records", std::move(records)}};
}

DatasetManifest manifest_from(const json& j, const std::optional<fs::path>& path_base) {
    DatasetManifest m;
    try {
        m.manifest_id = j.at("manifest_id").get<std::string>();
        m.created_at = j.value("created_at", std::string{});
        m.class_set = j.at("class_set").get<std::vector<std::string>>();
        for (const auto& jr : j.at("records")) {
            ImageRecord r;
            fs::path p = jr.at("path").get<std::string>();
            if (p.is_relative() && path_base) {
                p = (*path_base / p).lexically_normal();
            }
            r.path = p;
            r.class_label = jr.at("class_label").get<std::string>();
            r.provenance = provenance_from_string(jr.at("provenance").get<std::string>());
            if (jr.contains("render_spec_id") && !jr["render_spec_id"].is_null()) {
                r.render_spec_id = jr["render_spec_id"].get<std::string>();
            }
            r.width = jr.value("width", 0);
            r.height = jr.value("height", 0);
            m.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed manifest: ") + e.what());
    }
    validate(m);
    return m;
}

}  // namespace detail

std::string manifest_to_json(const DatasetManifest& manifest, int indent) {
    return detail::manifest_json(manifest).dump(indent) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("manifest is not valid JSON: ") + e.what());
    }
    return detail::manifest_from(j);
}

void save_manifest(const DatasetManifest& manifest, const fs::path& file, const std::optional<fs::path>& relativize_under) {
    const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
    write_text_file(file, detail::manifest_json(manifest, dir, relativize_under).dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& file) {
    const std::string text = read_text_file(file);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::invalid_argument, file.string() + " is not valid JSON: " + e.what());
    }
    const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
    return detail::manifest_from(j, dir);
}

std::string manifest_to_csv(const DatasetManifest& manifest) { return csv_text(manifest, std::nullopt, std::nullopt); }

void save_manifest_csv(const DatasetManifest& manifest, const fs::path& file, const std::optional<fs::path>& relativize_under) {
    const fs::path dir = file.has_parent_path() ? file.parent_path() : fs::path(".");
    write_text_file(file, csv_text(manifest, dir, relativize_under));
}

std::string split_to_json(const SplitResult& split) {
    json j{{"ratio", {split.ratio.train, split.ratio.val}},
           {"train", detail::manifest_json(split.train)},
           {"val", detail::manifest_json(split.val)}};
    return j.dump(2) + "\n";
}

std::string rejects_to_json(const std::vector<RejectedFile>& rejects) {
    json arr = json::array();
    for (const auto& r : rejects) {
        arr.push_back({{"path", r.path.generic_string()}, {"reason", r.reason}});
    }
    return arr.dump(2) + "\n";
}

}  // namespace biasforge
