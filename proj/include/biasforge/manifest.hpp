#pragma once

// Provenance-tagged image catalogs: ingestion, stratified splitting, merging,
// and the JSON/CSV manifest file formats.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace biasforge {

enum class Provenance { real, procedural };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct ImageRecord {
    std::filesystem::path path;
    std::string class_label;
    Provenance provenance = Provenance::real;
    std::optional<std::string> render_spec_id;  // set iff provenance == procedural
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DatasetManifest {
    std::vector<ImageRecord> records;
    std::vector<std::string> class_set;  // unique, lexicographically ordered
    std::string manifest_id;
    std::string created_at;  // ISO-8601 UTC

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
    [[nodiscard]] std::size_t count_class(const std::string& label) const;
    [[nodiscard]] std::size_t count_provenance(Provenance p) const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Throws biasforge::Error on a broken invariant (unknown label, duplicate path,
/// unsorted class set, provenance/render_spec_id disagreement). With
/// check_files, also requires every path to exist.
void validate(const DatasetManifest& manifest, bool check_files = false);

/// Sorted, de-duplicated class set built from a list of labels.
std::vector<std::string> canonical_class_set(std::vector<std::string> labels);

/// Current UTC time, or SOURCE_DATE_EPOCH when that variable is set.
std::string current_timestamp();
std::string format_timestamp(std::int64_t unix_seconds);

struct RejectedFile {
    std::filesystem::path path;
    std::string reason;
};

struct IngestResult {
    DatasetManifest manifest;
    std::vector<RejectedFile> rejects;
};

struct IngestOptions {
    std::optional<std::string> created_at;     // defaults to current_timestamp()
    std::optional<std::string> render_spec_id;  // required when ingesting procedural images
};

/// Scans `<root>/<class>/<image>`; labels are lower-cased directory names.
/// Every image is decoded; undecodable files go to `rejects`.
IngestResult ingest(const std::filesystem::path& root, Provenance provenance, const IngestOptions& options = {});

struct SplitRatio {
    int train = 4;
    int val = 1;
    friend bool operator==(const SplitRatio&, const SplitRatio&) = default;
};

struct SplitResult {
    DatasetManifest train;
    DatasetManifest val;
    SplitRatio ratio;
};

/// Per class, floor(n * val / (train + val)) records go to validation after a
/// seeded shuffle; the remainder goes to training.
SplitResult stratified_split(const DatasetManifest& manifest, SplitRatio ratio, std::uint64_t seed);

/// Number of validation records for a class of size n.
std::size_t validation_count(std::size_t n, SplitRatio ratio);

DatasetManifest merge(const DatasetManifest& base, const DatasetManifest& addition);

// ---- serialization --------------------------------------------------------

std::string manifest_to_json(const DatasetManifest& manifest, int indent = 2);
DatasetManifest manifest_from_json(const std::string& text);

/// Writes the manifest. Paths lying under `relativize_under` are stored
/// relative to the manifest file's directory; others are stored verbatim.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& file,
                   const std::optional<std::filesystem::path>& relativize_under = std::nullopt);

/// Reads a manifest; relative record paths resolve against the file's directory.
DatasetManifest load_manifest(const std::filesystem::path& file);

std::string manifest_to_csv(const DatasetManifest& manifest);
/// Same path rule as save_manifest.
void save_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& file,
                       const std::optional<std::filesystem::path>& relativize_under = std::nullopt);

std::string split_to_json(const SplitResult& split);

std::string rejects_to_json(const std::vector<RejectedFile>& rejects);

}  // namespace biasforge
