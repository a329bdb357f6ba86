#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsnet/mask.hpp"
#include "gsnet/params.hpp"
#include "gsnet/pipeline.hpp"

namespace gsnet {

/// Trim, collapse inner whitespace to single spaces, lower-case ASCII.
std::string normalize_class_name(const std::string& name);

const std::vector<std::string>& default_background_synonyms();

/// Ordered unique class names. Matching is on normalize_class_name(), so
/// "Building" and " building " are the same class. kUnlabeled is reserved.
class ClassVocabulary {
public:
    ClassVocabulary() = default;
    explicit ClassVocabulary(const std::vector<std::string>& names);

    const std::vector<std::string>& names() const { return names_; }
    std::size_t size() const { return names_.size(); }
    std::optional<std::uint8_t> find(const std::string& name) const;
    /// Index of `name`, appending it if new.
    std::uint8_t add(const std::string& name);
    bool operator==(const ClassVocabulary& o) const { return names_ == o.names_; }

private:
    std::vector<std::string> names_;
    std::map<std::string, std::uint8_t> index_;
};

/// Source mask value -> vocabulary index (or kUnlabeled).
using Remap = std::map<std::uint8_t, std::uint8_t>;

struct SampleRecord {
    std::string image;
    std::string mask;
    std::string source;
    bool operator==(const SampleRecord&) const = default;
};

/// Samples keep their original masks; `remaps[source]` translates a mask
/// from that source into `vocabulary`.
struct DatasetManifest {
    std::string name;
    ClassVocabulary vocabulary;
    std::vector<SampleRecord> samples;
    std::map<std::string, Remap> remaps;
    std::filesystem::path base_dir;  // relative sample paths resolve against this

    std::filesystem::path resolve(const std::string& p) const;
    const Remap& remap_for(const std::string& source) const;

    /// Without a "remap" key the file is a raw source manifest: "classes"
    /// index its masks directly, background synonyms become kUnlabeled, and
    /// duplicates (after normalization) collapse.
    static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                     const std::vector<std::string>& background = default_background_synonyms());
    nlohmann::json to_json() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path,
                              const std::vector<std::string>& background = default_background_synonyms());
void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);

/// Union of vocabularies in first-seen order with composed remap tables.
/// Sample paths become absolute. Throws ContractError on empty input or
/// when one source would need two different remap tables.
DatasetManifest merge_datasets(const std::vector<DatasetManifest>& manifests, const std::string& name = "merged",
                               const std::vector<std::string>& background = default_background_synonyms());

/// Pure index substitution; kUnlabeled passes through unless the remap says
/// otherwise. Values missing from the remap are errors.
SegmentationMask remap_mask(const SegmentationMask& mask, const Remap& remap);

struct Segment {
    std::int64_t pixels = 0;
    double centroid_row = 0;  // mean of (r + 0.5) / H
    double centroid_col = 0;
};

/// 4-connected components of the pixels equal to `class_index`, in raster
/// order of their first pixel.
std::vector<Segment> connected_components(const SegmentationMask& mask, std::uint8_t class_index);

struct SegmentStats {
    std::map<std::string, std::int64_t> class_pixels;
    std::map<std::string, double> class_fractions;        // over labeled pixels
    std::map<std::int64_t, std::int64_t> size_histogram;  // bucket = largest power of two <= size
    struct Centroid {
        std::string class_name;
        std::int64_t pixels;
        double row, col;
    };
    std::vector<Centroid> centroids;
    std::int64_t samples_read = 0;
    std::vector<std::pair<std::string, std::string>> skipped;  // (sample, reason)

    nlohmann::json to_json() const;
};

std::int64_t size_bucket(std::int64_t pixels);

/// Adds one remapped mask to `stats`.
void accumulate_stats(SegmentStats& stats, const SegmentationMask& mask, const ClassVocabulary& vocab);

/// Reads every sample's mask, remaps it and aggregates. Unreadable samples
/// are recorded in `skipped`.
SegmentStats compute_stats(const DatasetManifest& manifest);

/// Loads image and remapped mask; throws on unreadable files or extent
/// mismatch.
Sample<float> load_sample(const DatasetManifest& manifest, std::size_t index);

/// Synthetic fixture: block-aligned rectangles of random classes over a
/// class-0 canvas, painted with per-class colours plus Gaussian noise.
Sample<float> synth_sample(std::int64_t size, int classes, Rng& rng, int block = 8, double noise = 0.05);

/// Writes `count` synthetic samples as PNGs under `dir` together with a raw
/// manifest.json listing `class_names`. Returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const std::string& name,
                                             const std::vector<std::string>& class_names, int count,
                                             std::int64_t size, std::uint64_t seed);

}  // namespace gsnet
