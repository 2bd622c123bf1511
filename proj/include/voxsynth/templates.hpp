#pragma once

// Binary shape templates: indexing a directory of masks, centring them into
// the 128^3 working grid, and the procedural `smshapes` blob generator used
// when no anatomical templates are wanted.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "voxsynth/grid.hpp"
#include "voxsynth/rng.hpp"

namespace voxsynth {

inline constexpr std::int64_t kTemplateGrid = 128;

struct BinaryTemplate {
    MaskVolume mask;
    std::string source_id;

    const GridMeta &meta() const { return mask.meta; }
};

// Inclusive voxel bounds of the true voxels.
struct BoundingBox {
    Index3 lo{0, 0, 0};
    Index3 hi{0, 0, 0};
    bool operator==(const BoundingBox &) const = default;
};

std::optional<BoundingBox> mask_bounds(const MaskVolume &mask);
std::int64_t count_true(const MaskVolume &mask);

struct TemplateEntry {
    std::string source_id;
    std::filesystem::path path;
    std::int64_t voxel_count = 0;
    BoundingBox bbox;
    Index3 dims{0, 0, 0};
    std::string sha256;
    // Label values merged into the mask; empty for a binary file.
    std::vector<std::int64_t> merged_labels;
};

struct TemplateManifest {
    std::vector<TemplateEntry> entries;
    std::string bank_hash;
};

void to_json(nlohmann::json &j, const TemplateManifest &m);
void from_json(const nlohmann::json &j, TemplateManifest &m);

// Recomputes the digest over (source_id, content digest, voxel count, bbox)
// of every entry, in order.
std::string compute_bank_hash(const std::vector<TemplateEntry> &entries);

struct IndexResult {
    TemplateManifest manifest;
    std::vector<std::string> warnings;  // one per rejected file
};

// Lists *.nii, *.nii.gz and *.raw files in `directory` (sorted by name).
// Files that fail to parse, are not binary, or are empty are rejected with a
// warning; the call only fails when nothing usable remains. With
// `merge_labels` non-empty, voxels holding any of those values are true and
// every other value is false, so multi-label files (e.g. several vertebrae)
// become one multi-component mask.
IndexResult index_templates(const std::filesystem::path &directory, int workers = 1,
                            const std::vector<std::int64_t> &merge_labels = {});

BinaryTemplate load_template(const TemplateEntry &entry);

// Crop/pad to size^3 so the rounded-half-up bounding-box centre lands on
// voxel (size/2, size/2, size/2).
BinaryTemplate prepare_template(const BinaryTemplate &raw, std::int64_t size = kTemplateGrid);

struct SmshapesConfig {
    std::int64_t radius_min = 10;
    std::int64_t radius_max = 48;
    double deformation_min = 2.0;  // peak displacement, voxels
    double deformation_max = 10.0;
    std::vector<double> octave_scales{16.0, 32.0};
    std::int64_t grid = kTemplateGrid;
};

void to_json(nlohmann::json &j, const SmshapesConfig &c);
void from_json(const nlohmann::json &j, SmshapesConfig &c);

// A centred ball of random radius deformed by a smooth random displacement.
BinaryTemplate gen_smshapes_template(RngStream &rng, const SmshapesConfig &cfg = {});

// Fixed-parameter variant used by the generator (and by tests).
BinaryTemplate smshapes_template(std::int64_t radius, double peak_displacement, const SmshapesConfig &cfg,
                                 RngStream &rng);

// Source of prepared templates for the label engine. Either backed by a
// manifest (loaded eagerly when small, on demand otherwise) or by an
// in-memory set such as generated smshapes.
class TemplateBank {
  public:
    static TemplateBank from_manifest(const TemplateManifest &manifest, std::size_t max_cached = 256);
    static TemplateBank from_templates(std::vector<BinaryTemplate> templates, std::string bank_hash);
    static TemplateBank smshapes(std::size_t count, const RngStream &rng, const SmshapesConfig &cfg = {},
                                 int workers = 1);

    std::size_t size() const noexcept { return size_; }
    bool empty() const noexcept { return size_ == 0; }
    const std::string &bank_hash() const noexcept { return bank_hash_; }

    // Prepared (128^3) template. Thread-safe.
    std::shared_ptr<const BinaryTemplate> at(std::size_t index) const;

  private:
    std::size_t size_ = 0;
    std::string bank_hash_;
    std::vector<std::shared_ptr<const BinaryTemplate>> cached_;
    std::vector<TemplateEntry> entries_;
};

}  // namespace voxsynth
