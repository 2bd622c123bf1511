#pragma once

// Volume files.
//
//   *.nii      NIfTI-1 single file ("n+1", 348-byte header, data at byte 352)
//   *.nii.gz   the same, gzip-compressed
//   *.raw      flat little-endian array plus a JSON sidecar at <path>.json
//
// NIfTI axes: dim[1..3] = our axes 0..2 and dim[4] = channels, so a volume
// read by any standard NIfTI reader indexes as arr[i, j, k] exactly like
// Volume::at(i, j, k). The raw format keeps the in-memory order (axis 2
// fastest, channels innermost).

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxsynth/grid.hpp"

namespace voxsynth::io {

enum class DType { uint8, int8, int16, uint16, int32, uint32, float32, float64 };

std::string_view to_string(DType t);
std::size_t dtype_size(DType t);

enum class FileFormat { nifti, nifti_gz, raw };
FileFormat format_from_path(const std::filesystem::path &path);

struct VolumeInfo {
    std::filesystem::path path;
    DType dtype = DType::float32;
    bool compressed = false;
    GridMeta meta;
    int channels = 1;
};

// Decoded file content in memory order (axis 2 fastest, channels innermost),
// host little-endian.
struct RawVolume {
    VolumeInfo info;
    std::vector<std::byte> bytes;

    double value(std::int64_t element) const;
    std::int64_t element_count() const { return info.meta.voxel_count() * info.channels; }
};

RawVolume read_volume(const std::filesystem::path &path);
VolumeInfo read_info(const std::filesystem::path &path);

// Typed views; each validates channel count and dtype compatibility.
LabelVolume read_labels(const std::filesystem::path &path);
IntensityVolume read_intensity(const std::filesystem::path &path);
FeatureVolume read_features(const std::filesystem::path &path);
DisplacementField read_field(const std::filesystem::path &path);
// Nonzero voxels are true.
MaskVolume read_mask(const std::filesystem::path &path);

struct WriteOptions {
    int gzip_level = 1;
    // Write to <path>.tmp and rename into place.
    bool atomic = true;
};

void write_volume(const std::filesystem::path &path, const LabelVolume &vol, const WriteOptions &opt = {});
void write_volume(const std::filesystem::path &path, const IntensityVolume &vol, const WriteOptions &opt = {});
void write_volume(const std::filesystem::path &path, const MaskVolume &vol, const WriteOptions &opt = {});
void write_volume(const std::filesystem::path &path, const FeatureVolume &vol, const WriteOptions &opt = {});
void write_volume(const std::filesystem::path &path, const DisplacementField &vol, const WriteOptions &opt = {});

// Lowest-level writer; `bytes` in memory order.
void write_raw_volume(const std::filesystem::path &path, const VolumeInfo &info, std::span<const std::byte> bytes,
                      const WriteOptions &opt = {});

// Writes `content` to `path` via a temporary file and rename.
void write_file_atomic(const std::filesystem::path &path, std::string_view content);

}  // namespace voxsynth::io
