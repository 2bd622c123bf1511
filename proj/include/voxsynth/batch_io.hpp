#pragma once

// Batch exchange format for the contrastive kernel.
//
// A JSON sidecar
//   {"format": "voxsynth-batch", "version": 1, "count": n, "dim": c,
//    "tau": t, "dtype": "float32" | "float64", "byte_order": "little",
//    "labels": [n integers], "data": "<file name>"}
// next to a flat binary file of n * c values, row-major (entry-major), in
// little-endian IEEE-754 of the stated width. "data" is resolved relative
// to the sidecar's directory.

#include <filesystem>

#include "voxsynth/contrastive.hpp"

namespace voxsynth::io {

enum class BatchDType { float32, float64 };

struct LoadedBatch {
    BatchDType dtype = BatchDType::float64;
    IndexBatch<double> batch;  // values widened exactly from the stored width
};

LoadedBatch read_batch(const std::filesystem::path &sidecar);

// Writes `<stem>.json` style sidecar at `sidecar` and the data file next to it.
void write_batch(const std::filesystem::path &sidecar, const IndexBatch<double> &batch, BatchDType dtype);

IndexBatch<float> narrow(const IndexBatch<double> &batch);

}  // namespace voxsynth::io
