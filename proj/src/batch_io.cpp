#include "voxsynth/batch_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "voxsynth/volume_io.hpp"

namespace voxsynth::io {
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "batch I/O assumes a little-endian host");

LoadedBatch read_batch(const std::filesystem::path &sidecar) {
    std::ifstream in(sidecar);
    if (!in) fail(ErrorCode::io_error, "cannot open batch sidecar " + sidecar.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, "batch sidecar is not valid JSON: " + std::string(e.what()));
    }
    LoadedBatch out;
    try {
        if (j.at("format") != "voxsynth-batch") fail(ErrorCode::malformed_header, "not a voxsynth batch sidecar");
        if (j.value("byte_order", "little") != "little") {
            fail(ErrorCode::unsupported_dtype, "only little-endian batch data is supported");
        }
        const auto dtype = j.at("dtype").get<std::string>();
        if (dtype == "float32") {
            out.dtype = BatchDType::float32;
        } else if (dtype == "float64") {
            out.dtype = BatchDType::float64;
        } else {
            fail(ErrorCode::unsupported_dtype, "batch dtype must be float32 or float64, got " + dtype);
        }
        const auto count = j.at("count").get<std::int64_t>();
        out.batch.dim = j.at("dim").get<std::int64_t>();
        out.batch.tau = j.at("tau").get<double>();
        out.batch.labels = j.at("labels").get<std::vector<std::int64_t>>();
        if (static_cast<std::int64_t>(out.batch.labels.size()) != count) {
            fail(ErrorCode::malformed_header, "label array length differs from count");
        }
        if (count < 0 || out.batch.dim < 1) fail(ErrorCode::malformed_header, "bad count or dim");

        const auto data_path = sidecar.parent_path() / j.at("data").get<std::string>();
        std::ifstream bin(data_path, std::ios::binary);
        if (!bin) fail(ErrorCode::io_error, "cannot open batch data " + data_path.string());
        std::ostringstream ss;
        ss << bin.rdbuf();
        const std::string bytes = ss.str();
        const std::size_t n = static_cast<std::size_t>(count * out.batch.dim);
        const std::size_t width = out.dtype == BatchDType::float32 ? 4 : 8;
        if (bytes.size() != n * width) {
            fail(ErrorCode::malformed_header, "batch data holds " + std::to_string(bytes.size()) + " bytes, expected " +
                                                  std::to_string(n * width));
        }
        out.batch.embeddings.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (width == 4) {
                float f;
                std::memcpy(&f, bytes.data() + 4 * i, 4);
                out.batch.embeddings[i] = f;
            } else {
                std::memcpy(&out.batch.embeddings[i], bytes.data() + 8 * i, 8);
            }
        }
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, "batch sidecar: " + std::string(e.what()));
    }
    out.batch.validate();
    return out;
}

void write_batch(const std::filesystem::path &sidecar, const IndexBatch<double> &batch, BatchDType dtype) {
    batch.validate();
    auto data_name = sidecar.filename();
    data_name.replace_extension(".bin");
    std::string bytes;
    if (dtype == BatchDType::float32) {
        bytes.resize(batch.embeddings.size() * 4);
        for (std::size_t i = 0; i < batch.embeddings.size(); ++i) {
            const float f = static_cast<float>(batch.embeddings[i]);
            std::memcpy(bytes.data() + 4 * i, &f, 4);
        }
    } else {
        bytes.resize(batch.embeddings.size() * 8);
        std::memcpy(bytes.data(), batch.embeddings.data(), bytes.size());
    }
    write_file_atomic(sidecar.parent_path() / data_name, bytes);
    const json j{{"format", "voxsynth-batch"},
                 {"version", 1},
                 {"count", batch.size()},
                 {"dim", batch.dim},
                 {"tau", batch.tau},
                 {"dtype", dtype == BatchDType::float32 ? "float32" : "float64"},
                 {"byte_order", "little"},
                 {"labels", batch.labels},
                 {"data", data_name.string()}};
    write_file_atomic(sidecar, j.dump(2) + "\n");
}

IndexBatch<float> narrow(const IndexBatch<double> &batch) {
    IndexBatch<float> out;
    out.dim = batch.dim;
    out.tau = batch.tau;
    out.labels = batch.labels;
    out.origin = batch.origin;
    out.embeddings.assign(batch.embeddings.begin(), batch.embeddings.end());
    return out;
}

}  // namespace voxsynth::io
