#include "voxsynth/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"

namespace voxsynth::io {
namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

// NIfTI-1 header field offsets.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t intent_code = 68;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t qoffset = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t srow_y = 296;
constexpr std::size_t srow_z = 312;
constexpr std::size_t magic = 344;
}  // namespace off

std::int16_t nifti_code(DType t) {
    switch (t) {
        case DType::uint8: return 2;
        case DType::int16: return 4;
        case DType::int32: return 8;
        case DType::float32: return 16;
        case DType::float64: return 64;
        case DType::int8: return 256;
        case DType::uint16: return 512;
        case DType::uint32: return 768;
    }
    return 0;
}

DType dtype_from_nifti(std::int16_t code) {
    switch (code) {
        case 2: return DType::uint8;
        case 4: return DType::int16;
        case 8: return DType::int32;
        case 16: return DType::float32;
        case 64: return DType::float64;
        case 256: return DType::int8;
        case 512: return DType::uint16;
        case 768: return DType::uint32;
        default: break;
    }
    fail(ErrorCode::unsupported_dtype, "unsupported NIfTI datatype code " + std::to_string(code));
}

DType dtype_from_name(const std::string &name) {
    for (DType t : {DType::uint8, DType::int8, DType::int16, DType::uint16, DType::int32, DType::uint32,
                    DType::float32, DType::float64}) {
        if (to_string(t) == name) return t;
    }
    fail(ErrorCode::unsupported_dtype, "unsupported dtype '" + name + "'");
}

template <class T>
T load(const std::byte *p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap) {
        auto *b = reinterpret_cast<unsigned char *>(&v);
        std::reverse(b, b + sizeof(T));
    }
    return v;
}

template <class T>
void store(std::byte *p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

bool ends_with(const std::string &s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct GzReader {
    gzFile f = nullptr;
    explicit GzReader(const fs::path &p) : f(gzopen(p.c_str(), "rb")) {
        if (!f) fail(ErrorCode::io_error, "cannot open " + p.string());
        gzbuffer(f, 1 << 18);
    }
    ~GzReader() {
        if (f) gzclose(f);
    }
    GzReader(const GzReader &) = delete;
    GzReader &operator=(const GzReader &) = delete;

    std::size_t read(std::byte *dst, std::size_t n) {
        std::size_t done = 0;
        while (done < n) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
            const int got = gzread(f, dst + done, chunk);
            if (got < 0) {
                int errnum = 0;
                const char *msg = gzerror(f, &errnum);
                fail(ErrorCode::malformed_header, std::string("decompression failed: ") + (msg ? msg : "?"));
            }
            if (got == 0) break;
            done += static_cast<std::size_t>(got);
        }
        return done;
    }
};

// Swaps element byte order in place.
void swap_elements(std::vector<std::byte> &bytes, std::size_t width) {
    if (width == 1) return;
    for (std::size_t i = 0; i + width <= bytes.size(); i += width) std::reverse(bytes.begin() + i, bytes.begin() + i + width);
}

// file order (axis 0 fastest, channel slowest) -> memory order
std::vector<std::byte> file_to_memory(const std::vector<std::byte> &file, const GridMeta &m, int channels,
                                      std::size_t width) {
    std::vector<std::byte> mem(file.size());
    const std::int64_t n = m.voxel_count();
    const auto &d = m.dims;
    for (int c = 0; c < channels; ++c) {
        std::int64_t src = static_cast<std::int64_t>(c) * n;
        for (std::int64_t k = 0; k < d[2]; ++k)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t i = 0; i < d[0]; ++i, ++src) {
                    const std::int64_t dst = m.linear(i, j, k) * channels + c;
                    std::memcpy(mem.data() + dst * width, file.data() + src * width, width);
                }
    }
    return mem;
}

std::vector<std::byte> memory_to_file(std::span<const std::byte> mem, const GridMeta &m, int channels,
                                      std::size_t width) {
    std::vector<std::byte> file(mem.size());
    const std::int64_t n = m.voxel_count();
    const auto &d = m.dims;
    for (int c = 0; c < channels; ++c) {
        std::int64_t dst = static_cast<std::int64_t>(c) * n;
        for (std::int64_t k = 0; k < d[2]; ++k)
            for (std::int64_t j = 0; j < d[1]; ++j)
                for (std::int64_t i = 0; i < d[0]; ++i, ++dst) {
                    const std::int64_t src = m.linear(i, j, k) * channels + c;
                    std::memcpy(file.data() + dst * width, mem.data() + src * width, width);
                }
    }
    return file;
}

struct ParsedHeader {
    VolumeInfo info;
    bool swap = false;
    std::size_t vox_offset = kVoxOffset;
    double scl_slope = 0.0;
    double scl_inter = 0.0;
};

ParsedHeader parse_nifti_header(const std::array<std::byte, kHeaderSize> &h, std::size_t got, const fs::path &path) {
    if (got < kHeaderSize) {
        fail(ErrorCode::malformed_header, path.string() + ": truncated header (" + std::to_string(got) + " bytes)");
    }
    ParsedHeader out;
    const auto size_le = load<std::int32_t>(h.data() + off::sizeof_hdr, false);
    if (size_le != 348) {
        if (load<std::int32_t>(h.data() + off::sizeof_hdr, true) == 348) {
            out.swap = true;
        } else {
            fail(ErrorCode::malformed_header, path.string() + ": sizeof_hdr is not 348");
        }
    }
    const char *magic = reinterpret_cast<const char *>(h.data() + off::magic);
    if (std::memcmp(magic, "n+1", 4) != 0) {
        if (std::memcmp(magic, "ni1", 4) == 0) {
            fail(ErrorCode::malformed_header, path.string() + ": two-file NIfTI (.hdr/.img) is not supported");
        }
        fail(ErrorCode::malformed_header, path.string() + ": bad magic");
    }
    const bool sw = out.swap;
    std::array<std::int16_t, 8> dim{};
    for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(h.data() + off::dim + 2 * i, sw);
    if (dim[0] < 1 || dim[0] > 7) fail(ErrorCode::malformed_header, path.string() + ": dim[0] out of range");
    if (dim[0] > 4) {
        fail(ErrorCode::too_many_dims, path.string() + ": " + std::to_string(dim[0]) + "-D volumes are not supported");
    }
    GridMeta meta;
    for (int a = 0; a < 3; ++a) meta.dims[a] = a < dim[0] ? dim[a + 1] : 1;
    int channels = dim[0] == 4 ? dim[4] : 1;
    for (int a = 0; a < 3; ++a) {
        if (meta.dims[a] < 1) fail(ErrorCode::malformed_header, path.string() + ": non-positive dimension");
    }
    if (channels < 1) fail(ErrorCode::malformed_header, path.string() + ": non-positive channel count");
    for (int a = 0; a < 3; ++a) {
        const double px = std::abs(static_cast<double>(load<float>(h.data() + off::pixdim + 4 * (a + 1), sw)));
        meta.spacing[a] = (px > 0.0 && std::isfinite(px)) ? px : 1.0;
    }
    const auto sform = load<std::int16_t>(h.data() + off::sform_code, sw);
    const auto qform = load<std::int16_t>(h.data() + off::qform_code, sw);
    if (sform > 0) {
        meta.origin = {load<float>(h.data() + off::srow_x + 12, sw), load<float>(h.data() + off::srow_y + 12, sw),
                       load<float>(h.data() + off::srow_z + 12, sw)};
    } else if (qform > 0) {
        for (int a = 0; a < 3; ++a) meta.origin[a] = load<float>(h.data() + off::qoffset + 4 * a, sw);
    }
    out.info.path = path;
    out.info.dtype = dtype_from_nifti(load<std::int16_t>(h.data() + off::datatype, sw));
    out.info.meta = meta;
    out.info.channels = channels;
    const double vo = load<float>(h.data() + off::vox_offset, sw);
    out.vox_offset = vo >= static_cast<double>(kHeaderSize) ? static_cast<std::size_t>(vo) : kVoxOffset;
    out.scl_slope = load<float>(h.data() + off::scl_slope, sw);
    out.scl_inter = load<float>(h.data() + off::scl_inter, sw);
    return out;
}

std::array<std::byte, kHeaderSize> build_nifti_header(const VolumeInfo &info) {
    std::array<std::byte, kHeaderSize> h{};
    store<std::int32_t>(h.data() + off::sizeof_hdr, 348);
    const int ndim = info.channels > 1 ? 4 : 3;
    std::array<std::int16_t, 8> dim{static_cast<std::int16_t>(ndim),
                                    static_cast<std::int16_t>(info.meta.dims[0]),
                                    static_cast<std::int16_t>(info.meta.dims[1]),
                                    static_cast<std::int16_t>(info.meta.dims[2]),
                                    static_cast<std::int16_t>(info.channels),
                                    1,
                                    1,
                                    1};
    for (int i = 0; i < 8; ++i) store<std::int16_t>(h.data() + off::dim + 2 * i, dim[i]);
    store<std::int16_t>(h.data() + off::intent_code, 0);
    store<std::int16_t>(h.data() + off::datatype, nifti_code(info.dtype));
    store<std::int16_t>(h.data() + off::bitpix, static_cast<std::int16_t>(8 * dtype_size(info.dtype)));
    std::array<float, 8> pixdim{1.0f,
                                static_cast<float>(info.meta.spacing[0]),
                                static_cast<float>(info.meta.spacing[1]),
                                static_cast<float>(info.meta.spacing[2]),
                                1.0f,
                                1.0f,
                                1.0f,
                                1.0f};
    for (int i = 0; i < 8; ++i) store<float>(h.data() + off::pixdim + 4 * i, pixdim[i]);
    store<float>(h.data() + off::vox_offset, static_cast<float>(kVoxOffset));
    store<float>(h.data() + off::scl_slope, 1.0f);
    store<float>(h.data() + off::scl_inter, 0.0f);
    h[off::xyzt_units] = std::byte{2};  // millimetres
    const char descrip[] = "voxsynth";
    std::memcpy(h.data() + off::descrip, descrip, sizeof(descrip));
    store<std::int16_t>(h.data() + off::qform_code, 1);
    store<std::int16_t>(h.data() + off::sform_code, 1);
    for (int a = 0; a < 3; ++a) store<float>(h.data() + off::qoffset + 4 * a, static_cast<float>(info.meta.origin[a]));
    const std::size_t rows[3] = {off::srow_x, off::srow_y, off::srow_z};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            store<float>(h.data() + rows[r] + 4 * c, r == c ? static_cast<float>(info.meta.spacing[r]) : 0.0f);
        }
        store<float>(h.data() + rows[r] + 12, static_cast<float>(info.meta.origin[r]));
    }
    std::memcpy(h.data() + off::magic, "n+1", 4);
    return h;
}

fs::path sidecar_path(const fs::path &raw) { return fs::path(raw.string() + ".json"); }

RawVolume read_raw_format(const fs::path &path) {
    std::ifstream js(sidecar_path(path));
    if (!js) fail(ErrorCode::io_error, "missing sidecar " + sidecar_path(path).string());
    json doc;
    try {
        doc = json::parse(js);
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, sidecar_path(path).string() + ": " + e.what());
    }
    RawVolume out;
    try {
        out.info.path = path;
        out.info.dtype = dtype_from_name(doc.at("dtype").get<std::string>());
        const auto dims = doc.at("dims").get<std::vector<std::int64_t>>();
        if (dims.size() > 4) fail(ErrorCode::too_many_dims, path.string() + ": more than 4 dimensions");
        if (dims.size() < 3) fail(ErrorCode::malformed_header, path.string() + ": need 3 spatial dimensions");
        for (int a = 0; a < 3; ++a) out.info.meta.dims[a] = dims[a];
        out.info.channels = dims.size() == 4 ? static_cast<int>(dims[3]) : 1;
        if (doc.contains("spacing")) {
            const auto s = doc["spacing"].get<std::vector<double>>();
            for (int a = 0; a < 3 && a < static_cast<int>(s.size()); ++a) out.info.meta.spacing[a] = s[a];
        }
        if (doc.contains("origin")) {
            const auto o = doc["origin"].get<std::vector<double>>();
            for (int a = 0; a < 3 && a < static_cast<int>(o.size()); ++a) out.info.meta.origin[a] = o[a];
        }
        if (doc.value("byte_order", std::string("little")) != "little") {
            fail(ErrorCode::malformed_header, path.string() + ": only little-endian raw volumes are supported");
        }
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, sidecar_path(path).string() + ": " + e.what());
    }
    out.info.meta.validate();
    const std::size_t expect =
        static_cast<std::size_t>(out.element_count()) * dtype_size(out.info.dtype);
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
    out.bytes.resize(expect);
    in.read(reinterpret_cast<char *>(out.bytes.data()), static_cast<std::streamsize>(expect));
    if (static_cast<std::size_t>(in.gcount()) != expect) {
        fail(ErrorCode::malformed_header, path.string() + ": truncated data section");
    }
    return out;
}

void atomic_replace(const fs::path &tmp, const fs::path &dst) {
    std::error_code ec;
    fs::rename(tmp, dst, ec);
    if (ec) {
        fs::remove(tmp, ec);
        fail(ErrorCode::io_error, "cannot move " + tmp.string() + " to " + dst.string());
    }
}

template <class T>
std::span<const std::byte> as_bytes(const std::vector<T> &v) {
    return std::as_bytes(std::span<const T>(v));
}

}  // namespace

std::string_view to_string(DType t) {
    switch (t) {
        case DType::uint8: return "uint8";
        case DType::int8: return "int8";
        case DType::int16: return "int16";
        case DType::uint16: return "uint16";
        case DType::int32: return "int32";
        case DType::uint32: return "uint32";
        case DType::float32: return "float32";
        case DType::float64: return "float64";
    }
    return "?";
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::uint8:
        case DType::int8: return 1;
        case DType::int16:
        case DType::uint16: return 2;
        case DType::int32:
        case DType::uint32:
        case DType::float32: return 4;
        case DType::float64: return 8;
    }
    return 0;
}

FileFormat format_from_path(const fs::path &path) {
    const std::string s = path.string();
    if (ends_with(s, ".nii.gz")) return FileFormat::nifti_gz;
    if (ends_with(s, ".nii")) return FileFormat::nifti;
    if (ends_with(s, ".raw")) return FileFormat::raw;
    fail(ErrorCode::invalid_argument, "unrecognised volume extension: " + s + " (use .nii, .nii.gz or .raw)");
}

double RawVolume::value(std::int64_t e) const {
    const std::byte *p = bytes.data() + e * static_cast<std::int64_t>(dtype_size(info.dtype));
    switch (info.dtype) {
        case DType::uint8: return load<std::uint8_t>(p, false);
        case DType::int8: return load<std::int8_t>(p, false);
        case DType::int16: return load<std::int16_t>(p, false);
        case DType::uint16: return load<std::uint16_t>(p, false);
        case DType::int32: return load<std::int32_t>(p, false);
        case DType::uint32: return load<std::uint32_t>(p, false);
        case DType::float32: return load<float>(p, false);
        case DType::float64: return load<double>(p, false);
    }
    return 0.0;
}

VolumeInfo read_info(const fs::path &path) {
    const auto fmt = format_from_path(path);
    if (fmt == FileFormat::raw) return read_raw_format(path).info;
    GzReader r(path);
    std::array<std::byte, kHeaderSize> h{};
    const auto got = r.read(h.data(), h.size());
    auto parsed = parse_nifti_header(h, got, path);
    parsed.info.compressed = fmt == FileFormat::nifti_gz;
    return parsed.info;
}

RawVolume read_volume(const fs::path &path) {
    const auto fmt = format_from_path(path);
    if (fmt == FileFormat::raw) return read_raw_format(path);
    if (!fs::exists(path)) fail(ErrorCode::io_error, "no such file: " + path.string());
    GzReader r(path);
    std::array<std::byte, kHeaderSize> h{};
    const auto got = r.read(h.data(), h.size());
    auto parsed = parse_nifti_header(h, got, path);
    parsed.info.compressed = fmt == FileFormat::nifti_gz;

    std::vector<std::byte> skip(parsed.vox_offset - kHeaderSize);
    if (r.read(skip.data(), skip.size()) != skip.size()) {
        fail(ErrorCode::malformed_header, path.string() + ": truncated before data section");
    }
    const std::size_t width = dtype_size(parsed.info.dtype);
    const std::size_t count = static_cast<std::size_t>(parsed.info.meta.voxel_count()) * parsed.info.channels;
    std::vector<std::byte> file(count * width);
    if (r.read(file.data(), file.size()) != file.size()) {
        fail(ErrorCode::malformed_header, path.string() + ": truncated data section");
    }
    if (parsed.swap) swap_elements(file, width);

    RawVolume out;
    out.info = parsed.info;
    out.bytes = file_to_memory(file, parsed.info.meta, parsed.info.channels, width);

    // Honour intensity scaling for float payloads only; integer labels are
    // never rescaled.
    const bool scaled = parsed.scl_slope != 0.0 && !(parsed.scl_slope == 1.0 && parsed.scl_inter == 0.0);
    if (scaled && (out.info.dtype == DType::float32 || out.info.dtype == DType::float64)) {
        if (out.info.dtype == DType::float32) {
            auto *f = reinterpret_cast<float *>(out.bytes.data());
            for (std::size_t i = 0; i < count; ++i)
                f[i] = static_cast<float>(f[i] * parsed.scl_slope + parsed.scl_inter);
        } else {
            auto *f = reinterpret_cast<double *>(out.bytes.data());
            for (std::size_t i = 0; i < count; ++i) f[i] = f[i] * parsed.scl_slope + parsed.scl_inter;
        }
    }
    return out;
}

LabelVolume read_labels(const fs::path &path) {
    const auto raw = read_volume(path);
    if (raw.info.channels != 1) fail(ErrorCode::invalid_argument, path.string() + ": label maps have one channel");
    LabelVolume out(raw.info.meta);
    if (raw.info.dtype == DType::uint16) {
        std::memcpy(out.values.data(), raw.bytes.data(), raw.bytes.size());
        return out;
    }
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const double v = raw.value(i);
        if (v < 0.0 || v > 65535.0 || v != std::floor(v)) {
            fail(ErrorCode::unsupported_dtype, path.string() + ": label values must be integers in [0, 65535]");
        }
        out.values[i] = static_cast<std::uint16_t>(v);
    }
    return out;
}

IntensityVolume read_intensity(const fs::path &path) {
    const auto raw = read_volume(path);
    if (raw.info.channels != 1) {
        fail(ErrorCode::invalid_argument, path.string() + ": expected a single-channel volume");
    }
    IntensityVolume out(raw.info.meta);
    if (raw.info.dtype == DType::float32) {
        std::memcpy(out.values.data(), raw.bytes.data(), raw.bytes.size());
        return out;
    }
    for (std::int64_t i = 0; i < out.size(); ++i) out.values[i] = static_cast<float>(raw.value(i));
    return out;
}

FeatureVolume read_features(const fs::path &path) {
    const auto raw = read_volume(path);
    FeatureVolume out(raw.info.meta, raw.info.channels);
    if (raw.info.dtype == DType::float32) {
        std::memcpy(out.values.data(), raw.bytes.data(), raw.bytes.size());
        return out;
    }
    for (std::int64_t i = 0; i < raw.element_count(); ++i) out.values[i] = static_cast<float>(raw.value(i));
    return out;
}

DisplacementField read_field(const fs::path &path) {
    const auto raw = read_volume(path);
    if (raw.info.channels != 3) {
        fail(ErrorCode::invalid_argument, path.string() + ": displacement fields need 3 channels, found " +
                                              std::to_string(raw.info.channels));
    }
    DisplacementField out(raw.info.meta);
    for (std::int64_t i = 0; i < raw.element_count(); ++i) out.values[i] = static_cast<float>(raw.value(i));
    return out;
}

MaskVolume read_mask(const fs::path &path) {
    const auto raw = read_volume(path);
    if (raw.info.channels != 1) fail(ErrorCode::invalid_argument, path.string() + ": masks have one channel");
    MaskVolume out(raw.info.meta);
    for (std::int64_t i = 0; i < out.size(); ++i) out.values[i] = raw.value(i) != 0.0 ? 1 : 0;
    return out;
}

void write_raw_volume(const fs::path &path, const VolumeInfo &info, std::span<const std::byte> bytes,
                      const WriteOptions &opt) {
    info.meta.validate();
    for (int a = 0; a < 3; ++a) {
        if (info.meta.dims[a] > 32767) fail(ErrorCode::invalid_argument, "dimension exceeds the NIfTI-1 limit");
    }
    const std::size_t width = dtype_size(info.dtype);
    if (bytes.size() != static_cast<std::size_t>(info.meta.voxel_count()) * info.channels * width) {
        fail(ErrorCode::invalid_argument, "payload size does not match volume info");
    }
    const auto fmt = format_from_path(path);
    const fs::path target = opt.atomic ? fs::path(path.string() + ".tmp") : path;

    if (fmt == FileFormat::raw) {
        json side{{"format", "voxsynth-raw"},
                  {"version", 1},
                  {"dtype", std::string(to_string(info.dtype))},
                  {"byte_order", "little"},
                  {"layout", "C-order, axis 2 fastest, channels innermost"},
                  {"spacing", info.meta.spacing},
                  {"origin", info.meta.origin}};
        std::vector<std::int64_t> dims{info.meta.dims[0], info.meta.dims[1], info.meta.dims[2]};
        if (info.channels > 1) dims.push_back(info.channels);
        side["dims"] = dims;
        {
            std::ofstream out(target, std::ios::binary | std::ios::trunc);
            if (!out) fail(ErrorCode::io_error, "cannot write " + target.string());
            out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
            if (!out) fail(ErrorCode::io_error, "write failed: " + target.string());
        }
        if (opt.atomic) atomic_replace(target, path);
        write_file_atomic(sidecar_path(path), side.dump(2) + "\n");
        return;
    }

    const auto header = build_nifti_header(info);
    const auto file = memory_to_file(bytes, info.meta, info.channels, width);
    std::string mode = "wb";
    mode += fmt == FileFormat::nifti_gz ? std::to_string(std::clamp(opt.gzip_level, 1, 9)) : "T";
    gzFile f = gzopen(target.c_str(), mode.c_str());
    if (!f) fail(ErrorCode::io_error, "cannot write " + target.string());
    gzbuffer(f, 1 << 18);
    const std::array<std::byte, 4> extension{};
    bool ok = gzwrite(f, header.data(), header.size()) == static_cast<int>(header.size());
    ok = ok && gzwrite(f, extension.data(), extension.size()) == static_cast<int>(extension.size());
    std::size_t done = 0;
    while (ok && done < file.size()) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(file.size() - done, 1u << 30));
        ok = gzwrite(f, file.data() + done, chunk) == static_cast<int>(chunk);
        done += chunk;
    }
    ok = (gzclose(f) == Z_OK) && ok;
    if (!ok) {
        std::error_code ec;
        fs::remove(target, ec);
        fail(ErrorCode::io_error, "write failed: " + target.string());
    }
    if (opt.atomic) atomic_replace(target, path);
}

void write_volume(const fs::path &path, const LabelVolume &vol, const WriteOptions &opt) {
    write_raw_volume(path, VolumeInfo{path, DType::uint16, false, vol.meta, 1}, as_bytes(vol.values), opt);
}

void write_volume(const fs::path &path, const IntensityVolume &vol, const WriteOptions &opt) {
    write_raw_volume(path, VolumeInfo{path, DType::float32, false, vol.meta, 1}, as_bytes(vol.values), opt);
}

void write_volume(const fs::path &path, const MaskVolume &vol, const WriteOptions &opt) {
    write_raw_volume(path, VolumeInfo{path, DType::uint8, false, vol.meta, 1}, as_bytes(vol.values), opt);
}

void write_volume(const fs::path &path, const FeatureVolume &vol, const WriteOptions &opt) {
    write_raw_volume(path, VolumeInfo{path, DType::float32, false, vol.meta, vol.channels}, as_bytes(vol.values),
                     opt);
}

void write_volume(const fs::path &path, const DisplacementField &vol, const WriteOptions &opt) {
    write_raw_volume(path, VolumeInfo{path, DType::float32, false, vol.meta, 3}, as_bytes(vol.values), opt);
}

void write_file_atomic(const fs::path &path, std::string_view content) {
    const fs::path tmp(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::io_error, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail(ErrorCode::io_error, "write failed: " + tmp.string());
    }
    atomic_replace(tmp, path);
}

}  // namespace voxsynth::io
