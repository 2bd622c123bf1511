#include "voxsynth/templates.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <mutex>
#include <sstream>

#include "voxsynth/digest.hpp"
#include "voxsynth/noise.hpp"
#include "voxsynth/parallel.hpp"
#include "voxsynth/volume_io.hpp"

namespace voxsynth {
namespace fs = std::filesystem;
using nlohmann::json;

std::optional<BoundingBox> mask_bounds(const MaskVolume &mask) {
    const auto &d = mask.meta.dims;
    BoundingBox b{{d[0], d[1], d[2]}, {-1, -1, -1}};
    bool any = false;
    for (std::int64_t i = 0; i < d[0]; ++i)
        for (std::int64_t j = 0; j < d[1]; ++j) {
            const std::uint8_t *row = mask.values.data() + mask.meta.linear(i, j, 0);
            for (std::int64_t k = 0; k < d[2]; ++k) {
                if (!row[k]) continue;
                any = true;
                b.lo = {std::min(b.lo[0], i), std::min(b.lo[1], j), std::min(b.lo[2], k)};
                b.hi = {std::max(b.hi[0], i), std::max(b.hi[1], j), std::max(b.hi[2], k)};
            }
        }
    if (!any) return std::nullopt;
    return b;
}

std::int64_t count_true(const MaskVolume &mask) {
    return std::count_if(mask.values.begin(), mask.values.end(), [](std::uint8_t v) { return v != 0; });
}

void to_json(json &j, const TemplateManifest &m) {
    json entries = json::array();
    for (const auto &e : m.entries) {
        entries.push_back({{"source_id", e.source_id},
                           {"path", e.path.string()},
                           {"voxel_count", e.voxel_count},
                           {"dims", e.dims},
                           {"bbox", {{"lo", e.bbox.lo}, {"hi", e.bbox.hi}}},
                           {"sha256", e.sha256}});
        if (!e.merged_labels.empty()) entries.back()["merged_labels"] = e.merged_labels;
    }
    j = json{{"format", "voxsynth-template-manifest"}, {"version", 1}, {"bank_hash", m.bank_hash},
             {"entries", entries}};
}

void from_json(const json &j, TemplateManifest &m) {
    m.entries.clear();
    for (const auto &e : j.at("entries")) {
        TemplateEntry t;
        t.source_id = e.at("source_id").get<std::string>();
        t.path = e.at("path").get<std::string>();
        t.voxel_count = e.at("voxel_count").get<std::int64_t>();
        t.dims = e.at("dims").get<Index3>();
        t.bbox.lo = e.at("bbox").at("lo").get<Index3>();
        t.bbox.hi = e.at("bbox").at("hi").get<Index3>();
        t.sha256 = e.at("sha256").get<std::string>();
        t.merged_labels = e.value("merged_labels", std::vector<std::int64_t>{});
        m.entries.push_back(std::move(t));
    }
    m.bank_hash = j.at("bank_hash").get<std::string>();
}

std::string compute_bank_hash(const std::vector<TemplateEntry> &entries) {
    std::ostringstream s;
    for (const auto &e : entries) {
        s << e.source_id << '\t' << e.sha256 << '\t' << e.voxel_count;
        for (auto v : e.bbox.lo) s << '\t' << v;
        for (auto v : e.bbox.hi) s << '\t' << v;
        if (!e.merged_labels.empty()) {
            s << "\tmerged";
            for (auto v : e.merged_labels) s << ' ' << v;
        }
        s << '\n';
    }
    return sha256_hex(s.str());
}

namespace {

bool is_volume_file(const fs::path &p) {
    const std::string s = p.filename().string();
    auto ends = [&](std::string_view suf) {
        return s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    return ends(".nii") || ends(".nii.gz") || ends(".raw");
}

std::string stem_of(const fs::path &p) {
    std::string s = p.filename().string();
    for (std::string_view suf : {".nii.gz", ".nii", ".raw"}) {
        if (s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
            return s.substr(0, s.size() - suf.size());
        }
    }
    return s;
}

}  // namespace

namespace {

// Nonzero voxels for a binary volume; voxels in `merge` otherwise.
std::optional<MaskVolume> to_mask(const io::RawVolume &raw, const std::vector<std::int64_t> &merge) {
    MaskVolume mask(raw.info.meta);
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        const double v = raw.value(i);
        if (merge.empty()) {
            if (v != 0.0 && v != 1.0) return std::nullopt;
            mask.values[i] = v != 0.0;
        } else {
            mask.values[i] = v == std::round(v) && std::binary_search(merge.begin(), merge.end(),
                                                                        static_cast<std::int64_t>(v));
        }
    }
    return mask;
}

std::vector<std::int64_t> sorted_unique(std::vector<std::int64_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

IndexResult index_templates(const fs::path &directory, int workers, const std::vector<std::int64_t> &merge_labels) {
    const auto merge = sorted_unique(merge_labels);
    if (!fs::is_directory(directory)) fail(ErrorCode::io_error, "not a directory: " + directory.string());
    std::vector<fs::path> files;
    for (const auto &de : fs::directory_iterator(directory)) {
        if (de.is_regular_file() && is_volume_file(de.path())) files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorCode::empty_input, "no volume files in " + directory.string());

    std::vector<std::optional<TemplateEntry>> slots(files.size());
    std::vector<std::string> problems(files.size());
    parallel_for(static_cast<std::int64_t>(files.size()), workers, [&](std::int64_t n) {
        const auto &path = files[n];
        try {
            const auto raw = io::read_volume(path);
            if (raw.info.channels != 1) {
                problems[n] = path.filename().string() + ": multi-channel volume";
                return;
            }
            auto converted = to_mask(raw, merge);
            if (!converted) {
                problems[n] = path.filename().string() + ": non-binary values";
                return;
            }
            const MaskVolume &mask = *converted;
            const auto bounds = mask_bounds(mask);
            if (!bounds) {
                problems[n] = path.filename().string() + ": empty mask";
                return;
            }
            TemplateEntry e;
            e.source_id = stem_of(path);
            e.path = fs::absolute(path).lexically_normal();
            e.voxel_count = count_true(mask);
            e.bbox = *bounds;
            e.dims = raw.info.meta.dims;
            e.sha256 = sha256_file(path);
            e.merged_labels = merge;
            slots[n] = std::move(e);
        } catch (const std::exception &ex) {
            problems[n] = path.filename().string() + ": " + ex.what();
        }
    });

    IndexResult out;
    for (std::size_t n = 0; n < files.size(); ++n) {
        if (slots[n]) {
            out.manifest.entries.push_back(std::move(*slots[n]));
        } else {
            out.warnings.push_back(problems[n]);
        }
    }
    if (out.manifest.entries.empty()) {
        std::string msg = "no usable templates in " + directory.string();
        for (const auto &w : out.warnings) msg += "; " + w;
        fail(ErrorCode::empty_input, msg);
    }
    out.manifest.bank_hash = compute_bank_hash(out.manifest.entries);
    return out;
}

BinaryTemplate load_template(const TemplateEntry &entry) {
    if (entry.merged_labels.empty()) return BinaryTemplate{io::read_mask(entry.path), entry.source_id};
    auto mask = to_mask(io::read_volume(entry.path), sorted_unique(entry.merged_labels));
    return BinaryTemplate{std::move(*mask), entry.source_id};
}

BinaryTemplate prepare_template(const BinaryTemplate &raw, std::int64_t size) {
    const auto bounds = mask_bounds(raw.mask);
    if (!bounds) fail(ErrorCode::empty_input, "template '" + raw.source_id + "' has no true voxels");
    Index3 shift{};
    for (int a = 0; a < 3; ++a) {
        const std::int64_t centre = (bounds->lo[a] + bounds->hi[a] + 1) / 2;
        shift[a] = size / 2 - centre;
    }
    GridMeta meta{{size, size, size}, raw.meta().spacing, raw.meta().origin};
    for (int a = 0; a < 3; ++a) meta.origin[a] -= static_cast<double>(shift[a]) * meta.spacing[a];
    BinaryTemplate out{MaskVolume(meta, 0), raw.source_id};
    bool any = false;
    for (std::int64_t i = bounds->lo[0]; i <= bounds->hi[0]; ++i) {
        const std::int64_t oi = i + shift[0];
        if (oi < 0 || oi >= size) continue;
        for (std::int64_t j = bounds->lo[1]; j <= bounds->hi[1]; ++j) {
            const std::int64_t oj = j + shift[1];
            if (oj < 0 || oj >= size) continue;
            for (std::int64_t k = bounds->lo[2]; k <= bounds->hi[2]; ++k) {
                const std::int64_t ok = k + shift[2];
                if (ok < 0 || ok >= size) continue;
                if (raw.mask.at(i, j, k)) {
                    out.mask.at(oi, oj, ok) = 1;
                    any = true;
                }
            }
        }
    }
    if (!any) fail(ErrorCode::empty_input, "template '" + raw.source_id + "' is empty after cropping");
    return out;
}

void to_json(json &j, const SmshapesConfig &c) {
    j = json{{"radius", {c.radius_min, c.radius_max}},
             {"deformation", {c.deformation_min, c.deformation_max}},
             {"octave_scales", c.octave_scales},
             {"grid", c.grid}};
}

void from_json(const json &j, SmshapesConfig &c) {
    if (j.contains("radius")) {
        c.radius_min = j["radius"].at(0).get<std::int64_t>();
        c.radius_max = j["radius"].at(1).get<std::int64_t>();
    }
    if (j.contains("deformation")) {
        c.deformation_min = j["deformation"].at(0).get<double>();
        c.deformation_max = j["deformation"].at(1).get<double>();
    }
    if (j.contains("octave_scales")) c.octave_scales = j["octave_scales"].get<std::vector<double>>();
    if (j.contains("grid")) c.grid = j["grid"].get<std::int64_t>();
}

BinaryTemplate smshapes_template(std::int64_t radius, double peak_displacement, const SmshapesConfig &cfg,
                                 RngStream &rng) {
    const auto meta = GridMeta::cube(cfg.grid);
    const Vec3 centre = {static_cast<double>(cfg.grid / 2), static_cast<double>(cfg.grid / 2),
                         static_cast<double>(cfg.grid / 2)};
    MaskVolume mask;
    if (peak_displacement == 0.0) {
        mask = deformed_ball(meta, centre, static_cast<double>(radius), nullptr);
    } else {
        auto field_rng = rng.derive("deformation", 0);
        const auto field = make_perlin_displacement(meta, cfg.octave_scales, peak_displacement, field_rng);
        mask = deformed_ball(meta, centre, static_cast<double>(radius), &field);
    }
    return BinaryTemplate{std::move(mask), "smshapes"};
}

BinaryTemplate gen_smshapes_template(RngStream &rng, const SmshapesConfig &cfg) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        auto draw = rng.derive("shape", attempt);
        const auto radius = draw.uniform_int(cfg.radius_min, cfg.radius_max);
        const double peak = draw.uniform(cfg.deformation_min, cfg.deformation_max);
        auto t = smshapes_template(radius, peak, cfg, draw);
        if (count_true(t.mask) > 0) {
            t.source_id = "smshapes-" + std::to_string(rng.key() % 1000000);
            return t;
        }
        if (attempt > 64) fail(ErrorCode::precondition, "smshapes generator keeps producing empty masks");
    }
}

TemplateBank TemplateBank::from_manifest(const TemplateManifest &manifest, std::size_t max_cached) {
    if (manifest.entries.empty()) fail(ErrorCode::empty_input, "template manifest has no entries");
    TemplateBank bank;
    bank.size_ = manifest.entries.size();
    bank.bank_hash_ = manifest.bank_hash;
    if (bank.size_ <= max_cached) {
        for (const auto &e : manifest.entries) {
            bank.cached_.push_back(std::make_shared<const BinaryTemplate>(prepare_template(load_template(e))));
        }
    } else {
        bank.entries_ = manifest.entries;
    }
    return bank;
}

TemplateBank TemplateBank::from_templates(std::vector<BinaryTemplate> templates, std::string bank_hash) {
    if (templates.empty()) fail(ErrorCode::empty_input, "template bank is empty");
    TemplateBank bank;
    bank.size_ = templates.size();
    bank.bank_hash_ = std::move(bank_hash);
    for (auto &t : templates) {
        const bool ready = t.meta().dims == Index3{kTemplateGrid, kTemplateGrid, kTemplateGrid};
        bank.cached_.push_back(std::make_shared<const BinaryTemplate>(ready ? std::move(t) : prepare_template(t)));
    }
    return bank;
}

TemplateBank TemplateBank::smshapes(std::size_t count, const RngStream &rng, const SmshapesConfig &cfg,
                                    int workers) {
    if (count == 0) fail(ErrorCode::empty_input, "smshapes bank needs at least one template");
    std::vector<BinaryTemplate> shapes(count);
    parallel_for(static_cast<std::int64_t>(count), workers, [&](std::int64_t n) {
        auto stream = rng.derive("smshapes", static_cast<std::uint64_t>(n));
        shapes[n] = gen_smshapes_template(stream, cfg);
        shapes[n].source_id = "smshapes-" + std::to_string(n);
    });
    json ident{{"generator", "smshapes"}, {"stream", rng.path_string()}, {"count", count}, {"config", cfg}};
    return from_templates(std::move(shapes), sha256_hex(ident.dump()));
}

std::shared_ptr<const BinaryTemplate> TemplateBank::at(std::size_t index) const {
    if (index >= size_) fail(ErrorCode::invalid_argument, "template index out of range");
    if (!cached_.empty()) return cached_[index];
    return std::make_shared<const BinaryTemplate>(prepare_template(load_template(entries_[index])));
}

}  // namespace voxsynth
