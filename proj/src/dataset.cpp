#include "voxsynth/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "voxsynth/digest.hpp"
#include "voxsynth/label_engine.hpp"
#include "voxsynth/parallel.hpp"
#include "voxsynth/volume_io.hpp"

namespace voxsynth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sample_name(const char *prefix, std::int64_t i, const char *suffix, const std::string &ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%06lld%s", prefix, static_cast<long long>(i), suffix);
    return std::string(buf) + ext;
}

template <class T>
json opt_json(const std::optional<T> &v) {
    return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> opt_from(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

struct SampleResult {
    std::optional<SampleRecord> record;
    std::optional<SampleFailure> failure;
};

// Runs one sample; on error removes whatever it wrote.
template <class Fn>
SampleResult guarded(std::int64_t index, const fs::path &dir, Fn &&fn) {
    std::vector<fs::path> written;
    try {
        return {fn(written), std::nullopt};
    } catch (const std::exception &e) {
        for (const auto &p : written) {
            std::error_code ec;
            fs::remove(dir / p, ec);
            fs::remove(fs::path((dir / p).string() + ".tmp"), ec);
        }
        const auto *err = dynamic_cast<const Error *>(&e);
        return {std::nullopt, SampleFailure{index, err ? std::string(to_string(err->code())) : "internal",
                                            e.what()}};
    }
}

void write_pair_files(const PairSample &pair, std::int64_t i, const fs::path &dir, const std::string &ext,
                      SampleRecord &rec, std::vector<fs::path> &written) {
    rec.v1_file = (fs::path("pairs") / sample_name("pair", i, "_v1", ext)).generic_string();
    rec.v2_file = (fs::path("pairs") / sample_name("pair", i, "_v2", ext)).generic_string();
    rec.pair_labels_file = (fs::path("pairs") / sample_name("pair", i, "_labels", ext)).generic_string();
    rec.provenance_file = (fs::path("provenance") / sample_name("sample", i, "", ".json")).generic_string();
    written.insert(written.end(), {rec.v1_file, rec.v2_file, rec.pair_labels_file, rec.provenance_file});
    io::write_volume(dir / rec.v1_file, pair.v1);
    io::write_volume(dir / rec.v2_file, pair.v2);
    rec.v1_sha256 = sha256_file(dir / rec.v1_file);
    io::write_volume(dir / rec.pair_labels_file, pair.labels);
    rec.v2_sha256 = sha256_file(dir / rec.v2_file);
    rec.pair_labels_sha256 = sha256_file(dir / rec.pair_labels_file);
}

void write_provenance(const json &prov, const fs::path &dir, SampleRecord &rec, std::int64_t i,
                      std::vector<fs::path> &written) {
    if (rec.provenance_file.empty()) {
        rec.provenance_file = (fs::path("provenance") / sample_name("sample", i, "", ".json")).generic_string();
        written.push_back(rec.provenance_file);
    }
    const auto text = prov.dump(1) + "\n";
    io::write_file_atomic(dir / rec.provenance_file, text);
    rec.provenance_sha256 = sha256_hex(std::string_view(text));
}

DatasetManifest assemble(std::vector<SampleResult> &results, DatasetManifest m, const fs::path &dir) {
    for (auto &r : results) {
        if (r.record) m.samples.push_back(std::move(*r.record));
        if (r.failure) m.failures.push_back(std::move(*r.failure));
    }
    io::write_file_atomic(dir / kManifestName, to_json(m).dump(2) + "\n");
    return m;
}

void prepare_dirs(const GenerateOptions &opts) {
    if (opts.count < 1) fail(ErrorCode::invalid_argument, "count must be >= 1");
    fs::create_directories(opts.out_dir / "labels");
    fs::create_directories(opts.out_dir / "provenance");
    if (opts.write_pairs) fs::create_directories(opts.out_dir / "pairs");
}

}  // namespace

json to_json(const DatasetManifest &m) {
    json samples = json::array();
    for (const auto &s : m.samples) {
        json j{{"index", s.index},
               {"stream", s.stream},
               {"labels_file", s.labels_file},
               {"labels_sha256", s.labels_sha256},
               {"provenance_file", s.provenance_file},
               {"provenance_sha256", s.provenance_sha256},
               {"max_label", s.max_label},
               {"n_templates", opt_json(s.n_templates)},
               {"fg_applied", opt_json(s.fg_applied)},
               {"p_fg", opt_json(s.p_fg)},
               {"envelope_applied", opt_json(s.envelope_applied)},
               {"p_envelope", opt_json(s.p_envelope)}};
        if (!s.v1_file.empty()) {
            j["v1_file"] = s.v1_file;
            j["v1_sha256"] = s.v1_sha256;
            j["v2_file"] = s.v2_file;
            j["v2_sha256"] = s.v2_sha256;
            j["pair_labels_file"] = s.pair_labels_file;
            j["pair_labels_sha256"] = s.pair_labels_sha256;
        }
        samples.push_back(std::move(j));
    }
    json failures = json::array();
    for (const auto &f : m.failures) failures.push_back({{"index", f.index}, {"code", f.code}, {"message", f.message}});

    std::int64_t known = 0, masked = 0, enveloped = 0;
    for (const auto &s : m.samples) {
        if (!s.fg_applied) continue;
        ++known;
        masked += *s.fg_applied;
        enveloped += s.envelope_applied.value_or(false);
    }
    json summary{{"samples_with_label_provenance", known},
                 {"masked", masked},
                 {"enveloped", enveloped},
                 {"masked_fraction", known ? json(double(masked) / double(known)) : json(nullptr)},
                 {"envelope_given_mask_fraction", masked ? json(double(enveloped) / double(masked)) : json(nullptr)}};

    return {{"format", "voxsynth-dataset"},
            {"version", 1},
            {"engine_version", m.engine_version},
            {"master_seed", m.master_seed},
            {"config_hash", m.config_hash},
            {"bank_hash", m.bank_hash},
            {"kind", m.kind},
            {"count", m.count},
            {"digest", "sha256"},
            {"summary", summary},
            {"samples", samples},
            {"failures", failures}};
}

DatasetManifest manifest_from_json(const json &j) {
    if (j.value("format", "") != "voxsynth-dataset") fail(ErrorCode::malformed_header, "not a voxsynth dataset manifest");
    DatasetManifest m;
    m.engine_version = j.at("engine_version").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.bank_hash = j.at("bank_hash").get<std::string>();
    m.kind = j.at("kind").get<std::string>();
    m.count = j.at("count").get<std::int64_t>();
    for (const auto &s : j.at("samples")) {
        SampleRecord r;
        r.index = s.at("index").get<std::int64_t>();
        r.stream = s.at("stream").get<std::string>();
        r.labels_file = s.at("labels_file").get<std::string>();
        r.labels_sha256 = s.at("labels_sha256").get<std::string>();
        r.provenance_file = s.at("provenance_file").get<std::string>();
        r.provenance_sha256 = s.at("provenance_sha256").get<std::string>();
        r.max_label = s.at("max_label").get<std::uint16_t>();
        r.v1_file = s.value("v1_file", "");
        r.v1_sha256 = s.value("v1_sha256", "");
        r.v2_file = s.value("v2_file", "");
        r.v2_sha256 = s.value("v2_sha256", "");
        r.pair_labels_file = s.value("pair_labels_file", "");
        r.pair_labels_sha256 = s.value("pair_labels_sha256", "");
        r.n_templates = opt_from<std::int64_t>(s, "n_templates");
        r.fg_applied = opt_from<bool>(s, "fg_applied");
        r.p_fg = opt_from<double>(s, "p_fg");
        r.envelope_applied = opt_from<bool>(s, "envelope_applied");
        r.p_envelope = opt_from<double>(s, "p_envelope");
        m.samples.push_back(std::move(r));
    }
    for (const auto &f : j.at("failures")) {
        m.failures.push_back({f.at("index").get<std::int64_t>(), f.at("code").get<std::string>(),
                              f.at("message").get<std::string>()});
    }
    return m;
}

DatasetManifest read_manifest(const fs::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
        return manifest_from_json(j);
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, "manifest " + path.string() + ": " + e.what());
    }
}

std::vector<std::string> verify_manifest(const fs::path &dir, const DatasetManifest &m) {
    std::vector<std::string> problems;
    auto check = [&](const std::string &file, const std::string &digest) {
        if (file.empty()) return;
        const fs::path p = fs::path(file).is_absolute() ? fs::path(file) : dir / file;
        if (!fs::exists(p)) {
            problems.push_back("missing: " + file);
        } else if (sha256_file(p) != digest) {
            problems.push_back("digest mismatch: " + file);
        }
    };
    for (const auto &s : m.samples) {
        check(s.labels_file, s.labels_sha256);
        check(s.v1_file, s.v1_sha256);
        check(s.v2_file, s.v2_sha256);
        check(s.pair_labels_file, s.pair_labels_sha256);
        check(s.provenance_file, s.provenance_sha256);
    }
    return problems;
}

std::vector<fs::path> list_volume_files(const fs::path &dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::io_error, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto &e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        auto ends = [&](const std::string &s) { return name.size() >= s.size() && name.ends_with(s); };
        if (ends(".nii") || ends(".nii.gz") || ends(".raw")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

DatasetManifest generate_dataset(const TemplateBank &bank, const EngineConfig &cfg, const GenerateOptions &opts) {
    cfg.validate();
    if (bank.empty()) fail(ErrorCode::empty_input, "template bank is empty");
    prepare_dirs(opts);
    const RngStream root(opts.master_seed);
    const auto &dir = opts.out_dir;

    std::vector<SampleResult> results(static_cast<std::size_t>(opts.count));
    parallel_for(opts.count, opts.workers, [&](std::int64_t i) {
        results[i] = guarded(i, dir, [&](std::vector<fs::path> &written) {
            const auto sample = root.derive("sample", static_cast<std::uint64_t>(i));
            SampleRecord rec;
            rec.index = i;
            rec.stream = sample.path_string();
            const auto lmap = synthesize_label_map(bank, cfg.labels, sample.derive("labels", 0));
            const auto &p = lmap.provenance;
            rec.max_label = max_label(lmap.labels);
            rec.n_templates = p.n_templates;
            rec.fg_applied = p.fg_applied;
            rec.p_fg = p.p_fg;
            rec.envelope_applied = p.envelope_applied;
            rec.p_envelope = p.fg_applied ? std::optional<double>(p.p_envelope) : std::nullopt;

            rec.labels_file = (fs::path("labels") / sample_name("label", i, "", opts.extension)).generic_string();
            written.push_back(rec.labels_file);
            io::write_volume(dir / rec.labels_file, lmap.labels);
            rec.labels_sha256 = sha256_file(dir / rec.labels_file);

            json prov{{"index", i}, {"stream", rec.stream}, {"labels", to_json(p)}};
            if (opts.write_pairs) {
                const auto pair = synthesize_pair(lmap.labels, cfg.appearance, sample.derive("pair", 0));
                write_pair_files(pair, i, dir, opts.extension, rec, written);
                prov["pair"] = to_json(pair.provenance);
            }
            write_provenance(prov, dir, rec, i, written);
            return rec;
        });
    });

    DatasetManifest m;
    m.master_seed = opts.master_seed;
    m.config_hash = config_hash(cfg);
    m.bank_hash = bank.bank_hash();
    m.kind = opts.write_pairs ? "pairs" : "labels";
    m.count = opts.count;
    return assemble(results, std::move(m), dir);
}

DatasetManifest generate_pairs_from_labels(const std::vector<fs::path> &label_files, const EngineConfig &cfg,
                                           const GenerateOptions &opts_in) {
    cfg.validate();
    GenerateOptions opts = opts_in;
    opts.write_pairs = true;
    if (label_files.empty()) fail(ErrorCode::empty_input, "no label maps given");
    if (opts.count <= 0 || opts.count > static_cast<std::int64_t>(label_files.size())) {
        opts.count = static_cast<std::int64_t>(label_files.size());
    }
    prepare_dirs(opts);
    const RngStream root(opts.master_seed);
    const auto &dir = opts.out_dir;

    std::vector<SampleResult> results(static_cast<std::size_t>(opts.count));
    parallel_for(opts.count, opts.workers, [&](std::int64_t i) {
        results[i] = guarded(i, dir, [&](std::vector<fs::path> &written) {
            const auto sample = root.derive("sample", static_cast<std::uint64_t>(i));
            SampleRecord rec;
            rec.index = i;
            rec.stream = sample.path_string();
            const auto &src = label_files[static_cast<std::size_t>(i)];
            const auto labels = io::read_labels(src);
            rec.labels_file = src.string();
            rec.labels_sha256 = sha256_file(src);
            rec.max_label = max_label(labels);
            const auto pair = synthesize_pair(labels, cfg.appearance, sample.derive("pair", 0));
            write_pair_files(pair, i, dir, opts.extension, rec, written);
            json prov{{"index", i}, {"stream", rec.stream}, {"source_labels", rec.labels_file},
                      {"pair", to_json(pair.provenance)}};
            write_provenance(prov, dir, rec, i, written);
            return rec;
        });
    });

    DatasetManifest m;
    m.master_seed = opts.master_seed;
    m.config_hash = config_hash(cfg);
    m.bank_hash = "";
    m.kind = "pairs";
    m.count = opts.count;
    return assemble(results, std::move(m), dir);
}

}  // namespace voxsynth
