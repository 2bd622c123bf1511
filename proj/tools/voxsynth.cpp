// voxsynth command-line interface. Every command prints one JSON document to
// stdout. Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxsynth/appearance.hpp"
#include "voxsynth/batch_io.hpp"
#include "voxsynth/config.hpp"
#include "voxsynth/contrastive.hpp"
#include "voxsynth/dataset.hpp"
#include "voxsynth/metrics.hpp"
#include "voxsynth/parallel.hpp"
#include "voxsynth/png.hpp"
#include "voxsynth/templates.hpp"
#include "voxsynth/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace voxsynth;

namespace {

void emit(const json &j) { std::cout << j.dump(2) << std::endl; }

void emit_error(const std::string &code, const std::string &message) {
    emit({{"error", {{"code", code}, {"message", message}}}});
}

EngineConfig config_or_default(const std::string &path) { return path.empty() ? EngineConfig{} : load_config(path); }

TemplateManifest read_template_manifest(const fs::path &path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::io_error, "cannot open template manifest " + path.string());
    json j;
    try {
        in >> j;
        return j.get<TemplateManifest>();
    } catch (const json::exception &e) {
        fail(ErrorCode::malformed_header, "template manifest " + path.string() + ": " + e.what());
    }
}

// A manifest file, or a directory that is indexed on the fly.
TemplateBank open_bank(const std::string &templates, const EngineConfig &cfg, std::uint64_t bank_seed, int workers) {
    if (templates.empty()) {
        return TemplateBank::smshapes(static_cast<std::size_t>(cfg.smshapes_bank_size),
                                      RngStream(bank_seed).derive("smshapes_bank", 0), cfg.smshapes, workers);
    }
    if (fs::is_directory(templates)) return TemplateBank::from_manifest(index_templates(templates, workers).manifest);
    return TemplateBank::from_manifest(read_template_manifest(templates));
}

json manifest_summary(const DatasetManifest &m, const fs::path &dir) {
    const auto j = to_json(m);
    return {{"manifest", (dir / kManifestName).string()},
            {"kind", m.kind},
            {"count", m.count},
            {"written", m.samples.size()},
            {"failures", j.at("failures")},
            {"master_seed", m.master_seed},
            {"config_hash", m.config_hash},
            {"bank_hash", m.bank_hash},
            {"summary", j.at("summary")}};
}

struct Common {
    std::uint64_t seed = 0;
    std::string config;
    int workers = default_worker_count();
};

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"voxsynth: synthetic 3D label ensembles, contrastive volume pairs and evaluation tools"};
    app.require_subcommand(1);
    Common common;

    // templates index
    auto *templates = app.add_subcommand("templates", "Template bank utilities");
    templates->require_subcommand(1);
    auto *tindex = templates->add_subcommand("index", "Index a directory of binary template volumes");
    std::string tdir, tout;
    tindex->add_option("dir", tdir, "Directory of .nii/.nii.gz/.raw templates")->required();
    tindex->add_option("--out", tout, "Manifest path (default <dir>/templates.json)");
    tindex->add_option("--workers", common.workers, "Worker threads");
    std::vector<std::int64_t> merge_labels;
    tindex->add_option("--merge-labels", merge_labels,
                       "Label values merged into one mask per file; multi-label files are accepted")
        ->delimiter(',');

    // labels gen
    auto *labels = app.add_subcommand("labels", "Label ensemble synthesis");
    labels->require_subcommand(1);
    auto *lgen = labels->add_subcommand("gen", "Generate label maps");
    std::int64_t count = 1;
    std::string out_dir, templates_arg, labels_dir;
    std::uint64_t bank_seed = 0;
    std::string extension = ".nii.gz";
    for (auto *c : {lgen}) {
        c->add_option("--count", count, "Number of samples")->check(CLI::PositiveNumber);
        c->add_option("--seed", common.seed, "Master seed");
        c->add_option("--config", common.config, "Engine config JSON");
        c->add_option("--out", out_dir, "Output directory")->required();
        c->add_option("--templates", templates_arg, "Template manifest or directory (default: smshapes bank)");
        c->add_option("--bank-seed", bank_seed, "Seed of the generated smshapes bank");
        c->add_option("--workers", common.workers, "Worker threads");
        c->add_option("--ext", extension, "Volume extension (.nii.gz, .nii, .raw)");
    }

    // pairs gen
    auto *pairs = app.add_subcommand("pairs", "Contrastive pair synthesis");
    pairs->require_subcommand(1);
    auto *pgen = pairs->add_subcommand("gen", "Generate label maps with pairs, or pairs for stored label maps");
    pgen->add_option("--count", count, "Number of samples (default: all stored label maps)");
    pgen->add_option("--seed", common.seed, "Master seed");
    pgen->add_option("--config", common.config, "Engine config JSON");
    pgen->add_option("--out", out_dir, "Output directory")->required();
    pgen->add_option("--labels-dir", labels_dir, "Directory of stored label maps");
    pgen->add_option("--templates", templates_arg, "Template manifest or directory (default: smshapes bank)");
    pgen->add_option("--bank-seed", bank_seed, "Seed of the generated smshapes bank");
    pgen->add_option("--workers", common.workers, "Worker threads");
    pgen->add_option("--ext", extension, "Volume extension (.nii.gz, .nii, .raw)");

    // augment
    auto *augment = app.add_subcommand("augment", "Run the offline or online stage set");
    std::string aug_in, aug_labels, aug_out, aug_stage = "online";
    bool seed_given = false;
    augment->add_option("--in", aug_in, "Intensity volume or dataset manifest (.json)")->required();
    augment->add_option("--labels", aug_labels, "Label map for a single volume");
    augment->add_option("--out", aug_out, "Output volume or directory")->required();
    augment->add_option("--stage", aug_stage, "offline or online")->check(CLI::IsMember({"offline", "online"}));
    augment->add_option("--config", common.config, "Engine config JSON");
    auto *aug_seed = augment->add_option("--seed", common.seed, "Master seed (default: the manifest's)");
    augment->add_option("--workers", common.workers, "Worker threads");

    // smshapes gen
    auto *smshapes = app.add_subcommand("smshapes", "Shape templates without biomedical priors");
    smshapes->require_subcommand(1);
    auto *sgen = smshapes->add_subcommand("gen", "Write deformed-ball templates and index them");
    sgen->add_option("--count", count, "Number of templates")->check(CLI::PositiveNumber);
    sgen->add_option("--seed", common.seed, "Seed");
    sgen->add_option("--config", common.config, "Engine config JSON (smshapes section)");
    sgen->add_option("--out", out_dir, "Output directory")->required();
    sgen->add_option("--workers", common.workers, "Worker threads");

    // loss eval / gradcheck
    auto *loss = app.add_subcommand("loss", "Contrastive loss kernel");
    loss->require_subcommand(1);
    std::string batch_path, grad_out;
    double tau = -1.0, eps = 1e-6;
    bool f64 = false, chain = false, no_normalize = false, per_anchor = false;
    std::int64_t max_coords = 0;
    auto *leval = loss->add_subcommand("eval", "Evaluate the loss and gradient of a batch file");
    auto *lcheck = loss->add_subcommand("gradcheck", "Central-difference check of the analytic gradient");
    for (auto *c : {leval, lcheck}) {
        c->add_option("--batch", batch_path, "Batch sidecar JSON")->required();
        c->add_option("--tau", tau, "Temperature (default: from the batch)");
        c->add_flag("--chain", chain, "Gradient w.r.t. the raw embeddings");
        c->add_option("--workers", common.workers, "Worker threads");
    }
    leval->add_flag("--f64", f64, "Compute in 64-bit (default: 32-bit)");
    leval->add_flag("--no-normalize", no_normalize, "Require unit embeddings instead of normalising");
    leval->add_flag("--per-anchor", per_anchor, "Include per-anchor losses");
    leval->add_option("--grad-out", grad_out, "Write the gradient as a batch file");
    lcheck->add_option("--eps", eps, "Finite-difference step");
    lcheck->add_option("--max-coords", max_coords, "Probe at most this many coordinates (0 = all)");
    lcheck->add_option("--seed", common.seed, "Seed for the coordinate subset");

    // metrics
    auto *metrics = app.add_subcommand("metrics", "Evaluation metrics");
    metrics->require_subcommand(1);
    std::string ma, mb, mfield, mfixed, mmoving, mlabels;
    double lambda = 1.0, weight = 1.0;
    int margin = 0;
    auto *mdice = metrics->add_subcommand("dice", "Per-label Dice of two label maps");
    mdice->add_option("--a", ma, "Label map")->required();
    mdice->add_option("--b", mb, "Label map")->required();
    mdice->add_option("--labels", mlabels, "Comma-separated labels (default: all nonzero)");
    auto *mfolds = metrics->add_subcommand("folds", "Jacobian folding fraction of a displacement field");
    mfolds->add_option("--field", mfield, "3-channel displacement field (voxel units)")->required();
    auto *mreg = metrics->add_subcommand("regobj", "Feature registration objective");
    mreg->add_option("--fixed", mfixed, "Fixed feature volume")->required();
    mreg->add_option("--moving", mmoving, "Moving feature volume")->required();
    mreg->add_option("--field", mfield, "Displacement field")->required();
    mreg->add_option("--lambda", lambda, "Regularisation weight")->check(CLI::NonNegativeNumber);
    mreg->add_option("--weight", weight, "Data-term weight");
    mreg->add_option("--margin", margin, "Border voxels left out of the data term");

    // preview
    auto *preview = app.add_subcommand("preview", "Write a PNG slice");
    std::string pin, pout;
    int axis = 0;
    std::int64_t index = -1;
    bool as_labels = false, as_gray = false;
    preview->add_option("--in", pin, "Volume")->required();
    preview->add_option("--axis", axis, "Slice axis")->check(CLI::Range(0, 2));
    preview->add_option("--index", index, "Slice index (default: middle)");
    preview->add_option("--out", pout, "PNG path")->required();
    preview->add_flag("--labels", as_labels, "Render as a label map");
    preview->add_flag("--gray", as_gray, "Render as intensities");

    // config
    auto *config = app.add_subcommand("config", "Configuration documents");
    config->require_subcommand(1);
    auto *cdefault = config->add_subcommand("default", "Print the default config");
    auto *chash = config->add_subcommand("hash", "Print the hash of a config file");
    chash->add_option("--config", common.config, "Engine config JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        emit_error("usage", e.what());
        return 2;
    }
    seed_given = aug_seed->count() > 0;

    try {
        if (tindex->parsed()) {
            auto res = index_templates(tdir, common.workers, merge_labels);
            const fs::path out = tout.empty() ? fs::path(tdir) / "templates.json" : fs::path(tout);
            io::write_file_atomic(out, json(res.manifest).dump(2) + "\n");
            emit({{"manifest", out.string()},
                  {"count", res.manifest.entries.size()},
                  {"bank_hash", res.manifest.bank_hash},
                  {"warnings", res.warnings}});
        } else if (lgen->parsed() || (pgen->parsed() && labels_dir.empty())) {
            const auto cfg = config_or_default(common.config);
            const auto bank = open_bank(templates_arg, cfg, bank_seed, common.workers);
            GenerateOptions opts{out_dir, count, common.seed, common.workers, pgen->parsed(), extension};
            const auto m = generate_dataset(bank, cfg, opts);
            emit(manifest_summary(m, out_dir));
            if (!m.failures.empty()) return 1;
        } else if (pgen->parsed()) {
            const auto cfg = config_or_default(common.config);
            const auto files = list_volume_files(labels_dir);
            GenerateOptions opts{out_dir, pgen->get_option("--count")->count() ? count : 0, common.seed,
                                 common.workers, true, extension};
            const auto m = generate_pairs_from_labels(files, cfg, opts);
            emit(manifest_summary(m, out_dir));
            if (!m.failures.empty()) return 1;
        } else if (augment->parsed()) {
            const auto cfg = config_or_default(common.config);
            const Pass pass = pass_from_name(aug_stage);
            const auto stages = cfg.appearance.pass_stages(pass);
            json stage_names = json::array();
            for (auto s : stages) stage_names.push_back(std::string(stage_name(s)));
            if (fs::path(aug_in).extension() == ".json") {
                const auto m = read_manifest(aug_in);
                const fs::path src = fs::path(aug_in).parent_path();
                const fs::path dst(aug_out);
                fs::create_directories(dst / "pairs");
                const std::uint64_t seed = seed_given ? common.seed : m.master_seed;
                std::vector<json> records(m.samples.size());
                parallel_for(static_cast<std::int64_t>(m.samples.size()), common.workers, [&](std::int64_t t) {
                    const auto &s = m.samples[static_cast<std::size_t>(t)];
                    if (s.v1_file.empty()) fail(ErrorCode::precondition, "manifest has no pairs to augment");
                    auto resolve = [&](const std::string &f) { return fs::path(f).is_absolute() ? fs::path(f) : src / f; };
                    auto v1 = io::read_intensity(resolve(s.v1_file));
                    auto v2 = io::read_intensity(resolve(s.v2_file));
                    auto lab = io::read_labels(resolve(s.pair_labels_file));
                    PairProvenance prov;
                    const auto rng = RngStream(seed).derive("sample", static_cast<std::uint64_t>(s.index)).derive("pair", 0);
                    run_stages(stages, &v1, &v2, &lab, cfg.appearance, rng, prov);
                    const auto o1 = dst / s.v1_file, o2 = dst / s.v2_file;
                    fs::create_directories(o1.parent_path());
                    io::write_volume(o1, v1);
                    io::write_volume(o2, v2);
                    const auto ol = dst / s.pair_labels_file;
                    io::write_volume(ol, lab);
                    records[t] = {{"index", s.index}, {"v1_file", o1.string()}, {"v2_file", o2.string()},
                                  {"labels_file", ol.string()},
                                  {"provenance", to_json(prov)}};
                });
                emit({{"stage", aug_stage}, {"stages", stage_names}, {"seed", seed}, {"samples", records}});
            } else {
                auto vol = io::read_intensity(aug_in);
                std::optional<LabelVolume> lab;
                if (!aug_labels.empty()) lab = io::read_labels(aug_labels);
                PairProvenance prov;
                run_stages(stages, &vol, nullptr, lab ? &*lab : nullptr, cfg.appearance, RngStream(common.seed), prov);
                io::write_volume(aug_out, vol);
                emit({{"stage", aug_stage}, {"stages", stage_names}, {"seed", common.seed}, {"out", aug_out},
                      {"provenance", to_json(prov).at("view1")}});
            }
        } else if (sgen->parsed()) {
            const auto cfg = config_or_default(common.config);
            fs::create_directories(out_dir);
            const RngStream root(common.seed);
            parallel_for(count, common.workers, [&](std::int64_t i) {
                auto rng = root.derive("smshapes", static_cast<std::uint64_t>(i));
                const auto t = gen_smshapes_template(rng, cfg.smshapes);
                char name[64];
                std::snprintf(name, sizeof name, "shape_%06lld.nii.gz", static_cast<long long>(i));
                io::write_volume(fs::path(out_dir) / name, t.mask);
            });
            auto res = index_templates(out_dir, common.workers);
            const auto manifest_path = fs::path(out_dir) / "templates.json";
            io::write_file_atomic(manifest_path, json(res.manifest).dump(2) + "\n");
            emit({{"manifest", manifest_path.string()},
                  {"count", res.manifest.entries.size()},
                  {"bank_hash", res.manifest.bank_hash},
                  {"warnings", res.warnings}});
        } else if (leval->parsed()) {
            auto loaded = io::read_batch(batch_path);
            if (tau > 0.0) loaded.batch.tau = tau;
            LossOptions lo;
            lo.normalize = !no_normalize;
            lo.grad_wrt_input = chain;
            lo.workers = common.workers;
            json out{{"count", loaded.batch.size()},
                     {"dim", loaded.batch.dim},
                     {"tau", loaded.batch.tau},
                     {"precision", f64 ? "float64" : "float32"}};
            auto report = [&](const auto &rep) {
                out["loss"] = rep.loss;
                out["skipped_anchors"] = rep.skipped_anchors;
                out["grad_wrt_input"] = rep.grad_wrt_input;
                if (per_anchor) out["per_anchor"] = rep.per_anchor;
                if (!grad_out.empty()) {
                    IndexBatch<double> g;
                    g.dim = loaded.batch.dim;
                    g.tau = loaded.batch.tau;
                    g.labels = loaded.batch.labels;
                    g.embeddings.assign(rep.grad.begin(), rep.grad.end());
                    io::write_batch(grad_out, g, f64 ? io::BatchDType::float64 : io::BatchDType::float32);
                    out["grad_file"] = grad_out;
                }
            };
            if (f64) {
                report(supcon_loss(loaded.batch, lo));
            } else {
                report(supcon_loss(io::narrow(loaded.batch), lo));
            }
            emit(out);
        } else if (lcheck->parsed()) {
            auto loaded = io::read_batch(batch_path);
            if (tau > 0.0) loaded.batch.tau = tau;
            GradCheckOptions go;
            go.epsilon = eps;
            go.max_coordinates = max_coords;
            go.seed = common.seed;
            go.loss.grad_wrt_input = chain;
            go.loss.workers = common.workers;
            const auto r = supcon_grad_check(loaded.batch, go);
            emit({{"max_relative_error", r.max_relative_error},
                  {"max_abs_error", r.max_abs_error},
                  {"coordinates", r.coordinates},
                  {"epsilon", eps},
                  {"tau", loaded.batch.tau},
                  {"count", loaded.batch.size()},
                  {"dim", loaded.batch.dim}});
        } else if (mdice->parsed()) {
            std::set<std::uint16_t> wanted;
            std::stringstream ss(mlabels);
            for (std::string tok; std::getline(ss, tok, ',');) {
                if (tok.empty()) continue;
                try {
                    const long v = std::stol(tok);
                    if (v < 0 || v > 65535) throw std::out_of_range("label");
                    wanted.insert(static_cast<std::uint16_t>(v));
                } catch (const std::logic_error &) {
                    fail(ErrorCode::invalid_argument, "bad label in --labels: " + tok);
                }
            }
            emit(to_json(dice(io::read_labels(ma), io::read_labels(mb), wanted)));
        } else if (mfolds->parsed()) {
            emit(to_json(jacobian_folds(io::read_field(mfield))));
        } else if (mreg->parsed()) {
            const auto r = registration_objective(io::read_features(mfixed), io::read_features(mmoving),
                                                  io::read_field(mfield), lambda, weight, margin);
            auto j = to_json(r);
            j["lambda"] = lambda;
            j["weight"] = weight;
            emit(j);
        } else if (preview->parsed()) {
            const auto info = io::read_info(pin);
            if (info.channels != 1) fail(ErrorCode::invalid_argument, "preview needs a single-channel volume");
            const bool integral = info.dtype != io::DType::float32 && info.dtype != io::DType::float64;
            const bool labels_mode = as_labels || (integral && !as_gray);
            if (index < 0) index = info.meta.dims[axis] / 2;
            io::Image img;
            if (labels_mode) {
                img = io::slice_labels(io::read_labels(pin), axis, index);
            } else {
                img = io::slice_gray(io::read_intensity(pin), axis, index);
            }
            io::write_png(pout, img);
            emit({{"out", pout},
                  {"axis", axis},
                  {"index", index},
                  {"width", img.width},
                  {"height", img.height},
                  {"mode", labels_mode ? "labels" : "gray"}});
        } else if (cdefault->parsed()) {
            const EngineConfig cfg;
            emit({{"config", json(cfg)}, {"config_hash", config_hash(cfg)}});
        } else if (chash->parsed()) {
            const auto cfg = load_config(common.config);
            emit({{"config_hash", config_hash(cfg)}});
        }
    } catch (const Error &e) {
        emit_error(std::string(to_string(e.code())), e.what());
        return 1;
    } catch (const std::exception &e) {
        emit_error("internal", e.what());
        return 1;
    }
    return 0;
}
