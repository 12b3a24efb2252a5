#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cogmap/dirichlet_trainer.hpp"
#include "cogmap/extraction.hpp"
#include "cogmap/latent_emulator.hpp"
#include "cogmap/probes_steering.hpp"
#include "cogmap/report_io.hpp"
#include "cogmap/scene_gen.hpp"
#include "cogmap/spectral.hpp"
#include "cogmap/stats.hpp"

namespace fs = std::filesystem;
using namespace cogmap;
using report::ArtifactError;
using report::ConfigError;
using report::KvMap;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitMissingInput = 4;
constexpr int kExitChecksFailed = 5;

constexpr uint64_t kEmulatorSeedMix = 0x5ca1ab1eULL;

struct CommandOutcome {
    report::CheckReport checks;
    std::vector<std::string> outputs;  // paths relative to the out dir
    std::vector<std::string> inputs;
};

using Runner = std::function<CommandOutcome(const KvMap&, const fs::path&)>;

uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    uint64_t value = 0;
    const std::string& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("key " + key + ": not an unsigned integer: " + s);
    return value;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError(what + ": not a number: " + tok);
        }
    }
    if (out.empty()) throw ConfigError(what + ": empty list");
    return out;
}

scene::Dataset load_dataset(const KvMap& cfg) {
    const std::string dir = report::kv_require(cfg, "data");
    if (!fs::exists(fs::path(dir) / "dataset.kv"))
        throw ArtifactError("dataset not found (missing dataset.kv): " + dir);
    return scene::read_dataset(dir);
}

emulator::CorpusActivations load_corpus(const KvMap& cfg, const scene::Dataset& ds) {
    std::string path = report::kv_require(cfg, "activations");
    if (fs::is_directory(path)) path = (fs::path(path) / "activations.jsonl").string();
    if (!fs::exists(path)) throw ArtifactError("activations file not found: " + path);
    std::map<std::string, emulator::ActivationMatrix> by_id;
    std::istringstream in(report::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        emulator::ActivationMatrix am = emulator::activations_from_json(line);
        by_id[am.scene_id] = std::move(am);
    }
    emulator::CorpusActivations corpus;
    corpus.per_scene.reserve(ds.scenes.size());
    for (const auto& sc : ds.scenes) {
        auto it = by_id.find(sc.scene_id);
        if (it == by_id.end())
            throw ArtifactError("activations missing for scene " + sc.scene_id + " in " + path);
        corpus.per_scene.push_back(std::move(it->second));
    }
    return corpus;
}

emulator::EmulatorConfig emulator_config_from_kv(const KvMap& kv) {
    emulator::EmulatorConfig ecfg;
    ecfg.d = static_cast<int>(report::kv_long(kv, "dim", ecfg.d));
    ecfg.identity_share = report::kv_double(kv, "identity_share", ecfg.identity_share);
    ecfg.spatial_share = report::kv_double(kv, "spatial_share", ecfg.spatial_share);
    ecfg.noise_sigma = report::kv_double(kv, "noise_sigma", ecfg.noise_sigma);
    ecfg.kappa = report::kv_double(kv, "kappa", ecfg.kappa);
    ecfg.slot_frames = static_cast<int>(report::kv_long(kv, "slot_frames", ecfg.slot_frames));
    ecfg.calibration_scenes =
        static_cast<int>(report::kv_long(kv, "calibration_scenes", ecfg.calibration_scenes));
    return ecfg;
}

emulator::CorpusMode corpus_mode_from_string(const std::string& mode) {
    if (mode == "object") return emulator::CorpusMode::object_level;
    if (mode == "projective") return emulator::CorpusMode::projective;
    throw ConfigError("mode must be 'object' or 'projective', got: " + mode);
}

// ---- gen-data ----

CommandOutcome run_gen_data(const KvMap& cfg, const fs::path& out) {
    scene::DatasetConfig dcfg;
    dcfg.scenes = static_cast<int>(report::kv_long(cfg, "scenes", 200));
    if (dcfg.scenes < 0) throw ConfigError("scenes must be >= 0");
    const std::string traj = report::kv_get(cfg, "traj", "orbit");
    auto kind = scene::trajectory_kind_from_string(traj);
    if (!kind) throw ConfigError("unknown trajectory kind: " + traj);
    dcfg.traj_kind = *kind;
    dcfg.seed = kv_u64(cfg, "seed", 0);
    dcfg.train_fraction = report::kv_double(cfg, "train_fraction", 0.9);
    dcfg.scene_cfg.min_objects = static_cast<int>(report::kv_long(cfg, "min_objects", 3));
    dcfg.scene_cfg.max_objects = static_cast<int>(report::kv_long(cfg, "max_objects", 8));
    dcfg.scene_cfg.distinct_identities = report::kv_bool(cfg, "distinct_identities", false);
    dcfg.qa_cfg.per_scene = static_cast<int>(report::kv_long(cfg, "qa_per_scene", 5));
    if (dcfg.scene_cfg.min_objects < 1 || dcfg.scene_cfg.max_objects < dcfg.scene_cfg.min_objects)
        throw ConfigError("object count bounds must satisfy 1 <= min <= max");
    if (dcfg.train_fraction < 0.0 || dcfg.train_fraction > 1.0)
        throw ConfigError("train_fraction must be in [0, 1]");

    scene::Dataset ds = scene::generate_dataset(dcfg);
    scene::write_dataset(ds, out.string());

    CommandOutcome oc;
    oc.outputs = {"train.jsonl", "val.jsonl", "splits.json", "dataset.kv"};
    return oc;
}

// ---- emulate ----

CommandOutcome run_emulate(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    emulator::EmulatorConfig ecfg = emulator_config_from_kv(cfg);
    const uint64_t seed = kv_u64(cfg, "seed", 0);
    const std::string mode_str = report::kv_get(cfg, "mode", "object");
    emulator::CorpusMode mode = corpus_mode_from_string(mode_str);
    const int samples = static_cast<int>(report::kv_long(cfg, "samples_per_side", 4));

    Rng rng(seed ^ kEmulatorSeedMix);
    emulator::EmulatorParams params = emulator::make_emulator_params(ecfg, ds.config.scene_cfg, rng);
    emulator::CorpusActivations corpus =
        emulator::build_corpus_activations(ds, params, mode, seed, samples);
    emulator::VarianceShares shares = emulator::realized_variance_shares(params, corpus);

    std::string jsonl;
    for (const auto& am : corpus.per_scene) {
        jsonl += emulator::activations_to_json(am);
        jsonl += '\n';
    }
    report::write_file((out / "activations.jsonl").string(), jsonl);

    report::Csv shares_csv;
    shares_csv.header = {"quantity", "value"};
    shares_csv.add_row({"identity_share_realized", report::format_double(shares.identity)});
    shares_csv.add_row({"spatial_share_realized", report::format_double(shares.spatial)});
    shares_csv.add_row({"identity_share_target", report::format_double(ecfg.identity_share)});
    shares_csv.add_row({"spatial_share_target", report::format_double(ecfg.spatial_share)});
    shares_csv.write((out / "shares.csv").string());

    KvMap emu;
    emu["dim"] = std::to_string(ecfg.d);
    emu["identity_share"] = report::format_double(ecfg.identity_share);
    emu["spatial_share"] = report::format_double(ecfg.spatial_share);
    emu["noise_sigma"] = report::format_double(ecfg.noise_sigma);
    emu["kappa"] = report::format_double(ecfg.kappa);
    emu["slot_frames"] = std::to_string(ecfg.slot_frames);
    emu["calibration_scenes"] = std::to_string(ecfg.calibration_scenes);
    emu["seed"] = std::to_string(seed);
    emu["mode"] = mode_str;
    emu["samples_per_side"] = std::to_string(samples);
    emu["data"] = report::kv_require(cfg, "data");
    report::write_kv((out / "emulator.kv").string(), emu);

    CommandOutcome oc;
    oc.inputs = {report::kv_require(cfg, "data")};
    oc.outputs = {"activations.jsonl", "shares.csv", "emulator.kv"};
    return oc;
}

// rebuild the exact emulator used by a prior emulate run
emulator::EmulatorParams load_emulator_params(const std::string& path,
                                              const scene::SceneGenConfig& scene_cfg,
                                              uint64_t* corpus_seed, std::string* mode) {
    if (!fs::exists(path)) throw ArtifactError("emulator file not found: " + path);
    KvMap kv = report::read_kv(path);
    emulator::EmulatorConfig ecfg = emulator_config_from_kv(kv);
    const uint64_t seed = kv_u64(kv, "seed", 0);
    if (corpus_seed) *corpus_seed = seed;
    if (mode) *mode = report::kv_get(kv, "mode", "object");
    Rng rng(seed ^ kEmulatorSeedMix);
    return emulator::make_emulator_params(ecfg, scene_cfg, rng);
}

// ---- fit-basis ----

CommandOutcome run_fit_basis(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    emulator::CorpusActivations corpus = load_corpus(cfg, ds);
    const std::string route = report::kv_get(cfg, "route", "svd");
    const int k = static_cast<int>(report::kv_long(cfg, "k", 23));

    extraction::IdentityBasis basis;
    if (route == "svd") {
        extraction::PrototypeTable table = extraction::cross_scene_prototypes(ds, corpus);
        const int k_max = static_cast<int>(table.prototypes.rows()) - 1;
        basis = extraction::identity_basis_svd(table, std::max(1, std::min(k, k_max)));
    } else if (route == "logistic") {
        extraction::LogisticQrOptions opts;
        opts.c_strength = report::kv_double(cfg, "c_strength", opts.c_strength);
        opts.max_iterations =
            static_cast<int>(report::kv_long(cfg, "max_iterations", opts.max_iterations));
        opts.drop_tolerance = report::kv_double(cfg, "drop_tolerance", opts.drop_tolerance);
        basis = extraction::identity_basis_logistic_qr(ds, corpus, opts);
    } else {
        throw ConfigError("route must be 'svd' or 'logistic', got: " + route);
    }

    extraction::write_basis((out / "basis.json").string(), basis);

    report::Csv info;
    info.header = {"field", "value"};
    info.add_row({"k", std::to_string(basis.k)});
    info.add_row({"provenance", route});
    info.add_row({"rank_warning", basis.rank_warning ? "1" : "0"});
    info.write((out / "basis_info.csv").string());

    report::Csv svs;
    svs.header = {"index", "singular_value"};
    for (int i = 0; i < basis.singular_values.size(); ++i)
        svs.add_row({std::to_string(i), report::format_double(basis.singular_values[i])});
    svs.write((out / "singular_values.csv").string());

    CommandOutcome oc;
    const double ortho_err =
        (basis.W.transpose() * basis.W - Eigen::MatrixXd::Identity(basis.k, basis.k))
            .cwiseAbs()
            .maxCoeff();
    oc.checks.add("basis_orthonormal", ortho_err, 1e-8, ortho_err <= 1e-8, "max |W'W - I|");
    oc.inputs = {report::kv_require(cfg, "data"), report::kv_require(cfg, "activations")};
    oc.outputs = {"basis.json", "basis_info.csv", "singular_values.csv"};
    return oc;
}

// ---- extract ----

CommandOutcome run_extract(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    emulator::CorpusActivations corpus = load_corpus(cfg, ds);
    std::string basis_path = report::kv_require(cfg, "basis");
    if (fs::is_directory(basis_path))
        basis_path = (fs::path(basis_path) / "basis.json").string();
    if (!fs::exists(basis_path)) throw ArtifactError("basis file not found: " + basis_path);
    extraction::IdentityBasis basis = extraction::read_basis(basis_path);
    const int shuffles = static_cast<int>(report::kv_long(cfg, "shuffles", 1000));
    const uint64_t seed = kv_u64(cfg, "seed", 99);

    emulator::CorpusActivations resid = extraction::residualize_corpus(corpus, basis);
    extraction::StackedCorpus stacked = extraction::stack_valid_rows(ds, resid);
    extraction::PcaEmbedding pca = extraction::pca_embed(stacked.H, 3);
    extraction::ProcrustesFit pro = extraction::procrustes_correlation(pca.Z, stacked.positions);
    extraction::RsaResult rsa_before = extraction::rsa(ds, corpus);
    extraction::RsaResult rsa_after = extraction::rsa(ds, resid);
    const double var_frac = extraction::variance_subspace_fraction(corpus, basis.W);

    report::Csv emb;
    emb.header = {"scene_id", "object", "x", "y", "z", "pc1", "pc2", "pc3"};
    {
        int r = 0;
        for (size_t s = 0; s < resid.per_scene.size(); ++s) {
            const auto& am = resid.per_scene[s];
            for (int i = 0; i < am.m(); ++i) {
                if (!am.valid[i]) continue;
                const auto& obj = ds.scenes[s].objects[i];
                std::vector<std::string> row = {ds.scenes[s].scene_id, obj.name};
                for (int c = 0; c < 3; ++c)
                    row.push_back(report::format_double(obj.world_position[c]));
                for (int c = 0; c < 3; ++c)
                    row.push_back(report::format_double(c < pca.returned ? pca.Z(r, c) : 0.0));
                emb.add_row(row);
                ++r;
            }
        }
    }
    emb.write((out / "embedding.csv").string());

    report::Csv ratios;
    ratios.header = {"scene_id", "m_valid", "ratio_raw", "ratio_resid", "degenerate"};
    double sum_raw = 0.0, sum_resid = 0.0;
    int n_ratio = 0;
    Rng ratio_rng(seed);
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        const auto& am_raw = corpus.per_scene[s];
        const auto& am_res = resid.per_scene[s];
        std::vector<int> rows;
        for (int i = 0; i < am_raw.m(); ++i)
            if (am_raw.valid[i]) rows.push_back(i);
        if (rows.size() < 3) continue;
        Eigen::MatrixXd pos(rows.size(), 3);
        Eigen::MatrixXd h_raw(rows.size(), am_raw.d());
        Eigen::MatrixXd h_res(rows.size(), am_res.d());
        for (size_t i = 0; i < rows.size(); ++i) {
            pos.row(i) = ds.scenes[s].objects[rows[i]].world_position.transpose();
            h_raw.row(i) = am_raw.H.row(rows[i]);
            h_res.row(i) = am_res.H.row(rows[i]);
        }
        spectral::KernelGraph g = spectral::gaussian_kernel_graph(pos);
        Rng child = ratio_rng.child(static_cast<uint64_t>(s));
        spectral::RatioResult r_raw = spectral::dirichlet_ratio(h_raw, g, shuffles, child);
        spectral::RatioResult r_res = spectral::dirichlet_ratio(h_res, g, shuffles, child);
        ratios.add_row({ds.scenes[s].scene_id, std::to_string(rows.size()),
                        report::format_double(r_raw.value), report::format_double(r_res.value),
                        (r_raw.degenerate || r_res.degenerate) ? "1" : "0"});
        if (!r_raw.degenerate && !r_res.degenerate) {
            sum_raw += r_raw.value;
            sum_resid += r_res.value;
            ++n_ratio;
        }
    }
    ratios.write((out / "ratios.csv").string());

    report::Csv summary;
    summary.header = {"metric", "value"};
    summary.add_row({"procrustes_corr", report::format_double(pro.correlation)});
    summary.add_row({"rsa_before", report::format_double(rsa_before.mean)});
    summary.add_row({"rsa_after", report::format_double(rsa_after.mean)});
    summary.add_row({"rsa_gain", report::format_double(rsa_after.mean - rsa_before.mean)});
    summary.add_row({"variance_fraction_identity_basis", report::format_double(var_frac)});
    summary.add_row(
        {"mean_ratio_raw", report::format_double(n_ratio ? sum_raw / n_ratio : 0.0)});
    summary.add_row(
        {"mean_ratio_resid", report::format_double(n_ratio ? sum_resid / n_ratio : 0.0)});
    summary.add_row({"pca_rank", std::to_string(pca.returned)});
    summary.write((out / "summary.csv").string());

    CommandOutcome oc;
    oc.inputs = {report::kv_require(cfg, "data"), report::kv_require(cfg, "activations"),
                 basis_path};
    oc.outputs = {"embedding.csv", "ratios.csv", "summary.csv"};
    return oc;
}

// ---- probe ----

CommandOutcome run_probe(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    emulator::CorpusActivations corpus = load_corpus(cfg, ds);
    const int folds = static_cast<int>(report::kv_long(cfg, "folds", 5));
    const double alpha = report::kv_double(cfg, "alpha", 1.0);
    const int knn_k = static_cast<int>(report::kv_long(cfg, "knn_k", 5));
    const uint64_t seed = kv_u64(cfg, "seed", 17);

    probes::ProbeSuiteReport rep =
        probes::cross_validated_probe_suite(ds, corpus, folds, seed, alpha, knn_k);

    report::Csv csv;
    csv.header = {"metric", "mean", "two_se"};
    for (int f = 0; f < rep.folds; ++f) csv.header.push_back("fold_" + std::to_string(f));
    auto add_metric = [&csv](const std::string& name, const probes::MetricSummary& m) {
        std::vector<std::string> row = {name, report::format_double(m.mean),
                                        report::format_double(m.two_se)};
        for (double v : m.per_fold) row.push_back(report::format_double(v));
        csv.add_row(row);
    };
    add_metric("color_acc", rep.color_acc);
    add_metric("shape_acc", rep.shape_acc);
    add_metric("x_r2", rep.x_r2);
    add_metric("z_r2", rep.z_r2);
    add_metric("rsa_rho", rep.rsa_rho);
    csv.write((out / "probe_report.csv").string());

    CommandOutcome oc;
    oc.inputs = {report::kv_require(cfg, "data"), report::kv_require(cfg, "activations")};
    oc.outputs = {"probe_report.csv"};
    return oc;
}

// ---- counterfactual ----

CommandOutcome run_counterfactual(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    const std::string emu_path = report::kv_require(cfg, "emulator");
    uint64_t corpus_seed = 0;
    emulator::EmulatorParams params =
        load_emulator_params(emu_path, ds.config.scene_cfg, &corpus_seed, nullptr);
    const int n_sets = static_cast<int>(report::kv_long(cfg, "sets", 40));
    const int head_scenes = static_cast<int>(report::kv_long(cfg, "head_scenes", 40));
    const double alpha = report::kv_double(cfg, "alpha", 1.0);
    const double readout_noise = report::kv_double(cfg, "readout_noise", 0.0);
    const int k = static_cast<int>(report::kv_long(cfg, "k", 23));
    const uint64_t seed = kv_u64(cfg, "seed", 5);

    const size_t n_head = std::min<size_t>(ds.scenes.size(), static_cast<size_t>(head_scenes));
    if (n_head < 2) throw ConfigError("head_scenes leaves fewer than 2 scenes for head fitting");

    // basis from the full corpus (accurate prototypes); heads deliberately fit
    // on a small scene prefix so the raw head leans on identity shortcuts
    emulator::CorpusActivations full_corpus = emulator::build_corpus_activations(
        ds, params, emulator::CorpusMode::object_level, corpus_seed);
    extraction::PrototypeTable table = extraction::cross_scene_prototypes(ds, full_corpus);
    const int k_eff =
        std::max(1, std::min(k, static_cast<int>(table.prototypes.rows()) - 1));
    extraction::IdentityBasis basis = extraction::identity_basis_svd(table, k_eff);

    scene::Dataset sub;
    sub.config = ds.config;
    sub.scenes.assign(ds.scenes.begin(), ds.scenes.begin() + n_head);
    sub.trajectories.assign(ds.trajectories.begin(), ds.trajectories.begin() + n_head);
    sub.qa.assign(ds.qa.begin(), ds.qa.begin() + n_head);
    emulator::CorpusActivations sub_corpus;
    sub_corpus.per_scene.assign(full_corpus.per_scene.begin(),
                                full_corpus.per_scene.begin() + n_head);

    probes::CoordinateHead raw_head = probes::fit_coordinate_head(sub, sub_corpus, alpha, nullptr);
    probes::CoordinateHead resid_head =
        probes::fit_coordinate_head(sub, sub_corpus, alpha, &basis);

    emulator::EmulatorParams readout_params = params;
    readout_params.noise_sigma = readout_noise;

    std::vector<probes::CounterfactualSet> sets;
    Rng set_rng(seed);
    for (size_t i = 0; i < ds.scenes.size() && static_cast<int>(sets.size()) < n_sets; ++i) {
        const auto& sc = ds.scenes[i];
        if (sc.size() < 4) continue;
        std::set<int> ids;
        for (const auto& obj : sc.objects) ids.insert(scene::identity_index(obj.color, obj.shape));
        if (static_cast<int>(ids.size()) != sc.size()) continue;
        Rng child = set_rng.child(i);
        sets.push_back(probes::make_counterfactual_set(sc, ds.trajectories[i], ds.qa[i], child));
    }
    if (sets.empty())
        throw ConfigError("no eligible scenes (need >= 4 objects with distinct identities); "
                          "generate data with distinct_identities = true");

    CommandOutcome oc;
    double max_pos_delta = 0.0, max_z_err = 0.0;
    int palette_mismatches = 0, shape_mismatches = 0, identity_mismatches = 0, xy_mismatches = 0;
    for (const auto& set : sets) {
        for (size_t v = 0; v < set.variants.size(); ++v) {
            const auto& var = set.variants[v];
            const auto& orig = set.original;
            if (set.variant_names[v] == "color_swap") {
                std::multiset<int> before, after;
                for (int i = 0; i < orig.size(); ++i) {
                    max_pos_delta = std::max(
                        max_pos_delta, (var.objects[i].world_position -
                                        orig.objects[i].world_position)
                                           .cwiseAbs()
                                           .maxCoeff());
                    if (var.objects[i].shape != orig.objects[i].shape) ++shape_mismatches;
                    before.insert(static_cast<int>(orig.objects[i].color));
                    after.insert(static_cast<int>(var.objects[i].color));
                }
                if (before != after) ++palette_mismatches;
            } else {
                std::multiset<std::pair<double, double>> before, after;
                for (int i = 0; i < orig.size(); ++i) {
                    if (var.objects[i].color != orig.objects[i].color ||
                        var.objects[i].shape != orig.objects[i].shape)
                        ++identity_mismatches;
                    before.emplace(orig.objects[i].world_position.x(),
                                   orig.objects[i].world_position.y());
                    after.emplace(var.objects[i].world_position.x(),
                                  var.objects[i].world_position.y());
                    max_z_err = std::max(max_z_err, std::abs(var.objects[i].world_position.z() -
                                                             var.objects[i].radius()));
                }
                if (before != after) ++xy_mismatches;
            }
        }
    }
    oc.checks.add("color_swap_positions_fixed", max_pos_delta, 0.0, max_pos_delta == 0.0,
                  "max |position delta|");
    oc.checks.add("color_swap_palette_preserved", palette_mismatches, 0.0,
                  palette_mismatches == 0, "variants with changed color multiset");
    oc.checks.add("color_swap_shapes_fixed", shape_mismatches, 0.0, shape_mismatches == 0,
                  "objects with changed shape");
    oc.checks.add("position_swap_identities_fixed", identity_mismatches, 0.0,
                  identity_mismatches == 0, "objects with changed identity");
    oc.checks.add("position_swap_xy_multiset", xy_mismatches, 0.0, xy_mismatches == 0,
                  "variants with changed floor-position multiset");
    oc.checks.add("position_swap_z_own_radius", max_z_err, 1e-12, max_z_err <= 1e-12,
                  "max |z - radius|");

    report::Csv flips;
    flips.header = {"head", "variant", "kind", "flips", "total", "rate"};
    auto add_flip_rows = [&flips](const std::string& head, const probes::FlipRateReport& rep) {
        for (const auto& cell : rep.cells)
            flips.add_row({head, cell.variant, scene::to_string(cell.kind),
                           std::to_string(cell.flips), std::to_string(cell.total),
                           report::format_double(cell.rate())});
    };
    add_flip_rows("raw", probes::flip_rate_eval(
                             probes::make_head_readout(raw_head, readout_params, seed ^ 0xafu),
                             sets));
    add_flip_rows("residualized",
                  probes::flip_rate_eval(
                      probes::make_head_readout(resid_head, readout_params, seed ^ 0xafu), sets));
    flips.write((out / "flips.csv").string());

    report::Csv setinfo;
    setinfo.header = {"quantity", "value"};
    setinfo.add_row({"sets", std::to_string(sets.size())});
    setinfo.add_row({"head_scenes", std::to_string(n_head)});
    setinfo.add_row({"basis_k", std::to_string(k_eff)});
    setinfo.write((out / "counterfactual_info.csv").string());

    oc.inputs = {report::kv_require(cfg, "data"), emu_path};
    oc.outputs = {"flips.csv", "counterfactual_info.csv"};
    return oc;
}

// ---- steer ----

CommandOutcome run_steer(const KvMap& cfg, const fs::path& out) {
    scene::Dataset ds = load_dataset(cfg);
    emulator::CorpusActivations corpus = load_corpus(cfg, ds);
    const std::string axis_str = report::kv_get(cfg, "axis", "x");
    probes::Axis axis;
    if (axis_str == "x") axis = probes::Axis::x;
    else if (axis_str == "y") axis = probes::Axis::y;
    else if (axis_str == "z") axis = probes::Axis::z;
    else throw ConfigError("axis must be x, y or z, got: " + axis_str);
    const std::vector<double> alphas =
        parse_double_list(report::kv_get(cfg, "alphas", "0.15,-0.15,0.3,-0.3"), "alphas");
    const int trials = static_cast<int>(report::kv_long(cfg, "trials", 60));
    const double noise_sigma = report::kv_double(cfg, "noise_sigma", 0.0);
    const double ridge_alpha = report::kv_double(cfg, "ridge_alpha", 1.0);
    const uint64_t seed = kv_u64(cfg, "seed", 3);

    probes::RidgeProbe probe = probes::fit_coordinate_probe(ds, corpus, ridge_alpha);
    Rng rng(seed);
    probes::SteeringPair pair = probes::build_steering_pair(probe, axis, rng);
    probes::SteeringReport rep = probes::steering_experiment(ds, corpus, probe, pair, alphas,
                                                             trials, noise_sigma, rng);

    report::Csv steer;
    steer.header = {"arm", "alpha", "mean_dx", "mean_dy", "mean_dz", "sign_correct", "trials"};
    double max_axis_err = 0.0, max_null_abs = 0.0;
    for (const auto& cell : rep.cells) {
        steer.add_row({cell.arm, report::format_double(cell.alpha),
                       report::format_double(cell.mean_delta[0]),
                       report::format_double(cell.mean_delta[1]),
                       report::format_double(cell.mean_delta[2]),
                       std::to_string(cell.sign_correct), std::to_string(cell.trials)});
        for (double dt : cell.deltas_target) {
            if (cell.arm == "axis")
                max_axis_err = std::max(max_axis_err, std::abs(dt - cell.alpha));
            else
                max_null_abs = std::max(max_null_abs, std::abs(dt));
        }
    }
    steer.write((out / "steer.csv").string());

    report::Csv welch;
    welch.header = {"alpha", "t", "dof", "p_two_sided"};
    for (size_t i = 0; i < rep.welch_per_alpha.size(); ++i) {
        const auto& w = rep.welch_per_alpha[i];
        welch.add_row({report::format_double(alphas[i]), report::format_double(w.t),
                       report::format_double(w.dof), report::format_double(w.p_two_sided)});
    }
    welch.write((out / "welch.csv").string());

    const int per_arm = rep.trials_per_arm > 0 ? rep.trials_per_arm : 1;
    report::Csv summary;
    summary.header = {"quantity", "value"};
    summary.add_row({"axis_sign_rate",
                     report::format_double(static_cast<double>(rep.axis_sign_correct) / per_arm)});
    summary.add_row({"null_sign_rate",
                     report::format_double(static_cast<double>(rep.null_sign_correct) / per_arm)});
    summary.add_row({"noise_sigma", report::format_double(noise_sigma)});
    summary.write((out / "steer_summary.csv").string());

    CommandOutcome oc;
    if (noise_sigma == 0.0) {
        oc.checks.add("axis_delta_exact", max_axis_err, 1e-8, max_axis_err <= 1e-8,
                      "max |delta - alpha| on the steered coordinate");
        oc.checks.add("null_delta_zero", max_null_abs, 1e-8, max_null_abs <= 1e-8,
                      "max |delta| under the null direction");
    }
    oc.inputs = {report::kv_require(cfg, "data"), report::kv_require(cfg, "activations")};
    oc.outputs = {"steer.csv", "welch.csv", "steer_summary.csv"};
    return oc;
}

// ---- train / sweep ----

trainer::SweepDataConfig sweep_data_config(const KvMap& cfg) {
    trainer::SweepDataConfig dcfg;
    dcfg.train_scenes = static_cast<int>(report::kv_long(cfg, "train_scenes", dcfg.train_scenes));
    dcfg.val_scenes = static_cast<int>(report::kv_long(cfg, "val_scenes", dcfg.val_scenes));
    dcfg.pairs_per_scene =
        static_cast<int>(report::kv_long(cfg, "pairs_per_scene", dcfg.pairs_per_scene));
    dcfg.data_seed = kv_u64(cfg, "data_seed", dcfg.data_seed);
    dcfg.noise_sigma = report::kv_double(cfg, "noise_sigma", dcfg.noise_sigma);
    dcfg.emulator_dim = static_cast<int>(report::kv_long(cfg, "dim", dcfg.emulator_dim));
    return dcfg;
}

trainer::TrainConfig train_config(const KvMap& cfg) {
    trainer::TrainConfig tcfg;
    tcfg.lambda = report::kv_double(cfg, "lambda", 0.0);
    tcfg.steps = static_cast<int>(report::kv_long(cfg, "steps", tcfg.steps));
    tcfg.lr = report::kv_double(cfg, "lr", tcfg.lr);
    tcfg.momentum = report::kv_double(cfg, "momentum", tcfg.momentum);
    tcfg.seed = kv_u64(cfg, "seed", 0);
    return tcfg;
}

CommandOutcome run_train(const KvMap& cfg, const fs::path& out) {
    trainer::SweepSetup setup = trainer::build_sweep_setup(sweep_data_config(cfg));
    trainer::TrainConfig tcfg = train_config(cfg);
    const double gain = report::kv_double(cfg, "gain", 40.0);
    trainer::ToyModel model = trainer::make_toy_model(setup, tcfg.seed, gain);
    trainer::TrainResult res =
        trainer::train(std::move(model), setup.train_batch, setup.val_batch, tcfg);

    report::Csv trace;
    trace.header = {"step", "ce", "ratio", "total", "val_acc"};
    for (const auto& rec : res.trace)
        trace.add_row({std::to_string(rec.step), report::format_double(rec.ce),
                       report::format_double(rec.ratio), report::format_double(rec.total),
                       report::format_double(rec.val_acc)});
    trace.write((out / "trace.csv").string());

    report::Csv summary;
    summary.header = {"quantity", "value"};
    summary.add_row({"final_val_acc", report::format_double(res.final_val_acc)});
    summary.add_row({"final_ratio", report::format_double(res.final_ratio)});
    summary.add_row({"aborted", res.aborted ? "1" : "0"});
    summary.add_row({"steps_run", std::to_string(res.trace.size())});
    summary.write((out / "train_summary.csv").string());

    CommandOutcome oc;
    oc.outputs = {"trace.csv", "train_summary.csv"};
    return oc;
}

CommandOutcome run_sweep(const KvMap& cfg, const fs::path& out) {
    trainer::SweepSetup setup = trainer::build_sweep_setup(sweep_data_config(cfg));
    trainer::TrainConfig tcfg = train_config(cfg);
    const std::vector<double> lambdas =
        parse_double_list(report::kv_get(cfg, "lambdas", "0,0.3,1,3,9"), "lambdas");
    const int seeds = static_cast<int>(report::kv_long(cfg, "seeds", 4));
    const double gain = report::kv_double(cfg, "gain", 40.0);

    trainer::SweepReport rep = trainer::lambda_sweep(setup, lambdas, seeds, tcfg, gain);

    report::Csv cells;
    cells.header = {"lambda", "seed", "final_val_acc", "final_ratio"};
    for (const auto& cell : rep.cells)
        cells.add_row({report::format_double(cell.lambda), std::to_string(cell.seed),
                       report::format_double(cell.final_val_acc),
                       report::format_double(cell.final_ratio)});
    cells.write((out / "sweep.csv").string());

    report::Csv summary;
    summary.header = {"lambda", "mean_acc", "two_se_acc"};
    for (size_t i = 0; i < rep.lambdas.size(); ++i)
        summary.add_row({report::format_double(rep.lambdas[i]),
                         report::format_double(rep.mean_acc[i]),
                         report::format_double(rep.two_se_acc[i])});
    summary.write((out / "sweep_summary.csv").string());

    report::Series curve;
    curve.label = "validation accuracy";
    curve.x = rep.lambdas;
    curve.y = rep.mean_acc;
    curve.yerr = rep.two_se_acc;
    report::PlotOptions popts;
    popts.title = "Validation accuracy vs regularization strength";
    popts.xlabel = "lambda";
    popts.ylabel = "spatial accuracy";
    report::write_file((out / "sweep_curve.svg").string(), report::svg_line_plot({curve}, popts));

    CommandOutcome oc;
    if (rep.lambdas.size() > 1) {
        oc.checks.add("sweep_rise", rep.best_nonzero_mean - rep.lambda0_mean, 0.0,
                      rep.rise_detected, "best nonzero lambda minus lambda 0, mean accuracy");
        oc.checks.add("sweep_fall", rep.lambda0_mean - rep.largest_lambda_mean, 0.0,
                      rep.fall_detected, "lambda 0 minus largest lambda, mean accuracy");
    }
    oc.outputs = {"sweep.csv", "sweep_summary.csv", "sweep_curve.svg"};
    return oc;
}

// ---- spectral-verify ----

CommandOutcome run_spectral_verify(const KvMap& cfg, const fs::path& out) {
    const uint64_t seed = kv_u64(cfg, "seed", 7);
    const int graphs = static_cast<int>(report::kv_long(cfg, "graphs", 20));
    const int m = static_cast<int>(report::kv_long(cfg, "graph_size", 12));
    const int dim = static_cast<int>(report::kv_long(cfg, "dim", 8));
    const int perturbations = static_cast<int>(report::kv_long(cfg, "perturbations", 1000));
    const int kyfan_graphs = static_cast<int>(report::kv_long(cfg, "kyfan_graphs", 10));
    const int kyfan_frames = static_cast<int>(report::kv_long(cfg, "kyfan_frames", 500));
    const int cube_samples = static_cast<int>(report::kv_long(cfg, "cube_samples", 1500));
    const double cube_tau = report::kv_double(cfg, "cube_tau", 0.2);
    const std::vector<double> epsilons = {4.0, 3.0, 2.0, 1.0};

    Rng rng(seed);
    spectral::MinimizerCheckReport t1 =
        spectral::verify_minimizer_optimality(graphs, m, epsilons, dim, perturbations, rng);

    int kyfan_violations = 0;
    double kyfan_gap = 0.0, kyfan_min_slack = 0.0;
    bool first_graph = true;
    for (int g = 0; g < kyfan_graphs; ++g) {
        Eigen::MatrixXd X(m, 3);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
        spectral::KernelGraph graph = spectral::gaussian_kernel_graph(X);
        spectral::KyFanReport kf =
            spectral::verify_kyfan(graph.laplacian, epsilons, kyfan_frames, rng);
        kyfan_violations += kf.violations;
        kyfan_gap = std::max(kyfan_gap, kf.eigenframe_gap);
        kyfan_min_slack = first_graph ? kf.min_slack : std::min(kyfan_min_slack, kf.min_slack);
        first_graph = false;
    }

    spectral::CubeCheckReport cube = spectral::cube_eigenfunction_check(cube_samples, cube_tau, rng);

    CommandOutcome oc;
    oc.checks.add("theorem1_energy", t1.max_energy_rel_err, 1e-10,
                  t1.max_energy_rel_err <= 1e-10, "max relative energy error");
    oc.checks.add("theorem1_alignment", t1.min_abs_cosine, 1.0 - 1e-8,
                  t1.min_abs_cosine > 1.0 - 1e-8, "min |cosine|, centered PCs vs eigenvectors");
    oc.checks.add("theorem1_perturbations", t1.violations, 0.0, t1.violations == 0,
                  "feasible perturbations below the minimum");
    oc.checks.add("kyfan_bound", kyfan_violations, 0.0, kyfan_violations == 0,
                  "frames below the weighted bound");
    oc.checks.add("kyfan_attainment", kyfan_gap, 1e-10, kyfan_gap <= 1e-10,
                  "max |eigenframe value - bound|");
    oc.checks.add("cube_alignment", cube.mean_cosine, 0.95, cube.mean_cosine >= 0.95,
                  "mean principal-angle cosine");
    oc.checks.add("cube_degeneracy", cube.triple_spread, 0.15, cube.triple_spread < 0.15,
                  "relative spread of the degenerate triple");
    oc.checks.add("cube_null_mode", cube.lambda_ratio_10, 1e-6, cube.lambda_ratio_10 < 1e-6,
                  "lambda_1 / lambda_2");

    report::Csv stats_csv;
    stats_csv.header = {"quantity", "value"};
    stats_csv.add_row({"theorem1_min_perturbation_slack",
                       report::format_double(t1.min_perturbation_slack)});
    stats_csv.add_row({"kyfan_min_slack", report::format_double(kyfan_min_slack)});
    stats_csv.add_row({"cube_lambda_2", report::format_double(cube.lambda[1])});
    stats_csv.add_row({"cube_mean_cosine", report::format_double(cube.mean_cosine)});
    stats_csv.write((out / "spectral_stats.csv").string());

    oc.outputs = {"spectral_stats.csv"};
    return oc;
}

// ---- report (aggregate) ----

CommandOutcome run_report(const KvMap& cfg, const fs::path& out) {
    std::vector<std::string> dirs;
    {
        std::stringstream ss(report::kv_require(cfg, "inputs"));
        std::string tok;
        while (std::getline(ss, tok, ';'))
            if (!tok.empty()) dirs.push_back(tok);
    }
    if (dirs.empty()) throw ConfigError("report: no input directories given");

    CommandOutcome oc;
    report::Csv found;
    found.header = {"source", "artifact", "plot"};
    int produced = 0;
    std::vector<std::string> plots;

    for (const auto& dir : dirs) {
        fs::path root(dir);
        if (fs::exists(root / "embedding.csv")) {
            report::Csv emb = report::read_csv((root / "embedding.csv").string());
            const int cx = report::csv_column(emb, "x");
            const int c1 = report::csv_column(emb, "pc1");
            const int c2 = report::csv_column(emb, "pc2");
            std::vector<double> xs;
            for (const auto& row : emb.rows) xs.push_back(std::stod(row[cx]));
            double lo = xs.empty() ? 0.0 : *std::min_element(xs.begin(), xs.end());
            double hi = xs.empty() ? 1.0 : *std::max_element(xs.begin(), xs.end());
            const int bins = 6;
            std::vector<report::Series> series(bins);
            for (int b = 0; b < bins; ++b) {
                double b_lo = lo + (hi - lo) * b / bins;
                double b_hi = lo + (hi - lo) * (b + 1) / bins;
                series[b].label = "x in [" + report::format_double(b_lo) + ", " +
                                  report::format_double(b_hi) + ")";
            }
            for (size_t r = 0; r < emb.rows.size(); ++r) {
                int b = hi > lo ? std::min(bins - 1, static_cast<int>((xs[r] - lo) /
                                                                      (hi - lo) * bins))
                                : 0;
                series[b].x.push_back(std::stod(emb.rows[r][c1]));
                series[b].y.push_back(std::stod(emb.rows[r][c2]));
            }
            report::PlotOptions popts;
            popts.title = "PCA embedding colored by true x";
            popts.xlabel = "pc1";
            popts.ylabel = "pc2";
            popts.lines = false;
            report::write_file((out / "pca_embedding.svg").string(),
                               report::svg_line_plot(series, popts));
            found.add_row({dir, "embedding.csv", "pca_embedding.svg"});
            plots.push_back("pca_embedding.svg");
            ++produced;
        }
        if (fs::exists(root / "ratios.csv")) {
            report::Csv ratios = report::read_csv((root / "ratios.csv").string());
            const int cr = report::csv_column(ratios, "ratio_raw");
            const int cs = report::csv_column(ratios, "ratio_resid");
            double sum_raw = 0.0, sum_res = 0.0;
            int n = 0;
            for (const auto& row : ratios.rows) {
                sum_raw += std::stod(row[cr]);
                sum_res += std::stod(row[cs]);
                ++n;
            }
            if (n > 0) {
                report::PlotOptions popts;
                popts.title = "Mean Dirichlet ratio";
                popts.ylabel = "ratio";
                report::write_file(
                    (out / "dirichlet_ratio_bars.svg").string(),
                    report::svg_bar_plot({"raw", "residualized"},
                                         {sum_raw / n, sum_res / n}, popts));
                found.add_row({dir, "ratios.csv", "dirichlet_ratio_bars.svg"});
                plots.push_back("dirichlet_ratio_bars.svg");
                ++produced;
            }
        }
        if (fs::exists(root / "sweep_summary.csv")) {
            report::Csv sw = report::read_csv((root / "sweep_summary.csv").string());
            const int cl = report::csv_column(sw, "lambda");
            const int cm = report::csv_column(sw, "mean_acc");
            const int ce = report::csv_column(sw, "two_se_acc");
            report::Series curve;
            curve.label = "validation accuracy";
            for (const auto& row : sw.rows) {
                curve.x.push_back(std::stod(row[cl]));
                curve.y.push_back(std::stod(row[cm]));
                curve.yerr.push_back(std::stod(row[ce]));
            }
            report::PlotOptions popts;
            popts.title = "Validation accuracy vs regularization strength";
            popts.xlabel = "lambda";
            popts.ylabel = "spatial accuracy";
            report::write_file((out / "sweep_curve.svg").string(),
                               report::svg_line_plot({curve}, popts));
            found.add_row({dir, "sweep_summary.csv", "sweep_curve.svg"});
            plots.push_back("sweep_curve.svg");
            ++produced;
        }
        if (fs::exists(root / "trace.csv")) {
            report::Csv tr = report::read_csv((root / "trace.csv").string());
            const int cstep = report::csv_column(tr, "step");
            const int cce = report::csv_column(tr, "ce");
            const int cratio = report::csv_column(tr, "ratio");
            const int cacc = report::csv_column(tr, "val_acc");
            report::Series acc, ratio, ce_curve;
            acc.label = "val accuracy";
            ratio.label = "Dirichlet ratio";
            ce_curve.label = "train CE";
            for (const auto& row : tr.rows) {
                double step = std::stod(row[cstep]);
                acc.x.push_back(step);
                acc.y.push_back(std::stod(row[cacc]));
                ratio.x.push_back(step);
                ratio.y.push_back(std::stod(row[cratio]));
                ce_curve.x.push_back(step);
                ce_curve.y.push_back(std::stod(row[cce]));
            }
            report::PlotOptions popts;
            popts.title = "Training trace";
            popts.xlabel = "step";
            popts.markers = false;
            report::write_file((out / "training_curves.svg").string(),
                               report::svg_line_plot({acc, ratio}, popts));
            popts.title = "Training cross-entropy";
            report::write_file((out / "training_ce.svg").string(),
                               report::svg_line_plot({ce_curve}, popts));
            found.add_row({dir, "trace.csv", "training_curves.svg"});
            plots.push_back("training_curves.svg");
            plots.push_back("training_ce.svg");
            ++produced;
        }
    }
    if (produced == 0)
        throw ArtifactError("report: no known artifacts (embedding.csv, ratios.csv, "
                            "sweep_summary.csv, trace.csv) found in the input directories");
    found.write((out / "report_index.csv").string());
    oc.inputs = dirs;
    oc.outputs = {"report_index.csv"};
    std::sort(plots.begin(), plots.end());
    plots.erase(std::unique(plots.begin(), plots.end()), plots.end());
    oc.outputs.insert(oc.outputs.end(), plots.begin(), plots.end());
    return oc;
}

const std::map<std::string, Runner>& runner_table() {
    static const std::map<std::string, Runner> table = {
        {"gen-data", run_gen_data},
        {"emulate", run_emulate},
        {"fit-basis", run_fit_basis},
        {"extract", run_extract},
        {"spectral-verify", run_spectral_verify},
        {"probe", run_probe},
        {"counterfactual", run_counterfactual},
        {"steer", run_steer},
        {"train", run_train},
        {"sweep", run_sweep},
        {"report", run_report},
    };
    return table;
}

int finalize_run(const std::string& command, const KvMap& cfg, const fs::path& out,
                 CommandOutcome& oc) {
    if (!oc.checks.checks.empty()) {
        oc.checks.to_csv().write((out / "checks.csv").string());
        oc.outputs.push_back("checks.csv");
        oc.checks.print(std::cout);
    }
    report::Manifest m;
    m.command = command;
    m.tool_version = kToolVersion;
    m.config = cfg;
    m.inputs = oc.inputs;
    m.outputs = oc.outputs;
    report::write_manifest((out / "run_manifest.kv").string(), m);
    std::cout << command << ": wrote " << oc.outputs.size() << " artifacts to " << out.string()
              << "\n";
    if (!oc.checks.all_pass()) {
        std::cout << command << ": checks FAILED\n";
        return kExitChecksFailed;
    }
    return kExitOk;
}

int dispatch(const std::string& command, const KvMap& cfg, const fs::path& out) {
    auto it = runner_table().find(command);
    if (it == runner_table().end()) throw ConfigError("unknown command in manifest: " + command);
    fs::create_directories(out);
    CommandOutcome oc = it->second(cfg, out);
    return finalize_run(command, cfg, out, oc);
}

int do_replay(const std::string& manifest_path, std::string out_opt) {
    if (!fs::exists(manifest_path))
        throw ArtifactError("manifest not found: " + manifest_path);
    report::Manifest m = report::read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    const fs::path out = out_opt.empty() ? base / "replay" : fs::path(out_opt);

    std::cout << "replaying " << m.command << " from " << manifest_path << " into "
              << out.string() << "\n";
    int run_rc = dispatch(m.command, m.config, out);

    report::CheckReport checks;
    for (const auto& rel : m.outputs) {
        const fs::path orig = base / rel;
        const fs::path fresh = out / rel;
        if (!fs::exists(orig)) throw ArtifactError("original output missing: " + orig.string());
        if (!fs::exists(fresh)) throw ArtifactError("replay output missing: " + fresh.string());
        const bool same = report::files_identical(orig.string(), fresh.string());
        checks.add("identical:" + rel, same ? 1.0 : 0.0, 1.0, same);
    }
    checks.to_csv().write((out / "replay_report.csv").string());
    checks.print(std::cout);
    if (!checks.all_pass()) {
        std::cout << "replay: outputs DIFFER\n";
        return kExitChecksFailed;
    }
    std::cout << "replay: all " << m.outputs.size() << " outputs byte-identical\n";
    return run_rc == kExitOk ? kExitOk : run_rc;
}

std::string default_out_root() {
    const char* env = std::getenv("COGMAP_OUT");
    return env && *env ? env : "out";
}

// registers --config on a subcommand so flags can come from a key-value file
void enable_config(CLI::App* cmd) {
    cmd->set_config("--config", "", "Read options from a key = value file");
    cmd->allow_config_extras(CLI::config_extras_mode::ignore);
}

struct OptionSpec {
    std::string key;    // config/manifest key
    std::string flag;   // CLI flag name
    std::string help;
    std::string value;  // default, overwritten by parsing
};

// binds one string-typed option per key; values land in spec.value
void add_options(CLI::App* cmd, std::vector<OptionSpec>& specs) {
    for (auto& spec : specs)
        cmd->add_option(spec.flag, spec.value, spec.help)->capture_default_str();
}

KvMap collect(const std::vector<OptionSpec>& specs) {
    KvMap kv;
    for (const auto& spec : specs) kv[spec.key] = spec.value;
    return kv;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cogmap: synthetic 3D scenes, a linear latent emulator, spectral diagnostics, "
                 "steering and regularized training experiments"};
    app.require_subcommand(0, 1);
    app.set_version_flag("--version", kToolVersion);
    app.failure_message(CLI::FailureMessage::help);

    struct Sub {
        CLI::App* cmd = nullptr;
        std::vector<OptionSpec> specs;
        std::string out;
    };
    std::map<std::string, Sub> subs;

    // bind options only once the Sub has its final address in the map
    auto make_sub = [&](const std::string& name, const std::string& desc,
                        std::vector<OptionSpec> specs) {
        Sub& sub = subs[name];
        sub.cmd = app.add_subcommand(name, desc);
        sub.specs = std::move(specs);
        add_options(sub.cmd, sub.specs);
        sub.cmd->add_option("--out", sub.out,
                            "Output directory (default: $COGMAP_OUT/" + name + ")");
        enable_config(sub.cmd);
    };

    make_sub("gen-data", "Generate scenes, trajectories, QA and dataset splits",
             {{"scenes", "--scenes", "Number of scenes", "200"},
              {"traj", "--traj", "Trajectory kind: orbit, free6dof, person_walk", "orbit"},
              {"seed", "--seed", "Generation seed", "0"},
              {"qa_per_scene", "--qa-per-scene", "QA items per scene", "5"},
              {"min_objects", "--min-objects", "Minimum objects per scene", "3"},
              {"max_objects", "--max-objects", "Maximum objects per scene", "8"},
              {"distinct_identities", "--distinct-identities",
               "Forbid repeated (color, shape) pairs", "false"},
              {"train_fraction", "--train-fraction", "Scene-level train split fraction", "0.9"}});

    make_sub("emulate", "Emulate pooled activations for a dataset",
             {{"data", "--data", "Dataset directory from gen-data", ""},
              {"dim", "--dim", "Latent dimension", "256"},
              {"identity_share", "--identity-share", "Identity variance share", "0.12"},
              {"spatial_share", "--spatial-share", "Spatial variance share", "0.001"},
              {"noise_sigma", "--noise-sigma", "Per-activation noise sigma", "0.001"},
              {"kappa", "--kappa", "Pooling coverage threshold", "0.25"},
              {"slot_frames", "--slot-frames", "Frames pooled per slot", "2"},
              {"calibration_scenes", "--calibration-scenes",
               "Scenes used to calibrate the spatial scale", "500"},
              {"mode", "--mode", "Corpus mode: object or projective", "object"},
              {"samples_per_side", "--samples-per-side",
               "Silhouette raster resolution per patch side", "4"},
              {"seed", "--seed", "Emulation seed", "0"}});

    make_sub("fit-basis", "Fit the identity basis from pooled activations",
             {{"data", "--data", "Dataset directory", ""},
              {"activations", "--activations", "activations.jsonl from emulate", ""},
              {"k", "--k", "Basis rank", "23"},
              {"route", "--route", "Basis route: svd or logistic", "svd"},
              {"c_strength", "--c-strength", "Inverse penalty for the logistic route", "0.1"},
              {"max_iterations", "--max-iterations", "Logistic solver iteration cap", "2000"},
              {"drop_tolerance", "--drop-tolerance", "QR rank-drop tolerance", "1e-6"}});

    make_sub("extract", "Residualize, embed and score a corpus against scene geometry",
             {{"data", "--data", "Dataset directory", ""},
              {"activations", "--activations", "activations.jsonl from emulate", ""},
              {"basis", "--basis", "basis.json from fit-basis", ""},
              {"shuffles", "--shuffles", "Permutations for the Dirichlet ratio null", "1000"},
              {"seed", "--seed", "Shuffle seed", "99"}});

    make_sub("spectral-verify", "Run the spectral verification harnesses",
             {{"seed", "--seed", "Harness seed", "7"},
              {"graphs", "--graphs", "Graphs for the minimizer harness", "20"},
              {"graph_size", "--graph-size", "Nodes per graph", "12"},
              {"dim", "--dim", "Feature dimension of the minimizer", "8"},
              {"perturbations", "--perturbations", "Feasible perturbations per graph", "1000"},
              {"kyfan_graphs", "--kyfan-graphs", "Graphs for the trace-bound harness", "10"},
              {"kyfan_frames", "--kyfan-frames", "Random frames per graph", "500"},
              {"cube_samples", "--cube-samples", "Samples on the unit cube", "1500"},
              {"cube_tau", "--cube-tau", "Kernel bandwidth on the cube", "0.2"}});

    make_sub("probe", "Cross-validated probing of a corpus",
             {{"data", "--data", "Dataset directory", ""},
              {"activations", "--activations", "activations.jsonl from emulate", ""},
              {"folds", "--folds", "Scene-level folds", "5"},
              {"alpha", "--alpha", "Ridge strength", "1"},
              {"knn_k", "--knn-k", "Neighbors for identity classification", "5"},
              {"seed", "--seed", "Fold assignment seed", "17"}});

    make_sub("counterfactual", "Counterfactual flip-rate contrast of two readout heads",
             {{"data", "--data", "Dataset directory", ""},
              {"emulator", "--emulator", "emulator.kv from emulate", ""},
              {"sets", "--sets", "Counterfactual sets to build", "40"},
              {"head_scenes", "--head-scenes", "Scenes used to fit the heads", "40"},
              {"alpha", "--alpha", "Ridge strength for the heads", "1"},
              {"readout_noise", "--readout-noise", "Read noise sigma for the heads", "0"},
              {"k", "--k", "Identity basis rank for the residualized head", "23"},
              {"seed", "--seed", "Counterfactual sampling seed", "5"}});

    make_sub("steer", "Steer pooled activations along the probe's pseudo-inverse axis",
             {{"data", "--data", "Dataset directory", ""},
              {"activations", "--activations", "activations.jsonl from emulate", ""},
              {"axis", "--axis", "Steered coordinate: x, y or z", "x"},
              {"alphas", "--alphas", "Comma-separated steering magnitudes",
               "0.15,-0.15,0.3,-0.3"},
              {"trials", "--trials", "Trials per (arm, alpha) cell", "60"},
              {"noise_sigma", "--noise-sigma", "Read noise sigma (0 = noiseless)", "0"},
              {"ridge_alpha", "--ridge-alpha", "Ridge strength for the probe", "1"},
              {"seed", "--seed", "Experiment seed", "3"}});

    auto train_specs = [](bool sweep) {
        std::vector<OptionSpec> specs = {
            {"steps", "--steps", "Optimization steps", "500"},
            {"lr", "--lr", "Learning rate", "0.01"},
            {"momentum", "--momentum", "Momentum coefficient", "0.9"},
            {"seed", "--seed", "Head seed (base seed for sweeps)", "0"},
            {"train_scenes", "--train-scenes", "Training scenes", "48"},
            {"val_scenes", "--val-scenes", "Validation scenes", "160"},
            {"pairs_per_scene", "--pairs-per-scene", "Ordered pairs sampled per scene", "24"},
            {"data_seed", "--data-seed", "Scene/emulator seed", "2024"},
            {"noise_sigma", "--noise-sigma", "Emulator noise sigma", "0.005"},
            {"dim", "--dim", "Emulator dimension", "256"}};
        specs.push_back({"gain", "--gain", "Logit gain of the fixed head", "40"});
        if (sweep) {
            specs.push_back({"lambdas", "--lambdas", "Comma-separated lambda grid", "0,0.3,1,3,9"});
            specs.push_back({"seeds", "--seeds", "Seeds per lambda", "4"});
        } else {
            specs.push_back({"lambda", "--lambda", "Regularization strength", "0"});
        }
        return specs;
    };
    make_sub("train", "Train the toy model at one regularization strength", train_specs(false));
    make_sub("sweep", "Sweep regularization strengths over multiple seeds", train_specs(true));

    // report has two modes: aggregate plots from prior runs, or replay a manifest
    std::vector<std::string> report_inputs;
    std::string replay_manifest;
    std::string report_out;
    CLI::App* report_cmd =
        app.add_subcommand("report", "Aggregate prior outputs into plots, or replay a manifest");
    report_cmd->add_option("--in", report_inputs, "Directories holding prior command outputs");
    report_cmd->add_option("--replay", replay_manifest,
                           "Re-run a run_manifest.kv and compare outputs byte for byte");
    report_cmd->add_option("--out", report_out, "Output directory");
    enable_config(report_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ConfigError& e) {
        (void)app.exit(e);
        return kExitConfig;
    } catch (const CLI::FileError& e) {
        (void)app.exit(e);
        return kExitConfig;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (report_cmd->parsed()) {
            if (!replay_manifest.empty()) return do_replay(replay_manifest, report_out);
            if (report_inputs.empty())
                throw ConfigError("report: pass --in directories or --replay manifest");
            KvMap cfg;
            std::string joined;
            for (const auto& d : report_inputs) {
                if (!joined.empty()) joined += ';';
                joined += d;
            }
            cfg["inputs"] = joined;
            fs::path out = report_out.empty() ? fs::path(default_out_root()) / "report"
                                              : fs::path(report_out);
            return dispatch("report", cfg, out);
        }
        for (auto& [name, sub] : subs) {
            if (!sub.cmd->parsed()) continue;
            KvMap cfg = collect(sub.specs);
            fs::path out =
                sub.out.empty() ? fs::path(default_out_root()) / name : fs::path(sub.out);
            return dispatch(name, cfg, out);
        }
        std::cerr << app.help() << std::endl;
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitConfig;
    } catch (const ArtifactError& e) {
        std::cerr << "missing artifact: " << e.what() << std::endl;
        return kExitMissingInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << std::endl;
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return kExitError;
    }
}
