#include "cogmap/latent_emulator.hpp"

#include <Eigen/SVD>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cogmap::emulator {

using json = nlohmann::json;

VectorXd EmulatorParams::identity_vector(int identity) const {
    if (identity < 0 || identity >= static_cast<int>(C.cols()))
        throw std::out_of_range("identity_vector: bad identity index");
    return bulk * v_bg + Q_id * C.col(identity);
}

MatrixXd EmulatorParams::identity_span() const {
    MatrixXd B(d, 1 + Q_id.cols());
    B.col(0) = v_bg;
    B.rightCols(Q_id.cols()) = Q_id;
    return B;
}

VectorXd EmulatorParams::object_latent(const scene::SceneObject& obj, Rng& rng) const {
    const int id = scene::identity_index(obj.color, obj.shape);
    VectorXd h = identity_vector(id) + S * (obj.world_position - spatial_center);
    if (noise_sigma > 0.0) {
        for (int j = 0; j < d; ++j) h[j] += noise_sigma * rng.normal();
    }
    return h;
}

namespace {

MatrixXd orthonormal_frame(int d, int cols, Rng& rng) {
    MatrixXd G(d, cols);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < cols; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixXd> qr(G);
    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(d, cols);
    // stabilize signs against the QR's R diagonal
    MatrixXd R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j)
        if (R(j, j) < 0) Q.col(j) = -Q.col(j);
    return Q;
}

} // namespace

// fraction of the identity-difference energy assigned to the color-shape
// interaction; the rest splits between the additive factor effects
constexpr double kInteractionFraction = 0.0;

EmulatorParams make_emulator_params(const EmulatorConfig& cfg,
                                    const scene::SceneGenConfig& scene_cfg, Rng& rng) {
    const int d = cfg.d;
    const int n_id = scene::kNumIdentities;        // 24
    const int id_dim = n_id - 1;                   // 23
    if (d < id_dim + 4) throw std::invalid_argument("make_emulator_params: d too small");

    EmulatorParams p;
    p.d = d;
    p.noise_sigma = cfg.noise_sigma;
    p.kappa = cfg.kappa;
    p.slot_frames = cfg.slot_frames;
    p.layer_tag = cfg.layer_tag;
    p.target_identity_share = cfg.identity_share;
    p.target_spatial_share = cfg.spatial_share;

    // one orthonormal frame: background dir, identity subspace, spatial map
    MatrixXd frame = orthonormal_frame(d, 1 + id_dim + 3, rng);
    p.v_bg = frame.col(0);
    p.Q_id = frame.middleCols(1, id_dim);
    MatrixXd S_dirs = frame.rightCols(3);

    // identity coefficients: additive color and shape effects plus a small
    // double-centered interaction term. Per-factor probes recover the factor
    // spans, while the interaction keeps the full matrix at rank K - 1.
    const int n_colors = scene::kNumColors;
    const int n_shapes = scene::kNumShapes;
    MatrixXd A(id_dim, n_colors), B(id_dim, n_shapes), G(id_dim, n_id);
    for (int i = 0; i < id_dim; ++i) {
        for (int j = 0; j < n_colors; ++j) A(i, j) = rng.normal();
        for (int j = 0; j < n_shapes; ++j) B(i, j) = rng.normal();
        for (int j = 0; j < n_id; ++j) G(i, j) = rng.normal();
    }
    A.colwise() -= A.rowwise().mean().eval();
    B.colwise() -= B.rowwise().mean().eval();

    // orthogonalize the shape span against the color span, and later the
    // interaction against both, so each per-factor probe sees the other
    // components as orthogonal within-class noise
    {
        Eigen::BDCSVD<MatrixXd> asvd(A, Eigen::ComputeThinU);
        int ra = 0;
        for (int i = 0; i < asvd.singularValues().size(); ++i)
            if (asvd.singularValues()[i] > asvd.singularValues()[0] * 1e-12) ++ra;
        MatrixXd Ua = asvd.matrixU().leftCols(ra);
        B -= Ua * (Ua.transpose() * B);
    }

    MatrixXd additive(id_dim, n_id);
    for (int c = 0; c < n_colors; ++c)
        for (int s = 0; s < n_shapes; ++s)
            additive.col(c * n_shapes + s) = A.col(c) + B.col(s);

    // remove both factor marginals from the interaction block
    for (int c = 0; c < n_colors; ++c) {
        VectorXd mean_c = VectorXd::Zero(id_dim);
        for (int s = 0; s < n_shapes; ++s) mean_c += G.col(c * n_shapes + s);
        mean_c /= static_cast<double>(n_shapes);
        for (int s = 0; s < n_shapes; ++s) G.col(c * n_shapes + s) -= mean_c;
    }
    for (int s = 0; s < n_shapes; ++s) {
        VectorXd mean_s = VectorXd::Zero(id_dim);
        for (int c = 0; c < n_colors; ++c) mean_s += G.col(c * n_shapes + s);
        mean_s /= static_cast<double>(n_colors);
        for (int c = 0; c < n_colors; ++c) G.col(c * n_shapes + s) -= mean_s;
    }

    {
        Eigen::BDCSVD<MatrixXd> absvd(additive, Eigen::ComputeThinU);
        int rab = 0;
        for (int i = 0; i < absvd.singularValues().size(); ++i)
            if (absvd.singularValues()[i] > absvd.singularValues()[0] * 1e-12) ++rab;
        MatrixXd Uab = absvd.matrixU().leftCols(rab);
        G -= Uab * (Uab.transpose() * G);
    }

    const double add_sq = additive.colwise().squaredNorm().mean();
    const double int_sq = G.colwise().squaredNorm().mean();
    if (add_sq <= 0.0 || int_sq <= 0.0)
        throw std::runtime_error("make_emulator_params: degenerate coefficients");
    MatrixXd C = additive * std::sqrt((1.0 - kInteractionFraction) / add_sq) +
                 G * std::sqrt(kInteractionFraction / int_sq);
    const double mean_sq = C.colwise().squaredNorm().mean();
    if (mean_sq <= 0.0) throw std::runtime_error("make_emulator_params: degenerate coefficients");
    C *= std::sqrt(cfg.identity_share / mean_sq);
    p.C = C;

    // spatial scale from the empirical second moment of centered positions
    double pos_sq_sum = 0.0;
    long pos_count = 0;
    for (int s = 0; s < cfg.calibration_scenes; ++s) {
        Rng child = rng.child(0x9e11ULL + static_cast<uint64_t>(s));
        scene::Scene sc = scene::sample_scene(scene_cfg, child);
        for (const auto& obj : sc.objects) {
            pos_sq_sum += (obj.world_position - p.spatial_center).squaredNorm();
            ++pos_count;
        }
    }
    if (pos_count == 0) throw std::runtime_error("make_emulator_params: empty calibration sample");
    const double pos_second_moment = pos_sq_sum / static_cast<double>(pos_count);
    const double b = std::sqrt(cfg.spatial_share / pos_second_moment);
    p.S = S_dirs * b;

    // remaining energy goes to the shared background direction so the total
    // per-object second moment is 1
    const double noise_energy = static_cast<double>(d) * cfg.noise_sigma * cfg.noise_sigma;
    const double bulk_sq = 1.0 - cfg.identity_share - cfg.spatial_share - noise_energy;
    if (bulk_sq <= 0.0)
        throw std::invalid_argument("make_emulator_params: shares and noise exceed unit energy");
    p.bulk = std::sqrt(bulk_sq);
    return p;
}

ActivationMatrix emulate_scene_activations(const EmulatorParams& params, const Scene& scene,
                                           Rng& rng) {
    ActivationMatrix am;
    am.scene_id = scene.scene_id;
    am.layer_tag = params.layer_tag;
    const int m = static_cast<int>(scene.objects.size());
    am.H.resize(m, params.d);
    am.object_names.reserve(m);
    am.valid.assign(m, true);
    for (int i = 0; i < m; ++i) {
        am.H.row(i) = params.object_latent(scene.objects[i], rng).transpose();
        am.object_names.push_back(scene.objects[i].name);
    }
    return am;
}

PatchActivations emulate_patch_activations(const EmulatorParams& params, const Scene& scene,
                                           const coverage::CoverageGrid& cov, Rng& rng) {
    const int m = static_cast<int>(scene.objects.size());
    const int frames = static_cast<int>(cov.frames.size());
    if (frames == 0) throw std::invalid_argument("emulate_patch_activations: no frames");
    const int patches = static_cast<int>(cov.frames[0].rows());
    const int sf = std::max(1, params.slot_frames);
    const int slots = (frames + sf - 1) / sf;

    // per-object latents are fixed for the scene; per-patch noise is fresh
    MatrixXd latents(m, params.d);
    for (int i = 0; i < m; ++i)
        latents.row(i) = params.object_latent(scene.objects[i], rng).transpose();
    const VectorXd bg = params.background();

    PatchActivations pa;
    pa.slots = slots;
    pa.patches = patches;
    pa.slot_data.reserve(slots);
    pa.slot_coverage.reserve(slots);
    for (int s = 0; s < slots; ++s) {
        const int f0 = s * sf;
        const int f1 = std::min(frames, f0 + sf);
        MatrixXd cov_avg = MatrixXd::Zero(patches, m);
        for (int f = f0; f < f1; ++f) cov_avg += cov.frames[f];
        cov_avg /= static_cast<double>(f1 - f0);

        MatrixXd data(patches, params.d);
        for (int pidx = 0; pidx < patches; ++pidx) {
            double total = cov_avg.row(pidx).sum();
            if (total > 1.0) total = 1.0;
            VectorXd h = (1.0 - total) * bg;
            for (int i = 0; i < m; ++i) {
                const double c = cov_avg(pidx, i);
                if (c > 0.0) h += c * latents.row(i).transpose();
            }
            if (params.noise_sigma > 0.0)
                for (int j = 0; j < params.d; ++j) h[j] += params.noise_sigma * rng.normal();
            data.row(pidx) = h.transpose();
        }
        pa.slot_data.push_back(std::move(data));
        pa.slot_coverage.push_back(std::move(cov_avg));
    }
    return pa;
}

ActivationMatrix pool_object_tokens(const PatchActivations& pa, const Scene& scene,
                                    const EmulatorParams& params) {
    const int m = static_cast<int>(scene.objects.size());
    ActivationMatrix am;
    am.scene_id = scene.scene_id;
    am.layer_tag = params.layer_tag;
    am.H = MatrixXd::Zero(m, params.d);
    am.valid.assign(m, false);
    am.object_names.reserve(m);
    for (const auto& obj : scene.objects) am.object_names.push_back(obj.name);

    for (int i = 0; i < m; ++i) {
        VectorXd acc = VectorXd::Zero(params.d);
        int used_slots = 0;
        for (int s = 0; s < pa.slots; ++s) {
            const MatrixXd& cov = pa.slot_coverage[s];
            const MatrixXd& data = pa.slot_data[s];
            VectorXd slot_vec = VectorXd::Zero(params.d);
            double wsum = 0.0;
            for (int pidx = 0; pidx < pa.patches; ++pidx) {
                const double c = cov(pidx, i);
                if (c >= params.kappa) {
                    slot_vec += c * data.row(pidx).transpose();
                    wsum += c;
                }
            }
            if (wsum > 0.0) {
                acc += slot_vec / wsum;
                ++used_slots;
            }
        }
        if (used_slots > 0) {
            am.H.row(i) = (acc / static_cast<double>(used_slots)).transpose();
            am.valid[i] = true;
        }
    }
    return am;
}

CorpusActivations build_corpus_activations(const scene::Dataset& ds, const EmulatorParams& params,
                                           CorpusMode mode, uint64_t seed,
                                           int samples_per_side) {
    Rng base(seed);
    CorpusActivations corpus;
    corpus.per_scene.reserve(ds.scenes.size());
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        Rng child = base.child(static_cast<uint64_t>(i));
        if (mode == CorpusMode::object_level) {
            corpus.per_scene.push_back(
                emulate_scene_activations(params, ds.scenes[i], child));
        } else {
            if (i >= ds.trajectories.size())
                throw std::invalid_argument("build_corpus_activations: missing trajectory");
            coverage::CoverageGrid cov = coverage::trajectory_coverage(
                ds.scenes[i], ds.trajectories[i], 16, 16, samples_per_side);
            PatchActivations pa = emulate_patch_activations(params, ds.scenes[i], cov, child);
            corpus.per_scene.push_back(pool_object_tokens(pa, ds.scenes[i], params));
        }
    }
    return corpus;
}

VarianceShares realized_variance_shares(const EmulatorParams& params,
                                        const CorpusActivations& corpus) {
    double total = 0.0, id_part = 0.0, sp_part = 0.0;
    long rows = 0;
    // spatial directions, unit-normalized
    MatrixXd S_unit = params.S;
    for (int j = 0; j < S_unit.cols(); ++j) S_unit.col(j).normalize();
    for (const auto& am : corpus.per_scene) {
        for (int i = 0; i < am.m(); ++i) {
            if (!am.valid[i]) continue;
            const VectorXd h = am.H.row(i).transpose();
            total += h.squaredNorm();
            id_part += (params.Q_id.transpose() * h).squaredNorm();
            sp_part += (S_unit.transpose() * h).squaredNorm();
            ++rows;
        }
    }
    if (rows == 0 || total <= 0.0) return {};
    return {id_part / total, sp_part / total};
}

std::string activations_to_json(const ActivationMatrix& am) {
    json j;
    j["scene_id"] = am.scene_id;
    j["layer_tag"] = am.layer_tag;
    j["object_names"] = am.object_names;
    json valid = json::array();
    for (bool v : am.valid) valid.push_back(v);
    j["valid"] = valid;
    j["rows"] = am.m();
    j["cols"] = am.d();
    json data = json::array();
    for (int i = 0; i < am.m(); ++i) {
        json row = json::array();
        for (int c = 0; c < am.d(); ++c) row.push_back(am.H(i, c));
        data.push_back(std::move(row));
    }
    j["data"] = std::move(data);
    return j.dump();
}

ActivationMatrix activations_from_json(const std::string& text) {
    json j = json::parse(text);
    ActivationMatrix am;
    am.scene_id = j.at("scene_id").get<std::string>();
    am.layer_tag = j.at("layer_tag").get<std::string>();
    am.object_names = j.at("object_names").get<std::vector<std::string>>();
    for (const auto& v : j.at("valid")) am.valid.push_back(v.get<bool>());
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    am.H.resize(rows, cols);
    const auto& data = j.at("data");
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) am.H(i, c) = data.at(i).at(c).get<double>();
    return am;
}

} // namespace cogmap::emulator
