#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cogmap/projective_coverage.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"

namespace cogmap::emulator {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using scene::Scene;
using scene::Vec3;

/// Linear latent model standing in for a vision-language residual stream:
/// an object's pooled activation is u_id(identity) + S (x - center) + noise.
/// The per-identity vectors share one strong background direction (the bulk
/// of the stream's energy) and spread inside a fixed 23-dimensional subspace,
/// so their span has exactly the rank the downstream basis expects.
struct EmulatorParams {
    int d = 256;
    VectorXd v_bg;          // unit background direction
    double bulk = 0.0;      // coefficient on v_bg shared by every object
    MatrixXd Q_id;          // d x 23, orthonormal; identity-difference subspace
    MatrixXd C;             // 23 x 24 per-identity coefficients
    MatrixXd S;             // d x 3 spatial map (orthogonal columns, common scale)
    Vec3 spatial_center = Vec3(0, 0, 0.3);
    double noise_sigma = 0.001;
    double kappa = 0.25;    // pooling coverage threshold
    int slot_frames = 2;    // frames per temporal slot
    std::string layer_tag = "emu_mid";
    // calibration record
    double target_identity_share = 0.12;
    double target_spatial_share = 0.001;

    VectorXd identity_vector(int identity) const;  // u_id(o), includes the bulk
    VectorXd background() const { return bulk * v_bg; }
    MatrixXd identity_span() const;                // d x 24: [v_bg | Q_id]
    VectorXd object_latent(const scene::SceneObject& obj, Rng& rng) const;
};

struct EmulatorConfig {
    int d = 256;
    double identity_share = 0.12;
    double spatial_share = 0.001;
    double noise_sigma = 0.001;
    double kappa = 0.25;
    int slot_frames = 2;
    std::string layer_tag = "emu_mid";
    int calibration_scenes = 500;
};

// Calibrates component scales so the realized Frobenius-energy fractions of
// the planted identity-difference and spatial subspaces match the configured
// targets; position moments come from a calibration sample drawn with
// scene_cfg. The total per-object second moment is normalized to 1.
EmulatorParams make_emulator_params(const EmulatorConfig& cfg,
                                    const scene::SceneGenConfig& scene_cfg, Rng& rng);

struct ActivationMatrix {
    std::string scene_id;
    MatrixXd H;  // m x d, rows in scene object order
    std::vector<std::string> object_names;
    std::vector<bool> valid;  // false when an object never met the pooling threshold
    std::string layer_tag;

    int m() const { return static_cast<int>(H.rows()); }
    int d() const { return static_cast<int>(H.cols()); }
};

// object-level emulation (the pooled model directly)
ActivationMatrix emulate_scene_activations(const EmulatorParams& params, const Scene& scene,
                                           Rng& rng);

// patch-level emulation over temporal slots: each patch is the coverage
// blend of owning objects' latents plus the background
struct PatchActivations {
    int slots = 0;
    int patches = 0;
    std::vector<MatrixXd> slot_data;      // per slot: patches x d
    std::vector<MatrixXd> slot_coverage;  // per slot: patches x m
};

PatchActivations emulate_patch_activations(const EmulatorParams& params, const Scene& scene,
                                           const coverage::CoverageGrid& cov, Rng& rng);

// coverage-threshold pooling: per slot, patches with coverage >= kappa are
// averaged with coverage weights; slot vectors are then averaged over slots
// that had at least one qualifying patch
ActivationMatrix pool_object_tokens(const PatchActivations& pa, const Scene& scene,
                                    const EmulatorParams& params);

enum class CorpusMode {
    object_level,  // rows directly from the pooled model
    projective,    // through silhouettes, coverage and pooling
};

struct CorpusActivations {
    std::vector<ActivationMatrix> per_scene;  // parallel to dataset.scenes
};

// Deterministic per scene: each scene uses a child stream of `seed` keyed by
// its index, so corpus subsets reproduce bit-identical rows.
CorpusActivations build_corpus_activations(const scene::Dataset& ds, const EmulatorParams& params,
                                           CorpusMode mode, uint64_t seed,
                                           int samples_per_side = 4);

struct VarianceShares {
    double identity = 0.0;
    double spatial = 0.0;
};

// realized Frobenius-energy fractions of the planted subspaces
VarianceShares realized_variance_shares(const EmulatorParams& params,
                                        const CorpusActivations& corpus);

// activation dump round trip
std::string activations_to_json(const ActivationMatrix& am);
ActivationMatrix activations_from_json(const std::string& text);

} // namespace cogmap::emulator
