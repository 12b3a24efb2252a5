#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "cogmap/extraction.hpp"
#include "cogmap/latent_emulator.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"
#include "cogmap/stats.hpp"

namespace cogmap::probes {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using emulator::CorpusActivations;

enum class TargetNorm { per_scene_minmax, none };

struct RidgeProbe {
    MatrixXd weights;  // t x d, one row per target coordinate
    double alpha = 1.0;
    TargetNorm norm = TargetNorm::per_scene_minmax;
    // per-scene normalization parameters, indexed by dataset scene position
    std::vector<Vector3d> scene_min;
    std::vector<Vector3d> scene_max;

    Vector3d predict(const VectorXd& h) const { return weights * h; }
};

// per-scene min-max mapped to [-1,1]; a coordinate constant within a scene
// maps to 0
MatrixXd normalize_targets(const scene::Dataset& ds, const extraction::StackedCorpus& stacked,
                           std::vector<Vector3d>& mins_out, std::vector<Vector3d>& maxs_out);

// closed-form solve of (H^T H + alpha I) W^T = H^T targets
RidgeProbe ridge_fit(const MatrixXd& H, const MatrixXd& targets, double alpha);

// probe on per-scene-normalized world coordinates, fitted over valid rows
RidgeProbe fit_coordinate_probe(const scene::Dataset& ds, const CorpusActivations& corpus,
                                double alpha = 1.0,
                                TargetNorm norm = TargetNorm::per_scene_minmax);

double knn_classify(const MatrixXd& train, const std::vector<int>& train_labels,
                    const MatrixXd& test, const std::vector<int>& test_labels, int k = 5);

struct MetricSummary {
    double mean = 0.0;
    double two_se = 0.0;
    std::vector<double> per_fold;
};

struct ProbeSuiteReport {
    MetricSummary color_acc;
    MetricSummary shape_acc;
    MetricSummary x_r2;
    MetricSummary z_r2;
    MetricSummary rsa_rho;
    int folds = 0;
};

// scene-level cross-validation: no scene straddles the train/test split
ProbeSuiteReport cross_validated_probe_suite(const scene::Dataset& ds,
                                             const CorpusActivations& corpus, int folds = 5,
                                             uint64_t seed = 17, double alpha = 1.0, int knn_k = 5);

enum class Axis { x = 0, y = 1, z = 2 };

struct SteeringPair {
    VectorXd v_axis;
    VectorXd v_null;
    Axis target_axis = Axis::x;
};

// v_axis: the target row of the probe's pseudo-inverse; v_null: a Gaussian
// vector projected onto the probe's null space, length-matched to v_axis
SteeringPair build_steering_pair(const RidgeProbe& probe, Axis target_axis, Rng& rng);

struct SteeringCell {
    std::string arm;  // "axis" or "null"
    double alpha = 0.0;
    Vector3d mean_delta = Vector3d::Zero();
    int sign_correct = 0;
    int trials = 0;
    std::vector<double> deltas_target;  // per-trial delta on the target coordinate
};

struct SteeringReport {
    std::vector<SteeringCell> cells;
    int axis_sign_correct = 0;
    int null_sign_correct = 0;
    int trials_per_arm = 0;
    std::vector<stats::WelchResult> welch_per_alpha;  // axis vs null at each alpha
    double noise_sigma = 0.0;
};

// injects alpha * v into randomly chosen valid object activations and
// re-reads the probe; read noise (fresh per read) emulates the matched-noise
// condition when noise_sigma > 0
SteeringReport steering_experiment(const scene::Dataset& ds, const CorpusActivations& corpus,
                                   const RidgeProbe& probe, const SteeringPair& pair,
                                   const std::vector<double>& alphas, int trials_per_cell,
                                   double noise_sigma, Rng& rng);

// linear head that maps pooled activations to predicted world coordinates,
// then answers questions with the same geometry as the ground-truth answerer
struct CoordinateHead {
    MatrixXd weights;  // 3 x d
    bool residualized = false;
    MatrixXd projector;  // applied before weights when residualized
};

CoordinateHead fit_coordinate_head(const scene::Dataset& ds, const CorpusActivations& corpus,
                                   double alpha, const extraction::IdentityBasis* basis);

struct CounterfactualSet {
    scene::Scene original;
    scene::Trajectory trajectory;
    std::vector<scene::Scene> variants;
    std::vector<std::string> variant_names;  // "color_swap", "position_swap"
    std::vector<scene::QAItem> questions;    // bound to original object indices
};

CounterfactualSet make_counterfactual_set(const scene::Scene& sc, const scene::Trajectory& traj,
                                          const std::vector<scene::QAItem>& questions, Rng& rng);

// deterministic answerer: variant scene + question -> answer string
using ReadoutFn = std::function<std::string(const scene::Scene&, const scene::Trajectory&,
                                            const scene::QAItem&)>;

ReadoutFn make_head_readout(const CoordinateHead& head, const emulator::EmulatorParams& params,
                            uint64_t seed);

struct FlipRateReport {
    // keyed by (variant, question kind)
    struct Cell {
        std::string variant;
        scene::QAKind kind = scene::QAKind::relative_position;
        int flips = 0;
        int total = 0;
        double rate() const { return total > 0 ? static_cast<double>(flips) / total : 0.0; }
    };
    std::vector<Cell> cells;

    const Cell* find(const std::string& variant, scene::QAKind kind) const;
};

FlipRateReport flip_rate_eval(const ReadoutFn& readout,
                              const std::vector<CounterfactualSet>& sets);

} // namespace cogmap::probes
