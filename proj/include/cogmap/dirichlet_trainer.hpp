#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cogmap/extraction.hpp"
#include "cogmap/latent_emulator.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"

namespace cogmap::trainer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// complete-graph Laplacian m*I - 11^T, realizing sum_ij ||h_i-h_j||^2
// as 2 tr(H^T L_K H)
MatrixXd complete_graph_laplacian(int m);

// gradient of  2 tr(H^T L H) / (2 tr(H^T L_K H) + eps)  with respect to H
MatrixXd dirichlet_ratio_grad(const MatrixXd& H, const MatrixXd& laplacian,
                              const MatrixXd& laplacian_complete, double eps = 1e-8);

// the ratio itself in the trace form used by the gradient
double dirichlet_ratio_value(const MatrixXd& H, const MatrixXd& laplacian,
                             const MatrixXd& laplacian_complete, double eps = 1e-8);

/*
 * Toy trainable model: a dense linear re-mapper theta on emulated pooled
 * activations, read by a fixed linear head. The task is pairwise world-x
 * order prediction, so spatial accuracy is exact-match on held-out pairs.
 * theta = I leaves the emulator's activations untouched.
 */
struct PairBatch {
    // one scene's worth of comparisons
    MatrixXd H;                         // m x d pooled activations
    MatrixXd laplacian;                 // scene kernel-graph Laplacian
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> labels;            // 1 if x_first < x_second
};

struct ToyModel {
    MatrixXd theta;      // d x d, initialized to identity
    VectorXd head;       // fixed read direction inside the residual span
    double gain = 40.0;  // logit scale
    MatrixXd projector;  // P_perp of the residualization basis
};

struct LossBreakdown {
    double ce = 0.0;
    double dirichlet_ratio = 0.0;  // mean of per-scene ratios
    double total = 0.0;
    std::vector<double> per_scene;
};

LossBreakdown total_loss(const ToyModel& model, const std::vector<PairBatch>& batch,
                         double lambda, MatrixXd* grad_theta = nullptr);

double spatial_accuracy(const ToyModel& model, const std::vector<PairBatch>& batch);

struct TrainConfig {
    double lambda = 0.0;
    int steps = 500;
    double lr = 1e-2;
    double momentum = 0.9;
    uint64_t seed = 0;
    double divergence_factor = 10.0;
};

struct StepRecord {
    int step = 0;
    double ce = 0.0;
    double ratio = 0.0;
    double total = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    ToyModel model;
    std::vector<StepRecord> trace;
    bool aborted = false;  // divergence detected
    double final_val_acc = 0.0;
    double final_ratio = 0.0;
};

// deterministic per config.seed; the seed only affects the head direction
// draw when the model is built, not the fixed batches
TrainResult train(ToyModel model, const std::vector<PairBatch>& train_batch,
                  const std::vector<PairBatch>& val_batch, const TrainConfig& cfg);

struct SweepCell {
    double lambda = 0.0;
    uint64_t seed = 0;
    double final_val_acc = 0.0;
    double final_ratio = 0.0;
    bool aborted = false;
};

struct SweepReport {
    std::vector<SweepCell> cells;
    std::vector<double> lambdas;
    std::vector<double> mean_acc;    // per lambda
    std::vector<double> two_se_acc;  // per lambda
    double best_nonzero_mean = 0.0;
    double lambda0_mean = 0.0;
    double largest_lambda_mean = 0.0;
    bool rise_detected = false;  // best nonzero beats lambda = 0
    bool fall_detected = false;  // largest lambda falls below lambda = 0
};

// experiment harness bundling data generation, emulation and residualization
struct SweepSetup {
    std::vector<PairBatch> train_batch;
    std::vector<PairBatch> val_batch;
    MatrixXd projector;
    int d = 0;
};

struct SweepDataConfig {
    int train_scenes = 48;
    int val_scenes = 160;
    int pairs_per_scene = 24;
    uint64_t data_seed = 2024;
    double noise_sigma = 0.005;
    int emulator_dim = 256;
};

SweepSetup build_sweep_setup(const SweepDataConfig& cfg);

ToyModel make_toy_model(const SweepSetup& setup, uint64_t seed, double gain = 40.0);

SweepReport lambda_sweep(const SweepSetup& setup, const std::vector<double>& lambdas,
                         int n_seeds, const TrainConfig& base_cfg, double gain = 40.0);

struct SampleComplexityReport {
    std::vector<int> n_grid;
    std::vector<double> err_projected;
    std::vector<double> err_full;
    std::vector<double> ratio;            // err_full / err_projected
    std::vector<bool> ratio_valid;        // false where N < d
    double projected_scaling_slope = 0.0; // log-log slope of err_projected vs N
    double top_n_normalized_err = 0.0;    // err_projected * N / sigma^2 at largest N
};

// projected OLS (onto the known 3-dim support of w*) vs full OLS on d
// features, under y = Xw* + sigma*xi with isotropic Gaussian X
SampleComplexityReport sample_complexity_experiment(int d, const std::vector<int>& n_grid,
                                                    double sigma_xi, int n_reps, Rng& rng);

struct RiskSlopeReport {
    std::vector<double> lambdas;  // includes 0
    std::vector<double> risks;    // validation CE of the spatial task
    double slope = 0.0;           // fitted d risk / d lambda
    double curvature = 0.0;       // quadratic-term coefficient
    double linear_r2 = 0.0;
    bool slope_negative = false;
};

// re-trains from the converged lambda = 0 solution at each small lambda and
// fits the first-order risk response
RiskSlopeReport risk_decomposition_probe(const SweepSetup& setup, const ToyModel& converged,
                                         const std::vector<double>& lambda_small_grid,
                                         const TrainConfig& base_cfg);

} // namespace cogmap::trainer
