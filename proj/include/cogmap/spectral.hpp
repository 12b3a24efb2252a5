#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "cogmap/rng.hpp"

namespace cogmap::spectral {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// condensed pairwise Euclidean distances of the rows of X (i < j order)
std::vector<double> pairwise_distances(const MatrixXd& X);

// half the median pairwise distance; errors when points coincide
double auto_tau(const MatrixXd& X);

struct KernelGraph {
    MatrixXd W;          // symmetric, zero diagonal
    VectorXd degree;
    MatrixXd laplacian;  // D - W
    double tau = 0.0;
};

// W_ij = exp(-||x_i - x_j||^2 / (2 tau^2)) for i != j.
// tau <= 0 requests the auto rule (half median pairwise distance).
KernelGraph gaussian_kernel_graph(const MatrixXd& X, double tau = 0.0);

// tr(H^T L H); equals 1/2 sum_ij W_ij ||h_i - h_j||^2
double dirichlet_energy(const MatrixXd& H, const MatrixXd& laplacian);

// independent route: explicit pairwise accumulation over W
double dirichlet_energy_pairwise(const MatrixXd& H, const MatrixXd& W);

struct RatioResult {
    double value = 0.0;
    double energy = 0.0;
    double null_mean = 0.0;
    bool degenerate = false;  // all feature rows identical
};

// observed energy over the mean energy of row-shuffled copies
RatioResult dirichlet_ratio(const MatrixXd& H, const KernelGraph& g, int n_shuffles, Rng& rng);

// sum_ij W_ij ||h_i-h_j||^2 / (sum_ij ||h_i-h_j||^2 + eps), ordered pairs
double normalized_dirichlet_ratio(const MatrixXd& H, const MatrixXd& W, double eps = 1e-8);

struct EigenDecomposition {
    VectorXd eigenvalues;   // ascending
    MatrixXd eigenvectors;  // orthonormal columns, sign fixed: the entry of
                            // largest magnitude (first on ties) is positive
};

// dense symmetric eigendecomposition; errors on non-symmetric input
EigenDecomposition symmetric_eig(const MatrixXd& A, double sym_tol = 1e-10);

struct Minimizer {
    MatrixXd H;               // m x d
    double energy = 0.0;      // sum_k eps_k^2 lambda_k
    VectorXd eigenvalues;     // lambda_1..lambda_s used
    MatrixXd eigenvectors;    // z^(1)..z^(s)
};

// H* = sum_k eps_k z^(k) v_k^T with canonical right vectors v_k = e_k.
// epsilons must be strictly descending and positive; d >= len(epsilons).
Minimizer construct_dirichlet_minimizer(const MatrixXd& laplacian,
                                        const std::vector<double>& epsilons, int d);

struct MinimizerCheckReport {
    int graphs = 0;
    int perturbations_per_graph = 0;
    double max_energy_rel_err = 0.0;      // |E(H*) - sum eps_k^2 lambda_k| relative
    double min_abs_cosine = 1.0;          // centered PCs vs z^(2)..z^(s)
    double min_perturbation_slack = 0.0;  // min over feasible perturbations of E(P) - E(H*)
    int violations = 0;                   // perturbations beating E(H*) - tol
    int clamped_draws = 0;                // draws pushed back onto the feasible set
};

// Random point clouds, kernel graphs at auto bandwidth, constructed
// minimizers. Each perturbation is projected onto the feasible set
// sigma_k >= eps_k by clamping its singular values, then the constraint is
// re-checked on a fresh decomposition before its energy counts.
MinimizerCheckReport verify_minimizer_optimality(int n_graphs, int m,
                                                 const std::vector<double>& epsilons, int d,
                                                 int n_perturbations, Rng& rng,
                                                 double tol = 1e-10);

// random orthonormal m x s frame (QR of a Gaussian draw)
MatrixXd random_orthonormal(int m, int s, Rng& rng);

// cosines of the canonical angles between span(A) and span(B), descending;
// inputs need not be orthonormal (orthonormalized internally)
VectorXd principal_cosines_of(const MatrixXd& A, const MatrixXd& B);

struct KyFanReport {
    double bound = 0.0;          // sum_k w_k lambda_k
    double min_value = 0.0;      // smallest observed frame value
    double min_slack = 0.0;      // min_value - bound
    int violations = 0;          // frames below bound - tol
    double eigenframe_gap = 0.0; // |value at eigenvector frame - bound|
    bool weights_tied = false;   // equal adjacent weights: minimizer not unique
};

// weights must be positive and non-increasing
KyFanReport verify_kyfan(const MatrixXd& laplacian, const std::vector<double>& weights,
                         int n_frames, Rng& rng, double tol = 1e-10);

struct CubeCheckReport {
    VectorXd lambda;                  // first four eigenvalues
    double lambda_ratio_10 = 0.0;     // |lambda_1| / lambda_2
    double triple_spread = 0.0;       // (max-min)/mean over lambda_2..4
    Eigen::Vector3d principal_cosines = Eigen::Vector3d::Zero();
    double mean_cosine = 0.0;
    Eigen::Vector3d per_axis_spearman = Eigen::Vector3d::Zero();
};

// samples m points uniform on [0,1]^3, builds the kernel graph at fixed tau,
// and compares the first nontrivial eigenvectors against cos(pi x), cos(pi y),
// cos(pi z) sampled at the same points
CubeCheckReport cube_eigenfunction_check(int m, double tau, Rng& rng);

} // namespace cogmap::spectral
