#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "cogmap/latent_emulator.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"

namespace cogmap::extraction {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;
using emulator::ActivationMatrix;
using emulator::CorpusActivations;

/*
 * Identity-direction extraction and residualization.
 *
 * Two independent routes produce the identity subspace basis: averaging
 * per-identity prototypes across scenes and taking their top singular
 * directions, or fitting per-factor multinomial logistic probes and
 * orthonormalizing the stacked class directions. Downstream analysis
 * (projection, PCA readout, RSA) treats both identically.
 */

struct PrototypeTable {
    std::vector<int> identities;    // identity indices present, ascending
    MatrixXd prototypes;            // K x d, row order matches `identities`
    std::vector<int> scene_counts;  // scenes containing each identity
};

PrototypeTable cross_scene_prototypes(const scene::Dataset& ds, const CorpusActivations& corpus);

enum class BasisProvenance { svd_prototypes, logistic_qr };

struct IdentityBasis {
    MatrixXd W;  // d x k, orthonormal columns
    int k = 0;
    BasisProvenance provenance = BasisProvenance::svd_prototypes;
    VectorXd singular_values;   // svd route: spectrum of the prototype matrix
    bool rank_warning = false;  // requested k exceeded the numerical rank
    // logistic route: standardization parameters of the fitting corpus
    VectorXd feature_mean;
    VectorXd feature_scale;

    MatrixXd projector_out() const;  // I - W W^T
};

IdentityBasis identity_basis_svd(const PrototypeTable& table, int k);

struct LogisticQrOptions {
    double c_strength = 0.1;  // multiplier on the summed cross-entropy term
    int max_iterations = 2000;
    double grad_tolerance = 1e-8;
    double drop_tolerance = 1e-6;  // relative |R_kk| cutoff in the final QR
};

IdentityBasis identity_basis_logistic_qr(const scene::Dataset& ds,
                                         const CorpusActivations& corpus,
                                         const LogisticQrOptions& opts = {});

// per-class weight rows of one regularized multinomial logistic fit
MatrixXd multinomial_logistic_directions(const MatrixXd& X, const std::vector<int>& labels,
                                         int n_classes, const LogisticQrOptions& opts);

ActivationMatrix residualize(const ActivationMatrix& am, const IdentityBasis& basis);
CorpusActivations residualize_corpus(const CorpusActivations& corpus, const IdentityBasis& basis);

struct PcaEmbedding {
    MatrixXd Z;          // N x n_components, centered scores
    MatrixXd components; // d x n_components right singular vectors, sign-fixed
    VectorXd mean;       // column means removed before the SVD
    int requested = 0;
    int returned = 0;    // < requested when the data rank fell short
};

PcaEmbedding pca_embed(const MatrixXd& rows, int n_components = 3);

// stacks valid rows across the corpus with their object world positions
struct StackedCorpus {
    MatrixXd H;          // N x d
    MatrixXd positions;  // N x 3
    std::vector<int> scene_index;
};

StackedCorpus stack_valid_rows(const scene::Dataset& ds, const CorpusActivations& corpus);

struct RsaResult {
    std::vector<double> per_scene;  // NaN where undefined
    double mean = 0.0;              // over defined scenes
    int n_defined = 0;
    int n_flagged = 0;              // constant similarity vectors
};

// cosine similarity of activation rows vs Gaussian-kernel similarity of
// coordinates, Spearman over off-diagonal entries, per scene
RsaResult rsa(const scene::Dataset& ds, const CorpusActivations& corpus);

double variance_subspace_fraction(const CorpusActivations& corpus, const MatrixXd& basis);

struct ProcrustesFit {
    double correlation = 0.0;  // Pearson over all aligned entries
    MatrixXd rotation;
    double scale = 1.0;
};

// best rotation+scale+translation of Z onto X, then entrywise correlation
ProcrustesFit procrustes_correlation(const MatrixXd& Z, const MatrixXd& X);

// basis file round trip
void write_basis(const std::string& path, const IdentityBasis& basis);
IdentityBasis read_basis(const std::string& path);

} // namespace cogmap::extraction
