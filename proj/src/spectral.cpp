#include "cogmap/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cogmap/stats.hpp"

namespace cogmap::spectral {

std::vector<double> pairwise_distances(const MatrixXd& X) {
    const int m = static_cast<int>(X.rows());
    std::vector<double> d;
    d.reserve(static_cast<size_t>(m) * (m - 1) / 2);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            d.push_back((X.row(i) - X.row(j)).norm());
    return d;
}

double auto_tau(const MatrixXd& X) {
    if (X.rows() < 2) throw std::invalid_argument("auto_tau: need at least two points");
    double med = stats::median(pairwise_distances(X));
    if (med <= 0.0) throw std::invalid_argument("auto_tau: coincident points, zero median distance");
    return 0.5 * med;
}

KernelGraph gaussian_kernel_graph(const MatrixXd& X, double tau) {
    const int m = static_cast<int>(X.rows());
    if (m < 2) throw std::invalid_argument("gaussian_kernel_graph: need at least two points");
    if (tau <= 0.0) tau = auto_tau(X);
    KernelGraph g;
    g.tau = tau;
    g.W = MatrixXd::Zero(m, m);
    double inv = 1.0 / (2.0 * tau * tau);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double d2 = (X.row(i) - X.row(j)).squaredNorm();
            double w = std::exp(-d2 * inv);
            g.W(i, j) = w;
            g.W(j, i) = w;
        }
    g.degree = g.W.rowwise().sum();
    g.laplacian = MatrixXd(g.degree.asDiagonal());
    g.laplacian -= g.W;
    return g;
}

double dirichlet_energy(const MatrixXd& H, const MatrixXd& laplacian) {
    if (H.rows() != laplacian.rows() || laplacian.rows() != laplacian.cols())
        throw std::invalid_argument("dirichlet_energy: dimension mismatch");
    return (laplacian * H).cwiseProduct(H).sum();
}

double dirichlet_energy_pairwise(const MatrixXd& H, const MatrixXd& W) {
    if (H.rows() != W.rows() || W.rows() != W.cols())
        throw std::invalid_argument("dirichlet_energy_pairwise: dimension mismatch");
    const int m = static_cast<int>(H.rows());
    double e = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            e += W(i, j) * (H.row(i) - H.row(j)).squaredNorm();
    return e;
}

RatioResult dirichlet_ratio(const MatrixXd& H, const KernelGraph& g, int n_shuffles, Rng& rng) {
    if (n_shuffles < 1) throw std::invalid_argument("dirichlet_ratio: n_shuffles < 1");
    const int m = static_cast<int>(H.rows());
    if (m != g.W.rows()) throw std::invalid_argument("dirichlet_ratio: dimension mismatch");
    // squared feature distances, reused across shuffles
    MatrixXd P(m, m);
    P.setZero();
    bool all_equal = true;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double d2 = (H.row(i) - H.row(j)).squaredNorm();
            P(i, j) = d2;
            P(j, i) = d2;
            if (d2 > 0.0) all_equal = false;
        }
    RatioResult r;
    if (all_equal) {
        r.degenerate = true;
        r.value = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    double e_obs = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) e_obs += g.W(i, j) * P(i, j);
    double null_sum = 0.0;
    for (int s = 0; s < n_shuffles; ++s) {
        std::vector<int> p = rng.permutation(m);
        double e = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) e += g.W(i, j) * P(p[i], p[j]);
        null_sum += e;
    }
    r.energy = e_obs;
    r.null_mean = null_sum / n_shuffles;
    if (r.null_mean <= 0.0) {
        r.degenerate = true;
        r.value = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.value = e_obs / r.null_mean;
    return r;
}

double normalized_dirichlet_ratio(const MatrixXd& H, const MatrixXd& W, double eps) {
    const int m = static_cast<int>(H.rows());
    if (m != W.rows() || W.rows() != W.cols())
        throw std::invalid_argument("normalized_dirichlet_ratio: dimension mismatch");
    double num = 0.0, den = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double d2 = (H.row(i) - H.row(j)).squaredNorm();
            num += 2.0 * W(i, j) * d2;  // ordered pairs
            den += 2.0 * d2;
        }
    return num / (den + eps);
}

EigenDecomposition symmetric_eig(const MatrixXd& A, double sym_tol) {
    if (A.rows() != A.cols()) throw std::invalid_argument("symmetric_eig: matrix not square");
    double asym = (A - A.transpose()).cwiseAbs().maxCoeff();
    if (asym > sym_tol)
        throw std::invalid_argument("symmetric_eig: input not symmetric within tolerance");
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(A);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("symmetric_eig: eigensolver failed to converge");
    EigenDecomposition e;
    e.eigenvalues = solver.eigenvalues();   // ascending
    e.eigenvectors = solver.eigenvectors();
    const int n = static_cast<int>(A.rows());
    for (int k = 0; k < n; ++k) {
        int arg = 0;
        double best = -1.0;
        for (int i = 0; i < n; ++i) {
            double v = std::fabs(e.eigenvectors(i, k));
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        if (e.eigenvectors(arg, k) < 0.0) e.eigenvectors.col(k) *= -1.0;
    }
    return e;
}

Minimizer construct_dirichlet_minimizer(const MatrixXd& laplacian,
                                        const std::vector<double>& epsilons, int d) {
    const int s = static_cast<int>(epsilons.size());
    if (s < 1) throw std::invalid_argument("construct_dirichlet_minimizer: empty epsilons");
    if (d < s) throw std::invalid_argument("construct_dirichlet_minimizer: d < number of epsilons");
    for (int k = 0; k < s; ++k) {
        if (epsilons[k] <= 0.0)
            throw std::invalid_argument("construct_dirichlet_minimizer: epsilons must be positive");
        if (k > 0 && epsilons[k] >= epsilons[k - 1])
            throw std::invalid_argument("construct_dirichlet_minimizer: epsilons must be strictly descending");
    }
    EigenDecomposition e = symmetric_eig(laplacian);
    const int m = static_cast<int>(laplacian.rows());
    if (s > m) throw std::invalid_argument("construct_dirichlet_minimizer: more epsilons than nodes");
    Minimizer out;
    out.H = MatrixXd::Zero(m, d);
    out.eigenvalues = e.eigenvalues.head(s);
    out.eigenvectors = e.eigenvectors.leftCols(s);
    out.energy = 0.0;
    for (int k = 0; k < s; ++k) {
        out.H.col(k) = epsilons[k] * e.eigenvectors.col(k);  // v_k = e_k
        out.energy += epsilons[k] * epsilons[k] * e.eigenvalues(k);
    }
    return out;
}

MinimizerCheckReport verify_minimizer_optimality(int n_graphs, int m,
                                                 const std::vector<double>& epsilons, int d,
                                                 int n_perturbations, Rng& rng, double tol) {
    const int s = static_cast<int>(epsilons.size());
    if (s < 1 || d < s) throw std::invalid_argument("verify_minimizer_optimality: bad s or d");
    MinimizerCheckReport report;
    report.graphs = n_graphs;
    report.perturbations_per_graph = n_perturbations;
    report.min_perturbation_slack = std::numeric_limits<double>::infinity();
    for (int g = 0; g < n_graphs; ++g) {
        MatrixXd X(m, 3);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
        KernelGraph graph = gaussian_kernel_graph(X);
        Minimizer mini = construct_dirichlet_minimizer(graph.laplacian, epsilons, d);

        double target = 0.0;
        for (int k = 0; k < s; ++k) target += epsilons[k] * epsilons[k] * mini.eigenvalues[k];
        const double energy = dirichlet_energy(mini.H, graph.laplacian);
        const double rel = std::abs(energy - target) / std::max(std::abs(target), 1e-300);
        report.max_energy_rel_err = std::max(report.max_energy_rel_err, rel);

        // centered principal components against z^(2)..z^(s)
        MatrixXd centered = mini.H.rowwise() - mini.H.colwise().mean();
        Eigen::JacobiSVD<MatrixXd> pc_svd(centered, Eigen::ComputeThinU);
        for (int k = 0; k + 1 < s; ++k) {
            const double c =
                std::abs(pc_svd.matrixU().col(k).dot(mini.eigenvectors.col(k + 1)));
            report.min_abs_cosine = std::min(report.min_abs_cosine, c);
        }

        for (int p = 0; p < n_perturbations; ++p) {
            const double scale = std::pow(10.0, rng.uniform(-3.0, 0.0)) * mini.H.norm();
            MatrixXd G(m, d);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < d; ++j) G(i, j) = rng.normal();
            MatrixXd P = mini.H + (scale / G.norm()) * G;

            Eigen::JacobiSVD<MatrixXd> svd(P, Eigen::ComputeThinU | Eigen::ComputeThinV);
            VectorXd sv = svd.singularValues();
            bool clamped = false;
            for (int k = 0; k < s; ++k) {
                if (sv[k] < epsilons[k]) {
                    sv[k] = epsilons[k];
                    clamped = true;
                }
            }
            if (clamped) {
                ++report.clamped_draws;
                P = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
            }
            Eigen::JacobiSVD<MatrixXd> check(P);
            bool feasible = true;
            for (int k = 0; k < s; ++k)
                if (check.singularValues()[k] < epsilons[k] - 1e-9) feasible = false;
            if (!feasible) continue;

            const double slack = dirichlet_energy(P, graph.laplacian) - energy;
            report.min_perturbation_slack = std::min(report.min_perturbation_slack, slack);
            if (slack < -tol) ++report.violations;
        }
    }
    return report;
}

MatrixXd random_orthonormal(int m, int s, Rng& rng) {
    if (s > m) throw std::invalid_argument("random_orthonormal: s > m");
    MatrixXd G(m, s);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < s; ++j) G(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixXd> qr(G);
    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(m, s);
    return Q;
}

VectorXd principal_cosines_of(const MatrixXd& A, const MatrixXd& B) {
    if (A.rows() != B.rows())
        throw std::invalid_argument("principal_cosines_of: row mismatch");
    auto orth = [](const MatrixXd& M) {
        Eigen::HouseholderQR<MatrixXd> qr(M);
        return MatrixXd(qr.householderQ() * MatrixXd::Identity(M.rows(), M.cols()));
    };
    MatrixXd Qa = orth(A), Qb = orth(B);
    Eigen::JacobiSVD<MatrixXd> svd(Qa.transpose() * Qb);
    VectorXd sv = svd.singularValues();
    for (int i = 0; i < sv.size(); ++i) sv[i] = std::min(1.0, sv[i]);
    return sv;
}

KyFanReport verify_kyfan(const MatrixXd& laplacian, const std::vector<double>& weights,
                         int n_frames, Rng& rng, double tol) {
    const int s = static_cast<int>(weights.size());
    if (s < 1) throw std::invalid_argument("verify_kyfan: empty weights");
    for (int k = 0; k < s; ++k) {
        if (weights[k] <= 0.0) throw std::invalid_argument("verify_kyfan: weights must be positive");
        if (k > 0 && weights[k] > weights[k - 1])
            throw std::invalid_argument("verify_kyfan: weights must be non-increasing");
    }
    EigenDecomposition e = symmetric_eig(laplacian);
    const int m = static_cast<int>(laplacian.rows());
    if (s > m) throw std::invalid_argument("verify_kyfan: more weights than nodes");

    KyFanReport rep;
    for (int k = 0; k < s; ++k) rep.bound += weights[k] * e.eigenvalues(k);
    for (int k = 1; k < s; ++k)
        if (weights[k] == weights[k - 1]) rep.weights_tied = true;

    auto frame_value = [&](const MatrixXd& U) {
        double v = 0.0;
        for (int k = 0; k < s; ++k) v += weights[k] * U.col(k).dot(laplacian * U.col(k));
        return v;
    };

    rep.min_value = std::numeric_limits<double>::infinity();
    for (int t = 0; t < n_frames; ++t) {
        MatrixXd U = random_orthonormal(m, s, rng);
        double v = frame_value(U);
        rep.min_value = std::min(rep.min_value, v);
        if (v < rep.bound - tol) ++rep.violations;
    }
    rep.min_slack = rep.min_value - rep.bound;
    rep.eigenframe_gap = std::fabs(frame_value(e.eigenvectors.leftCols(s)) - rep.bound);
    return rep;
}

CubeCheckReport cube_eigenfunction_check(int m, double tau, Rng& rng) {
    if (m < 10) throw std::invalid_argument("cube_eigenfunction_check: m too small");
    MatrixXd X(m, 3);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
    KernelGraph g = gaussian_kernel_graph(X, tau);
    EigenDecomposition e = symmetric_eig(g.laplacian);

    CubeCheckReport rep;
    rep.lambda = e.eigenvalues.head(4);
    rep.lambda_ratio_10 = std::fabs(rep.lambda(0)) / rep.lambda(1);
    double lo = rep.lambda.segment(1, 3).minCoeff();
    double hi = rep.lambda.segment(1, 3).maxCoeff();
    double mean3 = rep.lambda.segment(1, 3).mean();
    rep.triple_spread = (hi - lo) / mean3;

    MatrixXd Z = e.eigenvectors.middleCols(1, 3);
    MatrixXd Phi(m, 3);
    constexpr double kPi = 3.14159265358979323846;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < 3; ++j) Phi(i, j) = std::cos(kPi * X(i, j));
    Eigen::HouseholderQR<MatrixXd> qr(Phi);
    MatrixXd Qphi = qr.householderQ() * MatrixXd::Identity(m, 3);

    Eigen::JacobiSVD<MatrixXd> svd(Z.transpose() * Qphi,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
    rep.principal_cosines = svd.singularValues();
    rep.mean_cosine = rep.principal_cosines.mean();

    // orthogonal alignment of the eigenvector block onto the cosine block
    MatrixXd R = svd.matrixU() * svd.matrixV().transpose();
    MatrixXd Za = Z * R;
    for (int j = 0; j < 3; ++j) {
        std::vector<double> a(static_cast<size_t>(m)), b(static_cast<size_t>(m));
        for (int i = 0; i < m; ++i) {
            a[static_cast<size_t>(i)] = Za(i, j);
            b[static_cast<size_t>(i)] = Phi(i, j);
        }
        double rho = stats::spearman(a, b);
        rep.per_axis_spearman(j) = std::fabs(rho);
    }
    return rep;
}

} // namespace cogmap::spectral
