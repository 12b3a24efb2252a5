#include "cogmap/extraction.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cogmap/optim.hpp"
#include "cogmap/spectral.hpp"
#include "cogmap/stats.hpp"
#include "json.hpp"

namespace cogmap::extraction {

using json = nlohmann::json;

MatrixXd IdentityBasis::projector_out() const {
    return MatrixXd::Identity(W.rows(), W.rows()) - W * W.transpose();
}

PrototypeTable cross_scene_prototypes(const scene::Dataset& ds, const CorpusActivations& corpus) {
    if (ds.scenes.size() != corpus.per_scene.size())
        throw std::invalid_argument("cross_scene_prototypes: corpus/dataset size mismatch");
    const int n_id = scene::kNumIdentities;
    int d = 0;
    // per-scene mean for each identity, then average those means across scenes
    std::vector<VectorXd> sums(n_id);
    std::vector<int> counts(n_id, 0);
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        const auto& sc = ds.scenes[s];
        const auto& am = corpus.per_scene[s];
        if (am.m() != static_cast<int>(sc.objects.size()))
            throw std::invalid_argument("cross_scene_prototypes: row/object mismatch");
        d = am.d();
        std::vector<VectorXd> scene_sum(n_id);
        std::vector<int> scene_n(n_id, 0);
        for (int i = 0; i < am.m(); ++i) {
            if (!am.valid[i]) continue;
            const int id = scene::identity_index(sc.objects[i].color, sc.objects[i].shape);
            if (scene_n[id] == 0) scene_sum[id] = VectorXd::Zero(d);
            scene_sum[id] += am.H.row(i).transpose();
            ++scene_n[id];
        }
        for (int id = 0; id < n_id; ++id) {
            if (scene_n[id] == 0) continue;
            if (counts[id] == 0) sums[id] = VectorXd::Zero(d);
            sums[id] += scene_sum[id] / static_cast<double>(scene_n[id]);
            ++counts[id];
        }
    }

    PrototypeTable table;
    for (int id = 0; id < n_id; ++id)
        if (counts[id] > 0) table.identities.push_back(id);
    if (table.identities.empty())
        throw std::runtime_error("cross_scene_prototypes: no identities observed");
    table.prototypes.resize(static_cast<int>(table.identities.size()), d);
    for (size_t r = 0; r < table.identities.size(); ++r) {
        const int id = table.identities[r];
        table.prototypes.row(static_cast<int>(r)) =
            (sums[id] / static_cast<double>(counts[id])).transpose();
        table.scene_counts.push_back(counts[id]);
    }
    return table;
}

IdentityBasis identity_basis_svd(const PrototypeTable& table, int k) {
    const int K = static_cast<int>(table.prototypes.rows());
    const int d = static_cast<int>(table.prototypes.cols());
    if (k < 1 || k > std::min(K, d))
        throw std::invalid_argument("identity_basis_svd: k out of range");

    Eigen::JacobiSVD<MatrixXd> svd(table.prototypes.transpose(),
                                   Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd sv = svd.singularValues();
    int numerical_rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > sv[0] * 1e-10) ++numerical_rank;

    IdentityBasis basis;
    basis.W = svd.matrixU().leftCols(k);
    basis.k = k;
    basis.provenance = BasisProvenance::svd_prototypes;
    basis.singular_values = sv;
    basis.rank_warning = (k > numerical_rank);
    // sign convention: largest-magnitude entry of each column positive
    for (int j = 0; j < k; ++j) {
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < d; ++i) {
            const double a = std::abs(basis.W(i, j));
            if (a > best) { best = a; arg = i; }
        }
        if (basis.W(arg, j) < 0) basis.W.col(j) = -basis.W.col(j);
    }
    return basis;
}

MatrixXd multinomial_logistic_directions(const MatrixXd& X, const std::vector<int>& labels,
                                         int n_classes, const LogisticQrOptions& opts) {
    const int n = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("multinomial_logistic_directions: label count mismatch");
    std::vector<int> class_count(n_classes, 0);
    for (int y : labels) {
        if (y < 0 || y >= n_classes)
            throw std::invalid_argument("multinomial_logistic_directions: label out of range");
        ++class_count[y];
    }
    int present = 0;
    for (int c : class_count)
        if (c > 0) ++present;
    if (present < 2)
        throw std::invalid_argument("multinomial_logistic_directions: fewer than 2 classes present");

    // parameters: class weight rows then intercepts; objective is the mean
    // cross-entropy plus the l2 penalty scaled to sklearn's C convention
    const double penalty = 0.5 / (opts.c_strength * static_cast<double>(n));
    const int n_params = n_classes * d + n_classes;
    auto objective = [&](const VectorXd& p, VectorXd& grad) -> double {
        Eigen::Map<const MatrixXd> W(p.data(), n_classes, d);
        Eigen::Map<const VectorXd> b(p.data() + n_classes * d, n_classes);
        grad.setZero(n_params);
        Eigen::Map<MatrixXd> gW(grad.data(), n_classes, d);
        Eigen::Map<VectorXd> gb(grad.data() + n_classes * d, n_classes);

        MatrixXd logits = X * W.transpose();
        logits.rowwise() += b.transpose();
        double ce = 0.0;
        for (int i = 0; i < n; ++i) {
            const double mx = logits.row(i).maxCoeff();
            double z = 0.0;
            for (int c = 0; c < n_classes; ++c) z += std::exp(logits(i, c) - mx);
            const double logz = std::log(z) + mx;
            ce += logz - logits(i, labels[i]);
            for (int c = 0; c < n_classes; ++c) {
                double r = std::exp(logits(i, c) - logz);
                if (c == labels[i]) r -= 1.0;
                logits(i, c) = r;  // reuse as residual matrix
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        gW = inv_n * (logits.transpose() * X).eval();
        gb = inv_n * logits.colwise().sum().transpose();
        gW += 2.0 * penalty * W;
        return ce * inv_n + penalty * W.squaredNorm();
    };

    optim::LbfgsOptions lopts;
    lopts.max_iterations = opts.max_iterations;
    lopts.grad_tolerance = opts.grad_tolerance;
    optim::OptimResult res = optim::lbfgs_minimize(objective, VectorXd::Zero(n_params), lopts);
    if (!res.converged && res.grad_norm > 1e-4)
        throw std::runtime_error("multinomial_logistic_directions: probe did not converge");
    return Eigen::Map<const MatrixXd>(res.x.data(), n_classes, d);
}

IdentityBasis identity_basis_logistic_qr(const scene::Dataset& ds,
                                         const CorpusActivations& corpus,
                                         const LogisticQrOptions& opts) {
    StackedCorpus stacked = stack_valid_rows(ds, corpus);
    const int n = static_cast<int>(stacked.H.rows());
    const int d = static_cast<int>(stacked.H.cols());
    if (n < 2) throw std::invalid_argument("identity_basis_logistic_qr: too few rows");

    std::vector<int> color_labels, shape_labels;
    color_labels.reserve(n);
    shape_labels.reserve(n);
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        const auto& am = corpus.per_scene[s];
        for (int i = 0; i < am.m(); ++i) {
            if (!am.valid[i]) continue;
            color_labels.push_back(static_cast<int>(ds.scenes[s].objects[i].color));
            shape_labels.push_back(static_cast<int>(ds.scenes[s].objects[i].shape));
        }
    }

    VectorXd mean = stacked.H.colwise().mean();
    MatrixXd Xc = stacked.H.rowwise() - mean.transpose();
    VectorXd scale(d);
    for (int j = 0; j < d; ++j) {
        const double var = Xc.col(j).squaredNorm() / static_cast<double>(n - 1);
        scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    MatrixXd Xs = Xc.array().rowwise() / scale.transpose().array();

    MatrixXd dir_color =
        multinomial_logistic_directions(Xs, color_labels, scene::kNumColors, opts);
    MatrixXd dir_shape =
        multinomial_logistic_directions(Xs, shape_labels, scene::kNumShapes, opts);

    MatrixXd stackedW(dir_color.rows() + dir_shape.rows(), d);
    stackedW.topRows(dir_color.rows()) = dir_color;
    stackedW.bottomRows(dir_shape.rows()) = dir_shape;
    // back to raw feature space, then unit rows
    for (int r = 0; r < stackedW.rows(); ++r) {
        for (int j = 0; j < d; ++j) stackedW(r, j) /= scale[j];
        const double nrm = stackedW.row(r).norm();
        if (nrm > 0) stackedW.row(r) /= nrm;
    }

    Eigen::HouseholderQR<MatrixXd> qr(stackedW.transpose());
    const int cols = static_cast<int>(stackedW.rows());
    MatrixXd Q = qr.householderQ() * MatrixXd::Identity(d, cols);
    MatrixXd R = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    double max_diag = 0.0;
    for (int j = 0; j < cols; ++j) max_diag = std::max(max_diag, std::abs(R(j, j)));
    std::vector<int> keep;
    for (int j = 0; j < cols; ++j)
        if (std::abs(R(j, j)) >= opts.drop_tolerance * max_diag) keep.push_back(j);

    IdentityBasis basis;
    basis.k = static_cast<int>(keep.size());
    basis.W.resize(d, basis.k);
    for (size_t j = 0; j < keep.size(); ++j) basis.W.col(static_cast<int>(j)) = Q.col(keep[j]);
    basis.provenance = BasisProvenance::logistic_qr;
    basis.feature_mean = mean;
    basis.feature_scale = scale;
    return basis;
}

ActivationMatrix residualize(const ActivationMatrix& am, const IdentityBasis& basis) {
    if (am.d() != basis.W.rows())
        throw std::invalid_argument("residualize: dimension mismatch");
    ActivationMatrix out = am;
    out.H -= (am.H * basis.W) * basis.W.transpose();
    return out;
}

CorpusActivations residualize_corpus(const CorpusActivations& corpus,
                                     const IdentityBasis& basis) {
    CorpusActivations out;
    out.per_scene.reserve(corpus.per_scene.size());
    for (const auto& am : corpus.per_scene) out.per_scene.push_back(residualize(am, basis));
    return out;
}

PcaEmbedding pca_embed(const MatrixXd& rows, int n_components) {
    const int n = static_cast<int>(rows.rows());
    if (n <= n_components)
        throw std::invalid_argument("pca_embed: need more rows than components");
    PcaEmbedding emb;
    emb.requested = n_components;
    emb.mean = rows.colwise().mean();
    MatrixXd Xc = rows.rowwise() - emb.mean.transpose();
    Eigen::BDCSVD<MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > sv[0] * 1e-12 && sv[i] > 0.0) ++rank;
    emb.returned = std::min(n_components, rank);
    emb.components = svd.matrixV().leftCols(emb.returned);
    for (int j = 0; j < emb.returned; ++j) {
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < emb.components.rows(); ++i) {
            const double a = std::abs(emb.components(i, j));
            if (a > best) { best = a; arg = i; }
        }
        if (emb.components(arg, j) < 0) emb.components.col(j) = -emb.components.col(j);
    }
    emb.Z = Xc * emb.components;
    return emb;
}

StackedCorpus stack_valid_rows(const scene::Dataset& ds, const CorpusActivations& corpus) {
    if (ds.scenes.size() != corpus.per_scene.size())
        throw std::invalid_argument("stack_valid_rows: corpus/dataset size mismatch");
    int total = 0, d = 0;
    for (const auto& am : corpus.per_scene) {
        d = am.d();
        for (bool v : am.valid)
            if (v) ++total;
    }
    StackedCorpus st;
    st.H.resize(total, d);
    st.positions.resize(total, 3);
    st.scene_index.reserve(total);
    int r = 0;
    for (size_t s = 0; s < corpus.per_scene.size(); ++s) {
        const auto& am = corpus.per_scene[s];
        for (int i = 0; i < am.m(); ++i) {
            if (!am.valid[i]) continue;
            st.H.row(r) = am.H.row(i);
            st.positions.row(r) = ds.scenes[s].objects[i].world_position.transpose();
            st.scene_index.push_back(static_cast<int>(s));
            ++r;
        }
    }
    return st;
}

RsaResult rsa(const scene::Dataset& ds, const CorpusActivations& corpus) {
    if (ds.scenes.size() != corpus.per_scene.size())
        throw std::invalid_argument("rsa: corpus/dataset size mismatch");
    RsaResult res;
    res.per_scene.assign(corpus.per_scene.size(), std::numeric_limits<double>::quiet_NaN());
    double acc = 0.0;
    for (size_t s = 0; s < corpus.per_scene.size(); ++s) {
        const auto& am = corpus.per_scene[s];
        std::vector<int> rows;
        for (int i = 0; i < am.m(); ++i)
            if (am.valid[i]) rows.push_back(i);
        const int m = static_cast<int>(rows.size());
        if (m < 3) continue;

        MatrixXd pos(m, 3);
        for (int i = 0; i < m; ++i)
            pos.row(i) = ds.scenes[s].objects[rows[i]].world_position.transpose();
        double tau;
        try {
            tau = spectral::auto_tau(pos);
        } catch (const std::exception&) {
            ++res.n_flagged;
            continue;
        }

        std::vector<double> act_sim, ker_sim;
        act_sim.reserve(m * (m - 1) / 2);
        ker_sim.reserve(m * (m - 1) / 2);
        bool zero_row = false;
        for (int i = 0; i < m && !zero_row; ++i) {
            const double ni = am.H.row(rows[i]).norm();
            if (ni < 1e-300) { zero_row = true; break; }
            for (int j = i + 1; j < m; ++j) {
                const double nj = am.H.row(rows[j]).norm();
                if (nj < 1e-300) { zero_row = true; break; }
                act_sim.push_back(am.H.row(rows[i]).dot(am.H.row(rows[j])) / (ni * nj));
                const double dist2 = (pos.row(i) - pos.row(j)).squaredNorm();
                ker_sim.push_back(std::exp(-dist2 / (2.0 * tau * tau)));
            }
        }
        if (zero_row) { ++res.n_flagged; continue; }

        auto constant = [](const std::vector<double>& v) {
            for (double x : v)
                if (x != v.front()) return false;
            return true;
        };
        if (constant(act_sim) || constant(ker_sim)) { ++res.n_flagged; continue; }

        const double rho = stats::spearman(act_sim, ker_sim);
        res.per_scene[s] = rho;
        acc += rho;
        ++res.n_defined;
    }
    res.mean = res.n_defined > 0 ? acc / res.n_defined : 0.0;
    return res;
}

double variance_subspace_fraction(const CorpusActivations& corpus, const MatrixXd& basis) {
    MatrixXd gram = basis.transpose() * basis;
    gram -= MatrixXd::Identity(basis.cols(), basis.cols());
    if (gram.cwiseAbs().maxCoeff() > 1e-8)
        throw std::invalid_argument("variance_subspace_fraction: basis not orthonormal");
    double total = 0.0, part = 0.0;
    for (const auto& am : corpus.per_scene) {
        for (int i = 0; i < am.m(); ++i) {
            if (!am.valid[i]) continue;
            total += am.H.row(i).squaredNorm();
            part += (am.H.row(i) * basis).squaredNorm();
        }
    }
    return total > 0.0 ? part / total : 0.0;
}

ProcrustesFit procrustes_correlation(const MatrixXd& Z, const MatrixXd& X) {
    if (Z.rows() != X.rows() || Z.cols() != X.cols())
        throw std::invalid_argument("procrustes_correlation: shape mismatch");
    MatrixXd Zc = Z.rowwise() - Z.colwise().mean();
    MatrixXd Xc = X.rowwise() - X.colwise().mean();
    Eigen::JacobiSVD<MatrixXd> svd(Zc.transpose() * Xc,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
    ProcrustesFit fit;
    fit.rotation = svd.matrixU() * svd.matrixV().transpose();
    const double denom = Zc.squaredNorm();
    fit.scale = denom > 0.0 ? svd.singularValues().sum() / denom : 1.0;
    MatrixXd aligned = fit.scale * (Zc * fit.rotation);

    std::vector<double> a, b;
    a.reserve(aligned.size());
    b.reserve(aligned.size());
    for (int i = 0; i < aligned.rows(); ++i)
        for (int j = 0; j < aligned.cols(); ++j) {
            a.push_back(aligned(i, j));
            b.push_back(Xc(i, j));
        }
    fit.correlation = stats::pearson(a, b);
    return fit;
}

void write_basis(const std::string& path, const IdentityBasis& basis) {
    json j;
    j["d"] = static_cast<int>(basis.W.rows());
    j["k"] = basis.k;
    j["provenance"] =
        basis.provenance == BasisProvenance::svd_prototypes ? "svd_prototypes" : "logistic_qr";
    j["rank_warning"] = basis.rank_warning;
    auto vec_to_json = [](const VectorXd& v) {
        json arr = json::array();
        for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
        return arr;
    };
    j["singular_values"] = vec_to_json(basis.singular_values);
    j["feature_mean"] = vec_to_json(basis.feature_mean);
    j["feature_scale"] = vec_to_json(basis.feature_scale);
    json cols = json::array();
    for (int c = 0; c < basis.W.cols(); ++c) {
        json col = json::array();
        for (int r = 0; r < basis.W.rows(); ++r) col.push_back(basis.W(r, c));
        cols.push_back(std::move(col));
    }
    j["W_columns"] = std::move(cols);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_basis: cannot open " + path);
    out << j.dump(0) << "\n";
}

IdentityBasis read_basis(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_basis: cannot open " + path);
    json j = json::parse(in);
    IdentityBasis basis;
    const int d = j.at("d").get<int>();
    basis.k = j.at("k").get<int>();
    basis.provenance = j.at("provenance").get<std::string>() == "logistic_qr"
                           ? BasisProvenance::logistic_qr
                           : BasisProvenance::svd_prototypes;
    basis.rank_warning = j.value("rank_warning", false);
    auto vec_from_json = [](const json& arr) {
        VectorXd v(arr.size());
        for (size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr.at(i).get<double>();
        return v;
    };
    basis.singular_values = vec_from_json(j.at("singular_values"));
    basis.feature_mean = vec_from_json(j.at("feature_mean"));
    basis.feature_scale = vec_from_json(j.at("feature_scale"));
    const auto& cols = j.at("W_columns");
    basis.W.resize(d, basis.k);
    for (int c = 0; c < basis.k; ++c)
        for (int r = 0; r < d; ++r) basis.W(r, c) = cols.at(c).at(r).get<double>();
    return basis;
}

} // namespace cogmap::extraction
