#include "cogmap/dirichlet_trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "cogmap/spectral.hpp"
#include "cogmap/stats.hpp"

namespace cogmap::trainer {

MatrixXd complete_graph_laplacian(int m) {
    if (m < 1) throw std::invalid_argument("complete_graph_laplacian: m < 1");
    return MatrixXd::Constant(m, m, -1.0) + static_cast<double>(m) * MatrixXd::Identity(m, m);
}

double dirichlet_ratio_value(const MatrixXd& H, const MatrixXd& laplacian,
                             const MatrixXd& laplacian_complete, double eps) {
    const double num = 2.0 * (laplacian * H).cwiseProduct(H).sum();
    const double den = 2.0 * (laplacian_complete * H).cwiseProduct(H).sum() + eps;
    return num / den;
}

MatrixXd dirichlet_ratio_grad(const MatrixXd& H, const MatrixXd& laplacian,
                              const MatrixXd& laplacian_complete, double eps) {
    const MatrixXd LH = laplacian * H;
    const MatrixXd LkH = laplacian_complete * H;
    const double num = 2.0 * LH.cwiseProduct(H).sum();
    const double den = 2.0 * LkH.cwiseProduct(H).sum() + eps;
    return (4.0 / den) * LH - (4.0 * num / (den * den)) * LkH;
}

namespace {

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }

} // namespace

LossBreakdown total_loss(const ToyModel& model, const std::vector<PairBatch>& batch,
                         double lambda, MatrixXd* grad_theta) {
    const int d = static_cast<int>(model.theta.rows());
    LossBreakdown out;

    // cross-entropy: logits z = gain * head^T theta (h_b - h_a); the head
    // gradient in theta is rank one, accumulated as head * v^T
    const VectorXd u = model.theta.transpose() * model.head;
    VectorXd ce_feat = VectorXd::Zero(d);
    long n_pairs = 0;
    double ce_sum = 0.0;
    for (const auto& scene : batch) {
        for (size_t p = 0; p < scene.pairs.size(); ++p) {
            const auto [ia, ib] = scene.pairs[p];
            const VectorXd dh = (scene.H.row(ib) - scene.H.row(ia)).transpose();
            const double z = model.gain * u.dot(dh);
            const double y = scene.labels[p];
            ce_sum += softplus(z) - y * z;
            if (grad_theta) ce_feat += (sigmoid(z) - y) * dh;
            ++n_pairs;
        }
    }
    if (n_pairs == 0) throw std::invalid_argument("total_loss: no pairs in batch");
    out.ce = ce_sum / static_cast<double>(n_pairs);

    // mean per-scene normalized Dirichlet ratio on residualized transformed rows
    MatrixXd ratio_accum;
    if (grad_theta) ratio_accum = MatrixXd::Zero(d, d);
    int n_scenes = 0;
    for (const auto& scene : batch) {
        const int m = static_cast<int>(scene.H.rows());
        if (m < 2) {
            out.per_scene.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const MatrixXd G = scene.H * model.theta.transpose() * model.projector;
        const MatrixXd Lk = complete_graph_laplacian(m);
        const double r = dirichlet_ratio_value(G, scene.laplacian, Lk);
        out.per_scene.push_back(r);
        out.dirichlet_ratio += r;
        ++n_scenes;
        if (grad_theta) {
            const MatrixXd gG = dirichlet_ratio_grad(G, scene.laplacian, Lk);
            ratio_accum += scene.H.transpose() * gG;
        }
    }
    if (n_scenes > 0) out.dirichlet_ratio /= static_cast<double>(n_scenes);
    out.total = out.ce + lambda * out.dirichlet_ratio;

    if (grad_theta) {
        MatrixXd g = (model.gain / static_cast<double>(n_pairs)) * model.head * ce_feat.transpose();
        if (n_scenes > 0)
            g += (lambda / static_cast<double>(n_scenes)) *
                 (model.projector * ratio_accum).transpose();
        *grad_theta = std::move(g);
    }
    return out;
}

double spatial_accuracy(const ToyModel& model, const std::vector<PairBatch>& batch) {
    const VectorXd u = model.theta.transpose() * model.head;
    long correct = 0, total = 0;
    for (const auto& scene : batch) {
        for (size_t p = 0; p < scene.pairs.size(); ++p) {
            const auto [ia, ib] = scene.pairs[p];
            const double z =
                model.gain * u.dot((scene.H.row(ib) - scene.H.row(ia)).transpose());
            const bool predict_one = z > 0.0;
            if (predict_one == (scene.labels[p] == 1)) ++correct;
            ++total;
        }
    }
    return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

TrainResult train(ToyModel model, const std::vector<PairBatch>& train_batch,
                  const std::vector<PairBatch>& val_batch, const TrainConfig& cfg) {
    TrainResult result;
    const int d = static_cast<int>(model.theta.rows());
    MatrixXd velocity = MatrixXd::Zero(d, d);
    MatrixXd grad(d, d);
    double initial_total = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        LossBreakdown loss = total_loss(model, train_batch, cfg.lambda, &grad);
        if (step == 0) initial_total = std::abs(loss.total) + 1e-12;
        StepRecord rec;
        rec.step = step;
        rec.ce = loss.ce;
        rec.ratio = loss.dirichlet_ratio;
        rec.total = loss.total;
        rec.val_acc = spatial_accuracy(model, val_batch);
        result.trace.push_back(rec);
        if (!std::isfinite(loss.total) || loss.total > cfg.divergence_factor * initial_total) {
            result.aborted = true;
            break;
        }
        velocity = cfg.momentum * velocity - cfg.lr * grad;
        model.theta += velocity;
    }
    result.final_val_acc = spatial_accuracy(model, val_batch);
    LossBreakdown final_loss = total_loss(model, train_batch, cfg.lambda, nullptr);
    result.final_ratio = final_loss.dirichlet_ratio;
    result.model = std::move(model);
    return result;
}

namespace {

std::vector<PairBatch> build_batches(const scene::Dataset& ds,
                                     const emulator::CorpusActivations& corpus,
                                     int pairs_per_scene, Rng& rng) {
    std::vector<PairBatch> batches;
    batches.reserve(ds.scenes.size());
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        const auto& sc = ds.scenes[s];
        const auto& am = corpus.per_scene[s];
        PairBatch pb;
        pb.H = am.H;
        const int m = static_cast<int>(sc.objects.size());
        if (m >= 2) {
            MatrixXd pos(m, 3);
            for (int i = 0; i < m; ++i) pos.row(i) = sc.objects[i].world_position.transpose();
            pb.laplacian = spectral::gaussian_kernel_graph(pos).laplacian;
            std::vector<std::pair<int, int>> all;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    if (i != j && sc.objects[i].world_position.x() !=
                                      sc.objects[j].world_position.x())
                        all.emplace_back(i, j);
            rng.shuffle(all);
            const int take = std::min<int>(pairs_per_scene, static_cast<int>(all.size()));
            for (int p = 0; p < take; ++p) {
                pb.pairs.push_back(all[p]);
                const double xa = sc.objects[all[p].first].world_position.x();
                const double xb = sc.objects[all[p].second].world_position.x();
                pb.labels.push_back(xa < xb ? 1 : 0);
            }
        }
        batches.push_back(std::move(pb));
    }
    return batches;
}

} // namespace

SweepSetup build_sweep_setup(const SweepDataConfig& cfg) {
    scene::DatasetConfig train_cfg;
    train_cfg.scenes = cfg.train_scenes;
    train_cfg.seed = cfg.data_seed;
    scene::DatasetConfig val_cfg;
    val_cfg.scenes = cfg.val_scenes;
    val_cfg.seed = cfg.data_seed + 1;
    scene::Dataset train_ds = scene::generate_dataset(train_cfg);
    scene::Dataset val_ds = scene::generate_dataset(val_cfg);

    emulator::EmulatorConfig ecfg;
    ecfg.d = cfg.emulator_dim;
    ecfg.noise_sigma = cfg.noise_sigma;
    Rng erng(cfg.data_seed ^ 0xd1c4e11e7ULL);
    emulator::EmulatorParams params =
        emulator::make_emulator_params(ecfg, train_cfg.scene_cfg, erng);

    emulator::CorpusActivations train_corpus = emulator::build_corpus_activations(
        train_ds, params, emulator::CorpusMode::object_level, cfg.data_seed + 11);
    emulator::CorpusActivations val_corpus = emulator::build_corpus_activations(
        val_ds, params, emulator::CorpusMode::object_level, cfg.data_seed + 12);

    extraction::PrototypeTable table =
        extraction::cross_scene_prototypes(train_ds, train_corpus);
    const int k = std::min<int>(scene::kNumIdentities - 1,
                                static_cast<int>(table.prototypes.rows()) - 1);
    extraction::IdentityBasis basis = extraction::identity_basis_svd(table, std::max(1, k));

    SweepSetup setup;
    setup.projector = basis.projector_out();
    setup.d = cfg.emulator_dim;
    Rng prng(cfg.data_seed ^ 0x9a1f5ULL);
    setup.train_batch = build_batches(train_ds, train_corpus, cfg.pairs_per_scene, prng);
    setup.val_batch = build_batches(val_ds, val_corpus, cfg.pairs_per_scene, prng);
    return setup;
}

ToyModel make_toy_model(const SweepSetup& setup, uint64_t seed, double gain) {
    ToyModel model;
    model.theta = MatrixXd::Identity(setup.d, setup.d);
    model.projector = setup.projector;
    model.gain = gain;
    Rng rng(seed ^ 0x7ead5eedULL);
    VectorXd a(setup.d);
    for (int i = 0; i < setup.d; ++i) a[i] = rng.normal();
    VectorXd h = setup.projector * a;
    const double nrm = h.norm();
    if (nrm <= 0.0) throw std::runtime_error("make_toy_model: degenerate head draw");
    model.head = h / nrm;
    return model;
}

SweepReport lambda_sweep(const SweepSetup& setup, const std::vector<double>& lambdas,
                         int n_seeds, const TrainConfig& base_cfg, double gain) {
    if (lambdas.empty() || lambdas[0] != 0.0)
        throw std::invalid_argument("lambda_sweep: grid must start at lambda = 0");
    if (n_seeds < 1) throw std::invalid_argument("lambda_sweep: n_seeds < 1");
    SweepReport report;
    report.lambdas = lambdas;

    // cells are independent jobs; a worker pool fills a preallocated table so
    // the result does not depend on scheduling
    const size_t n_cells = lambdas.size() * static_cast<size_t>(n_seeds);
    report.cells.resize(n_cells);
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (size_t i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1)) {
            try {
                TrainConfig cfg = base_cfg;
                cfg.lambda = lambdas[i / static_cast<size_t>(n_seeds)];
                cfg.seed = base_cfg.seed + i % static_cast<size_t>(n_seeds);
                ToyModel model = make_toy_model(setup, cfg.seed, gain);
                TrainResult res =
                    train(std::move(model), setup.train_batch, setup.val_batch, cfg);
                SweepCell& cell = report.cells[i];
                cell.lambda = cfg.lambda;
                cell.seed = cfg.seed;
                cell.final_val_acc = res.final_val_acc;
                cell.final_ratio = res.final_ratio;
                cell.aborted = res.aborted;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    unsigned hw = std::thread::hardware_concurrency();
    unsigned n_workers = std::max(1u, std::min<unsigned>(hw ? hw : 1,
                                                         static_cast<unsigned>(n_cells)));
    std::vector<std::thread> pool;
    pool.reserve(n_workers - 1);
    for (unsigned t = 1; t < n_workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);

    for (size_t li = 0; li < lambdas.size(); ++li) {
        std::vector<double> accs;
        for (int s = 0; s < n_seeds; ++s)
            accs.push_back(report.cells[li * static_cast<size_t>(n_seeds) + s].final_val_acc);
        report.mean_acc.push_back(stats::mean(accs));
        report.two_se_acc.push_back(
            accs.size() > 1 ? 2.0 * std::sqrt(stats::variance(accs) / accs.size()) : 0.0);
    }
    report.lambda0_mean = report.mean_acc[0];
    if (lambdas.size() == 1) {
        // degenerate single-point grid: nothing to compare against
        report.largest_lambda_mean = report.lambda0_mean;
        report.best_nonzero_mean = 0.0;
        report.rise_detected = false;
        report.fall_detected = false;
        return report;
    }
    report.largest_lambda_mean = report.mean_acc.back();
    report.best_nonzero_mean = -1.0;
    for (size_t i = 1; i < report.mean_acc.size(); ++i)
        report.best_nonzero_mean = std::max(report.best_nonzero_mean, report.mean_acc[i]);
    report.rise_detected = report.best_nonzero_mean > report.lambda0_mean;
    report.fall_detected = report.largest_lambda_mean < report.lambda0_mean;
    return report;
}

SampleComplexityReport sample_complexity_experiment(int d, const std::vector<int>& n_grid,
                                                    double sigma_xi, int n_reps, Rng& rng) {
    if (d < 4) throw std::invalid_argument("sample_complexity_experiment: d < 4");
    if (n_grid.empty()) throw std::invalid_argument("sample_complexity_experiment: empty grid");
    SampleComplexityReport report;
    report.n_grid = n_grid;
    for (int n : n_grid) {
        double err_p_sum = 0.0, err_f_sum = 0.0;
        for (int rep = 0; rep < n_reps; ++rep) {
            MatrixXd X(n, d);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
            VectorXd w_star = VectorXd::Zero(d);
            for (int j = 0; j < 3; ++j) w_star[j] = rng.normal();
            VectorXd y = X * w_star;
            if (sigma_xi > 0.0)
                for (int i = 0; i < n; ++i) y[i] += sigma_xi * rng.normal();

            // projected OLS on the known 3-dim support
            MatrixXd Xb = X.leftCols(3);
            Eigen::LDLT<MatrixXd> proj_solver(Xb.transpose() * Xb);
            VectorXd wb = proj_solver.solve(Xb.transpose() * y);
            VectorXd w_proj = VectorXd::Zero(d);
            w_proj.head(3) = wb;
            err_p_sum += (w_proj - w_star).squaredNorm();

            // full OLS; minimum-norm solution when n < d
            VectorXd w_full;
            if (n >= d) {
                Eigen::LDLT<MatrixXd> full_solver(X.transpose() * X);
                w_full = full_solver.solve(X.transpose() * y);
            } else {
                w_full = X.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
            }
            err_f_sum += (w_full - w_star).squaredNorm();
        }
        const double err_p = err_p_sum / n_reps;
        const double err_f = err_f_sum / n_reps;
        report.err_projected.push_back(err_p);
        report.err_full.push_back(err_f);
        report.ratio.push_back(err_p > 0.0 ? err_f / err_p : 0.0);
        report.ratio_valid.push_back(n >= d);
    }
    if (sigma_xi > 0.0) {
        std::vector<double> logn, loge;
        for (size_t i = 0; i < n_grid.size(); ++i) {
            logn.push_back(std::log(static_cast<double>(n_grid[i])));
            loge.push_back(std::log(report.err_projected[i]));
        }
        report.projected_scaling_slope = stats::fit_line(logn, loge).slope;
        report.top_n_normalized_err = report.err_projected.back() * n_grid.back() /
                                      (sigma_xi * sigma_xi);
    }
    return report;
}

RiskSlopeReport risk_decomposition_probe(const SweepSetup& setup, const ToyModel& converged,
                                         const std::vector<double>& lambda_small_grid,
                                         const TrainConfig& base_cfg) {
    RiskSlopeReport report;

    auto val_ce = [&](const ToyModel& m) {
        return total_loss(m, setup.val_batch, 0.0, nullptr).ce;
    };
    const double baseline_risk = val_ce(converged);

    // convergence check: continuing the unregularized run must not move the risk
    TrainConfig cfg0 = base_cfg;
    cfg0.lambda = 0.0;
    TrainResult cont = train(converged, setup.train_batch, setup.val_batch, cfg0);
    const double continued_risk = val_ce(cont.model);
    if (std::abs(continued_risk - baseline_risk) >
        std::max(1e-3, 0.05 * std::abs(baseline_risk)))
        throw std::runtime_error("risk_decomposition_probe: lambda = 0 solution not converged");

    report.lambdas.push_back(0.0);
    report.risks.push_back(continued_risk);
    for (double lambda : lambda_small_grid) {
        if (lambda <= 0.0)
            throw std::invalid_argument("risk_decomposition_probe: grid must be positive");
        TrainConfig cfg = base_cfg;
        cfg.lambda = lambda;
        TrainResult res = train(converged, setup.train_batch, setup.val_batch, cfg);
        report.lambdas.push_back(lambda);
        report.risks.push_back(val_ce(res.model));
    }

    stats::LineFit fit = stats::fit_line(report.lambdas, report.risks);
    report.slope = fit.slope;
    report.linear_r2 = fit.r2;
    report.slope_negative = fit.slope < 0.0;

    // quadratic coefficient from a least-squares parabola
    const int n = static_cast<int>(report.lambdas.size());
    MatrixXd V(n, 3);
    VectorXd r(n);
    for (int i = 0; i < n; ++i) {
        V(i, 0) = 1.0;
        V(i, 1) = report.lambdas[i];
        V(i, 2) = report.lambdas[i] * report.lambdas[i];
        r[i] = report.risks[i];
    }
    VectorXd coef = (V.transpose() * V).ldlt().solve(V.transpose() * r);
    report.curvature = coef[2];
    return report;
}

} // namespace cogmap::trainer
