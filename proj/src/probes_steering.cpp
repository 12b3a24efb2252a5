#include "cogmap/probes_steering.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace cogmap::probes {

namespace {

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

MatrixXd normalize_targets(const scene::Dataset& ds, const extraction::StackedCorpus& stacked,
                           std::vector<Vector3d>& mins_out, std::vector<Vector3d>& maxs_out) {
    mins_out.assign(ds.scenes.size(), Vector3d::Zero());
    maxs_out.assign(ds.scenes.size(), Vector3d::Zero());
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
        Vector3d hi = -lo;
        for (const auto& obj : ds.scenes[s].objects) {
            lo = lo.cwiseMin(obj.world_position);
            hi = hi.cwiseMax(obj.world_position);
        }
        mins_out[s] = lo;
        maxs_out[s] = hi;
    }
    MatrixXd targets(stacked.H.rows(), 3);
    for (int r = 0; r < targets.rows(); ++r) {
        const int s = stacked.scene_index[static_cast<size_t>(r)];
        for (int c = 0; c < 3; ++c) {
            const double lo = mins_out[s][c], hi = maxs_out[s][c];
            const double span = hi - lo;
            targets(r, c) =
                span > 0.0 ? 2.0 * (stacked.positions(r, c) - lo) / span - 1.0 : 0.0;
        }
    }
    return targets;
}

RidgeProbe ridge_fit(const MatrixXd& H, const MatrixXd& targets, double alpha) {
    if (H.rows() != targets.rows()) throw std::invalid_argument("ridge_fit: row count mismatch");
    if (alpha < 0.0) throw std::invalid_argument("ridge_fit: negative alpha");
    const int d = static_cast<int>(H.cols());
    MatrixXd gram = H.transpose() * H;
    gram.diagonal().array() += alpha;
    Eigen::LDLT<MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success || (alpha == 0.0 && !solver.isPositive()))
        throw std::runtime_error("ridge_fit: singular normal equations");
    RidgeProbe probe;
    probe.alpha = alpha;
    probe.weights = solver.solve(H.transpose() * targets).transpose();
    if (probe.weights.cols() != d) throw std::runtime_error("ridge_fit: solve failed");
    return probe;
}

RidgeProbe fit_coordinate_probe(const scene::Dataset& ds, const CorpusActivations& corpus,
                                double alpha, TargetNorm norm) {
    extraction::StackedCorpus stacked = extraction::stack_valid_rows(ds, corpus);
    MatrixXd targets;
    std::vector<Vector3d> mins, maxs;
    if (norm == TargetNorm::per_scene_minmax) {
        targets = normalize_targets(ds, stacked, mins, maxs);
    } else {
        targets = stacked.positions;
    }
    RidgeProbe probe = ridge_fit(stacked.H, targets, alpha);
    probe.norm = norm;
    probe.scene_min = std::move(mins);
    probe.scene_max = std::move(maxs);
    return probe;
}

double knn_classify(const MatrixXd& train, const std::vector<int>& train_labels,
                    const MatrixXd& test, const std::vector<int>& test_labels, int k) {
    const int n = static_cast<int>(train.rows());
    if (n == 0) throw std::invalid_argument("knn_classify: empty training set");
    if (k < 1 || k > n) throw std::invalid_argument("knn_classify: bad k");
    if (static_cast<int>(train_labels.size()) != n ||
        static_cast<int>(test_labels.size()) != test.rows())
        throw std::invalid_argument("knn_classify: label count mismatch");

    int correct = 0;
    std::vector<std::pair<double, int>> dist(n);
    for (int t = 0; t < test.rows(); ++t) {
        for (int i = 0; i < n; ++i)
            dist[i] = {(train.row(i) - test.row(t)).squaredNorm(), i};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        std::map<int, int> votes;
        for (int i = 0; i < k; ++i) ++votes[train_labels[dist[i].second]];
        int best_count = 0;
        for (const auto& [cls, cnt] : votes) best_count = std::max(best_count, cnt);
        // among tied classes, the one with the nearest neighbor wins
        int winner = -1;
        for (int i = 0; i < k && winner < 0; ++i) {
            const int cls = train_labels[dist[i].second];
            if (votes[cls] == best_count) winner = cls;
        }
        if (winner == test_labels[t]) ++correct;
    }
    return test.rows() > 0 ? static_cast<double>(correct) / test.rows() : 0.0;
}

namespace {

MetricSummary summarize(const std::vector<double>& per_fold) {
    MetricSummary s;
    s.per_fold = per_fold;
    s.mean = stats::mean(per_fold);
    if (per_fold.size() > 1)
        s.two_se = 2.0 * std::sqrt(stats::variance(per_fold) / per_fold.size());
    return s;
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& pred) {
    const double mu = stats::mean(truth);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
        ss_tot += (truth[i] - mu) * (truth[i] - mu);
    }
    return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

} // namespace

ProbeSuiteReport cross_validated_probe_suite(const scene::Dataset& ds,
                                             const CorpusActivations& corpus, int folds,
                                             uint64_t seed, double alpha, int knn_k) {
    const int n_scenes = static_cast<int>(ds.scenes.size());
    if (folds < 2) throw std::invalid_argument("cross_validated_probe_suite: folds < 2");
    if (n_scenes < folds)
        throw std::invalid_argument("cross_validated_probe_suite: fewer scenes than folds");

    Rng rng(seed);
    std::vector<int> order = rng.permutation(n_scenes);
    std::vector<int> fold_of(n_scenes);
    for (int i = 0; i < n_scenes; ++i) fold_of[order[i]] = i % folds;

    extraction::RsaResult rsa_all = extraction::rsa(ds, corpus);

    std::vector<double> acc_color, acc_shape, r2x, r2z, rsa_fold;
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_rows_scene, test_rows_scene;
        // gather rows
        std::vector<VectorXd> tr_feat, te_feat;
        std::vector<Vector3d> tr_tgt, te_tgt;
        std::vector<int> tr_color, te_color, tr_shape, te_shape;
        std::vector<Vector3d> mins(ds.scenes.size()), maxs(ds.scenes.size());
        for (size_t s = 0; s < ds.scenes.size(); ++s) {
            Vector3d lo = Vector3d::Constant(std::numeric_limits<double>::infinity());
            Vector3d hi = -lo;
            for (const auto& obj : ds.scenes[s].objects) {
                lo = lo.cwiseMin(obj.world_position);
                hi = hi.cwiseMax(obj.world_position);
            }
            mins[s] = lo;
            maxs[s] = hi;
        }
        auto norm_pos = [&](size_t s, const scene::Vec3& p) {
            Vector3d out;
            for (int c = 0; c < 3; ++c) {
                const double span = maxs[s][c] - mins[s][c];
                out[c] = span > 0.0 ? 2.0 * (p[c] - mins[s][c]) / span - 1.0 : 0.0;
            }
            return out;
        };
        for (size_t s = 0; s < ds.scenes.size(); ++s) {
            const auto& am = corpus.per_scene[s];
            const bool is_test = fold_of[s] == f;
            for (int i = 0; i < am.m(); ++i) {
                if (!am.valid[i]) continue;
                const auto& obj = ds.scenes[s].objects[i];
                VectorXd h = am.H.row(i).transpose();
                Vector3d t = norm_pos(s, obj.world_position);
                if (is_test) {
                    te_feat.push_back(h);
                    te_tgt.push_back(t);
                    te_color.push_back(static_cast<int>(obj.color));
                    te_shape.push_back(static_cast<int>(obj.shape));
                } else {
                    tr_feat.push_back(h);
                    tr_tgt.push_back(t);
                    tr_color.push_back(static_cast<int>(obj.color));
                    tr_shape.push_back(static_cast<int>(obj.shape));
                }
            }
        }
        if (tr_feat.empty() || te_feat.empty())
            throw std::runtime_error("cross_validated_probe_suite: empty fold");

        const int d = static_cast<int>(tr_feat[0].size());
        MatrixXd Htr(tr_feat.size(), d), Hte(te_feat.size(), d);
        MatrixXd Ttr(tr_feat.size(), 3), Tte(te_feat.size(), 3);
        for (size_t i = 0; i < tr_feat.size(); ++i) {
            Htr.row(static_cast<int>(i)) = tr_feat[i].transpose();
            Ttr.row(static_cast<int>(i)) = tr_tgt[i].transpose();
        }
        for (size_t i = 0; i < te_feat.size(); ++i) {
            Hte.row(static_cast<int>(i)) = te_feat[i].transpose();
            Tte.row(static_cast<int>(i)) = te_tgt[i].transpose();
        }

        RidgeProbe probe = ridge_fit(Htr, Ttr, alpha);
        MatrixXd pred = Hte * probe.weights.transpose();
        std::vector<double> tx(Tte.rows()), px(Tte.rows()), tz(Tte.rows()), pz(Tte.rows());
        for (int i = 0; i < Tte.rows(); ++i) {
            tx[i] = Tte(i, 0);
            px[i] = pred(i, 0);
            tz[i] = Tte(i, 2);
            pz[i] = pred(i, 2);
        }
        r2x.push_back(r_squared(tx, px));
        r2z.push_back(r_squared(tz, pz));

        const int k_eff = std::min(knn_k, static_cast<int>(Htr.rows()));
        acc_color.push_back(knn_classify(Htr, tr_color, Hte, te_color, k_eff));
        acc_shape.push_back(knn_classify(Htr, tr_shape, Hte, te_shape, k_eff));

        double rsum = 0.0;
        int rcount = 0;
        for (size_t s = 0; s < ds.scenes.size(); ++s) {
            if (fold_of[s] != f) continue;
            const double rho = rsa_all.per_scene[s];
            if (std::isfinite(rho)) {
                rsum += rho;
                ++rcount;
            }
        }
        rsa_fold.push_back(rcount > 0 ? rsum / rcount : 0.0);
    }

    ProbeSuiteReport report;
    report.folds = folds;
    report.color_acc = summarize(acc_color);
    report.shape_acc = summarize(acc_shape);
    report.x_r2 = summarize(r2x);
    report.z_r2 = summarize(r2z);
    report.rsa_rho = summarize(rsa_fold);
    return report;
}

SteeringPair build_steering_pair(const RidgeProbe& probe, Axis target_axis, Rng& rng) {
    const MatrixXd& W = probe.weights;
    const int d = static_cast<int>(W.cols());
    MatrixXd WWt = W * W.transpose();
    Eigen::FullPivLU<MatrixXd> lu(WWt);
    if (lu.rank() < W.rows())
        throw std::invalid_argument("build_steering_pair: rank-deficient probe");
    MatrixXd pinv = W.transpose() * lu.inverse();  // d x t, right inverse

    SteeringPair pair;
    pair.target_axis = target_axis;
    pair.v_axis = pinv.col(static_cast<int>(target_axis));

    VectorXd g(d);
    for (int i = 0; i < d; ++i) g[i] = rng.normal();
    VectorXd g_perp = g - pinv * (W * g);
    const double nrm = g_perp.norm();
    if (nrm <= 0.0) throw std::runtime_error("build_steering_pair: degenerate null draw");
    pair.v_null = g_perp * (pair.v_axis.norm() / nrm);
    return pair;
}

SteeringReport steering_experiment(const scene::Dataset& ds, const CorpusActivations& corpus,
                                   const RidgeProbe& probe, const SteeringPair& pair,
                                   const std::vector<double>& alphas, int trials_per_cell,
                                   double noise_sigma, Rng& rng) {
    std::vector<std::pair<int, int>> pool;  // (scene, row)
    for (size_t s = 0; s < corpus.per_scene.size(); ++s)
        for (int i = 0; i < corpus.per_scene[s].m(); ++i)
            if (corpus.per_scene[s].valid[i]) pool.emplace_back(static_cast<int>(s), i);
    if (pool.empty()) throw std::invalid_argument("steering_experiment: no valid rows");

    const int d = static_cast<int>(probe.weights.cols());
    const int axis_idx = static_cast<int>(pair.target_axis);
    auto read = [&](const VectorXd& h) -> Vector3d {
        if (noise_sigma <= 0.0) return probe.predict(h);
        VectorXd noisy = h;
        for (int i = 0; i < d; ++i) noisy[i] += noise_sigma * rng.normal();
        return probe.predict(noisy);
    };

    SteeringReport report;
    report.noise_sigma = noise_sigma;
    report.trials_per_arm = trials_per_cell * static_cast<int>(alphas.size());
    std::map<double, std::pair<std::vector<double>, std::vector<double>>> by_alpha;
    for (const char* arm : {"axis", "null"}) {
        const bool is_axis = std::string(arm) == "axis";
        const VectorXd& v = is_axis ? pair.v_axis : pair.v_null;
        for (double alpha : alphas) {
            SteeringCell cell;
            cell.arm = arm;
            cell.alpha = alpha;
            cell.trials = trials_per_cell;
            Vector3d acc = Vector3d::Zero();
            for (int t = 0; t < trials_per_cell; ++t) {
                const auto& [s, i] = pool[static_cast<size_t>(rng.below(pool.size()))];
                const VectorXd h = corpus.per_scene[s].H.row(i).transpose();
                const Vector3d base = read(h);
                const Vector3d steered = read(h + alpha * v);
                const Vector3d delta = steered - base;
                acc += delta;
                cell.deltas_target.push_back(delta[axis_idx]);
                if (delta[axis_idx] * alpha > 0.0) ++cell.sign_correct;
            }
            cell.mean_delta = acc / trials_per_cell;
            if (is_axis)
                report.axis_sign_correct += cell.sign_correct;
            else
                report.null_sign_correct += cell.sign_correct;
            auto& bucket = by_alpha[alpha];
            (is_axis ? bucket.first : bucket.second) = cell.deltas_target;
            report.cells.push_back(std::move(cell));
        }
    }
    for (const auto& [alpha, arms] : by_alpha)
        report.welch_per_alpha.push_back(stats::welch_t(arms.first, arms.second));
    return report;
}

CoordinateHead fit_coordinate_head(const scene::Dataset& ds, const CorpusActivations& corpus,
                                   double alpha, const extraction::IdentityBasis* basis) {
    CoordinateHead head;
    head.residualized = basis != nullptr;
    const CorpusActivations* fit_corpus = &corpus;
    CorpusActivations residual;
    if (basis) {
        residual = extraction::residualize_corpus(corpus, *basis);
        fit_corpus = &residual;
        head.projector = basis->projector_out();
    }
    extraction::StackedCorpus stacked = extraction::stack_valid_rows(ds, *fit_corpus);
    RidgeProbe probe = ridge_fit(stacked.H, stacked.positions, alpha);
    head.weights = probe.weights;
    return head;
}

CounterfactualSet make_counterfactual_set(const scene::Scene& sc, const scene::Trajectory& traj,
                                          const std::vector<scene::QAItem>& questions, Rng& rng) {
    CounterfactualSet set;
    set.original = sc;
    set.trajectory = traj;
    for (const auto& q : questions)
        if (q.scene_id != sc.scene_id)
            throw std::invalid_argument("make_counterfactual_set: question from another scene");
    set.questions = questions;
    scene::Counterfactual cs = scene::make_counterfactual(sc, scene::CounterfactualKind::color_swap, rng);
    scene::Counterfactual ps = scene::make_counterfactual(sc, scene::CounterfactualKind::position_swap, rng);
    set.variants = {cs.scene, ps.scene};
    set.variant_names = {"color_swap", "position_swap"};
    return set;
}

ReadoutFn make_head_readout(const CoordinateHead& head, const emulator::EmulatorParams& params,
                            uint64_t seed) {
    return [head, params, seed](const scene::Scene& sc, const scene::Trajectory& traj,
                                const scene::QAItem& item) -> std::string {
        Rng rng(seed ^ fnv1a(sc.scene_id));
        emulator::ActivationMatrix am = emulator::emulate_scene_activations(params, sc, rng);
        std::vector<scene::Vec3> preds;
        preds.reserve(item.object_indices.size());
        for (int idx : item.object_indices) {
            if (idx < 0 || idx >= am.m())
                throw std::invalid_argument("head readout: object index out of range");
            VectorXd h = am.H.row(idx).transpose();
            if (head.residualized) h = head.projector * h;
            preds.push_back(head.weights * h);
        }
        return scene::answer_from_positions(item, preds, traj.frames.front());
    };
}

const FlipRateReport::Cell* FlipRateReport::find(const std::string& variant,
                                                 scene::QAKind kind) const {
    for (const auto& c : cells)
        if (c.variant == variant && c.kind == kind) return &c;
    return nullptr;
}

FlipRateReport flip_rate_eval(const ReadoutFn& readout,
                              const std::vector<CounterfactualSet>& sets) {
    std::map<std::pair<std::string, int>, std::pair<int, int>> tally;  // flips, total
    for (const auto& set : sets) {
        if (set.variants.size() != set.variant_names.size())
            throw std::invalid_argument("flip_rate_eval: variant name mismatch");
        std::vector<std::string> base;
        base.reserve(set.questions.size());
        for (const auto& q : set.questions)
            base.push_back(readout(set.original, set.trajectory, q));
        for (size_t v = 0; v < set.variants.size(); ++v) {
            if (set.variants[v].size() != set.original.size())
                throw std::invalid_argument("flip_rate_eval: variant object count mismatch");
            for (size_t qi = 0; qi < set.questions.size(); ++qi) {
                const auto& q = set.questions[qi];
                const std::string ans = readout(set.variants[v], set.trajectory, q);
                auto& cell = tally[{set.variant_names[v], static_cast<int>(q.kind)}];
                if (ans != base[qi]) ++cell.first;
                ++cell.second;
            }
        }
    }
    FlipRateReport report;
    for (const auto& [key, counts] : tally) {
        FlipRateReport::Cell cell;
        cell.variant = key.first;
        cell.kind = static_cast<scene::QAKind>(key.second);
        cell.flips = counts.first;
        cell.total = counts.second;
        report.cells.push_back(std::move(cell));
    }
    return report;
}

} // namespace cogmap::probes
