#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cogmap/extraction.hpp"
#include "cogmap/latent_emulator.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"
#include "cogmap/spectral.hpp"

namespace py = pybind11;
using namespace cogmap;

namespace {

struct DemoLab {
    scene::Dataset ds;
    emulator::EmulatorParams params;
    emulator::CorpusActivations corpus;
};

DemoLab make_demo(int scenes, uint64_t seed, int dim, double noise_sigma,
                  const std::string& mode) {
    if (scenes < 1) throw std::invalid_argument("scenes must be >= 1");
    scene::DatasetConfig dcfg;
    dcfg.scenes = scenes;
    dcfg.seed = seed;
    scene::Dataset ds = scene::generate_dataset(dcfg);

    emulator::EmulatorConfig ecfg;
    ecfg.d = dim;
    ecfg.noise_sigma = noise_sigma;
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    emulator::EmulatorParams params = emulator::make_emulator_params(ecfg, dcfg.scene_cfg, rng);

    emulator::CorpusMode cmode;
    if (mode == "object") cmode = emulator::CorpusMode::object_level;
    else if (mode == "projective") cmode = emulator::CorpusMode::projective;
    else throw std::invalid_argument("mode must be 'object' or 'projective'");

    emulator::CorpusActivations corpus =
        emulator::build_corpus_activations(ds, params, cmode, seed);
    return {std::move(ds), std::move(params), std::move(corpus)};
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Synthetic 3D scenes, a linear latent emulator, and spectral diagnostics "
              "for latent scene geometry";

    m.def("version", [] { return std::string("0.1.0"); });

    // ---- spectral ----

    m.def("auto_tau", &spectral::auto_tau, py::arg("points"),
          "Half the median pairwise distance of the rows of `points`");

    m.def(
        "kernel_graph",
        [](const Eigen::MatrixXd& X, double tau) {
            spectral::KernelGraph g = spectral::gaussian_kernel_graph(X, tau);
            return py::make_tuple(g.W, g.laplacian, g.tau);
        },
        py::arg("points"), py::arg("tau") = 0.0,
        "Gaussian kernel graph on row vectors; tau <= 0 selects the bandwidth "
        "automatically. Returns (W, L, tau).");

    m.def(
        "dirichlet_energy",
        [](const Eigen::MatrixXd& H, const Eigen::MatrixXd& L) {
            return spectral::dirichlet_energy(H, L);
        },
        py::arg("H"), py::arg("laplacian"), "tr(H' L H)");

    m.def(
        "dirichlet_energy_pairwise",
        [](const Eigen::MatrixXd& H, const Eigen::MatrixXd& W) {
            return spectral::dirichlet_energy_pairwise(H, W);
        },
        py::arg("H"), py::arg("weights"),
        "0.5 * sum_ij W_ij ||h_i - h_j||^2, no Laplacian needed");

    m.def(
        "normalized_dirichlet_ratio",
        [](const Eigen::MatrixXd& H, const Eigen::MatrixXd& W, double eps) {
            return spectral::normalized_dirichlet_ratio(H, W, eps);
        },
        py::arg("H"), py::arg("weights"), py::arg("eps") = 1e-8,
        "Scene-graph energy over complete-graph energy, stabilized by eps");

    m.def(
        "dirichlet_ratio_shuffle",
        [](const Eigen::MatrixXd& H, const Eigen::MatrixXd& points, int n_shuffles,
           uint64_t seed) {
            spectral::KernelGraph g = spectral::gaussian_kernel_graph(points);
            Rng rng(seed);
            spectral::RatioResult r = spectral::dirichlet_ratio(H, g, n_shuffles, rng);
            py::dict out;
            out["value"] = r.value;
            out["energy"] = r.energy;
            out["null_mean"] = r.null_mean;
            out["degenerate"] = r.degenerate;
            return out;
        },
        py::arg("H"), py::arg("points"), py::arg("n_shuffles") = 1000, py::arg("seed") = 0,
        "Dirichlet energy of H on the kernel graph of `points`, divided by its "
        "mean under row shuffles");

    m.def(
        "dirichlet_minimizer",
        [](const Eigen::MatrixXd& L, const std::vector<double>& epsilons, int d) {
            spectral::Minimizer mini = spectral::construct_dirichlet_minimizer(L, epsilons, d);
            return py::make_tuple(mini.H, mini.energy, mini.eigenvalues);
        },
        py::arg("laplacian"), py::arg("epsilons"), py::arg("d"),
        "Energy minimizer under singular-value floors; returns (H, energy, eigenvalues)");

    m.def(
        "kyfan_check",
        [](const Eigen::MatrixXd& L, const std::vector<double>& weights, int n_frames,
           uint64_t seed) {
            Rng rng(seed);
            spectral::KyFanReport r = spectral::verify_kyfan(L, weights, n_frames, rng);
            py::dict out;
            out["bound"] = r.bound;
            out["min_value"] = r.min_value;
            out["min_slack"] = r.min_slack;
            out["violations"] = r.violations;
            out["eigenframe_gap"] = r.eigenframe_gap;
            return out;
        },
        py::arg("laplacian"), py::arg("weights"), py::arg("n_frames") = 100,
        py::arg("seed") = 0,
        "Random orthonormal frames never undercut the weighted eigenvalue bound");

    m.def(
        "cube_check",
        [](int n_samples, double tau, uint64_t seed) {
            Rng rng(seed);
            spectral::CubeCheckReport r = spectral::cube_eigenfunction_check(n_samples, tau, rng);
            py::dict out;
            out["lambda"] = r.lambda;
            out["lambda_ratio_10"] = r.lambda_ratio_10;
            out["triple_spread"] = r.triple_spread;
            out["mean_cosine"] = r.mean_cosine;
            return out;
        },
        py::arg("n_samples") = 800, py::arg("tau") = 0.2, py::arg("seed") = 0,
        "Eigenvectors of the sampled cube graph against the axis cosine modes");

    // ---- data generation ----

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, int scenes, uint64_t seed, const std::string& traj,
           int qa_per_scene, bool distinct_identities, double train_fraction) {
            scene::DatasetConfig dcfg;
            dcfg.scenes = scenes;
            dcfg.seed = seed;
            auto kind = scene::trajectory_kind_from_string(traj);
            if (!kind) throw std::invalid_argument("unknown trajectory kind: " + traj);
            dcfg.traj_kind = *kind;
            dcfg.qa_cfg.per_scene = qa_per_scene;
            dcfg.scene_cfg.distinct_identities = distinct_identities;
            dcfg.train_fraction = train_fraction;
            scene::Dataset ds = scene::generate_dataset(dcfg);
            return scene::write_dataset(ds, out_dir);
        },
        py::arg("out_dir"), py::arg("scenes") = 50, py::arg("seed") = 0,
        py::arg("traj") = "orbit", py::arg("qa_per_scene") = 5,
        py::arg("distinct_identities") = false, py::arg("train_fraction") = 0.9,
        "Write a scene/trajectory/QA dataset to a directory; returns QA rows written");

    // ---- emulated corpora ----

    m.def(
        "demo_corpus",
        [](int scenes, uint64_t seed, int dim, double noise_sigma, const std::string& mode) {
            DemoLab lab = make_demo(scenes, seed, dim, noise_sigma, mode);
            extraction::StackedCorpus st = extraction::stack_valid_rows(lab.ds, lab.corpus);
            return py::make_tuple(st.H, st.positions, st.scene_index);
        },
        py::arg("scenes") = 40, py::arg("seed") = 0, py::arg("dim") = 64,
        py::arg("noise_sigma") = 0.001, py::arg("mode") = "object",
        "Generate scenes, emulate pooled activations, and stack the valid rows; "
        "returns (H, world_positions, scene_index)");

    m.def(
        "demo_identity_basis",
        [](int scenes, uint64_t seed, int dim, double noise_sigma, int k) {
            DemoLab lab = make_demo(scenes, seed, dim, noise_sigma, "object");
            extraction::PrototypeTable table =
                extraction::cross_scene_prototypes(lab.ds, lab.corpus);
            extraction::IdentityBasis basis = extraction::identity_basis_svd(table, k);
            return basis.W;
        },
        py::arg("scenes") = 40, py::arg("seed") = 0, py::arg("dim") = 64,
        py::arg("noise_sigma") = 0.001, py::arg("k") = 23,
        "Orthonormal identity basis (d x k) from cross-scene prototypes");

    m.def(
        "demo_extraction_summary",
        [](int scenes, uint64_t seed, int dim, double noise_sigma, int k) {
            DemoLab lab = make_demo(scenes, seed, dim, noise_sigma, "object");
            extraction::PrototypeTable table =
                extraction::cross_scene_prototypes(lab.ds, lab.corpus);
            extraction::IdentityBasis basis = extraction::identity_basis_svd(table, k);
            emulator::CorpusActivations resid =
                extraction::residualize_corpus(lab.corpus, basis);
            extraction::StackedCorpus st = extraction::stack_valid_rows(lab.ds, resid);
            extraction::PcaEmbedding pca = extraction::pca_embed(st.H, 3);
            extraction::ProcrustesFit fit =
                extraction::procrustes_correlation(pca.Z, st.positions);
            py::dict out;
            out["procrustes_corr"] = fit.correlation;
            out["rsa_before"] = extraction::rsa(lab.ds, lab.corpus).mean;
            out["rsa_after"] = extraction::rsa(lab.ds, resid).mean;
            out["variance_fraction_identity_basis"] =
                extraction::variance_subspace_fraction(lab.corpus, basis.W);
            return out;
        },
        py::arg("scenes") = 40, py::arg("seed") = 0, py::arg("dim") = 64,
        py::arg("noise_sigma") = 0.001, py::arg("k") = 23,
        "Residualize against the identity basis, embed with PCA, and score the "
        "embedding against world geometry");

    // ---- extraction primitives ----

    m.def(
        "pca_embed",
        [](const Eigen::MatrixXd& rows, int n_components) {
            return extraction::pca_embed(rows, n_components).Z;
        },
        py::arg("rows"), py::arg("n_components") = 3,
        "Centered PCA scores of the rows");

    m.def(
        "procrustes_correlation",
        [](const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X) {
            return extraction::procrustes_correlation(Z, X).correlation;
        },
        py::arg("embedding"), py::arg("reference"),
        "Correlation after the best rotation + scale aligning embedding to reference");
}
