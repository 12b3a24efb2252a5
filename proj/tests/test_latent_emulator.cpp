#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "cogmap/latent_emulator.hpp"
#include "cogmap/projective_coverage.hpp"
#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"

using namespace cogmap;
using emulator::ActivationMatrix;
using emulator::CorpusMode;
using emulator::EmulatorConfig;
using emulator::EmulatorParams;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using scene::Vec3;

namespace {

scene::SceneObject make_object(scene::Shape sh, scene::Color col, const std::string& name,
                               const Vec3& pos, double size) {
    scene::SceneObject o;
    o.shape = sh;
    o.color = col;
    o.name = name;
    o.world_position = pos;
    o.size = size;
    return o;
}

EmulatorParams standard_params(double noise_sigma = 0.0) {
    EmulatorConfig cfg;
    cfg.noise_sigma = noise_sigma;
    scene::SceneGenConfig scfg;
    Rng rng(404);
    return emulator::make_emulator_params(cfg, scfg, rng);
}

scene::Trajectory two_frame_trajectory(const Vec3& eye, const Vec3& look_at) {
    scene::Trajectory traj;
    scene::CameraPose pose;
    pose.eye = eye;
    pose.look_at = look_at;
    traj.frames = {pose, pose};
    return traj;
}

double max_abs_diff(const MatrixXd& a, const MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

} // namespace

TEST_CASE("calibrated parameters form an orthonormal planted frame") {
    EmulatorParams p = standard_params();
    REQUIRE(p.d == 256);
    REQUIRE(p.Q_id.rows() == 256);
    REQUIRE(p.Q_id.cols() == 23);
    REQUIRE(p.C.rows() == 23);
    REQUIRE(p.C.cols() == 24);
    REQUIRE(p.S.rows() == 256);
    REQUIRE(p.S.cols() == 3);

    CHECK(std::abs(p.v_bg.norm() - 1.0) < 1e-12);
    CHECK(p.bulk > 0.0);

    MatrixXd qtq = p.Q_id.transpose() * p.Q_id;
    CHECK(max_abs_diff(qtq, MatrixXd::Identity(23, 23)) < 1e-12);
    CHECK((p.Q_id.transpose() * p.v_bg).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.S.transpose() * p.v_bg).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.S.transpose() * p.Q_id).cwiseAbs().maxCoeff() < 1e-12);

    // spatial columns are mutually orthogonal with one common scale
    MatrixXd sts = p.S.transpose() * p.S;
    CHECK(std::abs(sts(0, 1)) < 1e-14);
    CHECK(std::abs(sts(0, 2)) < 1e-14);
    CHECK(std::abs(sts(1, 2)) < 1e-14);
    CHECK(sts(0, 0) == doctest::Approx(sts(1, 1)).epsilon(1e-10));
    CHECK(sts(0, 0) == doctest::Approx(sts(2, 2)).epsilon(1e-10));

    // per-identity coefficients are centered across identities
    CHECK(p.C.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity vectors decompose into background plus subspace offsets") {
    EmulatorParams p = standard_params();
    for (int id : {0, 7, 23}) {
        VectorXd u = p.identity_vector(id);
        VectorXd expected = p.background() + p.Q_id * p.C.col(id);
        CHECK((u - expected).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_THROWS_AS((void)p.identity_vector(-1), std::out_of_range);
    CHECK_THROWS_AS((void)p.identity_vector(24), std::out_of_range);

    MatrixXd span = p.identity_span();
    REQUIRE(span.rows() == 256);
    REQUIRE(span.cols() == 24);
    CHECK((span.col(0) - p.v_bg).cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(span.rightCols(23), p.Q_id) == 0.0);
    CHECK(max_abs_diff(span.transpose() * span, MatrixXd::Identity(24, 24)) < 1e-12);
}

TEST_CASE("object latent is the planted model exactly at zero noise") {
    EmulatorParams p = standard_params();
    p.noise_sigma = 0.0;
    Rng rng(1);

    auto obj = make_object(scene::Shape::cube, scene::Color::red, "red_cube_small",
                           Vec3(0.8, -0.5, 0.2), 0.4);
    int id = scene::identity_index(obj.color, obj.shape);
    VectorXd h = p.object_latent(obj, rng);
    VectorXd expected = p.identity_vector(id) + p.S * (obj.world_position - p.spatial_center);
    CHECK((h - expected).cwiseAbs().maxCoeff() == 0.0);

    // distinct identities at the same position produce distinct latents
    auto obj2 = make_object(scene::Shape::sphere, scene::Color::blue, "blue_sphere",
                            obj.world_position, obj.size);
    VectorXd h2 = p.object_latent(obj2, rng);
    CHECK((h - h2).norm() > 1e-6);
}

TEST_CASE("scene activations at zero noise match the planted model per row") {
    EmulatorParams p = standard_params();
    p.noise_sigma = 0.0;
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::cube, scene::Color::red, "a", Vec3(1, 0, 0.3), 0.6));
    sc.objects.push_back(make_object(scene::Shape::sphere, scene::Color::green, "b", Vec3(-1, 1, 0.2), 0.4));
    sc.objects.push_back(make_object(scene::Shape::cylinder, scene::Color::yellow, "c", Vec3(0, -1, 0.4), 0.8));
    sc.scene_id = scene::make_scene_id(sc);

    Rng rng(5);
    ActivationMatrix am = emulator::emulate_scene_activations(p, sc, rng);
    REQUIRE(am.m() == 3);
    REQUIRE(am.d() == 256);
    CHECK(am.scene_id == sc.scene_id);
    CHECK(am.layer_tag == p.layer_tag);
    REQUIRE(am.object_names.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(am.object_names[static_cast<size_t>(i)] == sc.objects[static_cast<size_t>(i)].name);
        CHECK(am.valid[static_cast<size_t>(i)]);
        int id = scene::identity_index(sc.objects[static_cast<size_t>(i)].color,
                                       sc.objects[static_cast<size_t>(i)].shape);
        VectorXd expected =
            p.identity_vector(id) + p.S * (sc.objects[static_cast<size_t>(i)].world_position - p.spatial_center);
        CHECK((am.H.row(i).transpose() - expected).cwiseAbs().maxCoeff() == 0.0);
    }

    // with noise on, rows deviate from the clean model but stay finite
    p.noise_sigma = 0.01;
    Rng rng2(5);
    ActivationMatrix noisy = emulator::emulate_scene_activations(p, sc, rng2);
    CHECK(noisy.H.allFinite());
    CHECK(max_abs_diff(noisy.H, am.H) > 0.0);
}

TEST_CASE("patch blend: a full patch carries the latent, an empty patch the background") {
    EmulatorParams p = standard_params();
    p.noise_sigma = 0.0;
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::sphere, scene::Color::red, "ball", Vec3(0, 0, 1.0), 0.8));
    sc.scene_id = scene::make_scene_id(sc);

    auto traj = two_frame_trajectory(Vec3(2, 0, 1.0), Vec3(0, 0, 1.0));
    auto cov = coverage::trajectory_coverage(sc, traj, 16, 16, 16);
    Rng rng(9);
    auto pa = emulator::emulate_patch_activations(p, sc, cov, rng);
    REQUIRE(pa.slots == 1);
    REQUIRE(pa.patches == 256);

    int center = 8 * 16 + 8;  // strictly inside the projected disk
    int corner = 0;           // far outside it
    REQUIRE(pa.slot_coverage[0](center, 0) == 1.0);
    REQUIRE(pa.slot_coverage[0](corner, 0) == 0.0);

    Rng latent_rng(9);
    VectorXd latent = p.object_latent(sc.objects[0], latent_rng);
    CHECK((pa.slot_data[0].row(center).transpose() - latent).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pa.slot_data[0].row(corner).transpose() - p.background()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full visibility at zero noise recovers the planted vector through pooling") {
    EmulatorParams p = standard_params();
    p.noise_sigma = 0.0;
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::sphere, scene::Color::blue, "ball", Vec3(0, 0, 1.0), 0.8));
    sc.scene_id = scene::make_scene_id(sc);

    // the sphere's angular radius exceeds the corner ray angle, so every patch is full
    auto traj = two_frame_trajectory(Vec3(0.6, 0, 1.0), Vec3(0, 0, 1.0));
    auto cov = coverage::trajectory_coverage(sc, traj, 16, 16, 16);
    Rng rng(11);
    auto pa = emulator::emulate_patch_activations(p, sc, cov, rng);
    REQUIRE(pa.slot_coverage[0].col(0).minCoeff() == 1.0);

    ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
    REQUIRE(am.valid[0]);
    int id = scene::identity_index(sc.objects[0].color, sc.objects[0].shape);
    VectorXd expected = p.identity_vector(id) + p.S * (sc.objects[0].world_position - p.spatial_center);
    CHECK((am.H.row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pooling matches hand-computed weighted means") {
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::cube, scene::Color::red, "only", Vec3(0, 0, 0.3), 0.6));
    sc.scene_id = scene::make_scene_id(sc);

    EmulatorParams p;
    p.d = 4;
    p.kappa = 0.2;

    VectorXd h1(4), h2(4);
    h1 << 1.0, -2.0, 0.5, 3.0;
    h2 << 0.0, 4.0, -1.0, 2.0;

    emulator::PatchActivations pa;
    pa.slots = 1;
    pa.patches = 2;
    pa.slot_data.emplace_back(2, 4);
    pa.slot_data[0].row(0) = h1.transpose();
    pa.slot_data[0].row(1) = h2.transpose();
    pa.slot_coverage.emplace_back(2, 1);

    SUBCASE("two qualifying patches use coverage weights") {
        pa.slot_coverage[0] << 0.5, 0.25;
        ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
        REQUIRE(am.valid[0]);
        VectorXd expected = (0.5 * h1 + 0.25 * h2) / 0.75;
        CHECK((am.H.row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-15);
    }

    SUBCASE("a single full patch is returned as-is") {
        pa.slot_coverage[0] << 1.0, 0.1;  // second patch below kappa
        ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
        REQUIRE(am.valid[0]);
        CHECK((am.H.row(0).transpose() - h1).cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("threshold above every coverage flags the object invalid") {
        pa.slot_coverage[0] << 0.5, 0.25;
        p.kappa = 0.9;
        ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
        CHECK(!am.valid[0]);
        CHECK(am.H.row(0).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("pooling averages only slots with a qualifying patch") {
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::cube, scene::Color::red, "only", Vec3(0, 0, 0.3), 0.6));
    sc.scene_id = scene::make_scene_id(sc);

    EmulatorParams p;
    p.d = 3;
    p.kappa = 0.25;

    VectorXd seen(3), unseen(3);
    seen << 2.0, -1.0, 0.5;
    unseen << 100.0, 100.0, 100.0;

    emulator::PatchActivations pa;
    pa.slots = 2;
    pa.patches = 1;
    pa.slot_data.emplace_back(1, 3);
    pa.slot_data[0].row(0) = seen.transpose();
    pa.slot_data.emplace_back(1, 3);
    pa.slot_data[1].row(0) = unseen.transpose();
    pa.slot_coverage.emplace_back(1, 1);
    pa.slot_coverage[0] << 1.0;
    pa.slot_coverage.emplace_back(1, 1);
    pa.slot_coverage[1] << 0.0;  // object absent in the second slot

    ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
    REQUIRE(am.valid[0]);
    CHECK((am.H.row(0).transpose() - seen).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("an object occluded in every frame comes out flagged invalid") {
    EmulatorParams p = standard_params();
    scene::Scene sc;
    sc.objects.push_back(make_object(scene::Shape::sphere, scene::Color::red, "front", Vec3(2, 0, 0.4), 0.8));
    sc.objects.push_back(make_object(scene::Shape::sphere, scene::Color::blue, "hidden", Vec3(-2, 0, 0.2), 0.4));
    sc.scene_id = scene::make_scene_id(sc);

    auto traj = two_frame_trajectory(Vec3(6, 0, 0.4), Vec3(2, 0, 0.4));
    auto cov = coverage::trajectory_coverage(sc, traj, 16, 16, 16);
    Rng rng(13);
    auto pa = emulator::emulate_patch_activations(p, sc, cov, rng);
    ActivationMatrix am = emulator::pool_object_tokens(pa, sc, p);
    CHECK(am.valid[0]);
    CHECK(!am.valid[1]);
}

TEST_CASE("corpus generation is deterministic and stable under prefix subsets") {
    scene::DatasetConfig dcfg;
    dcfg.scenes = 12;
    dcfg.seed = 2025;
    auto ds = scene::generate_dataset(dcfg);
    EmulatorParams p = standard_params(0.001);

    auto a = emulator::build_corpus_activations(ds, p, CorpusMode::object_level, 5);
    auto b = emulator::build_corpus_activations(ds, p, CorpusMode::object_level, 5);
    REQUIRE(a.per_scene.size() == 12);
    REQUIRE(b.per_scene.size() == 12);
    for (size_t i = 0; i < a.per_scene.size(); ++i) {
        CHECK(max_abs_diff(a.per_scene[i].H, b.per_scene[i].H) == 0.0);
        CHECK(a.per_scene[i].scene_id == b.per_scene[i].scene_id);
    }

    auto c = emulator::build_corpus_activations(ds, p, CorpusMode::object_level, 6);
    double delta = 0.0;
    for (size_t i = 0; i < a.per_scene.size(); ++i)
        delta = std::max(delta, max_abs_diff(a.per_scene[i].H, c.per_scene[i].H));
    CHECK(delta > 0.0);

    scene::Dataset prefix = ds;
    prefix.scenes.resize(5);
    auto d = emulator::build_corpus_activations(prefix, p, CorpusMode::object_level, 5);
    REQUIRE(d.per_scene.size() == 5);
    for (size_t i = 0; i < d.per_scene.size(); ++i)
        CHECK(max_abs_diff(a.per_scene[i].H, d.per_scene[i].H) == 0.0);
}

TEST_CASE("projective corpus rows are finite with per-scene object counts") {
    scene::DatasetConfig dcfg;
    dcfg.scenes = 4;
    dcfg.seed = 77;
    auto ds = scene::generate_dataset(dcfg);
    EmulatorParams p = standard_params(0.001);

    auto corpus = emulator::build_corpus_activations(ds, p, CorpusMode::projective, 3);
    REQUIRE(corpus.per_scene.size() == 4);
    for (size_t i = 0; i < corpus.per_scene.size(); ++i) {
        const auto& am = corpus.per_scene[i];
        CHECK(am.m() == static_cast<int>(ds.scenes[i].objects.size()));
        CHECK(am.d() == 256);
        CHECK(am.H.allFinite());
        CHECK(am.scene_id == ds.scenes[i].scene_id);
    }

    auto again = emulator::build_corpus_activations(ds, p, CorpusMode::projective, 3);
    for (size_t i = 0; i < corpus.per_scene.size(); ++i)
        CHECK(max_abs_diff(corpus.per_scene[i].H, again.per_scene[i].H) == 0.0);
}

TEST_CASE("realized variance shares hit the configured targets") {
    scene::DatasetConfig dcfg;
    dcfg.scenes = 500;
    dcfg.seed = 321;
    auto ds = scene::generate_dataset(dcfg);

    EmulatorConfig ecfg;
    scene::SceneGenConfig scfg;
    Rng rng(77);
    EmulatorParams p = emulator::make_emulator_params(ecfg, scfg, rng);
    auto corpus = emulator::build_corpus_activations(ds, p, CorpusMode::object_level, 99);
    auto shares = emulator::realized_variance_shares(p, corpus);

    CHECK(std::abs(shares.identity / p.target_identity_share - 1.0) < 0.10);
    CHECK(std::abs(shares.spatial / p.target_spatial_share - 1.0) < 0.10);

    double sq = 0.0;
    long rows = 0;
    for (const auto& am : corpus.per_scene) {
        sq += am.H.squaredNorm();
        rows += am.H.rows();
    }
    CHECK(sq / static_cast<double>(rows) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("an empty dataset produces an empty corpus") {
    scene::DatasetConfig dcfg;
    dcfg.scenes = 0;
    dcfg.seed = 1;
    auto ds = scene::generate_dataset(dcfg);
    EmulatorParams p = standard_params();
    auto corpus = emulator::build_corpus_activations(ds, p, CorpusMode::object_level, 3);
    CHECK(corpus.per_scene.empty());
}

TEST_CASE("activation json round trip is exact") {
    SUBCASE("emulated matrix with noise") {
        EmulatorParams p = standard_params(0.01);
        Rng scene_rng(31);
        scene::SceneGenConfig scfg;
        auto sc = scene::sample_scene(scfg, scene_rng);
        Rng rng(32);
        ActivationMatrix am = emulator::emulate_scene_activations(p, sc, rng);

        ActivationMatrix back = emulator::activations_from_json(emulator::activations_to_json(am));
        CHECK(back.scene_id == am.scene_id);
        CHECK(back.layer_tag == am.layer_tag);
        CHECK(back.object_names == am.object_names);
        CHECK(back.valid == am.valid);
        REQUIRE(back.H.rows() == am.H.rows());
        REQUIRE(back.H.cols() == am.H.cols());
        CHECK(max_abs_diff(back.H, am.H) == 0.0);
    }

    SUBCASE("invalid rows survive the round trip") {
        ActivationMatrix am;
        am.scene_id = "s_0123456789ab";
        am.layer_tag = "emu_mid";
        am.H = MatrixXd::Zero(2, 3);
        am.H << 0.1, -2.5e-17, 3.0, 1.0 / 3.0, 0.0, -7.25;
        am.object_names = {"front", "hidden"};
        am.valid = {true, false};
        ActivationMatrix back = emulator::activations_from_json(emulator::activations_to_json(am));
        CHECK(back.valid == am.valid);
        CHECK(max_abs_diff(back.H, am.H) == 0.0);
        CHECK(back.object_names == am.object_names);
    }
}
