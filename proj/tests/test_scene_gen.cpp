#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cogmap/rng.hpp"
#include "cogmap/scene_gen.hpp"
#include "doctest.h"

using cogmap::Rng;
namespace scene = cogmap::scene;
namespace fs = std::filesystem;
using scene::Vec3;

TEST_CASE("identity_index is a color-major bijection over 24 slots") {
    CHECK(scene::identity_index(scene::Color::red, scene::Shape::cube) == 0);
    CHECK(scene::identity_index(scene::Color::red, scene::Shape::cylinder) == 2);
    CHECK(scene::identity_index(scene::Color::green, scene::Shape::cube) == 3);
    std::set<int> all;
    for (int c = 0; c < scene::kNumColors; ++c)
        for (int s = 0; s < scene::kNumShapes; ++s)
            all.insert(scene::identity_index(static_cast<scene::Color>(c),
                                             static_cast<scene::Shape>(s)));
    CHECK(all.size() == scene::kNumIdentities);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 23);
}

TEST_CASE("color and shape strings round-trip") {
    for (int c = 0; c < scene::kNumColors; ++c) {
        auto col = static_cast<scene::Color>(c);
        auto back = scene::color_from_string(scene::to_string(col));
        REQUIRE(back.has_value());
        CHECK(*back == col);
    }
    for (int s = 0; s < scene::kNumShapes; ++s) {
        auto shp = static_cast<scene::Shape>(s);
        auto back = scene::shape_from_string(scene::to_string(shp));
        REQUIRE(back.has_value());
        CHECK(*back == shp);
    }
    CHECK(!scene::color_from_string("mauve").has_value());
    CHECK(!scene::shape_from_string("torus").has_value());
}

TEST_CASE("sample_scene respects bounds, sizes, separation and naming") {
    scene::SceneGenConfig cfg;
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        auto sc = scene::sample_scene(cfg, rng);
        CHECK(sc.size() >= cfg.min_objects);
        CHECK(sc.size() <= cfg.max_objects);
        CHECK(sc.scene_id.rfind("s_", 0) == 0);
        CHECK(sc.scene_id.size() == 14);

        std::set<std::string> names;
        for (const auto& o : sc.objects) {
            CHECK(std::abs(o.world_position.x()) <= cfg.bound);
            CHECK(std::abs(o.world_position.y()) <= cfg.bound);
            CHECK(o.world_position.z() == doctest::Approx(o.size / 2).epsilon(1e-12));
            CHECK(std::count(cfg.sizes.begin(), cfg.sizes.end(), o.size) == 1);
            names.insert(o.name);
        }
        CHECK(names.size() == static_cast<size_t>(sc.size()));

        for (int i = 0; i < sc.size(); ++i)
            for (int j = i + 1; j < sc.size(); ++j) {
                const auto &a = sc.objects[i], &b = sc.objects[j];
                double dist = (Vec3(a.world_position.x(), a.world_position.y(), 0) -
                               Vec3(b.world_position.x(), b.world_position.y(), 0))
                                  .norm();
                CHECK(dist - a.radius() - b.radius() >= cfg.min_separation - 1e-12);
            }
    }
}

TEST_CASE("distinct_identities forbids repeated color-shape pairs") {
    scene::SceneGenConfig cfg;
    cfg.distinct_identities = true;
    cfg.min_objects = 6;
    cfg.max_objects = 8;
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto sc = scene::sample_scene(cfg, rng);
        std::set<int> ids;
        for (const auto& o : sc.objects) ids.insert(o.identity());
        CHECK(ids.size() == static_cast<size_t>(sc.size()));
    }
}

TEST_CASE("scene_id tracks content") {
    scene::SceneGenConfig cfg;
    Rng rng(8);
    auto sc = scene::sample_scene(cfg, rng);
    CHECK(scene::make_scene_id(sc) == sc.scene_id);
    auto moved = sc;
    moved.objects[0].world_position.x() += 0.125;
    CHECK(scene::make_scene_id(moved) != sc.scene_id);
}

TEST_CASE("camera basis is orthonormal and aims at the target") {
    scene::CameraPose pose;
    pose.eye = Vec3(4, -2, 3);
    pose.look_at = Vec3(0.5, 0.25, 0.5);
    auto b = scene::camera_basis(pose);
    CHECK(b.right.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.up.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.forward.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(b.right.dot(b.up)) <= 1e-12);
    CHECK(std::abs(b.right.dot(b.forward)) <= 1e-12);
    CHECK(std::abs(b.up.dot(b.forward)) <= 1e-12);

    Vec3 cc = scene::camera_coords(pose, pose.look_at);
    double dist = (pose.look_at - pose.eye).norm();
    CHECK(cc.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cc.y() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cc.z() == doctest::Approx(dist).epsilon(1e-12));
}

TEST_CASE("orbit trajectory stays on its circle") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    Rng rng(3);
    auto sc = scene::sample_scene(scfg, rng);
    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::orbit, tcfg, rng);
    REQUIRE(static_cast<int>(tr.frames.size()) == tcfg.frames);
    double rad = std::hypot(tr.frames[0].eye.x(), tr.frames[0].eye.y());
    double alt = tr.frames[0].eye.z();
    CHECK((rad == doctest::Approx(tcfg.radii[0]) || rad == doctest::Approx(tcfg.radii[1])));
    CHECK((alt == doctest::Approx(tcfg.altitudes[0]) ||
           alt == doctest::Approx(tcfg.altitudes[1])));
    for (const auto& f : tr.frames) {
        CHECK(std::hypot(f.eye.x(), f.eye.y()) == doctest::Approx(rad).epsilon(1e-12));
        CHECK(f.eye.z() == doctest::Approx(alt).epsilon(1e-12));
        CHECK(f.look_at.z() == doctest::Approx(tcfg.look_z).epsilon(1e-12));
        CHECK(f.roll == 0.0);
    }
}

TEST_CASE("free6dof with zero jitter degenerates to a clean arc") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    tcfg.eye_jitter = 0;
    tcfg.radius_jitter = 0;
    tcfg.altitude_jitter = 0;
    tcfg.target_jitter = 0;
    tcfg.roll_jitter = 0;
    Rng rng(4);
    auto sc = scene::sample_scene(scfg, rng);
    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::free6dof, tcfg, rng);
    double rad = std::hypot(tr.frames[0].eye.x(), tr.frames[0].eye.y());
    for (const auto& f : tr.frames) {
        CHECK(std::hypot(f.eye.x(), f.eye.y()) == doctest::Approx(rad).epsilon(1e-12));
        CHECK(f.eye.z() == doctest::Approx(tr.frames[0].eye.z()).epsilon(1e-12));
        CHECK(f.look_at == Vec3(0, 0, tcfg.look_z));
        CHECK(f.roll == 0.0);
    }
}

TEST_CASE("person_walk keeps the eye inside bounds and off objects") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    Rng rng(6);
    auto sc = scene::sample_scene(scfg, rng);
    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::person_walk, tcfg, rng);
    REQUIRE(static_cast<int>(tr.frames.size()) == tcfg.frames);
    for (const auto& f : tr.frames) {
        CHECK(f.eye.z() == doctest::Approx(tcfg.walk_height).epsilon(1e-12));
        CHECK(std::abs(f.eye.x()) <= sc.bound);
        CHECK(std::abs(f.eye.y()) <= sc.bound);
    }
}

TEST_CASE("generated QA agrees with the ground-truth answerer") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    scene::QAConfig qcfg;
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto sc = scene::sample_scene(scfg, rng);
        auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::orbit, tcfg, rng);
        auto items = scene::generate_qa(sc, tr, qcfg, rng);
        CHECK(static_cast<int>(items.size()) == qcfg.per_scene);
        for (const auto& item : items) {
            CHECK(item.scene_id == sc.scene_id);
            CHECK(scene::answer_for(item, sc, tr.frames.front()) == item.answer);
            for (size_t i = 0; i < item.object_indices.size(); ++i) {
                int idx = item.object_indices[i];
                CHECK(sc.objects[idx].name == item.object_names[i]);
                CHECK((sc.objects[idx].world_position - item.object_coords[i]).norm() <= 1e-12);
            }
            if (item.kind == scene::QAKind::relative_position) {
                CHECK((item.answer == "yes" || item.answer == "no"));
                CHECK(item.object_indices.size() == 2);
            } else {
                CHECK(item.object_indices.size() == 3);
                CHECK((item.answer == item.object_names[1] || item.answer == item.object_names[2]));
            }
        }
    }
}

TEST_CASE("answer_from_positions matches the scene answer at true positions") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    scene::QAConfig qcfg;
    Rng rng(13);
    auto sc = scene::sample_scene(scfg, rng);
    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::orbit, tcfg, rng);
    auto items = scene::generate_qa(sc, tr, qcfg, rng);
    for (const auto& item : items) {
        std::vector<Vec3> pos;
        for (int idx : item.object_indices) pos.push_back(sc.objects[idx].world_position);
        CHECK(scene::answer_from_positions(item, pos, tr.frames.front()) == item.answer);
    }
}

TEST_CASE("sample_derangement leaves no fixed point") {
    Rng rng(9);
    for (int n : {2, 3, 5, 9}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto p = scene::sample_derangement(n, rng);
            REQUIRE(static_cast<int>(p.size()) == n);
            std::set<int> seen(p.begin(), p.end());
            CHECK(static_cast<int>(seen.size()) == n);
            for (int i = 0; i < n; ++i) CHECK(p[i] != i);
        }
    }
    auto two = scene::sample_derangement(2, rng);
    CHECK(two == std::vector<int>{1, 0});
    CHECK_THROWS(scene::sample_derangement(1, rng));
}

namespace {
scene::Scene distinct_scene(Rng& rng) {
    scene::SceneGenConfig cfg;
    cfg.distinct_identities = true;
    cfg.min_objects = 4;
    cfg.max_objects = 6;
    return scene::sample_scene(cfg, rng);
}

template <typename T>
std::multiset<T> sorted_multiset(const std::vector<T>& v) {
    return std::multiset<T>(v.begin(), v.end());
}
} // namespace

TEST_CASE("color_swap permutes colors and touches nothing else") {
    Rng rng(10);
    for (int trial = 0; trial < 15; ++trial) {
        auto base = distinct_scene(rng);
        auto cf = scene::make_counterfactual(base, scene::CounterfactualKind::color_swap, rng);
        REQUIRE(cf.scene.size() == base.size());
        REQUIRE(static_cast<int>(cf.perm.size()) == base.size());
        std::vector<scene::Color> before, after;
        for (int i = 0; i < base.size(); ++i) {
            CHECK(cf.perm[i] != i);
            CHECK(cf.scene.objects[i].color == base.objects[cf.perm[i]].color);
            CHECK(cf.scene.objects[i].shape == base.objects[i].shape);
            CHECK(cf.scene.objects[i].size == base.objects[i].size);
            CHECK((cf.scene.objects[i].world_position - base.objects[i].world_position).norm() ==
                  0.0);
            before.push_back(base.objects[i].color);
            after.push_back(cf.scene.objects[i].color);
        }
        CHECK(sorted_multiset(before) == sorted_multiset(after));
    }
}

TEST_CASE("position_swap permutes floor positions and keeps identities") {
    Rng rng(11);
    for (int trial = 0; trial < 15; ++trial) {
        auto base = distinct_scene(rng);
        auto cf = scene::make_counterfactual(base, scene::CounterfactualKind::position_swap, rng);
        std::vector<double> before_xy, after_xy;
        for (int i = 0; i < base.size(); ++i) {
            CHECK(cf.perm[i] != i);
            CHECK(cf.scene.objects[i].color == base.objects[i].color);
            CHECK(cf.scene.objects[i].shape == base.objects[i].shape);
            CHECK(cf.scene.objects[i].world_position.x() ==
                  base.objects[cf.perm[i]].world_position.x());
            CHECK(cf.scene.objects[i].world_position.y() ==
                  base.objects[cf.perm[i]].world_position.y());
            // z stays pinned to the object's own size
            CHECK(cf.scene.objects[i].world_position.z() ==
                  doctest::Approx(cf.scene.objects[i].size / 2).epsilon(1e-12));
            before_xy.push_back(base.objects[i].world_position.x());
            after_xy.push_back(cf.scene.objects[i].world_position.x());
        }
        CHECK(sorted_multiset(before_xy) == sorted_multiset(after_xy));
    }
}

TEST_CASE("make_counterfactual requires 4 distinct identities") {
    scene::SceneGenConfig cfg;
    cfg.min_objects = 3;
    cfg.max_objects = 3;
    Rng rng(12);
    auto sc = scene::sample_scene(cfg, rng);
    CHECK_THROWS(scene::make_counterfactual(sc, scene::CounterfactualKind::color_swap, rng));
}

TEST_CASE("scene and trajectory json round-trips exactly") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    Rng rng(14);
    auto sc = scene::sample_scene(scfg, rng);
    auto back = scene::scene_from_json(scene::scene_to_json(sc));
    CHECK(back.scene_id == sc.scene_id);
    REQUIRE(back.size() == sc.size());
    for (int i = 0; i < sc.size(); ++i) {
        CHECK(back.objects[i].name == sc.objects[i].name);
        CHECK(back.objects[i].color == sc.objects[i].color);
        CHECK(back.objects[i].shape == sc.objects[i].shape);
        CHECK(back.objects[i].size == sc.objects[i].size);
        CHECK((back.objects[i].world_position - sc.objects[i].world_position).norm() == 0.0);
    }

    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::free6dof, tcfg, rng);
    auto tr_back = scene::trajectory_from_json(scene::trajectory_to_json(tr));
    CHECK(tr_back.kind == tr.kind);
    CHECK(tr_back.fov_deg == tr.fov_deg);
    REQUIRE(tr_back.frames.size() == tr.frames.size());
    for (size_t t = 0; t < tr.frames.size(); ++t) {
        CHECK((tr_back.frames[t].eye - tr.frames[t].eye).norm() == 0.0);
        CHECK((tr_back.frames[t].look_at - tr.frames[t].look_at).norm() == 0.0);
        CHECK(tr_back.frames[t].roll == tr.frames[t].roll);
    }
}

TEST_CASE("qa jsonl row round-trips exactly") {
    scene::SceneGenConfig scfg;
    scene::TrajectoryConfig tcfg;
    scene::QAConfig qcfg;
    Rng rng(15);
    auto sc = scene::sample_scene(scfg, rng);
    auto tr = scene::generate_trajectory(sc, scene::TrajectoryKind::orbit, tcfg, rng);
    for (const auto& item : scene::generate_qa(sc, tr, qcfg, rng)) {
        auto back = scene::qa_from_jsonl_row(scene::qa_to_jsonl_row(item));
        CHECK(back.scene_id == item.scene_id);
        CHECK(back.question == item.question);
        CHECK(back.answer == item.answer);
        CHECK(back.kind == item.kind);
        CHECK(back.object_names == item.object_names);
        CHECK(back.object_indices == item.object_indices);
        REQUIRE(back.object_coords.size() == item.object_coords.size());
        for (size_t i = 0; i < item.object_coords.size(); ++i)
            CHECK((back.object_coords[i] - item.object_coords[i]).norm() == 0.0);
    }
}

TEST_CASE("generate_dataset splits scenes disjointly at the configured fraction") {
    scene::DatasetConfig cfg;
    cfg.scenes = 40;
    cfg.seed = 77;
    auto ds = scene::generate_dataset(cfg);
    REQUIRE(static_cast<int>(ds.scenes.size()) == 40);
    REQUIRE(ds.trajectories.size() == ds.scenes.size());
    REQUIRE(ds.qa.size() == ds.scenes.size());
    CHECK(static_cast<int>(ds.train_scene_indices.size()) == 36);
    CHECK(static_cast<int>(ds.val_scene_indices.size()) == 4);
    std::set<int> train(ds.train_scene_indices.begin(), ds.train_scene_indices.end());
    for (int v : ds.val_scene_indices) CHECK(train.count(v) == 0);

    std::set<std::string> ids;
    for (const auto& sc : ds.scenes) ids.insert(sc.scene_id);
    CHECK(ids.size() == ds.scenes.size());
}

TEST_CASE("generate_dataset is deterministic per seed") {
    scene::DatasetConfig cfg;
    cfg.scenes = 8;
    cfg.seed = 123;
    auto a = scene::generate_dataset(cfg);
    auto b = scene::generate_dataset(cfg);
    for (size_t s = 0; s < a.scenes.size(); ++s) {
        CHECK(a.scenes[s].scene_id == b.scenes[s].scene_id);
        CHECK(scene::scene_to_json(a.scenes[s]) == scene::scene_to_json(b.scenes[s]));
    }
    cfg.seed = 124;
    auto c = scene::generate_dataset(cfg);
    CHECK(a.scenes[0].scene_id != c.scenes[0].scene_id);
}

TEST_CASE("dataset directory round-trip preserves geometry and splits") {
    scene::DatasetConfig cfg;
    cfg.scenes = 10;
    cfg.seed = 31;
    auto ds = scene::generate_dataset(cfg);
    auto dir = (fs::temp_directory_path() / "cogmap_dataset_roundtrip").string();
    fs::remove_all(dir);
    int qa_rows = scene::write_dataset(ds, dir);
    int expected = 0;
    for (const auto& items : ds.qa) expected += static_cast<int>(items.size());
    CHECK(qa_rows == expected);

    auto back = scene::read_dataset(dir);
    CHECK(back.config.scenes == cfg.scenes);
    CHECK(back.config.seed == cfg.seed);
    CHECK(back.config.traj_kind == cfg.traj_kind);
    REQUIRE(back.scenes.size() == ds.scenes.size());
    for (size_t s = 0; s < ds.scenes.size(); ++s) {
        CHECK(back.scenes[s].scene_id == ds.scenes[s].scene_id);
        for (int i = 0; i < ds.scenes[s].size(); ++i)
            CHECK((back.scenes[s].objects[i].world_position -
                   ds.scenes[s].objects[i].world_position)
                      .norm() == 0.0);
    }
    CHECK(back.train_scene_indices == ds.train_scene_indices);
    CHECK(back.val_scene_indices == ds.val_scene_indices);
    REQUIRE(back.qa.size() == ds.qa.size());
    for (size_t s = 0; s < ds.qa.size(); ++s) {
        REQUIRE(back.qa[s].size() == ds.qa[s].size());
        for (size_t q = 0; q < ds.qa[s].size(); ++q)
            CHECK(back.qa[s][q].question == ds.qa[s][q].question);
    }
}

TEST_CASE("tiny datasets split sanely") {
    scene::DatasetConfig cfg;
    cfg.seed = 8;

    cfg.scenes = 0;
    auto empty = scene::generate_dataset(cfg);
    CHECK(empty.scenes.empty());
    CHECK(empty.train_scene_indices.empty());
    CHECK(empty.val_scene_indices.empty());

    cfg.scenes = 1;
    auto one = scene::generate_dataset(cfg);
    REQUIRE(one.scenes.size() == 1);
    CHECK(one.train_scene_indices.size() + one.val_scene_indices.size() == 1);

    cfg.scenes = 2;
    auto two = scene::generate_dataset(cfg);
    CHECK(two.train_scene_indices.size() == 1);
    CHECK(two.val_scene_indices.size() == 1);
}
