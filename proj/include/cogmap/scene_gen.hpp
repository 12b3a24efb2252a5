#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cogmap/rng.hpp"

namespace cogmap::scene {

using Vec3 = Eigen::Vector3d;

enum class Color { red, green, blue, yellow, cyan, magenta, orange, purple };
enum class Shape { cube, sphere, cylinder };

constexpr int kNumColors = 8;
constexpr int kNumShapes = 3;
constexpr int kNumIdentities = kNumColors * kNumShapes;

const char* to_string(Color c);
const char* to_string(Shape s);
std::optional<Color> color_from_string(const std::string& s);
std::optional<Shape> shape_from_string(const std::string& s);

// identity index in [0, 24): color-major
inline int identity_index(Color c, Shape s) {
    return static_cast<int>(c) * kNumShapes + static_cast<int>(s);
}

struct SceneObject {
    std::string name;     // "color_shape", "_2"/"_3" suffix on repeats
    Shape shape = Shape::cube;
    Color color = Color::red;
    double size = 0.6;    // one of {0.4, 0.6, 0.8}
    Vec3 world_position = Vec3::Zero();  // z pinned to size/2

    int identity() const { return identity_index(color, shape); }
    double radius() const { return 0.5 * size; }
};

struct SceneGenConfig {
    int min_objects = 3;
    int max_objects = 8;
    double bound = 4.0;          // positions in [-bound, bound]^2
    double min_separation = 0.2; // edge-to-edge in the floor plane
    std::array<double, 3> sizes = {0.4, 0.6, 0.8};
    bool distinct_identities = false; // forbid repeated (color, shape) pairs
    int max_attempts = 10000;
};

struct Scene {
    std::string scene_id;  // "s_" + 12 hex digits of the content hash
    std::vector<SceneObject> objects;
    double bound = 4.0;

    int size() const { return static_cast<int>(objects.size()); }
};

// stable content hash; scene_id = "s_" + first 12 hex digits
uint64_t scene_content_hash(const Scene& s);
std::string make_scene_id(const Scene& s);

[[nodiscard]] Scene sample_scene(const SceneGenConfig& cfg, Rng& rng);

// ---- trajectories ----

enum class TrajectoryKind { orbit, free6dof, person_walk };

const char* to_string(TrajectoryKind k);
std::optional<TrajectoryKind> trajectory_kind_from_string(const std::string& s);

struct CameraPose {
    Vec3 eye = Vec3::Zero();
    Vec3 look_at = Vec3::Zero();
    double roll = 0.0;  // radians about the view axis
};

// orthonormal camera basis; right-handed, world up (0,0,1)
struct CameraBasis {
    Vec3 right, up, forward;
};
CameraBasis camera_basis(const CameraPose& pose);

// camera-frame coordinates (right, up, depth) of a world point
Vec3 camera_coords(const CameraPose& pose, const Vec3& p);

struct Trajectory {
    TrajectoryKind kind = TrajectoryKind::orbit;
    double fov_deg = 60.0;
    std::vector<CameraPose> frames;  // T = 16 by default
};

struct TrajectoryConfig {
    int frames = 16;
    double fov_deg = 60.0;
    // orbit
    std::array<double, 2> altitudes = {3.5, 4.5};
    std::array<double, 2> radii = {8.0, 9.0};
    double look_z = 0.5;
    // free6dof jitter amplitudes
    double eye_jitter = 1.2;
    double radius_jitter = 1.0;
    double altitude_jitter = 0.8;
    double target_jitter = 1.5;
    double roll_jitter = 0.15;
    // person_walk
    double walk_height = 1.5;
    double speed_mean = 0.5;
    double speed_amp = 0.25;
    double yaw_range_deg = 25.0;
    double pitch_range_deg = 12.0;
    double object_margin = 0.6;  // xy distance from eye to object centers
    double bounds_margin = 0.3;
    int walk_retries = 40;
};

[[nodiscard]] Trajectory generate_trajectory(const Scene& scene, TrajectoryKind kind,
                                             const TrajectoryConfig& cfg, Rng& rng);

// ---- QA ----

enum class QAKind { relative_position, distance_order };

const char* to_string(QAKind k);

struct QAItem {
    std::string scene_id;
    std::string question;
    std::string answer;
    QAKind kind = QAKind::relative_position;
    std::vector<std::string> object_names;
    std::vector<Vec3> object_coords;
    std::vector<int> object_indices;  // positions in Scene::objects
};

struct QAConfig {
    int per_scene = 5;
    int max_attempts = 200;
};

// Questions are answered against the first frame's camera pose: left/right and
// front/behind use that frame's camera axes, distances are 3D world distances.
[[nodiscard]] std::vector<QAItem> generate_qa(const Scene& scene, const Trajectory& traj,
                                              const QAConfig& cfg, Rng& rng);

// ground truth for one item against (possibly counterfactual) scene geometry
std::string answer_for(const QAItem& item, const Scene& scene, const CameraPose& first_frame);

// same question logic evaluated at supplied positions (one per bound object);
// lets a readout head answer from predicted rather than true coordinates
std::string answer_from_positions(const QAItem& item, const std::vector<Vec3>& positions,
                                  const CameraPose& first_frame);

// ---- counterfactuals ----

enum class CounterfactualKind { color_swap, position_swap };

const char* to_string(CounterfactualKind k);

struct Counterfactual {
    Scene scene;
    CounterfactualKind kind = CounterfactualKind::color_swap;
    std::vector<int> perm;  // derangement: object i takes the factor of perm[i]
};

// pre: >= 4 objects with distinct identities.
// color_swap permutes colors across object indices (positions untouched);
// position_swap permutes floor positions (identities untouched, z stays own size/2).
[[nodiscard]] Counterfactual make_counterfactual(const Scene& base, CounterfactualKind kind, Rng& rng);

// rejection-sampled permutation with perm[i] != i for all i; n >= 2
std::vector<int> sample_derangement(int n, Rng& rng);

// ---- dataset ----

struct DatasetConfig {
    int scenes = 1000;
    TrajectoryKind traj_kind = TrajectoryKind::orbit;
    uint64_t seed = 0;
    double train_fraction = 0.9;
    SceneGenConfig scene_cfg;
    TrajectoryConfig traj_cfg;
    QAConfig qa_cfg;
};

struct Dataset {
    DatasetConfig config;
    std::vector<Scene> scenes;
    std::vector<Trajectory> trajectories;       // parallel to scenes
    std::vector<std::vector<QAItem>> qa;        // parallel to scenes
    std::vector<int> train_scene_indices;       // scene-disjoint split
    std::vector<int> val_scene_indices;
};

[[nodiscard]] Dataset generate_dataset(const DatasetConfig& cfg);

// serialization (scenes/<id>.json, trajectories/<id>.json, train.jsonl,
// val.jsonl, splits.json, dataset.kv); returns number of QA rows written
int write_dataset(const Dataset& ds, const std::string& out_dir);

std::string scene_to_json(const Scene& s);
Scene scene_from_json(const std::string& text);
std::string trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const std::string& text);
std::string qa_to_jsonl_row(const QAItem& item);
QAItem qa_from_jsonl_row(const std::string& line);

Dataset read_dataset(const std::string& dir);

} // namespace cogmap::scene
