#include "cogmap/scene_gen.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cogmap::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;

const char* kColorNames[kNumColors] = {"red",  "green",   "blue",   "yellow",
                                       "cyan", "magenta", "orange", "purple"};
const char* kShapeNames[kNumShapes] = {"cube", "sphere", "cylinder"};

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

const char* to_string(Color c) { return kColorNames[static_cast<int>(c)]; }
const char* to_string(Shape s) { return kShapeNames[static_cast<int>(s)]; }

std::optional<Color> color_from_string(const std::string& s) {
    for (int i = 0; i < kNumColors; ++i)
        if (s == kColorNames[i]) return static_cast<Color>(i);
    return std::nullopt;
}

std::optional<Shape> shape_from_string(const std::string& s) {
    for (int i = 0; i < kNumShapes; ++i)
        if (s == kShapeNames[i]) return static_cast<Shape>(i);
    return std::nullopt;
}

uint64_t scene_content_hash(const Scene& s) {
    // FNV-1a over a canonical textual record
    std::string canon;
    canon += format_double(s.bound);
    for (const auto& o : s.objects) {
        canon += '|';
        canon += to_string(o.color);
        canon += ',';
        canon += to_string(o.shape);
        canon += ',';
        canon += format_double(o.size);
        canon += ',';
        canon += format_double(o.world_position.x());
        canon += ',';
        canon += format_double(o.world_position.y());
        canon += ',';
        canon += format_double(o.world_position.z());
    }
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string make_scene_id(const Scene& s) {
    uint64_t h = scene_content_hash(s);
    char buf[17];
    snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("s_") + std::string(buf).substr(0, 12);
}

namespace {

void assign_names(Scene& s) {
    std::map<int, int> seen;
    for (auto& o : s.objects) {
        int id = o.identity();
        int n = ++seen[id];
        std::string base = std::string(to_string(o.color)) + "_" + to_string(o.shape);
        o.name = n == 1 ? base : base + "_" + std::to_string(n);
    }
}

} // namespace

Scene sample_scene(const SceneGenConfig& cfg, Rng& rng) {
    if (cfg.min_objects < 1 || cfg.max_objects < cfg.min_objects)
        throw std::invalid_argument("sample_scene: bad object count range");
    if (cfg.distinct_identities && cfg.max_objects > kNumIdentities)
        throw std::invalid_argument("sample_scene: more objects than identities");

    Scene s;
    s.bound = cfg.bound;
    int m = rng.uniform_int(cfg.min_objects, cfg.max_objects);

    std::set<int> used_ids;
    int attempts = 0;
    while (s.size() < m) {
        if (++attempts > cfg.max_attempts)
            throw std::runtime_error("sample_scene: placement attempts exhausted");
        SceneObject o;
        o.color = static_cast<Color>(rng.uniform_int(0, kNumColors - 1));
        o.shape = static_cast<Shape>(rng.uniform_int(0, kNumShapes - 1));
        o.size = cfg.sizes[static_cast<size_t>(rng.uniform_int(0, 2))];
        if (cfg.distinct_identities && used_ids.count(o.identity())) continue;
        double r = o.radius();
        double x = rng.uniform(-cfg.bound + r, cfg.bound - r);
        double y = rng.uniform(-cfg.bound + r, cfg.bound - r);
        o.world_position = Vec3(x, y, r);
        bool ok = true;
        for (const auto& other : s.objects) {
            double dx = x - other.world_position.x();
            double dy = y - other.world_position.y();
            double gap = std::sqrt(dx * dx + dy * dy) - r - other.radius();
            if (gap <= cfg.min_separation) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        used_ids.insert(o.identity());
        s.objects.push_back(o);
    }
    assign_names(s);
    s.scene_id = make_scene_id(s);
    return s;
}

CameraBasis camera_basis(const CameraPose& pose) {
    Vec3 f = (pose.look_at - pose.eye);
    double n = f.norm();
    if (n < 1e-12) throw std::invalid_argument("camera_basis: eye equals look_at");
    f /= n;
    Vec3 world_up(0, 0, 1);
    Vec3 r = f.cross(world_up);
    if (r.norm() < 1e-9) {
        // looking straight up or down
        r = f.cross(Vec3(0, 1, 0));
    }
    r.normalize();
    Vec3 u = r.cross(f);
    if (pose.roll != 0.0) {
        double c = std::cos(pose.roll), s = std::sin(pose.roll);
        Vec3 r2 = c * r + s * u;
        Vec3 u2 = -s * r + c * u;
        r = r2;
        u = u2;
    }
    return {r, u, f};
}

Vec3 camera_coords(const CameraPose& pose, const Vec3& p) {
    CameraBasis b = camera_basis(pose);
    Vec3 d = p - pose.eye;
    return Vec3(b.right.dot(d), b.up.dot(d), b.forward.dot(d));
}

const char* to_string(TrajectoryKind k) {
    switch (k) {
        case TrajectoryKind::orbit: return "orbit";
        case TrajectoryKind::free6dof: return "free6dof";
        case TrajectoryKind::person_walk: return "person_walk";
    }
    return "orbit";
}

std::optional<TrajectoryKind> trajectory_kind_from_string(const std::string& s) {
    if (s == "orbit") return TrajectoryKind::orbit;
    if (s == "free6dof") return TrajectoryKind::free6dof;
    if (s == "person_walk") return TrajectoryKind::person_walk;
    return std::nullopt;
}

namespace {

// three random-phase sinusoids, roughly unit variance over t in [0,1]
struct SmoothNoise {
    std::array<double, 3> amp{}, phase{};

    static SmoothNoise make(Rng& rng) {
        SmoothNoise n;
        for (int k = 0; k < 3; ++k) {
            n.amp[k] = rng.normal() / std::sqrt(1.5);
            n.phase[k] = rng.uniform(0.0, 2.0 * kPi);
        }
        return n;
    }

    double eval(double t) const {
        double v = 0.0;
        for (int k = 0; k < 3; ++k)
            v += amp[k] * std::sin(kPi * (k + 1) * t + phase[k]);
        return v;
    }

    // squashed to [-1, 1], keeps smoothness
    double bounded(double t) const { return std::tanh(eval(t) / 1.5); }
};

Trajectory make_orbit(const Scene&, const TrajectoryConfig& cfg, Rng& rng) {
    Trajectory tr;
    tr.kind = TrajectoryKind::orbit;
    tr.fov_deg = cfg.fov_deg;
    double alt = cfg.altitudes[static_cast<size_t>(rng.uniform_int(0, 1))];
    double rad = cfg.radii[static_cast<size_t>(rng.uniform_int(0, 1))];
    double phi0 = rng.uniform(0.0, 2.0 * kPi);
    for (int t = 0; t < cfg.frames; ++t) {
        double u = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
        double phi = phi0 + kPi * u;
        CameraPose p;
        p.eye = Vec3(rad * std::cos(phi), rad * std::sin(phi), alt);
        p.look_at = Vec3(0, 0, cfg.look_z);
        p.roll = 0.0;
        tr.frames.push_back(p);
    }
    return tr;
}

Trajectory make_free6dof(const Scene&, const TrajectoryConfig& cfg, Rng& rng) {
    Trajectory tr;
    tr.kind = TrajectoryKind::free6dof;
    tr.fov_deg = cfg.fov_deg;
    double alt = cfg.altitudes[static_cast<size_t>(rng.uniform_int(0, 1))];
    double rad = cfg.radii[static_cast<size_t>(rng.uniform_int(0, 1))];
    double phi0 = rng.uniform(0.0, 2.0 * kPi);
    SmoothNoise n_rad = SmoothNoise::make(rng), n_alt = SmoothNoise::make(rng);
    SmoothNoise n_ex = SmoothNoise::make(rng), n_ey = SmoothNoise::make(rng),
                n_ez = SmoothNoise::make(rng);
    SmoothNoise n_tx = SmoothNoise::make(rng), n_ty = SmoothNoise::make(rng),
                n_tz = SmoothNoise::make(rng);
    SmoothNoise n_roll = SmoothNoise::make(rng);
    for (int t = 0; t < cfg.frames; ++t) {
        double u = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
        double phi = phi0 + kPi * u;
        double R = rad + cfg.radius_jitter * n_rad.eval(u);
        double A = alt + cfg.altitude_jitter * n_alt.eval(u);
        CameraPose p;
        p.eye = Vec3(R * std::cos(phi) + cfg.eye_jitter * n_ex.eval(u),
                     R * std::sin(phi) + cfg.eye_jitter * n_ey.eval(u),
                     A + cfg.eye_jitter * n_ez.eval(u));
        p.look_at = Vec3(cfg.target_jitter * n_tx.eval(u),
                         cfg.target_jitter * n_ty.eval(u),
                         cfg.look_z + cfg.target_jitter * n_tz.eval(u));
        p.roll = cfg.roll_jitter * n_roll.bounded(u);
        tr.frames.push_back(p);
    }
    return tr;
}

bool walk_position_ok(const Scene& scene, const TrajectoryConfig& cfg, double x, double y) {
    double lim = scene.bound - cfg.bounds_margin;
    if (x < -lim || x > lim || y < -lim || y > lim) return false;
    for (const auto& o : scene.objects) {
        double dx = x - o.world_position.x();
        double dy = y - o.world_position.y();
        if (std::sqrt(dx * dx + dy * dy) < cfg.object_margin) return false;
    }
    return true;
}

Trajectory make_person_walk(const Scene& scene, const TrajectoryConfig& cfg, Rng& rng) {
    double yaw_range = cfg.yaw_range_deg * kPi / 180.0;
    double pitch_range = cfg.pitch_range_deg * kPi / 180.0;
    for (int attempt = 0; attempt < cfg.walk_retries; ++attempt) {
        double lim = scene.bound - cfg.bounds_margin;
        double x = rng.uniform(-lim, lim);
        double y = rng.uniform(-lim, lim);
        if (!walk_position_ok(scene, cfg, x, y)) continue;
        double heading = rng.uniform(0.0, 2.0 * kPi);
        SmoothNoise n_speed = SmoothNoise::make(rng);
        SmoothNoise n_yaw = SmoothNoise::make(rng);
        SmoothNoise n_pitch = SmoothNoise::make(rng);

        Trajectory tr;
        tr.kind = TrajectoryKind::person_walk;
        tr.fov_deg = cfg.fov_deg;
        bool failed = false;
        for (int t = 0; t < cfg.frames; ++t) {
            double u = cfg.frames > 1 ? static_cast<double>(t) / (cfg.frames - 1) : 0.0;
            if (t > 0) {
                double speed = cfg.speed_mean + cfg.speed_amp * n_speed.bounded(u);
                if (speed < 0.05) speed = 0.05;
                // bend away from walls and objects if the straight step is blocked
                bool stepped = false;
                for (int k = 0; k < 24 && !stepped; ++k) {
                    double turn = (k == 0) ? 0.0
                                           : ((k % 2 == 1) ? 1.0 : -1.0) * kPi / 12.0 * ((k + 1) / 2);
                    double h = heading + turn;
                    double nx = x + speed * std::cos(h);
                    double ny = y + speed * std::sin(h);
                    if (walk_position_ok(scene, cfg, nx, ny)) {
                        x = nx;
                        y = ny;
                        heading = h;
                        stepped = true;
                    }
                }
                if (!stepped) {
                    failed = true;
                    break;
                }
            }
            double look_yaw = heading + yaw_range * n_yaw.bounded(u);
            double pitch = pitch_range * n_pitch.bounded(u);
            CameraPose p;
            p.eye = Vec3(x, y, cfg.walk_height);
            p.look_at = p.eye + Vec3(std::cos(look_yaw) * std::cos(pitch),
                                     std::sin(look_yaw) * std::cos(pitch),
                                     std::sin(pitch));
            p.roll = 0.0;
            tr.frames.push_back(p);
        }
        if (!failed) return tr;
    }
    throw std::runtime_error("person_walk: trajectory retries exhausted");
}

} // namespace

Trajectory generate_trajectory(const Scene& scene, TrajectoryKind kind,
                               const TrajectoryConfig& cfg, Rng& rng) {
    if (cfg.frames < 1) throw std::invalid_argument("generate_trajectory: frames < 1");
    switch (kind) {
        case TrajectoryKind::orbit: return make_orbit(scene, cfg, rng);
        case TrajectoryKind::free6dof: return make_free6dof(scene, cfg, rng);
        case TrajectoryKind::person_walk: return make_person_walk(scene, cfg, rng);
    }
    throw std::invalid_argument("generate_trajectory: unknown kind");
}

const char* to_string(QAKind k) {
    return k == QAKind::relative_position ? "relative_position" : "distance_order";
}

const char* to_string(CounterfactualKind k) {
    return k == CounterfactualKind::color_swap ? "color_swap" : "position_swap";
}

namespace {

const char* kRelations[4] = {" to the left of ", " to the right of ",
                             " in front of ", " behind "};

// 0 left, 1 right, 2 front, 3 behind; -1 if not a relative_position question
int relation_from_question(const std::string& q) {
    for (int i = 0; i < 4; ++i)
        if (q.find(kRelations[i]) != std::string::npos) return i;
    return -1;
}

// truth of "A <relation> B" in the camera frame; nullopt on a tie
std::optional<bool> relation_truth(int relation, const Vec3& ca, const Vec3& cb) {
    switch (relation) {
        case 0: if (ca.x() == cb.x()) return std::nullopt; return ca.x() < cb.x();
        case 1: if (ca.x() == cb.x()) return std::nullopt; return ca.x() > cb.x();
        case 2: if (ca.z() == cb.z()) return std::nullopt; return ca.z() < cb.z();
        case 3: if (ca.z() == cb.z()) return std::nullopt; return ca.z() > cb.z();
    }
    return std::nullopt;
}

} // namespace

std::vector<QAItem> generate_qa(const Scene& scene, const Trajectory& traj,
                                const QAConfig& cfg, Rng& rng) {
    if (traj.frames.empty()) throw std::invalid_argument("generate_qa: empty trajectory");
    const CameraPose& cam = traj.frames.front();
    int m = scene.size();
    std::vector<QAItem> items;
    std::set<std::string> seen;
    int attempts = 0;
    while (static_cast<int>(items.size()) < cfg.per_scene && attempts < cfg.max_attempts) {
        ++attempts;
        bool rel = rng.uniform() < 0.5;
        if (m < 3) rel = true;
        if (m < 2) break;
        QAItem item;
        item.scene_id = scene.scene_id;
        if (rel) {
            int ia = rng.uniform_int(0, m - 1);
            int ib = rng.uniform_int(0, m - 1);
            if (ia == ib) continue;
            int relation = rng.uniform_int(0, 3);
            Vec3 ca = camera_coords(cam, scene.objects[ia].world_position);
            Vec3 cb = camera_coords(cam, scene.objects[ib].world_position);
            auto truth = relation_truth(relation, ca, cb);
            if (!truth) continue;  // tie, skip
            item.kind = QAKind::relative_position;
            item.question = "Is the " + scene.objects[ia].name + kRelations[relation] +
                            "the " + scene.objects[ib].name + "?";
            item.answer = *truth ? "yes" : "no";
            item.object_names = {scene.objects[ia].name, scene.objects[ib].name};
            item.object_coords = {scene.objects[ia].world_position,
                                  scene.objects[ib].world_position};
            item.object_indices = {ia, ib};
        } else {
            int ir = rng.uniform_int(0, m - 1);
            int ia = rng.uniform_int(0, m - 1);
            int ib = rng.uniform_int(0, m - 1);
            if (ir == ia || ir == ib || ia == ib) continue;
            double da = (scene.objects[ia].world_position - scene.objects[ir].world_position).norm();
            double db = (scene.objects[ib].world_position - scene.objects[ir].world_position).norm();
            if (da == db) continue;  // tie, skip
            item.kind = QAKind::distance_order;
            item.question = "Which is closer to the " + scene.objects[ir].name + ", the " +
                            scene.objects[ia].name + " or the " + scene.objects[ib].name + "?";
            item.answer = da < db ? scene.objects[ia].name : scene.objects[ib].name;
            item.object_names = {scene.objects[ir].name, scene.objects[ia].name,
                                 scene.objects[ib].name};
            item.object_coords = {scene.objects[ir].world_position,
                                  scene.objects[ia].world_position,
                                  scene.objects[ib].world_position};
            item.object_indices = {ir, ia, ib};
        }
        if (!seen.insert(item.question).second) continue;
        items.push_back(std::move(item));
    }
    return items;
}

std::string answer_from_positions(const QAItem& item, const std::vector<Vec3>& positions,
                                  const CameraPose& first_frame) {
    if (positions.size() != item.object_indices.size())
        throw std::invalid_argument("answer_from_positions: position count mismatch");
    if (item.kind == QAKind::relative_position) {
        int relation = relation_from_question(item.question);
        if (relation < 0 || positions.size() != 2)
            throw std::invalid_argument("answer_from_positions: malformed relative_position item");
        Vec3 ca = camera_coords(first_frame, positions[0]);
        Vec3 cb = camera_coords(first_frame, positions[1]);
        auto truth = relation_truth(relation, ca, cb);
        if (!truth) return "tie";
        return *truth ? "yes" : "no";
    }
    if (positions.size() != 3)
        throw std::invalid_argument("answer_from_positions: malformed distance_order item");
    double da = (positions[1] - positions[0]).norm();
    double db = (positions[2] - positions[0]).norm();
    if (da == db) return "tie";
    // names as bound when the question was written
    return da < db ? item.object_names[1] : item.object_names[2];
}

std::string answer_for(const QAItem& item, const Scene& scene, const CameraPose& first_frame) {
    std::vector<Vec3> positions;
    positions.reserve(item.object_indices.size());
    for (int idx : item.object_indices) {
        if (idx < 0 || idx >= scene.size())
            throw std::invalid_argument("answer_for: object index out of range");
        positions.push_back(scene.objects[static_cast<size_t>(idx)].world_position);
    }
    return answer_from_positions(item, positions, first_frame);
}

std::vector<int> sample_derangement(int n, Rng& rng) {
    if (n < 2) throw std::invalid_argument("sample_derangement: n < 2");
    while (true) {
        std::vector<int> p = rng.permutation(n);
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            if (p[static_cast<size_t>(i)] == i) {
                ok = false;
                break;
            }
        }
        if (ok) return p;
    }
}

Counterfactual make_counterfactual(const Scene& base, CounterfactualKind kind, Rng& rng) {
    std::set<int> ids;
    for (const auto& o : base.objects) ids.insert(o.identity());
    if (base.size() < 4 || static_cast<int>(ids.size()) < 4)
        throw std::invalid_argument("make_counterfactual: need >= 4 objects with distinct identities");

    Counterfactual cf;
    cf.kind = kind;
    cf.perm = sample_derangement(base.size(), rng);
    cf.scene = base;
    if (kind == CounterfactualKind::color_swap) {
        for (int i = 0; i < base.size(); ++i)
            cf.scene.objects[static_cast<size_t>(i)].color =
                base.objects[static_cast<size_t>(cf.perm[static_cast<size_t>(i)])].color;
        assign_names(cf.scene);
    } else {
        for (int i = 0; i < base.size(); ++i) {
            const Vec3& src = base.objects[static_cast<size_t>(cf.perm[static_cast<size_t>(i)])].world_position;
            auto& obj = cf.scene.objects[static_cast<size_t>(i)];
            // floor positions swap; height stays pinned to the object's own size
            obj.world_position = Vec3(src.x(), src.y(), obj.radius());
        }
    }
    cf.scene.scene_id = make_scene_id(cf.scene);
    return cf;
}

Dataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.scenes < 0) throw std::invalid_argument("generate_dataset: scenes < 0");
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0)
        throw std::invalid_argument("generate_dataset: train_fraction must be in (0,1)");
    Dataset ds;
    ds.config = cfg;
    Rng base(cfg.seed);
    for (int i = 0; i < cfg.scenes; ++i) {
        uint64_t tag = static_cast<uint64_t>(i);
        Rng srng = base.child(4 * tag);
        Rng trng = base.child(4 * tag + 1);
        Rng qrng = base.child(4 * tag + 2);
        Scene sc = sample_scene(cfg.scene_cfg, srng);
        Trajectory tr = generate_trajectory(sc, cfg.traj_kind, cfg.traj_cfg, trng);
        std::vector<QAItem> qa = generate_qa(sc, tr, cfg.qa_cfg, qrng);
        ds.scenes.push_back(std::move(sc));
        ds.trajectories.push_back(std::move(tr));
        ds.qa.push_back(std::move(qa));
    }
    // scene-disjoint split
    Rng split_rng = base.child(0x5b1ee7ULL);
    std::vector<int> order = split_rng.permutation(cfg.scenes);
    int n_train = static_cast<int>(std::lround(cfg.train_fraction * cfg.scenes));
    n_train = std::clamp(n_train, 0, cfg.scenes);
    if (cfg.scenes >= 2) n_train = std::clamp(n_train, 1, cfg.scenes - 1);
    ds.train_scene_indices.assign(order.begin(), order.begin() + n_train);
    ds.val_scene_indices.assign(order.begin() + n_train, order.end());
    std::sort(ds.train_scene_indices.begin(), ds.train_scene_indices.end());
    std::sort(ds.val_scene_indices.begin(), ds.val_scene_indices.end());
    return ds;
}

namespace {

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
    return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

} // namespace

std::string scene_to_json(const Scene& s) {
    json j;
    j["scene_id"] = s.scene_id;
    j["bound"] = s.bound;
    json objs = json::array();
    for (const auto& o : s.objects) {
        json jo;
        jo["name"] = o.name;
        jo["shape"] = to_string(o.shape);
        jo["color"] = to_string(o.color);
        jo["size"] = o.size;
        jo["world_position"] = vec3_to_json(o.world_position);
        objs.push_back(jo);
    }
    j["objects"] = objs;
    return j.dump(2) + "\n";
}

Scene scene_from_json(const std::string& text) {
    json j = json::parse(text);
    Scene s;
    s.scene_id = j.at("scene_id").get<std::string>();
    s.bound = j.at("bound").get<double>();
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.name = jo.at("name").get<std::string>();
        auto shape = shape_from_string(jo.at("shape").get<std::string>());
        auto color = color_from_string(jo.at("color").get<std::string>());
        if (!shape || !color) throw std::runtime_error("scene_from_json: unknown shape or color");
        o.shape = *shape;
        o.color = *color;
        o.size = jo.at("size").get<double>();
        o.world_position = vec3_from_json(jo.at("world_position"));
        s.objects.push_back(std::move(o));
    }
    return s;
}

std::string trajectory_to_json(const Trajectory& t) {
    json j;
    j["kind"] = to_string(t.kind);
    j["fov_deg"] = t.fov_deg;
    json frames = json::array();
    for (const auto& f : t.frames) {
        json jf;
        jf["eye"] = vec3_to_json(f.eye);
        jf["look_at"] = vec3_to_json(f.look_at);
        jf["roll"] = f.roll;
        frames.push_back(jf);
    }
    j["frames"] = frames;
    return j.dump(2) + "\n";
}

Trajectory trajectory_from_json(const std::string& text) {
    json j = json::parse(text);
    Trajectory t;
    auto kind = trajectory_kind_from_string(j.at("kind").get<std::string>());
    if (!kind) throw std::runtime_error("trajectory_from_json: unknown kind");
    t.kind = *kind;
    t.fov_deg = j.at("fov_deg").get<double>();
    for (const auto& jf : j.at("frames")) {
        CameraPose p;
        p.eye = vec3_from_json(jf.at("eye"));
        p.look_at = vec3_from_json(jf.at("look_at"));
        p.roll = jf.at("roll").get<double>();
        t.frames.push_back(p);
    }
    return t;
}

std::string qa_to_jsonl_row(const QAItem& item) {
    json j;
    j["scene_id"] = item.scene_id;
    j["image_path"] = nullptr;
    j["question"] = item.question;
    j["answer"] = item.answer;
    j["kind"] = to_string(item.kind);
    j["object_names"] = item.object_names;
    json coords = json::array();
    for (const auto& c : item.object_coords) coords.push_back(vec3_to_json(c));
    j["object_coords"] = coords;
    j["object_indices"] = item.object_indices;
    return j.dump();
}

QAItem qa_from_jsonl_row(const std::string& line) {
    json j = json::parse(line);
    QAItem item;
    item.scene_id = j.at("scene_id").get<std::string>();
    item.question = j.at("question").get<std::string>();
    item.answer = j.at("answer").get<std::string>();
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "relative_position") item.kind = QAKind::relative_position;
    else if (kind == "distance_order") item.kind = QAKind::distance_order;
    else throw std::runtime_error("qa_from_jsonl_row: unknown kind");
    item.object_names = j.at("object_names").get<std::vector<std::string>>();
    for (const auto& c : j.at("object_coords")) item.object_coords.push_back(vec3_from_json(c));
    if (j.contains("object_indices"))
        item.object_indices = j.at("object_indices").get<std::vector<int>>();
    return item;
}

int write_dataset(const Dataset& ds, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "scenes");
    fs::create_directories(fs::path(out_dir) / "trajectories");
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        const Scene& s = ds.scenes[i];
        std::ofstream fsc(fs::path(out_dir) / "scenes" / (s.scene_id + ".json"));
        fsc << scene_to_json(s);
        std::ofstream ftr(fs::path(out_dir) / "trajectories" / (s.scene_id + ".json"));
        ftr << trajectory_to_json(ds.trajectories[i]);
    }
    int rows = 0;
    auto write_split = [&](const std::vector<int>& idx, const std::string& fname) {
        std::ofstream f(fs::path(out_dir) / fname);
        for (int i : idx)
            for (const auto& item : ds.qa[static_cast<size_t>(i)]) {
                f << qa_to_jsonl_row(item) << "\n";
                ++rows;
            }
    };
    write_split(ds.train_scene_indices, "train.jsonl");
    write_split(ds.val_scene_indices, "val.jsonl");

    json split;
    json order = json::array();
    for (const auto& s : ds.scenes) order.push_back(s.scene_id);
    split["scene_order"] = order;
    split["train"] = ds.train_scene_indices;
    split["val"] = ds.val_scene_indices;
    std::ofstream fsp(fs::path(out_dir) / "splits.json");
    fsp << split.dump(2) << "\n";

    std::ofstream fkv(fs::path(out_dir) / "dataset.kv");
    fkv << "scenes=" << ds.config.scenes << "\n"
        << "seed=" << ds.config.seed << "\n"
        << "traj_kind=" << to_string(ds.config.traj_kind) << "\n"
        << "train_fraction=" << format_double(ds.config.train_fraction) << "\n"
        << "min_objects=" << ds.config.scene_cfg.min_objects << "\n"
        << "max_objects=" << ds.config.scene_cfg.max_objects << "\n"
        << "distinct_identities=" << (ds.config.scene_cfg.distinct_identities ? 1 : 0) << "\n"
        << "qa_per_scene=" << ds.config.qa_cfg.per_scene << "\n"
        << "qa_rows=" << rows << "\n";
    return rows;
}

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

Dataset read_dataset(const std::string& dir) {
    Dataset ds;
    fs::path root(dir);
    if (!fs::exists(root / "splits.json") || !fs::exists(root / "dataset.kv"))
        throw std::runtime_error("read_dataset: " + dir + " is not a dataset directory");

    std::ifstream fkv(root / "dataset.kv");
    std::string line;
    while (std::getline(fkv, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "scenes") ds.config.scenes = std::stoi(val);
        else if (key == "seed") ds.config.seed = std::stoull(val);
        else if (key == "traj_kind") {
            auto k = trajectory_kind_from_string(val);
            if (k) ds.config.traj_kind = *k;
        } else if (key == "train_fraction") ds.config.train_fraction = std::stod(val);
        else if (key == "min_objects") ds.config.scene_cfg.min_objects = std::stoi(val);
        else if (key == "max_objects") ds.config.scene_cfg.max_objects = std::stoi(val);
        else if (key == "distinct_identities") ds.config.scene_cfg.distinct_identities = val == "1";
        else if (key == "qa_per_scene") ds.config.qa_cfg.per_scene = std::stoi(val);
    }

    json split = json::parse(slurp(root / "splits.json"));
    std::vector<std::string> order = split.at("scene_order").get<std::vector<std::string>>();
    ds.train_scene_indices = split.at("train").get<std::vector<int>>();
    ds.val_scene_indices = split.at("val").get<std::vector<int>>();

    std::map<std::string, std::vector<QAItem>> qa_by_scene;
    for (const char* fname : {"train.jsonl", "val.jsonl"}) {
        std::ifstream f(root / fname);
        std::string row;
        while (std::getline(f, row)) {
            if (row.empty()) continue;
            QAItem item = qa_from_jsonl_row(row);
            qa_by_scene[item.scene_id].push_back(std::move(item));
        }
    }
    for (const auto& sid : order) {
        ds.scenes.push_back(scene_from_json(slurp(root / "scenes" / (sid + ".json"))));
        ds.scenes.back().scene_id = sid;
        ds.trajectories.push_back(
            trajectory_from_json(slurp(root / "trajectories" / (sid + ".json"))));
        ds.qa.push_back(qa_by_scene.count(sid) ? qa_by_scene[sid] : std::vector<QAItem>{});
    }
    return ds;
}

} // namespace cogmap::scene
