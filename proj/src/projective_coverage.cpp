#include "cogmap/projective_coverage.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cogmap::coverage {

namespace {

constexpr double kNearPlane = 1e-6;

struct Frame {
    Vec3 eye, right, up, fwd;
    double tan_half = 0.0;
};

Frame make_frame(const CameraModel& cam) {
    scene::CameraBasis b = scene::camera_basis(cam.pose);
    Frame f;
    f.eye = cam.pose.eye;
    f.right = b.right;
    f.up = b.up;
    f.fwd = b.forward;
    f.tan_half = std::tan(cam.fov_deg * 3.14159265358979323846 / 360.0);
    return f;
}

// world point -> normalized image coords; false if at or behind the eye plane
bool project_point(const Frame& f, const Vec3& p, Vector2d* out) {
    Vec3 d = p - f.eye;
    double z = f.fwd.dot(d);
    if (z <= kNearPlane) return false;
    double x = f.right.dot(d) / (z * f.tan_half);
    double y = f.up.dot(d) / (z * f.tan_half);
    *out = Vector2d(0.5 * (x + 1.0), 0.5 * (y + 1.0));
    return true;
}

Vec3 ray_through(const Frame& f, double u, double v) {
    double x = (2.0 * u - 1.0) * f.tan_half;
    double y = (2.0 * v - 1.0) * f.tan_half;
    return (f.fwd + x * f.right + y * f.up).normalized();
}

double cross2(const Vector2d& o, const Vector2d& a, const Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// ---- ray / primitive intersections; return smallest t > kNearPlane or inf ----

double hit_sphere(const Vec3& o, const Vec3& d, const Vec3& c, double r) {
    Vec3 oc = o - c;
    double b = oc.dot(d);
    double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0.0) return std::numeric_limits<double>::infinity();
    double s = std::sqrt(disc);
    double t = -b - s;
    if (t > kNearPlane) return t;
    t = -b + s;
    if (t > kNearPlane) return t;
    return std::numeric_limits<double>::infinity();
}

double hit_aabb(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
    double t0 = kNearPlane, t1 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        if (std::fabs(d(k)) < 1e-15) {
            if (o(k) < lo(k) || o(k) > hi(k)) return std::numeric_limits<double>::infinity();
            continue;
        }
        double ta = (lo(k) - o(k)) / d(k);
        double tb = (hi(k) - o(k)) / d(k);
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::numeric_limits<double>::infinity();
    }
    return t0;
}

double hit_cylinder(const Vec3& o, const Vec3& d, const Vec3& c, double r, double z0, double z1) {
    double best = std::numeric_limits<double>::infinity();
    // lateral surface
    double ox = o.x() - c.x(), oy = o.y() - c.y();
    double a = d.x() * d.x() + d.y() * d.y();
    if (a > 1e-15) {
        double b = ox * d.x() + oy * d.y();
        double q = ox * ox + oy * oy - r * r;
        double disc = b * b - a * q;
        if (disc >= 0.0) {
            double s = std::sqrt(disc);
            for (double t : {(-b - s) / a, (-b + s) / a}) {
                if (t > kNearPlane && t < best) {
                    double z = o.z() + t * d.z();
                    if (z >= z0 && z <= z1) best = t;
                }
            }
        }
    }
    // caps
    if (std::fabs(d.z()) > 1e-15) {
        for (double zc : {z0, z1}) {
            double t = (zc - o.z()) / d.z();
            if (t > kNearPlane && t < best) {
                double x = o.x() + t * d.x() - c.x();
                double y = o.y() + t * d.y() - c.y();
                if (x * x + y * y <= r * r) best = t;
            }
        }
    }
    return best;
}

double hit_object(const SceneObject& obj, const Vec3& o, const Vec3& d) {
    const Vec3& c = obj.world_position;
    double r = obj.radius();
    switch (obj.shape) {
        case scene::Shape::sphere:
            return hit_sphere(o, d, c, r);
        case scene::Shape::cube:
            return hit_aabb(o, d, c - Vec3(r, r, r), c + Vec3(r, r, r));
        case scene::Shape::cylinder:
            return hit_cylinder(o, d, c, r, c.z() - r, c.z() + r);
    }
    return std::numeric_limits<double>::infinity();
}

} // namespace

std::vector<Vector2d> convex_hull(std::vector<Vector2d> pts) {
    if (pts.size() < 3) return {};
    std::sort(pts.begin(), pts.end(), [](const Vector2d& a, const Vector2d& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vector2d& a, const Vector2d& b) {
                              return a.x() == b.x() && a.y() == b.y();
                          }),
              pts.end());
    size_t n = pts.size();
    if (n < 3) return {};
    std::vector<Vector2d> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {  // lower
        while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {  // upper
        while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) return {};
    return hull;
}

double polygon_area(const std::vector<Vector2d>& poly) {
    double a = 0.0;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vector2d& p = poly[i];
        const Vector2d& q = poly[(i + 1) % n];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * std::fabs(a);
}

Silhouette project_silhouette(const CameraModel& cam, const SceneObject& obj) {
    Frame f = make_frame(cam);
    const Vec3& c = obj.world_position;
    double r = obj.radius();
    std::vector<Vec3> boundary;
    constexpr int kCircleSamples = 32;
    constexpr double kPi = 3.14159265358979323846;

    if (obj.shape == scene::Shape::sphere) {
        Vec3 a = c - f.eye;
        double dist = a.norm();
        if (dist <= r) return {};  // eye inside the sphere
        // tangency circle: radius r*sqrt(d^2-r^2)/d, centered (d^2-r^2)/d along a
        a /= dist;
        double rt = r * std::sqrt(dist * dist - r * r) / dist;
        double off = (dist * dist - r * r) / dist;
        Vec3 e1 = a.cross(Vec3(0, 0, 1));
        if (e1.norm() < 1e-9) e1 = a.cross(Vec3(0, 1, 0));
        e1.normalize();
        Vec3 e2 = a.cross(e1);
        for (int k = 0; k < kCircleSamples; ++k) {
            double ang = 2.0 * kPi * k / kCircleSamples;
            boundary.push_back(f.eye + off * a + rt * (std::cos(ang) * e1 + std::sin(ang) * e2));
        }
    } else if (obj.shape == scene::Shape::cube) {
        for (int sx : {-1, 1})
            for (int sy : {-1, 1})
                for (int sz : {-1, 1})
                    boundary.push_back(c + r * Vec3(sx, sy, sz));
    } else {
        for (double zc : {c.z() - r, c.z() + r})
            for (int k = 0; k < kCircleSamples; ++k) {
                double ang = 2.0 * kPi * k / kCircleSamples;
                boundary.push_back(Vec3(c.x() + r * std::cos(ang), c.y() + r * std::sin(ang), zc));
            }
    }

    std::vector<Vector2d> proj;
    for (const Vec3& p : boundary) {
        Vector2d q;
        if (project_point(f, p, &q)) proj.push_back(q);
    }
    Silhouette s;
    s.polygon = convex_hull(std::move(proj));
    return s;
}

int nearest_hit(const Scene& scene, const Vec3& origin, const Vec3& dir, double* t_out) {
    int best = -1;
    double best_t = std::numeric_limits<double>::infinity();
    for (int o = 0; o < scene.size(); ++o) {
        double t = hit_object(scene.objects[static_cast<size_t>(o)], origin, dir);
        if (t < best_t) {
            best_t = t;
            best = o;
        }
    }
    if (t_out) *t_out = best_t;
    return best;
}

MatrixXd patch_coverage(const CameraModel& cam, const Scene& scene, int samples_per_side) {
    if (samples_per_side < 1) throw std::invalid_argument("patch_coverage: samples_per_side < 1");
    Frame f = make_frame(cam);
    const int P = cam.grid_h * cam.grid_w;
    const int m = scene.size();
    MatrixXd cov = MatrixXd::Zero(P, m);

    // silhouette bounding boxes cut the per-sample object set
    std::vector<Eigen::AlignedBox2d> boxes(static_cast<size_t>(m));
    std::vector<bool> maybe(static_cast<size_t>(m), false);
    for (int o = 0; o < m; ++o) {
        Silhouette s = project_silhouette(cam, scene.objects[static_cast<size_t>(o)]);
        if (s.empty()) continue;
        maybe[static_cast<size_t>(o)] = true;
        for (const auto& p : s.polygon) boxes[static_cast<size_t>(o)].extend(p);
    }

    const double inv_samples = 1.0 / (samples_per_side * samples_per_side);
    for (int gy = 0; gy < cam.grid_h; ++gy) {
        for (int gx = 0; gx < cam.grid_w; ++gx) {
            int p_idx = gy * cam.grid_w + gx;
            Eigen::AlignedBox2d patch_box(
                Vector2d(static_cast<double>(gx) / cam.grid_w, static_cast<double>(gy) / cam.grid_h),
                Vector2d(static_cast<double>(gx + 1) / cam.grid_w, static_cast<double>(gy + 1) / cam.grid_h));
            bool any = false;
            for (int o = 0; o < m && !any; ++o)
                any = maybe[static_cast<size_t>(o)] && !patch_box.intersection(boxes[static_cast<size_t>(o)]).isEmpty();
            if (!any) continue;
            for (int sy = 0; sy < samples_per_side; ++sy) {
                for (int sx = 0; sx < samples_per_side; ++sx) {
                    double u = (gx + (sx + 0.5) / samples_per_side) / cam.grid_w;
                    double v = (gy + (sy + 0.5) / samples_per_side) / cam.grid_h;
                    int o = nearest_hit(scene, f.eye, ray_through(f, u, v));
                    if (o >= 0) cov(p_idx, o) += inv_samples;
                }
            }
        }
    }
    return cov;
}

CoverageGrid trajectory_coverage(const Scene& scene, const scene::Trajectory& traj,
                                 int grid_h, int grid_w, int samples_per_side) {
    CoverageGrid g;
    g.g_h = grid_h;
    g.g_w = grid_w;
    for (const auto& pose : traj.frames) {
        CameraModel cam{pose, traj.fov_deg, grid_h, grid_w};
        g.frames.push_back(patch_coverage(cam, scene, samples_per_side));
    }
    return g;
}

double rasterized_area_fraction(const CameraModel& cam, const Scene& scene, int object_index,
                                int resolution) {
    Frame f = make_frame(cam);
    long hits = 0;
    for (int py = 0; py < resolution; ++py)
        for (int px = 0; px < resolution; ++px) {
            double u = (px + 0.5) / resolution;
            double v = (py + 0.5) / resolution;
            if (nearest_hit(scene, f.eye, ray_through(f, u, v)) == object_index) ++hits;
        }
    return static_cast<double>(hits) / (static_cast<double>(resolution) * resolution);
}

} // namespace cogmap::coverage
