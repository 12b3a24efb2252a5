#pragma once

#include <Eigen/Core>
#include <vector>

#include "cogmap/scene_gen.hpp"

namespace cogmap::coverage {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using scene::CameraPose;
using scene::Scene;
using scene::SceneObject;
using scene::Vec3;

struct CameraModel {
    CameraPose pose;
    double fov_deg = 60.0;  // horizontal; square image, same vertical extent
    int grid_h = 16;
    int grid_w = 16;
};

// convex outline in normalized image coordinates ([0,1]^2, v up)
struct Silhouette {
    std::vector<Vector2d> polygon;  // CCW convex hull; empty if not visible
    bool empty() const { return polygon.size() < 3; }
};

// 2D convex hull (monotone chain), CCW
std::vector<Vector2d> convex_hull(std::vector<Vector2d> pts);

double polygon_area(const std::vector<Vector2d>& poly);

// Analytic outline samples projected to the image plane: tangency circle for
// spheres, the 8 corners for cubes, both rim circles for cylinders. Objects
// fully behind the camera give an empty silhouette.
Silhouette project_silhouette(const CameraModel& cam, const SceneObject& obj);

// nearest ray hit; returns object index or -1, t is the hit distance
int nearest_hit(const Scene& scene, const Vec3& origin, const Vec3& dir, double* t_out = nullptr);

// fraction of each patch covered by each visible object, resolved by
// nearest-hit depth; result is (grid_h*grid_w) x m, entries in [0,1],
// row sums <= 1
MatrixXd patch_coverage(const CameraModel& cam, const Scene& scene, int samples_per_side = 16);

struct CoverageGrid {
    int g_h = 16;
    int g_w = 16;
    std::vector<MatrixXd> frames;  // per frame, (g_h*g_w) x m
};

CoverageGrid trajectory_coverage(const Scene& scene, const scene::Trajectory& traj,
                                 int grid_h = 16, int grid_w = 16, int samples_per_side = 16);

// Monte Carlo image-area fraction of an object via nearest-hit tests on a
// dense pixel grid; oracle for silhouette areas
double rasterized_area_fraction(const CameraModel& cam, const Scene& scene, int object_index,
                                int resolution = 512);

} // namespace cogmap::coverage
