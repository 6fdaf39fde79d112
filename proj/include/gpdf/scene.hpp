#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpdf/frustum_field.hpp"
#include "gpdf/geometry.hpp"

namespace gpdf {

struct MotionKeyframe {
    double t = 0.0;
    Point3 position = Point3::Zero();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

/// Pose interpolated between keyframes: linear in position, slerp in
/// rotation, clamped outside the keyframe range. No keyframes: identity.
Pose pose_at(const std::vector<MotionKeyframe> &keyframes, double t);

/// Analytic primitive in its own frame, moved by keyframed rigid motion.
/// The plane passes through the frame origin with the given normal.
struct Primitive {
    enum class Kind { Plane, Sphere, Box };

    Kind kind = Kind::Sphere;
    Point3 plane_normal = Point3::UnitZ();
    double sphere_radius = 0.1;
    Point3 box_half_extents = Point3::Constant(0.1);
    Color color = {200, 200, 200};
    std::vector<MotionKeyframe> motion;

    Pose pose(double t) const { return pose_at(motion, t); }

    static Primitive plane(const Point3 &point, const Point3 &normal,
                           Color color = {180, 180, 180});
    static Primitive sphere(const Point3 &center, double radius, Color color = {220, 60, 60});
    static Primitive box(const Point3 &center, const Point3 &half_extents,
                         Color color = {150, 110, 70});
};

struct Scene {
    std::vector<Primitive> primitives;
    std::vector<MotionKeyframe> camera_motion;
    CameraIntrinsics intrinsics;
    int image_width = 160;
    int image_height = 120;
    double frame_rate = 10.0;
    double duration = 5.0;

    Pose camera_pose(double t) const { return pose_at(camera_motion, t); }
    std::size_t frame_count() const;
    double frame_time(std::size_t index) const;

    /// Ball rolling across a table under a fixed tilted camera.
    static Scene ball_on_table();
    /// Static interior with a floor, a wall, a crate and a ball; panning camera.
    static Scene room();

    static Scene from_json_file(const std::string &path);
    static Scene from_json_text(const std::string &text);
    std::string to_json_text() const;
};

/// Camera pose looking from `eye` toward `target`.
Eigen::Quaterniond look_at(const Point3 &eye, const Point3 &target,
                           const Point3 &up = Point3::UnitZ());

struct GroundTruth {
    double distance = 0.0;
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
    bool inside = false;
    int primitive = -1;
};

/// Exact minimum unsigned distance over the primitives at time t and the
/// unit gradient away from the nearest surface. Inside a primitive the
/// distance is reported as 0 with the inside flag set; ties go to the lower
/// primitive index.
GroundTruth ground_truth(const Scene &scene, double t, const Point3 &x);

/// Distance to the nearest primitive surface, counting penetration depth when
/// inside; used by surface-error metrics.
double surface_distance(const Scene &scene, double t, const Point3 &x);

struct RayHit {
    double range = 0.0;  // along the unit direction
    int primitive = -1;
};

/// Nearest intersection of a world-space ray with the scene at time t.
std::optional<RayHit> ray_cast(const Scene &scene, double t, const Point3 &origin,
                               const Eigen::Vector3d &direction);

/// Casts one ray per pixel through the camera at time t; nearest hits within
/// (near, far] become a camera-frame cloud colored by primitive. Optional
/// Gaussian noise perturbs each return along its ray.
SensorFrame render_frame(const Scene &scene, double t, double noise_sigma = 0.0,
                         std::mt19937_64 *rng = nullptr);

}  // namespace gpdf
