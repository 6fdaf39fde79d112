#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace gpdf {

using Point3 = Eigen::Vector3d;
using Color = std::array<std::uint8_t, 3>;

/// Rigid transform, rotation must be orthonormal with det +1.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static Pose identity() { return {}; }

    bool is_valid(double tol = 1e-9) const;

    Point3 apply(const Point3 &p) const { return rotation * p + translation; }

    /// World point into the local (sensor) frame.
    Point3 to_local(const Point3 &p) const { return rotation.transpose() * (p - translation); }

    Pose inverse() const {
        return {rotation.transpose(), -(rotation.transpose() * translation)};
    }

    Pose operator*(const Pose &rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }
};

/// Pinhole-style frustum, symmetric about the optical (+z) axis.
struct CameraIntrinsics {
    double hfov = 1.0;  // full horizontal field of view [rad]
    double vfov = 0.8;  // full vertical field of view [rad]
    double near_plane = 0.1;
    double far_plane = 5.0;

    bool is_valid() const;
};

struct PointCloud {
    std::vector<Point3> points;
    std::vector<Color> colors;  // empty or one per point

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_colors() const { return !colors.empty(); }

    void push_back(const Point3 &p) { points.push_back(p); }
    void push_back(const Point3 &p, const Color &c) {
        points.push_back(p);
        colors.push_back(c);
    }
    void reserve(std::size_t n) { points.reserve(n); }
};

/// Applies pose to every point, preserving order and colors.
/// Throws std::invalid_argument if the rotation is not orthonormal.
PointCloud transform_cloud(const PointCloud &cloud, const Pose &pose);

/// True iff the world point lies inside the camera frustum.
/// Near plane is exclusive, far plane and the angular bounds are inclusive.
bool in_frustum(const Point3 &point_world, const Pose &pose, const CameraIntrinsics &intr);

/// Voxel-grid downsampling on a grid anchored at the world origin. Each
/// occupied voxel contributes the centroid of its points; the centroid keeps
/// the first input point's color. Output order is first-seen voxel order.
PointCloud voxel_downsample(const PointCloud &cloud, double resolution);

/// Drops non-finite and zero-norm points. `dropped` (optional) receives the
/// number of discarded points.
PointCloud filter_finite(const PointCloud &cloud, std::size_t *dropped = nullptr);

/// Integer voxel coordinate of a point, index = floor(coord / resolution).
Eigen::Vector3i voxel_coord(const Point3 &p, double resolution);

/// Voxel coordinate packed into a hashable 64-bit key (21 bits per axis).
std::uint64_t voxel_key(const Point3 &p, double resolution);
std::uint64_t pack_voxel(const Eigen::Vector3i &c);

}  // namespace gpdf
