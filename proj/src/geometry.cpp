#include "gpdf/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace gpdf {

bool Pose::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) return false;
    return rotation.determinant() > 0.0;
}

bool CameraIntrinsics::is_valid() const {
    return hfov > 0.0 && hfov < M_PI && vfov > 0.0 && vfov < M_PI && near_plane > 0.0 &&
           near_plane < far_plane;
}

PointCloud transform_cloud(const PointCloud &cloud, const Pose &pose) {
    if (!pose.is_valid()) {
        throw std::invalid_argument("transform_cloud: rotation is not orthonormal");
    }
    PointCloud out;
    out.points.reserve(cloud.size());
    for (const Point3 &p : cloud.points) out.points.push_back(pose.apply(p));
    out.colors = cloud.colors;
    return out;
}

bool in_frustum(const Point3 &point_world, const Pose &pose, const CameraIntrinsics &intr) {
    const Point3 p = pose.to_local(point_world);
    const double z = p.z();
    if (!(z > intr.near_plane) || z > intr.far_plane) return false;
    // Angular test |atan2(x,z)| <= hfov/2 is equivalent to |x| <= z*tan(hfov/2) for z > 0.
    if (std::abs(p.x()) > z * std::tan(0.5 * intr.hfov)) return false;
    if (std::abs(p.y()) > z * std::tan(0.5 * intr.vfov)) return false;
    return true;
}

Eigen::Vector3i voxel_coord(const Point3 &p, double resolution) {
    return {static_cast<int>(std::floor(p.x() / resolution)),
            static_cast<int>(std::floor(p.y() / resolution)),
            static_cast<int>(std::floor(p.z() / resolution))};
}

std::uint64_t pack_voxel(const Eigen::Vector3i &c) {
    constexpr std::uint64_t mask = (1ull << 21) - 1;
    const auto u = [](int v) { return static_cast<std::uint64_t>(v + (1 << 20)); };
    return (u(c.x()) & mask) | ((u(c.y()) & mask) << 21) | ((u(c.z()) & mask) << 42);
}

std::uint64_t voxel_key(const Point3 &p, double resolution) {
    return pack_voxel(voxel_coord(p, resolution));
}

PointCloud voxel_downsample(const PointCloud &cloud, double resolution) {
    if (resolution <= 0.0) {
        throw std::invalid_argument("voxel_downsample: resolution must be positive");
    }
    struct Accum {
        Eigen::Vector3d sum = Eigen::Vector3d::Zero();
        std::size_t count = 0;
        std::size_t slot = 0;
    };
    std::unordered_map<std::uint64_t, Accum> grid;
    grid.reserve(cloud.size());

    PointCloud out;
    const bool with_colors = cloud.has_colors();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3 &p = cloud.points[i];
        auto [it, fresh] = grid.try_emplace(voxel_key(p, resolution));
        if (fresh) {
            it->second.slot = out.size();
            out.points.emplace_back(Point3::Zero());
            if (with_colors) out.colors.push_back(cloud.colors[i]);
        }
        it->second.sum += p;
        it->second.count += 1;
    }
    for (const auto &[key, acc] : grid) {
        out.points[acc.slot] = acc.sum / static_cast<double>(acc.count);
    }
    return out;
}

PointCloud filter_finite(const PointCloud &cloud, std::size_t *dropped) {
    PointCloud out;
    out.reserve(cloud.size());
    const bool with_colors = cloud.has_colors();
    std::size_t removed = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3 &p = cloud.points[i];
        if (!p.allFinite() || p.squaredNorm() < 1e-18) {
            ++removed;
            continue;
        }
        if (with_colors) {
            out.push_back(p, cloud.colors[i]);
        } else {
            out.push_back(p);
        }
    }
    if (dropped) *dropped = removed;
    return out;
}

}  // namespace gpdf
