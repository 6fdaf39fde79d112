#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "gpdf/cluster_tree.hpp"
#include "gpdf/geometry.hpp"
#include "gpdf/gp.hpp"

namespace gpdf {

/// One depth-camera observation: point cloud in the sensor frame plus the
/// sensor-to-world pose.
struct SensorFrame {
    PointCloud cloud;
    Pose pose;
    CameraIntrinsics intrinsics;
    int index = 0;
    double timestamp = 0.0;
};

struct FrustumFieldParams {
    double cluster_size = 0.0;    // 0: defaults to 1.5 * lengthscale
    int max_cluster_points = 32;
    Point3 grid_anchor = Point3::Zero();
};

/// Temporary distance and gradient field built from a single frame's points,
/// discarded after the frame is fused. Immutable once built; concurrent
/// queries are safe.
class FrustumField : public DistanceField {
public:
    /// Filters non-finite returns, projects the cloud into the world frame,
    /// downsamples at training_resolution, partitions into clusters and
    /// solves one local GP per cluster. An empty frame yields an empty field
    /// whose queries return the free-space sentinel.
    static FrustumField build(const SensorFrame &frame, const KernelParams &kernel,
                              double training_resolution, const FrustumFieldParams &params = {});

    FieldSample query(const Point3 &x) const override;
    std::vector<FieldSample> query_batch(std::span<const Point3> points) const override;
    std::vector<FieldSample> query_batch(const PointCloud &cloud) const {
        return query_batch(std::span<const Point3>(cloud.points));
    }


    /// World-frame training points after downsampling.
    const PointCloud &training_points() const { return training_points_; }

    bool empty() const { return !tree_ || tree_->empty(); }
    std::size_t cluster_count() const { return tree_ ? tree_->cluster_count() : 0; }
    std::size_t occupied_cells() const { return tree_ ? tree_->occupied_top_cells() : 0; }
    std::size_t dropped_points() const { return dropped_points_; }

    const Pose &pose() const { return pose_; }
    const CameraIntrinsics &intrinsics() const { return intrinsics_; }
    const KernelParams &kernel() const { return kernel_; }
    int frame_index() const { return frame_index_; }

private:
    FrustumField() = default;

    std::unique_ptr<ClusterTree> tree_;
    PointCloud training_points_;
    Pose pose_;
    CameraIntrinsics intrinsics_;
    KernelParams kernel_;
    int frame_index_ = 0;
    std::size_t dropped_points_ = 0;
};

/// Indices of the points lying inside the field's camera frustum.
std::vector<std::uint32_t> select_in_frustum(std::span<const Point3> prior_points,
                                             const FrustumField &field);

}  // namespace gpdf
