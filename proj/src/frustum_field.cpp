#include "gpdf/frustum_field.hpp"

#include <algorithm>
#include <stdexcept>

#include "gpdf/parallel.hpp"

namespace gpdf {

namespace {

double min_split_edge_for(double cluster_size, double resolution) {
    // Keeps the worst-case points-per-cell a comfortable model size.
    return std::min(cluster_size, std::max(cluster_size / 16.0, 3.0 * resolution));
}

}  // namespace

FrustumField FrustumField::build(const SensorFrame &frame, const KernelParams &kernel,
                                 double training_resolution, const FrustumFieldParams &params) {
    if (!kernel.is_valid()) throw std::invalid_argument("FrustumField: invalid kernel parameters");
    if (training_resolution <= 0.0) {
        throw std::invalid_argument("FrustumField: training resolution must be positive");
    }
    if (!frame.pose.is_valid()) throw std::invalid_argument("FrustumField: invalid sensor pose");
    if (!frame.intrinsics.is_valid()) {
        throw std::invalid_argument("FrustumField: invalid intrinsics");
    }

    FrustumField field;
    field.pose_ = frame.pose;
    field.intrinsics_ = frame.intrinsics;
    field.kernel_ = kernel;
    field.frame_index_ = frame.index;

    const PointCloud filtered = filter_finite(frame.cloud, &field.dropped_points_);
    if (filtered.empty()) return field;

    const PointCloud world = transform_cloud(filtered, frame.pose);
    field.training_points_ = voxel_downsample(world, training_resolution);

    Point3 lo = field.training_points_.points.front();
    Point3 hi = lo;
    for (const Point3 &p : field.training_points_.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }

    const double cluster =
        params.cluster_size > 0.0 ? params.cluster_size : 1.5 * kernel.lengthscale;
    ClusterTreeConfig cfg = ClusterTreeConfig::aligned(lo, hi, cluster, params.grid_anchor);
    cfg.max_leaf_points = params.max_cluster_points;
    cfg.min_split_edge = min_split_edge_for(cluster, training_resolution);
    cfg.prune_window = std::max(0.25 * kernel.lengthscale, training_resolution);

    field.tree_ = std::make_unique<ClusterTree>(cfg, kernel);
    field.tree_->insert_cloud(field.training_points_);
    field.tree_->solve_dirty_models();
    return field;
}

FieldSample FrustumField::query(const Point3 &x) const {
    if (!tree_ || tree_->empty()) return FieldSample::free_space(kernel_);
    return tree_->query(x);
}

std::vector<FieldSample> FrustumField::query_batch(std::span<const Point3> points) const {
    std::vector<FieldSample> out(points.size());
    if (!tree_ || tree_->empty()) {
        std::fill(out.begin(), out.end(), FieldSample::free_space(kernel_));
        return out;
    }
    parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = tree_->query(points[i]);
    });
    return out;
}

std::vector<std::uint32_t> select_in_frustum(std::span<const Point3> prior_points,
                                             const FrustumField &field) {
    std::vector<std::uint32_t> selected;
    for (std::uint32_t i = 0; i < prior_points.size(); ++i) {
        if (in_frustum(prior_points[i], field.pose(), field.intrinsics())) {
            selected.push_back(i);
        }
    }
    return selected;
}

}  // namespace gpdf
