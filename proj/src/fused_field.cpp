#include "gpdf/fused_field.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gpdf/parallel.hpp"

namespace gpdf {

Point3 fuse_point(const Point3 &p, const FieldSample &sample) {
    if (!sample.gradient_defined) return p;
    return p - sample.distance * sample.gradient;
}

namespace {

ClusterTreeConfig store_config(const KernelParams &kernel, const FusionParams &fusion,
                               const FusedFieldOptions &options) {
    const double cluster =
        options.cluster_size > 0.0 ? options.cluster_size : 1.5 * kernel.lengthscale;
    const double h = 0.5 * options.world_extent;
    ClusterTreeConfig cfg = ClusterTreeConfig::aligned(
        options.world_center - Point3::Constant(h), options.world_center + Point3::Constant(h),
        cluster, options.grid_anchor);
    cfg.max_leaf_points = options.max_cluster_points;
    cfg.min_split_edge = std::min(
        cluster, std::max(cluster / 16.0, 3.0 * fusion.training_resolution));
    cfg.dedup_resolution = fusion.training_resolution;
    cfg.prune_window = std::max(0.25 * kernel.lengthscale, fusion.training_resolution);
    return cfg;
}

/// Frustum as six inward-facing world-space planes (normal, offset with
/// n.x >= offset inside).
struct FrustumPlanes {
    std::array<Eigen::Vector3d, 6> normals;
    std::array<double, 6> offsets;

    static FrustumPlanes from(const Pose &pose, const CameraIntrinsics &intr) {
        FrustumPlanes f;
        const Eigen::Vector3d fwd = pose.rotation.col(2);
        const Eigen::Vector3d right = pose.rotation.col(0);
        const Eigen::Vector3d up = pose.rotation.col(1);
        const Point3 origin = pose.translation;
        const double th = std::tan(0.5 * intr.hfov);
        const double tv = std::tan(0.5 * intr.vfov);

        int i = 0;
        auto add = [&](const Eigen::Vector3d &n, const Point3 &through) {
            f.normals[i] = n.normalized();
            f.offsets[i] = f.normals[i].dot(through);
            ++i;
        };
        add(fwd, origin + intr.near_plane * fwd);       // near: z >= near
        add(-fwd, origin + intr.far_plane * fwd);       // far: z <= far
        add(fwd * th - right, origin);                  // |x| <= z tan(h/2)
        add(fwd * th + right, origin);
        add(fwd * tv - up, origin);                     // |y| <= z tan(v/2)
        add(fwd * tv + up, origin);
        return f;
    }

    /// Conservative: false only when the cube is entirely outside a plane.
    bool may_intersect(const Point3 &center, double half) const {
        for (int i = 0; i < 6; ++i) {
            const double reach = half * normals[i].cwiseAbs().sum();
            if (normals[i].dot(center) + reach < offsets[i]) return false;
        }
        return true;
    }
};

/// Minimum measured depth per pixel of the current frame, in the camera frame.
class DepthBuffer {
public:
    DepthBuffer(const PointCloud &camera_cloud, const CameraIntrinsics &intr, int width,
                int height)
        : width_(width),
          height_(height),
          inv_th_(1.0 / std::tan(0.5 * intr.hfov)),
          inv_tv_(1.0 / std::tan(0.5 * intr.vfov)),
          depth_(static_cast<std::size_t>(width) * height,
                 std::numeric_limits<double>::infinity()) {
        for (const Point3 &p : camera_cloud.points) {
            int u, v;
            if (!pixel_of(p, u, v)) continue;
            double &d = depth_[static_cast<std::size_t>(v) * width_ + u];
            d = std::min(d, p.z());
        }
    }

    /// Measured depth along the pixel ray of a camera-frame point; +inf when
    /// the pixel saw no return.
    double measured_depth(const Point3 &p_cam) const {
        int u, v;
        if (!pixel_of(p_cam, u, v)) return std::numeric_limits<double>::infinity();
        return depth_[static_cast<std::size_t>(v) * width_ + u];
    }

private:
    bool pixel_of(const Point3 &p, int &u, int &v) const {
        if (!(p.z() > 0.0)) return false;
        const double x = p.x() / p.z() * inv_th_;  // [-1, 1] across the fov
        const double y = p.y() / p.z() * inv_tv_;
        if (std::abs(x) > 1.0 || std::abs(y) > 1.0) return false;
        u = std::min(width_ - 1, static_cast<int>(0.5 * (x + 1.0) * width_));
        v = std::min(height_ - 1, static_cast<int>(0.5 * (y + 1.0) * height_));
        return true;
    }

    int width_;
    int height_;
    double inv_th_;
    double inv_tv_;
    std::vector<double> depth_;
};

}  // namespace

FusedField::FusedField(const KernelParams &kernel, const FusionParams &fusion,
                       const FusedFieldOptions &options)
    : kernel_(kernel), fusion_(fusion), tree_(store_config(kernel, fusion, options), kernel) {
    if (!kernel_.is_valid()) throw std::invalid_argument("FusedField: invalid kernel parameters");
    if (!fusion_.is_valid()) throw std::invalid_argument("FusedField: invalid fusion parameters");
}

std::size_t FusedField::insert(const PointCloud &cloud) {
    std::unique_lock lock(rw_);
    return tree_.insert_cloud(cloud);
}

FieldSample FusedField::query(const Point3 &x) const {
    std::shared_lock lock(rw_);
    return tree_.query(x);
}

std::vector<FieldSample> FusedField::query_batch(std::span<const Point3> points) const {
    std::shared_lock lock(rw_);
    std::vector<FieldSample> out(points.size());
    parallel_for(points.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = tree_.query(points[i]);
    });
    return out;
}

PointCloud FusedField::export_points() const {
    std::shared_lock lock(rw_);
    PointCloud out;
    out.reserve(tree_.size());
    tree_.export_points(out);
    return out;
}

std::size_t FusedField::size() const {
    std::shared_lock lock(rw_);
    return tree_.size();
}

std::size_t FusedField::cluster_count() const {
    std::shared_lock lock(rw_);
    return tree_.cluster_count();
}

UpdateStats FusedField::integrate_frame(const SensorFrame &frame) {
    const auto t0 = std::chrono::steady_clock::now();
    std::unique_lock lock(rw_);
    UpdateStats stats;

    // Per-frame latent field over the current measurements only.
    FrustumFieldParams ffp;
    ffp.max_cluster_points = tree_.config().max_leaf_points;
    ffp.grid_anchor = tree_.config().root_center;  // aligned with the store partition
    FrustumField frustum =
        FrustumField::build(frame, kernel_, fusion_.training_resolution, ffp);
    if (frustum.empty()) {
        stats.millis = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
        return stats;
    }
    const PointCloud &current = frustum.training_points();
    stats.current_points = current.size();

    // Stored points inside the frustum, with handles for the edits below.
    const FrustumPlanes planes = FrustumPlanes::from(frame.pose, frame.intrinsics);
    std::vector<Point3> candidates;
    std::vector<ClusterTree::PointRef> refs;
    tree_.collect_points(
        [&](const Point3 &center, double half) { return planes.may_intersect(center, half); },
        candidates, refs);
    const std::vector<std::uint32_t> selected = select_in_frustum(candidates, frustum);
    stats.selected_prior = selected.size();

    std::vector<Point3> selected_points;
    selected_points.reserve(selected.size());
    for (const std::uint32_t idx : selected) selected_points.push_back(candidates[idx]);
    const std::vector<FieldSample> prior_samples =
        frustum.query_batch(std::span<const Point3>(selected_points));

    // Insertion decisions run against the store before any mutation.
    std::vector<FieldSample> store_samples(current.size());
    parallel_for(current.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            store_samples[i] = tree_.query(current.points[i]);
        }
    });

    const PointCloud camera_filtered = filter_finite(frame.cloud);
    const DepthBuffer depth(camera_filtered, frame.intrinsics, fusion_.depth_buffer_width,
                            fusion_.depth_buffer_height);

    std::vector<ClusterTree::Edit> edits;
    edits.reserve(selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) {
        const Point3 &p = selected_points[i];
        const FieldSample &s = prior_samples[i];
        if (s.distance <= fusion_.fusion_threshold) {
            if (!s.gradient_defined) {
                ++stats.adjusted_skipped;
            } else if (s.distance == 0.0) {
                ++stats.adjusted;  // already on the observed surface
            } else {
                edits.push_back({refs[selected[i]], /*remove=*/false, fuse_point(p, s)});
                ++stats.adjusted;
            }
            continue;
        }
        // Removal only applies to points the camera observed free space
        // through: the point must sit in front of the measured surface along
        // its pixel ray. Occluded points are kept.
        const Point3 p_cam = frame.pose.to_local(p);
        double measured = depth.measured_depth(p_cam);
        if (std::isinf(measured) && fusion_.treat_missing_return_as_free) {
            measured = frame.intrinsics.far_plane;
        }
        if (p_cam.z() < measured - fusion_.visibility_margin) {
            edits.push_back({refs[selected[i]], /*remove=*/true, Point3::Zero()});
            ++stats.removed;
        } else {
            ++stats.retained_occluded;
        }
    }

    tree_.apply_edits(edits);

    for (std::size_t i = 0; i < current.size(); ++i) {
        if (store_samples[i].distance > fusion_.insertion_threshold) {
            const Color *c = current.has_colors() ? &current.colors[i] : nullptr;
            if (tree_.insert(current.points[i], c)) ++stats.inserted;
        }
    }

    if (fusion_.eager_resolve) tree_.solve_dirty_models();

    stats.millis =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

}  // namespace gpdf
