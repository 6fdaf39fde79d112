#pragma once

#include <shared_mutex>
#include <span>
#include <vector>

#include "gpdf/cluster_tree.hpp"
#include "gpdf/frustum_field.hpp"
#include "gpdf/geometry.hpp"
#include "gpdf/gp.hpp"

namespace gpdf {

struct FusionParams {
    double fusion_threshold = 0.05;     // stored points this close to the observed
                                        // surface are adjusted onto it; farther
                                        // ones become removal candidates
    double insertion_threshold = 0.02;  // current points farther than this from
                                        // the stored surface are inserted
    double training_resolution = 0.01;
    double visibility_margin = 0.02;    // depth slack of the observed-free-space test
    int depth_buffer_width = 160;
    int depth_buffer_height = 120;
    bool treat_missing_return_as_free = true;
    bool eager_resolve = false;         // re-solve touched cluster models inside
                                        // integrate_frame instead of on first query

    static FusionParams for_resolution(double resolution) {
        FusionParams p;
        p.training_resolution = resolution;
        p.fusion_threshold = 5.0 * resolution;
        p.insertion_threshold = 1.0 * resolution;
        return p;
    }

    bool is_valid() const {
        return fusion_threshold > 0.0 && insertion_threshold > 0.0 &&
               training_resolution > 0.0 && visibility_margin >= 0.0 &&
               depth_buffer_width > 0 && depth_buffer_height > 0;
    }
};

/// Per-frame outcome of integrate_frame.
struct UpdateStats {
    std::size_t selected_prior = 0;     // stored points inside the frustum
    std::size_t adjusted = 0;           // moved onto the observed surface
    std::size_t adjusted_skipped = 0;   // within threshold but gradient undefined
    std::size_t removed = 0;            // in observed free space, deleted
    std::size_t retained_occluded = 0;  // far from the surface but not observably free
    std::size_t inserted = 0;           // new-area points added
    std::size_t current_points = 0;     // downsampled size of the frame
    double millis = 0.0;
};

/// Moves a stored point onto the currently observed surface along the queried
/// gradient. Points with an undefined gradient are returned unchanged.
Point3 fuse_point(const Point3 &p, const FieldSample &sample);

struct FusedFieldOptions {
    Point3 world_center = Point3::Zero();
    double world_extent = 20.0;
    double cluster_size = 0.0;  // 0: defaults to 1.5 * lengthscale
    int max_cluster_points = 32;
    Point3 grid_anchor = Point3::Zero();
};

/// The persistent map: an octree of training points partitioned into local GP
/// models, updated per frame by fusion, dynamic removal and insertion.
/// Single writer, multiple readers: integrate_frame and insert take the write
/// lock; query/query_batch/export_points run concurrently with each other.
class FusedField : public DistanceField {
public:
    FusedField(const KernelParams &kernel, const FusionParams &fusion,
               const FusedFieldOptions &options = {});

    /// Runs one frame through the update pipeline: frustum field build, prior
    /// selection, fusion, dynamic removal, insertion, deduplication.
    UpdateStats integrate_frame(const SensorFrame &frame);

    /// Direct insertion (map warm-start); deduplicates at training resolution.
    std::size_t insert(const PointCloud &cloud);

    FieldSample query(const Point3 &x) const override;
    std::vector<FieldSample> query_batch(std::span<const Point3> points) const override;

    /// All stored training points in deterministic traversal order.
    PointCloud export_points() const;

    std::size_t size() const;
    std::size_t cluster_count() const;

    const KernelParams &kernel() const { return kernel_; }
    const FusionParams &fusion_params() const { return fusion_; }

private:
    KernelParams kernel_;
    FusionParams fusion_;
    ClusterTree tree_;
    mutable std::shared_mutex rw_;
};

}  // namespace gpdf
