#pragma once

#include <cstdint>
#include <atomic>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Geometry>

#include "gpdf/geometry.hpp"
#include "gpdf/gp.hpp"

namespace gpdf {

/// Octree of point clusters, each backed by a cached local GP model.
///
/// Cells subdivide from the root down to `leaf_edge`; a cell that accumulates
/// more than `max_leaf_points` keeps splitting (down to `min_split_edge`) so
/// every model stays small enough to factorize quickly. A query reports the
/// minimum GP distance over the clusters near the query point, found by a
/// nearest-first descent that skips any cluster whose closest point lies more
/// than `prune_window` beyond the running minimum — farther clusters cannot
/// undercut it, since a small cluster's GP distance never falls below its
/// point distance by more than a fraction of the lengthscale.
struct ClusterTreeConfig {
    Point3 root_center = Point3::Zero();
    double root_half_extent = 19.2;
    double leaf_edge = 0.6;
    int max_leaf_points = 32;
    double min_split_edge = 0.03;
    double dedup_resolution = 0.0;  // >0: at most one point per world voxel inside a leaf
    double prune_window = 0.0;      // 0: defaults to lengthscale / 4

    /// Root cube with edge leaf_edge * 2^k covering the region, positioned so
    /// cell boundaries land on anchor + i * leaf_edge.
    static ClusterTreeConfig aligned(const Point3 &region_min, const Point3 &region_max,
                                     double leaf_edge, const Point3 &anchor = Point3::Zero());
};

class ClusterTree {
public:
    ClusterTree(const ClusterTreeConfig &config, const KernelParams &kernel);

    ClusterTree(const ClusterTree &) = delete;
    ClusterTree &operator=(const ClusterTree &) = delete;

    /// Inserts one point; returns false when rejected (voxel already occupied
    /// under dedup, or outside the root bounds).
    bool insert(const Point3 &p, const Color *color = nullptr);
    std::size_t insert_cloud(const PointCloud &cloud);

    /// Minimum distance/gradient over nearby clusters. Lazily re-solves dirty
    /// cluster models it touches; safe for concurrent callers.
    FieldSample query(const Point3 &x) const;

    struct PointRef {
        std::uint32_t leaf = 0;
        std::uint32_t index = 0;
    };

    /// Collects points in leaves whose cell passes `cell_filter`
    /// (conservative box test; exact per-point filtering is the caller's
    /// job). Refs stay valid until the next mutating call.
    void collect_points(const std::function<bool(const Point3 &center, double half)> &cell_filter,
                        std::vector<Point3> &out_points, std::vector<PointRef> &out_refs) const;

    struct Edit {
        PointRef ref;
        bool remove = false;          // otherwise move to new_position
        Point3 new_position = Point3::Zero();
    };
    struct EditResult {
        std::size_t removed = 0;
        std::size_t moved = 0;
        std::size_t move_dropped = 0;  // moved into an occupied voxel and deduplicated away
    };
    /// Applies removals and moves in one pass. Every ref must come from the
    /// most recent collect_points; all refs are invalidated.
    EditResult apply_edits(std::span<const Edit> edits);

    /// All stored points in deterministic octant-order traversal.
    void export_points(PointCloud &out) const;

    /// Re-solves every dirty cluster now (otherwise queries solve on demand).
    void solve_dirty_models();

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }
    std::size_t cluster_count() const;
    /// Number of distinct occupied cells at the leaf_edge partition level.
    std::size_t occupied_top_cells() const;
    std::size_t dropped_out_of_bounds() const { return dropped_oob_; }

    const KernelParams &kernel() const { return kernel_; }
    const ClusterTreeConfig &config() const { return config_; }

private:
    // Fixed-footprint node in a contiguous arena; children come in blocks of
    // eight. Leaf nodes carry outward-rounded tight point bounds.
    struct Node {
        double cx = 0.0, cy = 0.0, cz = 0.0;
        double half = 0.0;
        float bmin[3] = {0, 0, 0};
        float bmax[3] = {0, 0, 0};
        std::int32_t children = -1;  // index of the first of 8 child nodes
        std::int32_t leaf = -1;      // index into leaves_

        bool is_leaf() const { return leaf >= 0; }
        bool is_unused() const { return children < 0 && leaf < 0; }
    };

    struct Leaf {
        std::vector<Point3> points;
        std::vector<Color> colors;
        std::unordered_map<std::uint64_t, std::uint32_t> voxel_slots;  // dedup mode only
        std::uint32_t node = 0;

        // `ready` publishes a stable solved model: readers may then borrow the
        // pointer without the mutex, since only the exclusive writer clears it.
        mutable std::shared_ptr<const LocalGpModel> model;
        mutable bool dirty = true;
        mutable std::atomic<bool> ready{false};
        mutable std::mutex mutex;
    };

    std::int32_t alloc_child_block(std::uint32_t parent);
    void attach_leaf(std::uint32_t node_index);
    bool insert_descend(std::uint32_t node_index, const Point3 &p, const Color *color);
    void split(std::uint32_t node_index);
    void refresh_bounds(std::uint32_t node_index);
    void mark_dirty(std::uint32_t node_index);
    std::shared_ptr<const LocalGpModel> ensure_model(const Node &node) const;

    ClusterTreeConfig config_;
    KernelParams kernel_;
    double prune_window_ = 0.0;
    std::vector<Node> nodes_;
    std::deque<Leaf> leaves_;
    std::size_t size_ = 0;
    std::size_t dropped_oob_ = 0;
};

}  // namespace gpdf
