#include "gpdf/cluster_tree.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "gpdf/parallel.hpp"

namespace gpdf {

namespace {

double cell_sq_distance(const Point3 &p, double cx, double cy, double cz, double half) {
    double sq = 0.0;
    double d = std::abs(p.x() - cx) - half;
    if (d > 0.0) sq += d * d;
    d = std::abs(p.y() - cy) - half;
    if (d > 0.0) sq += d * d;
    d = std::abs(p.z() - cz) - half;
    if (d > 0.0) sq += d * d;
    return sq;
}

}  // namespace

ClusterTreeConfig ClusterTreeConfig::aligned(const Point3 &region_min, const Point3 &region_max,
                                             double leaf_edge, const Point3 &anchor) {
    ClusterTreeConfig cfg;
    cfg.leaf_edge = leaf_edge;

    // Cell index range of the region on the anchor grid, padded so the region
    // never touches the root faces.
    Eigen::Vector3i lo, hi;
    for (int a = 0; a < 3; ++a) {
        lo[a] = static_cast<int>(std::floor((region_min[a] - anchor[a]) / leaf_edge)) - 1;
        hi[a] = static_cast<int>(std::floor((region_max[a] - anchor[a]) / leaf_edge)) + 1;
    }
    const int span = std::max({hi.x() - lo.x(), hi.y() - lo.y(), hi.z() - lo.z()}) + 1;
    int cells = 1;
    while (cells < span) cells *= 2;

    for (int a = 0; a < 3; ++a) {
        const int start = lo[a] - (cells - (hi[a] - lo[a] + 1)) / 2;  // center the block
        cfg.root_center[a] = anchor[a] + (start + 0.5 * cells) * leaf_edge;
    }
    cfg.root_half_extent = 0.5 * cells * leaf_edge;
    return cfg;
}

ClusterTree::ClusterTree(const ClusterTreeConfig &config, const KernelParams &kernel)
    : config_(config), kernel_(kernel) {
    if (!kernel_.is_valid()) throw std::invalid_argument("ClusterTree: invalid kernel parameters");
    if (config_.leaf_edge <= 0.0 || config_.root_half_extent <= 0.0 ||
        config_.max_leaf_points < 1 || config_.min_split_edge <= 0.0) {
        throw std::invalid_argument("ClusterTree: invalid configuration");
    }
    prune_window_ =
        config_.prune_window > 0.0 ? config_.prune_window : 0.25 * kernel_.lengthscale;
    nodes_.reserve(1024);
    Node root;
    root.cx = config_.root_center.x();
    root.cy = config_.root_center.y();
    root.cz = config_.root_center.z();
    root.half = config_.root_half_extent;
    nodes_.push_back(root);
    if (2.0 * root.half <= config_.leaf_edge * 1.0001) attach_leaf(0);
}

std::int32_t ClusterTree::alloc_child_block(std::uint32_t parent) {
    const std::int32_t base = static_cast<std::int32_t>(nodes_.size());
    const Node p = nodes_[parent];  // copy: push_back may reallocate
    const double q = p.half * 0.5;
    for (int oct = 0; oct < 8; ++oct) {
        Node child;
        child.cx = p.cx + ((oct & 1) ? q : -q);
        child.cy = p.cy + ((oct & 2) ? q : -q);
        child.cz = p.cz + ((oct & 4) ? q : -q);
        child.half = q;
        nodes_.push_back(child);
    }
    nodes_[parent].children = base;
    return base;
}

void ClusterTree::attach_leaf(std::uint32_t node_index) {
    Leaf &leaf = leaves_.emplace_back();
    leaf.node = node_index;
    nodes_[node_index].leaf = static_cast<std::int32_t>(leaves_.size() - 1);
}

bool ClusterTree::insert(const Point3 &p, const Color *color) {
    const Node &root = nodes_[0];
    if (std::max({std::abs(p.x() - root.cx), std::abs(p.y() - root.cy),
                  std::abs(p.z() - root.cz)}) > root.half) {
        ++dropped_oob_;
        return false;
    }
    return insert_descend(0, p, color);
}

std::size_t ClusterTree::insert_cloud(const PointCloud &cloud) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Color *c = cloud.has_colors() ? &cloud.colors[i] : nullptr;
        if (insert(cloud.points[i], c)) ++n;
    }
    return n;
}

bool ClusterTree::insert_descend(std::uint32_t node_index, const Point3 &p, const Color *color) {
    std::uint32_t cur = node_index;
    while (true) {
        Node &node = nodes_[cur];
        if (node.is_leaf()) break;
        if (node.children < 0 && 2.0 * node.half <= config_.leaf_edge * 1.0001) {
            attach_leaf(cur);
            break;
        }
        const std::int32_t base = node.children >= 0 ? node.children : alloc_child_block(cur);
        const Node &n = nodes_[cur];
        const int oct = (p.x() >= n.cx ? 1 : 0) | (p.y() >= n.cy ? 2 : 0) | (p.z() >= n.cz ? 4 : 0);
        cur = static_cast<std::uint32_t>(base + oct);
    }

    if (nodes_[cur].leaf < 0) attach_leaf(cur);
    Leaf &leaf = leaves_[nodes_[cur].leaf];
    if (config_.dedup_resolution > 0.0) {
        const std::uint64_t key = voxel_key(p, config_.dedup_resolution);
        if (!leaf.voxel_slots.try_emplace(key, static_cast<std::uint32_t>(leaf.points.size()))
                 .second) {
            return false;
        }
    }
    leaf.points.push_back(p);
    leaf.colors.push_back(color ? *color : Color{255, 255, 255});
    ++size_;
    mark_dirty(cur);
    refresh_bounds(cur);

    if (leaf.points.size() > static_cast<std::size_t>(config_.max_leaf_points) &&
        nodes_[cur].half >= config_.min_split_edge) {
        split(cur);
    }
    return true;
}

void ClusterTree::split(std::uint32_t node_index) {
    const std::int32_t leaf_index = nodes_[node_index].leaf;
    Leaf &leaf = leaves_[leaf_index];
    std::vector<Point3> points = std::move(leaf.points);
    std::vector<Color> colors = std::move(leaf.colors);
    leaf.points.clear();
    leaf.colors.clear();
    leaf.voxel_slots.clear();
    leaf.model.reset();
    leaf.dirty = true;
    nodes_[node_index].leaf = -1;  // leaf slot stays orphaned; nodes reuse is not needed
    size_ -= points.size();

    const std::int32_t base = alloc_child_block(node_index);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Node &n = nodes_[node_index];
        const Point3 &p = points[i];
        const int oct = (p.x() >= n.cx ? 1 : 0) | (p.y() >= n.cy ? 2 : 0) | (p.z() >= n.cz ? 4 : 0);
        insert_descend(static_cast<std::uint32_t>(base + oct), p, &colors[i]);
    }
}

void ClusterTree::refresh_bounds(std::uint32_t node_index) {
    Node &node = nodes_[node_index];
    const Leaf &leaf = leaves_[node.leaf];
    if (leaf.points.empty()) {
        for (int a = 0; a < 3; ++a) {
            node.bmin[a] = std::numeric_limits<float>::infinity();
            node.bmax[a] = -std::numeric_limits<float>::infinity();
        }
        return;
    }
    Point3 lo = leaf.points.front(), hi = leaf.points.front();
    for (const Point3 &p : leaf.points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    for (int a = 0; a < 3; ++a) {
        node.bmin[a] = std::nextafter(static_cast<float>(lo[a]),
                                      -std::numeric_limits<float>::infinity());
        node.bmax[a] = std::nextafter(static_cast<float>(hi[a]),
                                      std::numeric_limits<float>::infinity());
    }
}

void ClusterTree::mark_dirty(std::uint32_t node_index) {
    const Leaf &leaf = leaves_[nodes_[node_index].leaf];
    leaf.ready.store(false, std::memory_order_relaxed);
    leaf.dirty = true;
}

std::shared_ptr<const LocalGpModel> ClusterTree::ensure_model(const Node &node) const {
    const Leaf &leaf = leaves_[node.leaf];
    std::lock_guard<std::mutex> lock(leaf.mutex);
    if (!leaf.dirty && leaf.model) return leaf.model;
    auto model = std::make_shared<LocalGpModel>(
        LocalGpModel::build(leaf.points, kernel_, /*keep_factor=*/false));
    leaf.model = model;
    leaf.dirty = false;
    leaf.ready.store(true, std::memory_order_release);
    return model;
}

FieldSample ClusterTree::query(const Point3 &x) const {
    const double dmax = kernel_.d_max();

    // Nearest-first branch-and-bound over the cell tree. `reach` is the
    // radius beyond which a cluster cannot change the result: the gather
    // radius, or the running minimum plus the prune window once a cluster has
    // been evaluated. Skipped clusters depend only on geometry and the stored
    // points, never on model cache state.
    FieldSample best = FieldSample::free_space(kernel_);
    double best_dist = dmax;
    Eigen::Vector3d best_grad = Eigen::Vector3d::Zero();
    bool have_best = false;
    double reach = std::min(dmax, best_dist + prune_window_);

    const float px = static_cast<float>(x.x());
    const float py = static_cast<float>(x.y());
    const float pz = static_cast<float>(x.z());

    const auto evaluate_leaf = [&](const Node &node) {
        float sq = 0.0f;
        float d = std::max(node.bmin[0] - px, px - node.bmax[0]);
        if (d > 0) sq += d * d;
        d = std::max(node.bmin[1] - py, py - node.bmax[1]);
        if (d > 0) sq += d * d;
        d = std::max(node.bmin[2] - pz, pz - node.bmax[2]);
        if (d > 0) sq += d * d;
        if (std::isinf(node.bmin[0]) || sq > dmax * dmax || sq >= reach * reach) return;

        const Leaf &leaf = leaves_[node.leaf];
        const LocalGpModel *model = nullptr;
        std::shared_ptr<const LocalGpModel> owned;
        if (leaf.ready.load(std::memory_order_acquire)) {
            model = leaf.model.get();
        } else {
            owned = ensure_model(node);
            model = owned.get();
        }

        double occ;
        Eigen::Vector3d occ_grad;
        model->occupancy(x, occ, occ_grad);
        const double dist = revert_distance(occ, kernel_);
        if (dist < best_dist) {
            best_dist = dist;
            best.occupancy = occ;
            best_grad = occ_grad;
            have_best = true;
            reach = std::min(dmax, best_dist + prune_window_);
        }
    };

    const std::function<void(std::int32_t)> descend = [&](std::int32_t ni) {
        const Node &node = nodes_[ni];
        if (node.is_unused()) return;
        if (cell_sq_distance(x, node.cx, node.cy, node.cz, node.half) >= reach * reach) return;
        if (node.leaf >= 0) {
            evaluate_leaf(node);
            return;
        }
        if (node.children < 0) return;
        // Children nearest-first so the minimum tightens before siblings are
        // culled; the order is a pure function of the geometry.
        double dists[8];
        int order[8];
        for (int oct = 0; oct < 8; ++oct) {
            const Node &kid = nodes_[node.children + oct];
            dists[oct] = kid.is_unused()
                             ? std::numeric_limits<double>::infinity()
                             : cell_sq_distance(x, kid.cx, kid.cy, kid.cz, kid.half);
            order[oct] = oct;
        }
        for (int i = 1; i < 8; ++i) {  // insertion sort, ties keep octant order
            const int o = order[i];
            int j = i - 1;
            while (j >= 0 && dists[order[j]] > dists[o]) {
                order[j + 1] = order[j];
                --j;
            }
            order[j + 1] = o;
        }
        for (int i = 0; i < 8; ++i) {
            if (std::isinf(dists[order[i]])) break;
            descend(node.children + order[i]);
        }
    };
    descend(0);

    best.distance = best_dist;
    if (have_best) {
        const double gnorm = best_grad.norm();
        if (best_dist < dmax && gnorm >= 1e-12) {
            best.gradient = -best_grad / gnorm;
            best.gradient_defined = true;
        }
    }
    return best;
}

void ClusterTree::collect_points(
    const std::function<bool(const Point3 &, double)> &cell_filter,
    std::vector<Point3> &out_points, std::vector<PointRef> &out_refs) const {
    std::vector<std::int32_t> stack;
    stack.push_back(0);
    while (!stack.empty()) {
        const std::int32_t ni = stack.back();
        stack.pop_back();
        const Node &node = nodes_[ni];
        if (node.is_unused()) continue;
        if (!cell_filter(Point3(node.cx, node.cy, node.cz), node.half)) continue;
        if (node.children >= 0) {
            for (int oct = 7; oct >= 0; --oct) stack.push_back(node.children + oct);
        }
        if (node.leaf < 0) continue;
        const Leaf &leaf = leaves_[node.leaf];
        for (std::uint32_t i = 0; i < leaf.points.size(); ++i) {
            out_points.push_back(leaf.points[i]);
            out_refs.push_back({static_cast<std::uint32_t>(node.leaf), i});
        }
    }
}

ClusterTree::EditResult ClusterTree::apply_edits(std::span<const Edit> edits) {
    struct Pending {
        std::uint32_t index;
        const Edit *edit;
    };
    std::unordered_map<std::uint32_t, std::vector<Pending>> by_leaf;
    for (const Edit &e : edits) {
        if (e.ref.leaf >= leaves_.size()) throw std::invalid_argument("apply_edits: bad ref");
        by_leaf[e.ref.leaf].push_back({e.ref.index, &e});
    }

    EditResult result;
    struct Move {
        Point3 position;
        Point3 original;
        Color color;
    };
    std::vector<Move> moves;

    for (auto &[leaf_index, pending] : by_leaf) {
        Leaf &leaf = leaves_[leaf_index];
        std::vector<const Edit *> actions(leaf.points.size(), nullptr);
        for (const Pending &p : pending) {
            if (p.index >= leaf.points.size()) {
                throw std::invalid_argument("apply_edits: stale point ref");
            }
            actions[p.index] = p.edit;
        }

        std::vector<Point3> kept_points;
        std::vector<Color> kept_colors;
        kept_points.reserve(leaf.points.size());
        kept_colors.reserve(leaf.points.size());
        for (std::size_t i = 0; i < leaf.points.size(); ++i) {
            const Edit *e = actions[i];
            if (e == nullptr) {
                kept_points.push_back(leaf.points[i]);
                kept_colors.push_back(leaf.colors[i]);
            } else if (e->remove) {
                ++result.removed;
            } else {
                moves.push_back({e->new_position, leaf.points[i], leaf.colors[i]});
            }
        }
        size_ -= leaf.points.size() - kept_points.size();
        leaf.points = std::move(kept_points);
        leaf.colors = std::move(kept_colors);
        leaf.voxel_slots.clear();
        if (config_.dedup_resolution > 0.0) {
            for (std::uint32_t i = 0; i < leaf.points.size(); ++i) {
                leaf.voxel_slots.emplace(voxel_key(leaf.points[i], config_.dedup_resolution), i);
            }
        }
        mark_dirty(leaf.node);
        refresh_bounds(leaf.node);
    }

    // A move whose target voxel is already taken falls back to its original
    // spot; only a double collision discards the point.
    for (const Move &m : moves) {
        if (insert(m.position, &m.color) || insert(m.original, &m.color)) {
            ++result.moved;
        } else {
            ++result.move_dropped;
        }
    }
    return result;
}

void ClusterTree::export_points(PointCloud &out) const {
    std::vector<std::int32_t> stack;
    stack.push_back(0);
    while (!stack.empty()) {
        const std::int32_t ni = stack.back();
        stack.pop_back();
        const Node &node = nodes_[ni];
        if (node.is_unused()) continue;
        if (node.children >= 0) {
            for (int oct = 7; oct >= 0; --oct) stack.push_back(node.children + oct);
        }
        if (node.leaf < 0) continue;
        const Leaf &leaf = leaves_[node.leaf];
        for (std::size_t i = 0; i < leaf.points.size(); ++i) {
            out.push_back(leaf.points[i], leaf.colors[i]);
        }
    }
}

void ClusterTree::solve_dirty_models() {
    std::vector<std::uint32_t> dirty;
    for (std::uint32_t ni = 0; ni < nodes_.size(); ++ni) {
        const Node &node = nodes_[ni];
        if (node.leaf < 0) continue;
        const Leaf &leaf = leaves_[node.leaf];
        if (!leaf.points.empty() && leaf.dirty) dirty.push_back(ni);
    }
    parallel_for(
        dirty.size(),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) ensure_model(nodes_[dirty[i]]);
        },
        1);
}

std::size_t ClusterTree::cluster_count() const {
    std::size_t n = 0;
    for (const Leaf &leaf : leaves_) {
        if (!leaf.points.empty()) ++n;
    }
    return n;
}

std::size_t ClusterTree::occupied_top_cells() const {
    // Cells at the nominal partition level count once if anything below them
    // holds points.
    std::size_t count = 0;
    const std::function<bool(std::int32_t)> has_points = [&](std::int32_t ni) {
        const Node &node = nodes_[ni];
        if (node.leaf >= 0 && !leaves_[node.leaf].points.empty()) return true;
        if (node.children >= 0) {
            for (int oct = 0; oct < 8; ++oct) {
                if (has_points(node.children + oct)) return true;
            }
        }
        return false;
    };
    const std::function<void(std::int32_t)> descend = [&](std::int32_t ni) {
        const Node &node = nodes_[ni];
        if (node.is_unused()) return;
        if (2.0 * node.half <= config_.leaf_edge * 1.0001) {
            if (has_points(ni)) ++count;
            return;
        }
        if (node.children >= 0) {
            for (int oct = 0; oct < 8; ++oct) descend(node.children + oct);
        }
    };
    descend(0);
    return count;
}

}  // namespace gpdf
