#pragma once

#include <span>
#include <vector>

#include "gpdf/fused_field.hpp"
#include "gpdf/scene.hpp"

namespace gpdf {

double cosine_similarity(const Eigen::Vector3d &a, const Eigen::Vector3d &b);

struct MetricsReport {
    double distance_rmse = 0.0;       // field queries vs analytic distance
    double mean_cosine = 0.0;         // field gradients vs analytic gradients
    double surface_rmse = 0.0;        // stored training points vs the true surfaces
    std::size_t query_count = 0;
    std::size_t sentinel_count = 0;   // queries with no data within the gather radius
    std::size_t cosine_pairs = 0;
    double mean_update_ms = 0.0;      // filled by the pipeline
    double max_update_ms = 0.0;
    double query_us_per_point = 0.0;
    std::size_t store_points = 0;
};

/// Field accuracy against the analytic scene at time t over the given query
/// set, plus the surface error of the stored training points. Throws on an
/// empty query set.
MetricsReport evaluate(const FusedField &field, const Scene &scene, double t,
                       std::span<const Point3> query_set);

/// Uniform samples of camera-visible free space: inside the frustum of one of
/// the sample times, unoccluded from the camera, with true distance in
/// [min_distance, max_distance]. Deterministic in the seed.
std::vector<Point3> sample_visible_free_space(const Scene &scene,
                                              std::span<const double> sample_times,
                                              std::size_t count, double min_distance,
                                              double max_distance, std::uint64_t seed);

/// RMSE of the nearest-training-point distance against the analytic distance;
/// the voxel-snap baseline a continuous field is compared with.
double nearest_point_rmse(const PointCloud &points, const Scene &scene, double t,
                          std::span<const Point3> query_set);

}  // namespace gpdf
