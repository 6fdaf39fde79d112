#include "gpdf/eval.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "gpdf/parallel.hpp"

namespace gpdf {

double cosine_similarity(const Eigen::Vector3d &a, const Eigen::Vector3d &b) {
    return a.dot(b) / (a.norm() * b.norm());
}

MetricsReport evaluate(const FusedField &field, const Scene &scene, double t,
                       std::span<const Point3> query_set) {
    if (query_set.empty()) throw std::invalid_argument("evaluate: empty query set");

    MetricsReport report;
    report.query_count = query_set.size();
    report.store_points = field.size();

    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<FieldSample> samples = field.query_batch(query_set);
    const double us =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    report.query_us_per_point = us / static_cast<double>(query_set.size());

    double sq_sum = 0.0;
    double cos_sum = 0.0;
    const double dmax = field.kernel().d_max();
    for (std::size_t i = 0; i < query_set.size(); ++i) {
        const GroundTruth truth = ground_truth(scene, t, query_set[i]);
        const double err = samples[i].distance - truth.distance;
        sq_sum += err * err;
        if (samples[i].distance >= dmax) ++report.sentinel_count;
        if (samples[i].gradient_defined && !truth.inside) {
            cos_sum += cosine_similarity(samples[i].gradient, truth.gradient);
            ++report.cosine_pairs;
        }
    }
    report.distance_rmse = std::sqrt(sq_sum / static_cast<double>(query_set.size()));
    report.mean_cosine = report.cosine_pairs > 0
                             ? cos_sum / static_cast<double>(report.cosine_pairs)
                             : 0.0;

    const PointCloud stored = field.export_points();
    if (!stored.empty()) {
        double surf_sq = 0.0;
        for (const Point3 &p : stored.points) {
            const double d = surface_distance(scene, t, p);
            surf_sq += d * d;
        }
        report.surface_rmse = std::sqrt(surf_sq / static_cast<double>(stored.size()));
    }
    return report;
}

std::vector<Point3> sample_visible_free_space(const Scene &scene,
                                              std::span<const double> sample_times,
                                              std::size_t count, double min_distance,
                                              double max_distance, std::uint64_t seed) {
    if (sample_times.empty()) throw std::invalid_argument("sample_visible_free_space: no times");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Point3> out;
    out.reserve(count);
    const double th = std::tan(0.5 * scene.intrinsics.hfov);
    const double tv = std::tan(0.5 * scene.intrinsics.vfov);

    std::size_t attempts = 0;
    const std::size_t max_attempts = count * 2000;
    while (out.size() < count && attempts < max_attempts) {
        ++attempts;
        const double t =
            sample_times[static_cast<std::size_t>(unit(rng) * sample_times.size()) %
                         sample_times.size()];
        const Pose cam = scene.camera_pose(t);
        // Uniform over the frustum volume: depth^2-weighted z, tangent-uniform rays.
        const double zn = scene.intrinsics.near_plane, zf = scene.intrinsics.far_plane;
        const double z = std::cbrt(zn * zn * zn + unit(rng) * (zf * zf * zf - zn * zn * zn));
        const double x = (2.0 * unit(rng) - 1.0) * th * z;
        const double y = (2.0 * unit(rng) - 1.0) * tv * z;
        const Point3 p = cam.apply(Point3(x, y, z));

        const GroundTruth truth = ground_truth(scene, t, p);
        if (truth.inside || truth.distance < min_distance || truth.distance > max_distance) {
            continue;
        }
        // Reject points the camera cannot see.
        const Eigen::Vector3d to_p = p - cam.translation;
        const auto hit = ray_cast(scene, t, cam.translation, to_p);
        if (hit && hit->range < to_p.norm() - 1e-9) continue;
        // The nearest surface spot must have been observable as well, else the
        // error there measures coverage rather than the field. Grazing views
        // are excluded like a depth camera would miss them.
        const Point3 foot = p - truth.distance * truth.gradient;
        const Eigen::Vector3d to_foot = foot - cam.translation;
        if (!in_frustum(foot, cam, scene.intrinsics)) continue;
        const auto foot_hit = ray_cast(scene, t, cam.translation, to_foot);
        if (foot_hit && foot_hit->range < to_foot.norm() - 0.01) continue;
        if (truth.gradient.dot(-to_foot.normalized()) < 0.26) continue;  // ~75 deg incidence
        out.push_back(p);
    }
    if (out.size() < count) {
        throw std::runtime_error("sample_visible_free_space: rejection sampling starved");
    }
    return out;
}

double nearest_point_rmse(const PointCloud &points, const Scene &scene, double t,
                          std::span<const Point3> query_set) {
    if (points.empty() || query_set.empty()) {
        throw std::invalid_argument("nearest_point_rmse: empty input");
    }
    std::vector<double> sq(query_set.size());
    parallel_for(query_set.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const Point3 &p : points.points) {
                best = std::min(best, (p - query_set[i]).squaredNorm());
            }
            const double err = std::sqrt(best) - ground_truth(scene, t, query_set[i]).distance;
            sq[i] = err * err;
        }
    });
    double total = 0.0;
    for (const double v : sq) total += v;
    return std::sqrt(total / static_cast<double>(query_set.size()));
}

}  // namespace gpdf
