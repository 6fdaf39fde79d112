#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "gpdf/frustum_field.hpp"

using namespace gpdf;

namespace {

CameraIntrinsics wide_intrinsics() {
    CameraIntrinsics intr;
    intr.hfov = 1.2;
    intr.vfov = 1.0;
    intr.near_plane = 0.05;
    intr.far_plane = 6.0;
    return intr;
}

// Frame observing a horizontal plane patch at z = 0 (world), camera looking
// straight down from `height`.
SensorFrame plane_patch_frame(double extent, double spacing, double height) {
    SensorFrame frame;
    frame.intrinsics = wide_intrinsics();
    frame.pose.translation = {0.0, 0.0, height};
    frame.pose.rotation =
        Eigen::AngleAxisd(M_PI, Eigen::Vector3d::UnitX()).toRotationMatrix();  // +z down
    const Pose to_camera = frame.pose.inverse();
    for (double x = -extent / 2; x <= extent / 2 + 1e-9; x += spacing) {
        for (double y = -extent / 2; y <= extent / 2 + 1e-9; y += spacing) {
            frame.cloud.push_back(to_camera.apply({x, y, 0.0}));
        }
    }
    return frame;
}

}  // namespace

TEST_CASE("single-point frame yields one cluster and exact distance") {
    SensorFrame frame;
    frame.intrinsics = wide_intrinsics();
    frame.cloud.push_back({0.0, 0.0, 1.0});  // on the optical axis, 1 m ahead

    KernelParams k;
    k.noise_variance = 0.0;
    const FrustumField field = FrustumField::build(frame, k, 0.01);
    REQUIRE_FALSE(field.empty());
    CHECK(field.cluster_count() == 1);
    REQUIRE(field.training_points().size() == 1);

    const FieldSample s = field.query({0.0, 0.1, 1.0});
    CHECK(s.distance == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("occupied cells match an independent grid-hash oracle") {
    const SensorFrame frame = plane_patch_frame(1.0, 0.02, 1.5);
    KernelParams k;
    const double res = 0.01;
    const FrustumField field = FrustumField::build(frame, k, res);

    const double cell = 1.5 * k.lengthscale;
    std::set<std::array<int, 3>> cells;
    for (const Point3 &p : field.training_points().points) {
        cells.insert({static_cast<int>(std::floor(p.x() / cell)),
                      static_cast<int>(std::floor(p.y() / cell)),
                      static_cast<int>(std::floor(p.z() / cell))});
    }
    CHECK(field.occupied_cells() == cells.size());
    CHECK(field.cluster_count() >= cells.size());
}

TEST_CASE("identical frames build identical fields") {
    const SensorFrame frame = plane_patch_frame(0.6, 0.02, 1.2);
    const FrustumField a = FrustumField::build(frame, KernelParams{}, 0.01);
    const FrustumField b = FrustumField::build(frame, KernelParams{}, 0.01);

    REQUIRE(a.training_points().size() == b.training_points().size());
    for (std::size_t i = 0; i < a.training_points().size(); ++i) {
        CHECK(a.training_points().points[i] == b.training_points().points[i]);
    }
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    for (int i = 0; i < 100; ++i) {
        const Point3 x(u(rng), u(rng), 0.3 + u(rng) * 0.5);
        const FieldSample sa = a.query(x);
        const FieldSample sb = b.query(x);
        CHECK(sa.distance == sb.distance);
        CHECK(sa.gradient == sb.gradient);
        CHECK(sa.occupancy == sb.occupancy);
    }
}

TEST_CASE("field build is stateless across frames") {
    const SensorFrame f1 = plane_patch_frame(0.6, 0.02, 1.2);
    const SensorFrame f2 = plane_patch_frame(0.5, 0.025, 1.0);
    const FrustumField fresh = FrustumField::build(f2, KernelParams{}, 0.01);
    const FrustumField prior = FrustumField::build(f1, KernelParams{}, 0.01);
    const FrustumField after = FrustumField::build(f2, KernelParams{}, 0.01);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (int i = 0; i < 50; ++i) {
        const Point3 x(u(rng), u(rng), 0.2);
        CHECK(fresh.query(x).distance == after.query(x).distance);
    }
}

TEST_CASE("select_in_frustum basic cases") {
    const SensorFrame frame = plane_patch_frame(0.5, 0.05, 1.0);
    const FrustumField field = FrustumField::build(frame, KernelParams{}, 0.02);

    // All prior points behind the camera: nothing selected.
    std::vector<Point3> behind = {{0.0, 0.0, 3.0}, {0.2, 0.1, 2.5}};  // above the camera
    CHECK(select_in_frustum(behind, field).empty());

    // A point on the optical axis at mid depth is selected.
    std::vector<Point3> axis = {{0.0, 0.0, 0.5}};
    CHECK(select_in_frustum(axis, field).size() == 1);
}

TEST_CASE("select_in_frustum equals the brute-force predicate") {
    const SensorFrame frame = plane_patch_frame(0.5, 0.05, 1.0);
    const FrustumField field = FrustumField::build(frame, KernelParams{}, 0.02);

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<Point3> prior;
    for (int i = 0; i < 1000; ++i) prior.push_back({u(rng), u(rng), u(rng)});

    const auto selected = select_in_frustum(prior, field);
    std::set<std::uint32_t> sel(selected.begin(), selected.end());
    for (std::uint32_t i = 0; i < prior.size(); ++i) {
        CHECK(sel.count(i) == static_cast<std::size_t>(
                                  in_frustum(prior[i], field.pose(), field.intrinsics())));
    }
}

TEST_CASE("query on a current training point stays below the resolution") {
    const SensorFrame frame = plane_patch_frame(0.8, 0.02, 1.2);
    const double res = 0.01;
    const FrustumField field = FrustumField::build(frame, KernelParams{}, res);
    const auto &pts = field.training_points().points;
    for (std::size_t i = 0; i < pts.size(); i += 97) {
        CHECK(field.query(pts[i]).distance < res);
    }
}

TEST_CASE("query above a flat patch recovers distance and normal") {
    const SensorFrame frame = plane_patch_frame(1.0, 0.02, 1.5);
    const FrustumField field = FrustumField::build(frame, KernelParams{}, 0.01);

    for (double x = -0.3; x <= 0.3001; x += 0.1) {
        const FieldSample s = field.query({x, 0.07, 0.15});
        CHECK(std::abs(s.distance - 0.15) <= 0.01);
        REQUIRE(s.gradient_defined);
        CHECK(s.gradient.dot(Eigen::Vector3d::UnitZ()) >= 0.99);
    }
}

TEST_CASE("batched queries equal individual queries") {
    const SensorFrame frame = plane_patch_frame(0.6, 0.02, 1.2);
    const FrustumField field = FrustumField::build(frame, KernelParams{}, 0.01);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    std::vector<Point3> queries;
    for (int i = 0; i < 300; ++i) queries.push_back({u(rng), u(rng), 0.1 + 0.4 * (u(rng) + 0.3)});

    const auto batch = field.query_batch(queries);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const FieldSample single = field.query(queries[i]);
        CHECK(batch[i].distance == single.distance);
        CHECK(batch[i].gradient == single.gradient);
    }
}

TEST_CASE("query is insensitive to cluster-grid translation") {
    const SensorFrame frame = plane_patch_frame(1.0, 0.02, 1.5);
    KernelParams k;
    FrustumFieldParams pa;
    FrustumFieldParams pb;
    pb.grid_anchor = Point3(1.5 * k.lengthscale, 1.5 * k.lengthscale, 1.5 * k.lengthscale);
    const FrustumField a = FrustumField::build(frame, k, 0.01, pa);
    const FrustumField b = FrustumField::build(frame, k, 0.01, pb);

    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-0.35, 0.35);
    for (int i = 0; i < 200; ++i) {
        const Point3 x(u(rng), u(rng), 0.02 + 0.35 * (u(rng) + 0.35));
        const double da = a.query(x).distance;
        const double db = b.query(x).distance;
        if (da < 2.0 * k.lengthscale) {
            CHECK(std::abs(da - db) < 0.005);
        }
    }
}

TEST_CASE("empty and degenerate frames yield the free-space sentinel") {
    SensorFrame frame;
    frame.intrinsics = wide_intrinsics();
    KernelParams k;
    const FrustumField field = FrustumField::build(frame, k, 0.01);
    CHECK(field.empty());
    const FieldSample s = field.query({0, 0, 1});
    CHECK(s.distance == k.d_max());
    CHECK_FALSE(s.gradient_defined);

    // NaN returns are dropped at ingestion.
    SensorFrame bad;
    bad.intrinsics = wide_intrinsics();
    bad.cloud.push_back({std::numeric_limits<double>::quiet_NaN(), 0, 1});
    bad.cloud.push_back({0, 0, 0});
    const FrustumField dropped = FrustumField::build(bad, k, 0.01);
    CHECK(dropped.empty());
    CHECK(dropped.dropped_points() == 2);
}
