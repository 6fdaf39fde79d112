#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "gpdf/geometry.hpp"

using namespace gpdf;

namespace {

Pose rotation_z(double angle) {
    Pose p;
    p.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    return p;
}

Pose random_pose(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng));
    while (q.norm() < 1e-3) q = {u(rng), u(rng), u(rng), u(rng)};
    q.normalize();
    Pose p;
    p.rotation = q.toRotationMatrix();
    p.translation = {2.0 * u(rng), 2.0 * u(rng), 2.0 * u(rng)};
    return p;
}

PointCloud random_cloud(std::mt19937_64 &rng, std::size_t n, double extent) {
    std::uniform_real_distribution<double> u(0.0, extent);
    PointCloud cloud;
    for (std::size_t i = 0; i < n; ++i) {
        cloud.push_back({u(rng), u(rng), u(rng)});
    }
    return cloud;
}

}  // namespace

TEST_CASE("transform_cloud identity") {
    PointCloud cloud;
    cloud.push_back({1.0, 2.0, 3.0}, {10, 20, 30});
    cloud.push_back({-0.5, 0.25, 0.0}, {1, 2, 3});
    const PointCloud out = transform_cloud(cloud, Pose::identity());
    REQUIRE(out.size() == 2);
    CHECK(out.points[0] == cloud.points[0]);
    CHECK(out.points[1] == cloud.points[1]);
    CHECK(out.colors == cloud.colors);
}

TEST_CASE("transform_cloud pure translation") {
    PointCloud cloud;
    cloud.push_back({0.0, 0.0, 0.0});
    Pose pose;
    pose.translation = {1.0, 0.0, 0.0};
    const PointCloud out = transform_cloud(cloud, pose);
    CHECK(out.points[0] == Point3(1.0, 0.0, 0.0));
}

TEST_CASE("transform_cloud 90 degree z rotation") {
    PointCloud cloud;
    cloud.push_back({1.0, 0.0, 0.0});
    const PointCloud out = transform_cloud(cloud, rotation_z(M_PI / 2));
    CHECK((out.points[0] - Point3(0.0, 1.0, 0.0)).norm() < 1e-12);
}

TEST_CASE("transform_cloud rejects non-orthonormal rotation") {
    Pose bad;
    bad.rotation(0, 0) = 2.0;
    PointCloud cloud;
    cloud.push_back({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(transform_cloud(cloud, bad), std::invalid_argument);

    Pose reflection = Pose::identity();
    reflection.rotation(2, 2) = -1.0;  // det -1
    CHECK_THROWS_AS(transform_cloud(cloud, reflection), std::invalid_argument);
}

TEST_CASE("transform roundtrip through the inverse") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 20; ++it) {
        const Pose pose = random_pose(rng);
        const PointCloud cloud = random_cloud(rng, 50, 2.0);
        const PointCloud back = transform_cloud(transform_cloud(cloud, pose), pose.inverse());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            CHECK((back.points[i] - cloud.points[i]).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("in_frustum basic cases") {
    CameraIntrinsics intr;
    intr.hfov = 1.0;
    intr.vfov = 0.8;
    intr.near_plane = 0.2;
    intr.far_plane = 4.0;
    const Pose cam = Pose::identity();

    CHECK(in_frustum({0.0, 0.0, 0.5 * (intr.near_plane + intr.far_plane)}, cam, intr));
    CHECK_FALSE(in_frustum({0.0, 0.0, -1.0}, cam, intr));

    // Far plane inclusive, just beyond excluded; near plane exclusive.
    CHECK(in_frustum({0.0, 0.0, intr.far_plane}, cam, intr));
    CHECK_FALSE(in_frustum({0.0, 0.0, intr.far_plane * 1.01}, cam, intr));
    CHECK_FALSE(in_frustum({0.0, 0.0, intr.near_plane}, cam, intr));

    // Angular bound inclusive.
    const double z = 1.0;
    const double x_edge = z * std::tan(0.5 * intr.hfov);
    CHECK(in_frustum({x_edge, 0.0, z}, cam, intr));
    CHECK_FALSE(in_frustum({x_edge * 1.001, 0.0, z}, cam, intr));
}

TEST_CASE("in_frustum invariant under rigid transformation") {
    CameraIntrinsics intr;
    intr.hfov = 1.1;
    intr.vfov = 0.9;
    intr.near_plane = 0.1;
    intr.far_plane = 5.0;

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int it = 0; it < 200; ++it) {
        const Point3 p(u(rng), u(rng), u(rng));
        const Pose cam = random_pose(rng);
        const Pose rigid = random_pose(rng);
        const bool before = in_frustum(p, cam, intr);
        const bool after = in_frustum(rigid.apply(p), rigid * cam, intr);
        CHECK(before == after);
    }
}

TEST_CASE("voxel_downsample merges close points") {
    PointCloud cloud;
    cloud.push_back({0.0105, 0.0105, 0.0105});
    cloud.push_back({0.0115, 0.0105, 0.0105});  // 1 mm apart, same 5 cm voxel
    const PointCloud out = voxel_downsample(cloud, 0.05);
    REQUIRE(out.size() == 1);
    CHECK((out.points[0] - Point3(0.011, 0.0105, 0.0105)).norm() < 1e-12);
}

TEST_CASE("voxel_downsample keeps distant points") {
    PointCloud cloud;
    cloud.push_back({0.0, 0.0, 0.0});
    cloud.push_back({1.0, 0.0, 0.0});
    CHECK(voxel_downsample(cloud, 0.05).size() == 2);
}

TEST_CASE("voxel_downsample occupancy matches a hash-set oracle") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    PointCloud cloud;
    for (int i = 0; i < 1000; ++i) cloud.push_back({u(rng), u(rng), u(rng)});

    const double res = 0.1;
    std::set<std::array<int, 3>> occupied;
    for (const Point3 &p : cloud.points) {
        occupied.insert({static_cast<int>(std::floor(p.x() / res)),
                         static_cast<int>(std::floor(p.y() / res)),
                         static_cast<int>(std::floor(p.z() / res))});
    }
    const PointCloud out = voxel_downsample(cloud, res);
    CHECK(out.size() == occupied.size());
    CHECK(out.size() <= cloud.size());
    CHECK(out.size() >= 1);
    CHECK(out.size() <= 8);
}

TEST_CASE("voxel_downsample is idempotent on its own output") {
    std::mt19937_64 rng(5);
    const PointCloud cloud = random_cloud(rng, 500, 0.5);
    const PointCloud once = voxel_downsample(cloud, 0.05);
    const PointCloud twice = voxel_downsample(once, 0.05);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once.points[i] == twice.points[i]);
    }
}

TEST_CASE("voxel_downsample keeps the first point's color per voxel") {
    PointCloud cloud;
    cloud.push_back({0.01, 0.01, 0.01}, {1, 2, 3});
    cloud.push_back({0.012, 0.01, 0.01}, {4, 5, 6});
    const PointCloud out = voxel_downsample(cloud, 0.05);
    REQUIRE(out.has_colors());
    CHECK(out.colors[0] == Color{1, 2, 3});
}

TEST_CASE("voxel_downsample edge cases") {
    CHECK(voxel_downsample(PointCloud{}, 0.05).empty());
    PointCloud cloud;
    cloud.push_back({0.0, 0.0, 0.0});
    CHECK_THROWS_AS(voxel_downsample(cloud, 0.0), std::invalid_argument);
}

TEST_CASE("filter_finite drops bad returns") {
    PointCloud cloud;
    cloud.push_back({1.0, 2.0, 3.0});
    cloud.push_back({std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0});
    cloud.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    cloud.push_back({0.0, 0.0, 0.0});  // zero-depth return
    std::size_t dropped = 0;
    const PointCloud out = filter_finite(cloud, &dropped);
    CHECK(out.size() == 1);
    CHECK(dropped == 3);
}
