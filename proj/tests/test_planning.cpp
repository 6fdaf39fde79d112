#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <random>

#include "gpdf/fused_field.hpp"
#include "gpdf/pipeline.hpp"
#include "gpdf/planning.hpp"
#include "gpdf/scene.hpp"

using namespace gpdf;

namespace {

struct EmptyField : DistanceField {
    KernelParams kernel;
    FieldSample query(const Point3 &) const override { return FieldSample::free_space(kernel); }
};

struct CountingField : DistanceField {
    const DistanceField &inner;
    mutable std::atomic<std::size_t> count{0};
    explicit CountingField(const DistanceField &f) : inner(f) {}
    FieldSample query(const Point3 &x) const override {
        ++count;
        return inner.query(x);
    }
};

PointCloud fibonacci_sphere(const Point3 &center, double r, double spacing) {
    PointCloud cloud;
    const std::size_t n = static_cast<std::size_t>(4.0 * M_PI * r * r / (spacing * spacing));
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double rad = std::sqrt(1.0 - z * z);
        const double th = golden * i;
        cloud.push_back(center + r * Point3(rad * std::cos(th), rad * std::sin(th), z));
    }
    return cloud;
}

FieldSample sample_with(double distance, const Eigen::Vector3d &gradient) {
    FieldSample s;
    s.distance = distance;
    s.gradient = gradient;
    s.gradient_defined = true;
    return s;
}

}  // namespace

TEST_CASE("reactive step follows the attraction when far from obstacles") {
    ReactiveParams params;
    const FieldSample s = sample_with(params.d_safe + 0.1, {0, 1, 0});
    const Eigen::Vector3d v = reactive_step({0, 0, 0}, {1, 0, 0}, s, params);
    CHECK(v == Eigen::Vector3d(1, 0, 0));
}

TEST_CASE("reactive step follows the repulsion at full engagement") {
    ReactiveParams params;
    const FieldSample s = sample_with(params.d_min * 0.5, {0, 1, 0});
    const Eigen::Vector3d v = reactive_step({0, 0, 0}, {1, 0, 0}, s, params);
    CHECK(v == Eigen::Vector3d(0, 1, 0));
}

TEST_CASE("reactive step blends attraction and repulsion") {
    ReactiveParams params;
    params.d_safe = 0.3;
    params.d_min = 0.1;
    const double mid = 0.5 * (params.d_safe + params.d_min);  // w = 0.5
    const FieldSample s = sample_with(mid, {0, 1, 0});
    const Eigen::Vector3d v = reactive_step({0, 0, 0}, {1, 0, 0}, s, params);
    CHECK(v.x() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(v.y() == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(v.z() == 0.0);
}

TEST_CASE("reactive step returns zero at the goal") {
    ReactiveParams params;
    const FieldSample s = sample_with(1.0, {0, 0, 1});
    CHECK(reactive_step({1, 0, 0}, {1, 0, 0}, s, params) == Eigen::Vector3d::Zero());
    CHECK(reactive_step({1 - params.goal_tolerance * 0.5, 0, 0}, {1, 0, 0}, s, params) ==
          Eigen::Vector3d::Zero());
}

TEST_CASE("exact opposition breaks the tie deterministically") {
    ReactiveParams params;
    params.d_safe = 0.3;
    params.d_min = 0.1;
    const double mid = 0.5 * (params.d_safe + params.d_min);
    // Repulsion exactly opposes attraction.
    const FieldSample s = sample_with(mid, {-1, 0, 0});
    const Eigen::Vector3d v = reactive_step({0, 0, 0}, {1, 0, 0}, s, params);
    CHECK((v - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);  // quarter turn about z

    // Vertical attraction falls back to the x-axis rotation.
    const FieldSample sv = sample_with(mid, {0, 0, -1});
    const Eigen::Vector3d vv = reactive_step({0, 0, 0}, {0, 0, 1}, sv, params);
    CHECK((vv - Eigen::Vector3d(0, -1, 0)).norm() < 1e-12);
}

TEST_CASE("reactive step output is unit length for random inputs") {
    ReactiveParams params;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1), ud(0.0, 0.5);
    for (int i = 0; i < 500; ++i) {
        const Point3 x(u(rng), u(rng), u(rng));
        const Point3 goal(u(rng), u(rng), u(rng));
        Eigen::Vector3d g(u(rng), u(rng), u(rng));
        if (g.norm() < 1e-9) continue;
        const FieldSample s = sample_with(ud(rng), g.normalized());
        const Eigen::Vector3d v = reactive_step(x, goal, s, params);
        if ((goal - x).norm() <= params.goal_tolerance) {
            CHECK(v == Eigen::Vector3d::Zero());
        } else {
            CHECK(std::abs(v.norm() - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("blend weight is continuous and monotone in the distance") {
    ReactiveParams params;
    params.d_safe = 0.3;
    params.d_min = 0.1;
    double prev_angle = -1.0;
    for (double d = 0.05; d <= 0.4; d += 0.001) {
        const FieldSample s = sample_with(d, {0, 1, 0});
        const Eigen::Vector3d v = reactive_step({0, 0, 0}, {1, 0, 0}, s, params);
        const double angle = std::atan2(v.y(), v.x());  // repulsion share
        if (prev_angle >= 0.0) {
            CHECK(angle <= prev_angle + 1e-9);      // monotone non-increasing with d
            CHECK(std::abs(angle - prev_angle) < 0.02);  // continuous
        }
        prev_angle = angle;
    }
}

TEST_CASE("rollout crosses an empty field in a straight line") {
    EmptyField field;
    ReactiveParams params;
    params.step_size = 0.05;
    params.goal_tolerance = 1e-6;
    const RolloutResult r = reactive_rollout({0, 0, 0}, {1, 0, 0}, field, params, 100);
    CHECK(r.reached);
    CHECK(r.steps == 20);
    CHECK((r.path.back() - Point3(1, 0, 0)).norm() <= 1e-6);
    for (const Point3 &p : r.path) {
        CHECK(std::abs(p.y()) < 1e-12);
        CHECK(std::abs(p.z()) < 1e-12);
    }
}

TEST_CASE("rollout deviates around a mapped obstacle") {
    const double res = 0.01;
    FusedField field(default_kernel_for_resolution(res), FusionParams::for_resolution(res));
    field.insert(fibonacci_sphere({0.5, 0.0, 0.0}, 0.06, res));

    ReactiveParams params;
    params.d_safe = 0.3;
    params.d_min = 0.1;
    params.step_size = 0.02;
    const RolloutResult r = reactive_rollout({0, 0, 0}, {1, 0, 0}, field, params, 400);
    CHECK(r.reached);
    CHECK(r.min_distance >= params.d_min);
    double min_clearance = std::numeric_limits<double>::infinity();
    for (const Point3 &p : r.path) {
        min_clearance = std::min(min_clearance, (p - Point3(0.5, 0.0, 0.0)).norm() - 0.06);
    }
    CHECK(min_clearance >= params.d_min * 0.9);  // analytic check of the recorded path
}

TEST_CASE("rollout dodges a moving obstacle updated between steps") {
    const double res = 0.01;
    FusedField field(default_kernel_for_resolution(res), FusionParams::for_resolution(res));

    // Obstacle ball crossing the straight-line path; re-observed every step
    // by a fixed overhead camera.
    Scene scene;
    scene.intrinsics.hfov = 1.2;
    scene.intrinsics.vfov = 1.0;
    scene.intrinsics.near_plane = 0.1;
    scene.intrinsics.far_plane = 4.0;
    scene.image_width = 100;
    scene.image_height = 80;
    scene.duration = 4.0;
    Primitive ball = Primitive::sphere({0.5, 0.6, 0.0}, 0.08);
    ball.motion = {{0.0, {0.5, 0.6, 0.0}, Eigen::Quaterniond::Identity()},
                   {4.0, {0.5, -1.0, 0.0}, Eigen::Quaterniond::Identity()}};
    scene.primitives.push_back(ball);
    const Point3 eye(0.5, 0.0, 2.0);
    scene.camera_motion = {{0.0, eye, look_at(eye, {0.5, 0.0, 0.0})}};

    ReactiveParams params;
    params.d_safe = 0.3;
    params.d_min = 0.08;
    params.step_size = 0.02;

    double t = 0.0;
    field.integrate_frame(render_frame(scene, t));
    std::vector<double> times;
    const RolloutResult r = reactive_rollout(
        {0, 0, 0}, {1, 0, 0}, field, params, 600, [&](std::size_t) {
            t = std::min(scene.duration, t + 0.02);
            field.integrate_frame(render_frame(scene, t));
            times.push_back(t);
        });
    CHECK(r.reached);
    CHECK(r.min_distance >= params.d_min * 0.9);
}

TEST_CASE("chomp leaves an obstacle-free straight line untouched") {
    EmptyField field;
    // 33 waypoints: spacing 1/32 is exactly representable, so the straight
    // line's second differences and smoothness cost are exactly zero.
    const Trajectory init = Trajectory::straight_line({0, 0, 0}, {1, 0, 0}, 33);
    const SphereBody body = {{Point3::Zero(), 0.05}};
    ChompParams params;
    const ChompResult r = chomp_optimize(init, body, field, params);
    REQUIRE(r.trajectory.size() == init.size());
    for (std::size_t k = 0; k < init.size(); ++k) {
        CHECK(r.trajectory.waypoints[k] == init.waypoints[k]);
    }
    CHECK(r.cost_history.front() == 0.0);
    CHECK(r.converged);
}

TEST_CASE("chomp pushes a straight line out of a mapped sphere") {
    const double res = 0.01;
    FusedField field(default_kernel_for_resolution(res), FusionParams::for_resolution(res));
    const Point3 center(0.5, 0.0, 0.0);
    const double radius = 0.15;
    field.insert(fibonacci_sphere(center, radius, res));

    const SphereBody body = {{Point3::Zero(), 0.03}};
    const Trajectory init = Trajectory::straight_line({0, 0.02, 0}, {1, 0.02, 0}, 50);
    ChompParams params;
    params.max_iterations = 150;
    const ChompResult r = chomp_optimize(init, body, field, params);

    CHECK(r.cost_history.back() < r.cost_history.front());
    for (std::size_t i = 1; i < r.cost_history.size(); ++i) {
        CHECK(r.cost_history[i] <= r.cost_history[i - 1] + 1e-12);
    }
    CHECK(r.trajectory.waypoints.front() == init.waypoints.front());
    CHECK(r.trajectory.waypoints.back() == init.waypoints.back());

    // Body clearance against the analytic sphere at every waypoint.
    for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
        for (const Point3 &c : body_sphere_centers(r.trajectory, k, body)) {
            CHECK((c - center).norm() - radius >= body[0].radius - 1e-6);
        }
    }
}

TEST_CASE("a cost evaluation queries every body sphere at every waypoint") {
    EmptyField field;
    CountingField counting(field);
    SphereBody body;
    for (int i = 0; i < 29; ++i) {
        body.push_back({Point3(0.01 * i, 0, 0), 0.05});
    }
    const Trajectory init = Trajectory::straight_line({0, 0, 0}, {1, 0, 0}, 110);
    ChompParams params;
    params.max_iterations = 1;
    const std::size_t before = counting.count;
    chomp_optimize(init, body, counting, params);
    const std::size_t per_eval = 29 * 110;
    const std::size_t used = counting.count - before;
    // Endpoint validation (2 waypoints) plus one evaluation per line-search
    // probe; each full evaluation is exactly 29 x 110 = 3190 queries.
    CHECK(used >= per_eval);
    CHECK((used - 2 * body.size()) % per_eval == 0);
}

TEST_CASE("chomp validates endpoints and finiteness") {
    const double res = 0.01;
    FusedField field(default_kernel_for_resolution(res), FusionParams::for_resolution(res));
    field.insert(fibonacci_sphere({0, 0, 0}, 0.15, res));
    const SphereBody body = {{Point3::Zero(), 0.05}};

    // Start point sits against the obstacle: rejected up front.
    const Trajectory bad = Trajectory::straight_line({0.16, 0, 0}, {1, 0, 0}, 20);
    CHECK_THROWS_AS(chomp_optimize(bad, body, field, ChompParams{}), std::invalid_argument);

    struct NanField : DistanceField {
        FieldSample query(const Point3 &) const override {
            FieldSample s;
            s.distance = std::numeric_limits<double>::quiet_NaN();
            return s;
        }
    } nan_field;
    const Trajectory init = Trajectory::straight_line({0, 0, 0}, {1, 0, 0}, 10);
    CHECK_THROWS_AS(chomp_optimize(init, body, nan_field, ChompParams{}), std::runtime_error);
}

TEST_CASE("replanning from the previous solution restores clearance") {
    const double res = 0.01;
    FusionParams fusion = FusionParams::for_resolution(res);
    FusedField field(default_kernel_for_resolution(res), fusion);
    field.insert(fibonacci_sphere({0.35, 0.2, 0.0}, 0.1, res));

    const SphereBody body = {{Point3::Zero(), 0.03}};
    ChompParams params;
    params.max_iterations = 150;
    const Trajectory init = Trajectory::straight_line({0, 0.01, 0}, {1, 0.01, 0}, 40);
    const ChompResult first = chomp_optimize(init, body, field, params);

    // A new obstacle appears on the optimized path.
    PointCloud obstacle = fibonacci_sphere({0.65, -0.05, 0.0}, 0.08, res);
    field.insert(obstacle);
    const ChompResult second = chomp_optimize(first.trajectory, body, field, params);

    for (std::size_t k = 0; k < second.trajectory.size(); ++k) {
        for (const Point3 &c : body_sphere_centers(second.trajectory, k, body)) {
            const double clearance_a = (c - Point3(0.35, 0.2, 0.0)).norm() - 0.1;
            const double clearance_b = (c - Point3(0.65, -0.05, 0.0)).norm() - 0.08;
            CHECK(std::min(clearance_a, clearance_b) >= body[0].radius - 5e-3);
        }
    }
}

TEST_CASE("trajectory and parameter validation") {
    CHECK_THROWS_AS(Trajectory::straight_line({0, 0, 0}, {1, 0, 0}, 1), std::invalid_argument);

    ReactiveParams bad;
    bad.d_min = 0.5;
    bad.d_safe = 0.2;
    EmptyField field;
    CHECK_THROWS_AS(reactive_step({0, 0, 0}, {1, 0, 0}, FieldSample{}, bad),
                    std::invalid_argument);

    ChompParams bad_chomp;
    bad_chomp.max_iterations = 0;
    const Trajectory init = Trajectory::straight_line({0, 0, 0}, {1, 0, 0}, 5);
    CHECK_THROWS_AS(chomp_optimize(init, {{Point3::Zero(), 0.05}}, field, bad_chomp),
                    std::invalid_argument);
}
