#pragma once

#include <functional>
#include <vector>

#include "gpdf/geometry.hpp"
#include "gpdf/gp.hpp"

namespace gpdf {

struct ReactiveParams {
    double d_safe = 0.3;         // repulsion starts below this distance
    double d_min = 0.1;          // full repulsion at and below this distance
    double step_size = 0.02;
    double goal_tolerance = 0.01;

    bool is_valid() const {
        return d_min > 0.0 && d_safe > d_min && step_size > 0.0 && goal_tolerance >= 0.0;
    }
};

/// Unit direction blending the field gradient (repulsion) with the direction
/// to the goal (attraction) by a linear ramp on the queried distance. Returns
/// zero once within goal_tolerance of the goal. Exact repulsive/attractive
/// opposition is broken deterministically by rotating the attractive vector a
/// quarter turn about the world z axis (x axis when it is vertical).
Eigen::Vector3d reactive_step(const Point3 &position, const Point3 &goal,
                              const FieldSample &sample, const ReactiveParams &params);

struct RolloutResult {
    std::vector<Point3> path;   // includes the start
    bool reached = false;
    double min_distance = 0.0;  // minimum queried distance over the rollout
    std::size_t steps = 0;
};

/// Steps the reactive rule against the live field until the goal or
/// max_steps. on_step (optional) runs after each step, e.g. to advance the
/// world between queries.
RolloutResult reactive_rollout(const Point3 &start, const Point3 &goal,
                               const DistanceField &field, const ReactiveParams &params,
                               std::size_t max_steps,
                               const std::function<void(std::size_t)> &on_step = {});

struct Trajectory {
    std::vector<Point3> waypoints;  // first and last are fixed endpoints

    static Trajectory straight_line(const Point3 &start, const Point3 &goal, std::size_t n);
    std::size_t size() const { return waypoints.size(); }
};

struct BodySphere {
    Point3 offset = Point3::Zero();  // in the local path frame (tangent, normal, binormal)
    double radius = 0.05;
};
using SphereBody = std::vector<BodySphere>;

struct ChompParams {
    double clearance = 0.1;          // obstacle cost is zero beyond this margin
    double smoothness_weight = 1.0;
    double obstacle_weight = 1.0;
    double learning_rate = 0.05;
    int max_iterations = 100;
    double cost_tolerance = 1e-8;    // stop when the cost decrease falls below

    bool is_valid() const {
        return clearance > 0.0 && smoothness_weight >= 0.0 && obstacle_weight >= 0.0 &&
               learning_rate > 0.0 && max_iterations >= 1;
    }
};

struct ChompResult {
    Trajectory trajectory;
    std::vector<double> cost_history;  // accepted costs, non-increasing
    int iterations = 0;
    bool converged = false;
};

/// Hinge obstacle cost on the clearance margin d (distance minus sphere
/// radius): quadratic ramp inside the margin, linear once penetrating.
double chomp_obstacle_cost(double d, double clearance);
double chomp_obstacle_cost_slope(double d, double clearance);

/// Sphere centers of the body placed at waypoint k of the trajectory.
std::vector<Point3> body_sphere_centers(const Trajectory &traj, std::size_t k,
                                        const SphereBody &body);

/// Gradient descent on smoothness + obstacle cost with the update
/// preconditioned by the inverse second-difference operator and a
/// backtracking (halving) step size. Endpoints never move.
ChompResult chomp_optimize(const Trajectory &init, const SphereBody &body,
                           const DistanceField &field, const ChompParams &params);

}  // namespace gpdf
