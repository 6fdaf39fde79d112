#include "gpdf/planning.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace gpdf {

Eigen::Vector3d reactive_step(const Point3 &position, const Point3 &goal,
                              const FieldSample &sample, const ReactiveParams &params) {
    if (!params.is_valid()) throw std::invalid_argument("reactive_step: invalid parameters");
    const Eigen::Vector3d to_goal = goal - position;
    if (to_goal.norm() <= params.goal_tolerance) return Eigen::Vector3d::Zero();
    const Eigen::Vector3d v_att = to_goal.normalized();

    double w = (params.d_safe - sample.distance) / (params.d_safe - params.d_min);
    w = std::clamp(w, 0.0, 1.0);
    const Eigen::Vector3d v_rep =
        sample.gradient_defined ? sample.gradient : Eigen::Vector3d::Zero();

    Eigen::Vector3d v = w * v_rep + (1.0 - w) * v_att;
    if (v.norm() < 1e-9) {
        if (std::abs(v_att.x()) < 1e-12 && std::abs(v_att.y()) < 1e-12) {
            v = Eigen::Vector3d(v_att.x(), -v_att.z(), v_att.y());  // quarter turn about x
        } else {
            v = Eigen::Vector3d(-v_att.y(), v_att.x(), v_att.z());  // quarter turn about z
        }
    }
    return v.normalized();
}

RolloutResult reactive_rollout(const Point3 &start, const Point3 &goal,
                               const DistanceField &field, const ReactiveParams &params,
                               std::size_t max_steps,
                               const std::function<void(std::size_t)> &on_step) {
    RolloutResult result;
    result.min_distance = std::numeric_limits<double>::infinity();
    Point3 x = start;
    result.path.push_back(x);

    for (std::size_t step = 0; step < max_steps; ++step) {
        if ((goal - x).norm() <= params.goal_tolerance) {
            result.reached = true;
            break;
        }
        const FieldSample sample = field.query(x);
        result.min_distance = std::min(result.min_distance, sample.distance);
        const Eigen::Vector3d v = reactive_step(x, goal, sample, params);
        x += params.step_size * v;
        result.path.push_back(x);
        ++result.steps;
        if (on_step) on_step(step);
    }
    if (!result.reached && (goal - x).norm() <= params.goal_tolerance) result.reached = true;
    return result;
}

Trajectory Trajectory::straight_line(const Point3 &start, const Point3 &goal, std::size_t n) {
    if (n < 2) throw std::invalid_argument("Trajectory: need at least two waypoints");
    Trajectory t;
    t.waypoints.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = static_cast<double>(k) / static_cast<double>(n - 1);
        t.waypoints.push_back(start + s * (goal - start));
    }
    return t;
}

double chomp_obstacle_cost(double d, double clearance) {
    if (d >= clearance) return 0.0;
    if (d >= 0.0) {
        const double e = clearance - d;
        return e * e / (2.0 * clearance);
    }
    return 0.5 * clearance - d;
}

double chomp_obstacle_cost_slope(double d, double clearance) {
    if (d >= clearance) return 0.0;
    if (d >= 0.0) return (d - clearance) / clearance;
    return -1.0;
}

namespace {

/// Local tangent/normal/binormal frame at waypoint k.
Eigen::Matrix3d path_frame(const Trajectory &traj, std::size_t k) {
    const std::size_t n = traj.size();
    const std::size_t prev = k == 0 ? 0 : k - 1;
    const std::size_t next = k + 1 < n ? k + 1 : n - 1;
    Eigen::Vector3d tangent = traj.waypoints[next] - traj.waypoints[prev];
    if (tangent.norm() < 1e-12) {
        tangent = Eigen::Vector3d::UnitX();
    } else {
        tangent.normalize();
    }
    Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
    if (std::abs(up.dot(tangent)) > 1.0 - 1e-9) up = Eigen::Vector3d::UnitX();
    const Eigen::Vector3d normal = up.cross(tangent).normalized();
    const Eigen::Vector3d binormal = tangent.cross(normal);
    Eigen::Matrix3d frame;
    frame.col(0) = tangent;
    frame.col(1) = normal;
    frame.col(2) = binormal;
    return frame;
}

}  // namespace

std::vector<Point3> body_sphere_centers(const Trajectory &traj, std::size_t k,
                                        const SphereBody &body) {
    const Eigen::Matrix3d frame = path_frame(traj, k);
    std::vector<Point3> centers;
    centers.reserve(body.size());
    for (const BodySphere &s : body) {
        centers.push_back(traj.waypoints[k] + frame * s.offset);
    }
    return centers;
}

ChompResult chomp_optimize(const Trajectory &init, const SphereBody &body,
                           const DistanceField &field, const ChompParams &params) {
    if (!params.is_valid()) throw std::invalid_argument("chomp_optimize: invalid parameters");
    if (init.size() < 3) throw std::invalid_argument("chomp_optimize: need interior waypoints");
    if (body.empty()) throw std::invalid_argument("chomp_optimize: empty body");

    const std::size_t n = init.size();
    const Eigen::Index m = static_cast<Eigen::Index>(n) - 2;  // free waypoints

    for (const std::size_t k : {std::size_t{0}, n - 1}) {
        for (const Point3 &c : body_sphere_centers(init, k, body)) {
            if (field.query(c).distance <= params.clearance) {
                throw std::invalid_argument(
                    "chomp_optimize: trajectory endpoint is not collision-free");
            }
        }
    }

    // Second-difference operator on the interior block; fixed endpoints enter
    // as a constant term.
    Eigen::MatrixXd diff = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
        diff(r, r) = -2.0;
        if (r > 0) diff(r, r - 1) = 1.0;
        if (r + 1 < m) diff(r, r + 1) = 1.0;
    }
    const Eigen::MatrixXd smooth_op = diff.transpose() * diff;
    const Eigen::LDLT<Eigen::MatrixXd> precond(smooth_op);

    auto interior = [&](const Trajectory &t) {
        Eigen::MatrixXd x(m, 3);
        for (Eigen::Index r = 0; r < m; ++r) x.row(r) = t.waypoints[r + 1].transpose();
        return x;
    };
    auto with_interior = [&](const Eigen::MatrixXd &x) {
        Trajectory t = init;
        for (Eigen::Index r = 0; r < m; ++r) t.waypoints[r + 1] = x.row(r).transpose();
        return t;
    };

    Eigen::MatrixXd endpoint_term = Eigen::MatrixXd::Zero(m, 3);
    endpoint_term.row(0) = init.waypoints.front().transpose();
    endpoint_term.row(m - 1) += init.waypoints.back().transpose();

    struct Evaluation {
        double cost = 0.0;
        Eigen::MatrixXd gradient;  // interior rows only
    };
    auto evaluate = [&](const Trajectory &t, bool want_gradient) {
        Evaluation ev;
        const Eigen::MatrixXd x = interior(t);
        const Eigen::MatrixXd acc = diff * x + endpoint_term;
        ev.cost = params.smoothness_weight * acc.squaredNorm();
        if (want_gradient) {
            ev.gradient = 2.0 * params.smoothness_weight * diff.transpose() * acc;
        }

        for (std::size_t k = 0; k < n; ++k) {
            const std::vector<Point3> centers = body_sphere_centers(t, k, body);
            for (std::size_t s = 0; s < centers.size(); ++s) {
                const FieldSample sample = field.query(centers[s]);
                const double margin = sample.distance - body[s].radius;
                ev.cost += params.obstacle_weight * chomp_obstacle_cost(margin, params.clearance);
                if (want_gradient && k > 0 && k + 1 < n && sample.gradient_defined) {
                    const double slope = chomp_obstacle_cost_slope(margin, params.clearance);
                    if (slope != 0.0) {
                        ev.gradient.row(static_cast<Eigen::Index>(k) - 1) +=
                            params.obstacle_weight * slope * sample.gradient.transpose();
                    }
                }
            }
        }
        return ev;
    };

    ChompResult result;
    result.trajectory = init;
    Eigen::MatrixXd x = interior(init);

    Evaluation current = evaluate(result.trajectory, true);
    if (!std::isfinite(current.cost)) {
        throw std::runtime_error("chomp_optimize: non-finite initial cost");
    }
    result.cost_history.push_back(current.cost);

    double lr = params.learning_rate;
    for (int iter = 0; iter < params.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const Eigen::MatrixXd step = precond.solve(current.gradient);

        bool accepted = false;
        double decrease = 0.0;
        while (lr > 1e-12) {
            const Eigen::MatrixXd x_new = x - lr * step;
            const Trajectory t_new = with_interior(x_new);
            Evaluation trial = evaluate(t_new, true);
            if (!std::isfinite(trial.cost)) {
                throw std::runtime_error("chomp_optimize: non-finite cost during line search");
            }
            if (trial.cost <= current.cost) {
                decrease = current.cost - trial.cost;
                x = x_new;
                result.trajectory = t_new;
                current = std::move(trial);
                result.cost_history.push_back(current.cost);
                accepted = true;
                break;
            }
            lr *= 0.5;  // backtracking keeps the accepted cost sequence non-increasing
        }
        if (!accepted || decrease < params.cost_tolerance) {
            result.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace gpdf
