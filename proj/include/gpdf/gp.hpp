#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gpdf/geometry.hpp"

namespace gpdf {

/// Squared-exponential kernel hyperparameters.
struct KernelParams {
    double lengthscale = 0.2;       // l [m]
    double signal_variance = 1.0;   // value of the kernel at zero distance
    double noise_variance = 1e-6;   // observation noise added to the kernel diagonal

    /// Distances beyond this are reported as the free-space sentinel.
    double d_max() const { return 3.0 * lengthscale; }

    bool is_valid() const {
        return lengthscale > 0.0 && signal_variance > 0.0 && noise_variance >= 0.0;
    }
};

/// One field query result: Euclidean distance to the nearest surface, the
/// unit gradient pointing away from it, and the underlying latent occupancy.
struct FieldSample {
    double distance = 0.0;
    Eigen::Vector3d gradient = Eigen::Vector3d::Zero();
    double occupancy = 0.0;
    bool gradient_defined = false;
    std::optional<double> variance;

    static FieldSample free_space(const KernelParams &params) {
        FieldSample s;
        s.distance = params.d_max();
        return s;
    }
};

double kernel_se(const Point3 &a, const Point3 &b, const KernelParams &params);

/// Inverse of the kernel's distance-covariance relation: maps an occupancy
/// value back to metric distance. Occupancy at or above the signal variance
/// clamps to 0; non-positive or vanishing occupancy yields d_max.
double revert_distance(double occupancy, const KernelParams &params);

/// Most training points a single model accepts; larger sets must be
/// partitioned spatially before building (the factorization is O(J^3)).
inline constexpr std::size_t kMaxModelPoints = 1024;

/// A GP occupancy model over one set of training points, regressing the
/// constant surface value 1. Immutable once built; concurrent queries on a
/// built model are safe.
class LocalGpModel {
public:
    /// Factorizes K + noise*I (SPD) and solves for the weight vector.
    /// keep_factor retains the Cholesky factor for variance queries.
    /// Throws std::invalid_argument on empty/oversized/duplicated inputs and
    /// std::runtime_error if the factorization fails even after one jitter
    /// retry.
    static LocalGpModel build(std::span<const Point3> points, const KernelParams &params,
                              bool keep_factor = true);
    static LocalGpModel build(const std::vector<Point3> &points, const KernelParams &params,
                              bool keep_factor = true) {
        return build(std::span<const Point3>(points), params, keep_factor);
    }

    /// Latent occupancy and its spatial gradient at the query point.
    void occupancy(const Point3 &x, double &occ, Eigen::Vector3d &occ_gradient) const;

    /// Distance, unit gradient away from the surface, occupancy.
    FieldSample query(const Point3 &x) const;

    /// GP predictive variance at the query point. Requires keep_factor.
    double query_variance(const Point3 &x) const;

    std::size_t size() const { return static_cast<std::size_t>(points_.cols()); }
    const KernelParams &params() const { return params_; }
    const Eigen::VectorXd &alpha() const { return alpha_; }
    const Eigen::Matrix3Xd &points() const { return points_; }

    /// Max-norm of (K + noise*I)*alpha - 1.
    double solve_residual() const;

private:
    Eigen::Matrix3Xd points_;
    Eigen::VectorXd alpha_;
    Eigen::VectorXd point_sq_norms_;  // per-column |x_j|^2, for fast kernel rows
    KernelParams params_;
    std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> factor_;  // null unless keep_factor
};

/// Read interface shared by the per-frame and persistent fields; planners
/// hold this to stay agnostic of the backing container.
class DistanceField {
public:
    virtual ~DistanceField() = default;
    virtual FieldSample query(const Point3 &x) const = 0;
    virtual std::vector<FieldSample> query_batch(std::span<const Point3> points) const;
};

}  // namespace gpdf
