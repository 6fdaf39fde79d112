#include "gpdf/gp.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_set>

namespace gpdf {

double kernel_se(const Point3 &a, const Point3 &b, const KernelParams &params) {
    const double sq = (a - b).squaredNorm();
    return params.signal_variance * std::exp(-sq / (2.0 * params.lengthscale * params.lengthscale));
}

double revert_distance(double occupancy, const KernelParams &params) {
    const double dmax = params.d_max();
    if (!(occupancy > 0.0)) return dmax;
    if (occupancy >= params.signal_variance) return 0.0;
    const double l = params.lengthscale;
    const double d = std::sqrt(-2.0 * l * l * std::log(occupancy / params.signal_variance));
    return d < dmax ? d : dmax;
}

namespace {

Eigen::MatrixXd kernel_matrix(const Eigen::Matrix3Xd &pts, const KernelParams &params) {
    const Eigen::Index n = pts.cols();
    const double inv_two_l2 = 1.0 / (2.0 * params.lengthscale * params.lengthscale);
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = params.signal_variance + params.noise_variance;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double sq = (pts.col(i) - pts.col(j)).squaredNorm();
            const double v = params.signal_variance * std::exp(-sq * inv_two_l2);
            k(i, j) = v;
            k(j, i) = v;
        }
    }
    return k;
}

struct PointHash {
    std::size_t operator()(const Point3 &p) const {
        auto h = [](double v) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            return std::hash<std::uint64_t>{}(bits);
        };
        return h(p.x()) ^ (h(p.y()) * 0x9e3779b97f4a7c15ull) ^ (h(p.z()) << 1);
    }
};
struct PointEq {
    bool operator()(const Point3 &a, const Point3 &b) const { return a == b; }
};

}  // namespace

LocalGpModel LocalGpModel::build(std::span<const Point3> points, const KernelParams &params,
                                 bool keep_factor) {
    if (!params.is_valid()) throw std::invalid_argument("LocalGpModel: invalid kernel parameters");
    if (points.empty()) throw std::invalid_argument("LocalGpModel: no training points");
    if (points.size() > kMaxModelPoints) {
        throw std::invalid_argument(
            "LocalGpModel: too many training points for one model; partition the set spatially");
    }
    {
        std::unordered_set<Point3, PointHash, PointEq> seen;
        seen.reserve(points.size());
        for (const Point3 &p : points) {
            if (!p.allFinite()) throw std::invalid_argument("LocalGpModel: non-finite point");
            if (!seen.insert(p).second) {
                throw std::invalid_argument(
                    "LocalGpModel: identical training points make the kernel matrix singular; "
                    "downsample or add observation noise");
            }
        }
    }

    LocalGpModel model;
    model.params_ = params;
    model.points_.resize(3, static_cast<Eigen::Index>(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        model.points_.col(static_cast<Eigen::Index>(i)) = points[i];
    }

    Eigen::MatrixXd k = kernel_matrix(model.points_, params);
    auto llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(k);
    if (llt->info() != Eigen::Success) {
        // One retry with diagonal jitter; dense near-duplicates can make the
        // matrix numerically indefinite even when formally SPD.
        k.diagonal().array() += 1e-6;
        llt = std::make_shared<Eigen::LLT<Eigen::MatrixXd>>(k);
        if (llt->info() != Eigen::Success) {
            throw std::runtime_error(
                "LocalGpModel: Cholesky factorization failed; add observation noise (jitter) or "
                "thin near-duplicate points");
        }
    }
    model.alpha_ = llt->solve(Eigen::VectorXd::Ones(model.points_.cols()));
    if (!model.alpha_.allFinite()) {
        throw std::runtime_error("LocalGpModel: non-finite solve result");
    }
    model.point_sq_norms_ = model.points_.colwise().squaredNorm().transpose();
    if (keep_factor) model.factor_ = std::move(llt);
    return model;
}

void LocalGpModel::occupancy(const Point3 &x, double &occ, Eigen::Vector3d &occ_gradient) const {
    const double inv_l2 = 1.0 / (params_.lengthscale * params_.lengthscale);
    const double inv_two_l2 = 0.5 * inv_l2;
    const Eigen::Index n = points_.cols();

    // |x - x_j|^2 = |x_j|^2 - 2 x.x_j + |x|^2, then one vectorized exp pass.
    using Scratch = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor,
                                  static_cast<int>(kMaxModelPoints), 1>;
    Scratch w(n);
    w.noalias() = points_.transpose() * x;
    w = (point_sq_norms_ - 2.0 * w).array() + x.squaredNorm();
    w = (w.array() * -inv_two_l2).exp() * params_.signal_variance;
    w.array() *= alpha_.array();

    occ = w.sum();
    // d/dx of the SE kernel is -(x - x_j)/l^2 * k(x, x_j), so the weighted sum
    // collapses to one matrix-vector product.
    occ_gradient.noalias() = points_ * w;
    occ_gradient = (occ_gradient - occ * x) * inv_l2;
}

FieldSample LocalGpModel::query(const Point3 &x) const {
    double occ;
    Eigen::Vector3d occ_grad;
    occupancy(x, occ, occ_grad);

    FieldSample s;
    s.occupancy = occ;
    s.distance = revert_distance(occ, params_);
    // Occupancy decays away from the surface, so -grad(occupancy) points away.
    const double gnorm = occ_grad.norm();
    if (s.distance < params_.d_max() && gnorm >= 1e-12) {
        s.gradient = -occ_grad / gnorm;
        s.gradient_defined = true;
    }
    return s;
}

double LocalGpModel::query_variance(const Point3 &x) const {
    if (!factor_) {
        throw std::logic_error("LocalGpModel: variance requires a model built with keep_factor");
    }
    const Eigen::Index n = points_.cols();
    Eigen::VectorXd kvec(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        kvec[j] = kernel_se(x, points_.col(j), params_);
    }
    const double reduction = kvec.dot(factor_->solve(kvec));
    return params_.signal_variance - reduction;
}

double LocalGpModel::solve_residual() const {
    Eigen::MatrixXd k = kernel_matrix(points_, params_);
    const Eigen::VectorXd r = k * alpha_ - Eigen::VectorXd::Ones(points_.cols());
    return r.cwiseAbs().maxCoeff();
}

std::vector<FieldSample> DistanceField::query_batch(std::span<const Point3> points) const {
    std::vector<FieldSample> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = query(points[i]);
    return out;
}

}  // namespace gpdf
