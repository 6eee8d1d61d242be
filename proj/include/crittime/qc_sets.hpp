#pragma once
// Convex sets written as intersections of quadratic constraints.
//
// A QuadraticForm S over R^n stands for sigma_S(z) = [z;1]^T S [z;1]. A point
// satisfies the QC when sigma_S(z) >= 0 and the QCE when sigma_S(z) = 0.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "crittime/errors.hpp"

namespace crittime {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kSymmetryTol = 1e-12;
inline constexpr double kDefaultMembershipTol = 1e-9;

class QuadraticForm {
public:
    QuadraticForm(int dim, Matrix matrix) : dim_(dim), matrix_(std::move(matrix)) {
        detail::require(dim_ > 0, "QuadraticForm: dim must be positive");
        detail::require(matrix_.rows() == dim_ + 1 && matrix_.cols() == dim_ + 1,
                        "QuadraticForm: matrix must be (dim+1)x(dim+1)");
        detail::require(matrix_.allFinite(), "QuadraticForm: non-finite entries");
        detail::require((matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol,
                        "QuadraticForm: matrix is not symmetric");
    }

    explicit QuadraticForm(Matrix matrix)
        : QuadraticForm(static_cast<int>(matrix.rows()) - 1, std::move(matrix)) {}

    int dim() const { return dim_; }
    const Matrix& matrix() const { return matrix_; }

    auto quadratic_block() const { return matrix_.topLeftCorner(dim_, dim_); }
    auto linear_block() const { return matrix_.topRightCorner(dim_, 1); }
    double constant() const { return matrix_(dim_, dim_); }

private:
    int dim_;
    Matrix matrix_;
};

inline double eval_sigma(const QuadraticForm& form, const Vector& z) {
    detail::require(z.size() == form.dim(), "eval_sigma: dimension mismatch");
    const int n = form.dim();
    const Matrix& S = form.matrix();
    // [z;1]^T S [z;1] without materialising the augmented vector.
    return z.dot(S.topLeftCorner(n, n) * z) + 2.0 * z.dot(S.topRightCorner(n, 1).col(0)) +
           S(n, n);
}

class SetDescription {
public:
    SetDescription(int dim, std::vector<QuadraticForm> qcs, std::vector<QuadraticForm> qces)
        : dim_(dim), qcs_(std::move(qcs)), qces_(std::move(qces)) {
        detail::require(dim_ > 0, "SetDescription: dim must be positive");
        detail::require(!qcs_.empty() || !qces_.empty(), "SetDescription: no constraints");
        for (const auto& f : qcs_) {
            detail::require(f.dim() == dim_, "SetDescription: QC dimension mismatch");
        }
        for (const auto& f : qces_) {
            detail::require(f.dim() == dim_, "SetDescription: QCE dimension mismatch");
        }
    }

    int dim() const { return dim_; }
    const std::vector<QuadraticForm>& qcs() const { return qcs_; }
    const std::vector<QuadraticForm>& qces() const { return qces_; }
    std::size_t size() const { return qcs_.size() + qces_.size(); }

private:
    int dim_;
    std::vector<QuadraticForm> qcs_;
    std::vector<QuadraticForm> qces_;
};

/// Block form [[Q, s], [s^T, r]]. Definiteness is not checked, so degenerate
/// ellipsoids and halfspaces go through here as well.
inline QuadraticForm ellipsoid(const Matrix& Q, const Vector& s, double r) {
    const auto n = Q.rows();
    detail::require(n > 0 && Q.cols() == n && s.size() == n, "ellipsoid: shape mismatch");
    Matrix S(n + 1, n + 1);
    S.topLeftCorner(n, n) = Q;
    S.topRightCorner(n, 1) = s;
    S.bottomLeftCorner(1, n) = s.transpose();
    S(n, n) = r;
    return QuadraticForm(static_cast<int>(n), std::move(S));
}

/// QC with sigma >= 0 exactly when normal . z <= offset; sigma(z) = 2 (offset - normal . z).
inline QuadraticForm halfspace(const Vector& normal, double offset) {
    detail::require(normal.size() > 0, "halfspace: empty normal");
    detail::require(normal.cwiseAbs().maxCoeff() > 0.0, "halfspace: zero normal");
    return ellipsoid(Matrix::Zero(normal.size(), normal.size()), -normal, 2.0 * offset);
}

/// QCE with sigma = 0 exactly when a . z = b; sigma(z) = 2 (a . z - b).
inline QuadraticForm hyperplane(const Vector& a, double b) {
    detail::require(a.size() > 0, "hyperplane: empty normal");
    detail::require(a.cwiseAbs().maxCoeff() > 0.0, "hyperplane: zero normal");
    return ellipsoid(Matrix::Zero(a.size(), a.size()), a, -2.0 * b);
}

inline SetDescription box(const Vector& lower, const Vector& upper) {
    detail::require(lower.size() == upper.size() && lower.size() > 0, "box: shape mismatch");
    const auto n = lower.size();
    std::vector<QuadraticForm> qcs;
    qcs.reserve(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::require(lower(i) <= upper(i), "box: lower > upper in coordinate " + std::to_string(i));
        const Vector e = Vector::Unit(n, i);
        qcs.push_back(halfspace(e, upper(i)));
        qcs.push_back(halfspace(-e, -lower(i)));
    }
    return SetDescription(static_cast<int>(n), std::move(qcs), {});
}

inline SetDescription singleton(const Vector& c) {
    detail::require(c.size() > 0, "singleton: empty point");
    const auto n = c.size();
    std::vector<QuadraticForm> qces;
    qces.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        qces.push_back(hyperplane(Vector::Unit(n, i), c(i)));
    }
    return SetDescription(static_cast<int>(n), {}, std::move(qces));
}

/// Zonotope {c + G lambda : lambda in [-1,1]^n} for square invertible G,
/// as n degenerate-ellipsoid QCs 1 - ((G^-1 (z - c))_i)^2 >= 0.
inline SetDescription zonotope_square(const Vector& c, const Matrix& G) {
    if (G.rows() != G.cols() || G.rows() != c.size() || G.rows() == 0) {
        throw UnsupportedShape("zonotope_square: generator matrix must be square and match the center");
    }
    Eigen::JacobiSVD<Matrix> svd(G);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    if (!(smin > 0.0) || sv(0) / smin >= 1e8) {
        throw UnsupportedShape("zonotope_square: generator matrix is singular or ill-conditioned");
    }
    const Matrix Ginv = G.inverse();
    const auto n = G.rows();
    std::vector<QuadraticForm> qcs;
    qcs.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector g = Ginv.row(i).transpose();
        const double gc = g.dot(c);
        Matrix Q = -g * g.transpose();
        qcs.push_back(ellipsoid(0.5 * (Q + Q.transpose()), gc * g, 1.0 - gc * gc));
    }
    return SetDescription(static_cast<int>(n), std::move(qcs), {});
}

inline bool contains(const SetDescription& set, const Vector& z, double tol = kDefaultMembershipTol) {
    detail::require(z.size() == set.dim(), "contains: dimension mismatch");
    detail::require(tol >= 0.0, "contains: negative tolerance");
    for (const auto& f : set.qcs()) {
        if (eval_sigma(f, z) < -tol) return false;
    }
    for (const auto& f : set.qces()) {
        if (std::abs(eval_sigma(f, z)) > tol) return false;
    }
    return true;
}

/// Intersection of two descriptions over the same space.
inline SetDescription intersect(const SetDescription& a, const SetDescription& b) {
    detail::require(a.dim() == b.dim(), "intersect: dimension mismatch");
    auto qcs = a.qcs();
    qcs.insert(qcs.end(), b.qcs().begin(), b.qcs().end());
    auto qces = a.qces();
    qces.insert(qces.end(), b.qces().begin(), b.qces().end());
    return SetDescription(a.dim(), std::move(qcs), std::move(qces));
}

/// Axis-aligned bounds implied by coordinate halfspaces and coordinate
/// hyperplanes; other constraints are ignored. Unbounded coordinates get +-inf.
struct AxisBounds {
    Vector lower;
    Vector upper;
    bool bounded() const { return lower.allFinite() && upper.allFinite(); }
};

inline AxisBounds axis_bounds(const SetDescription& set) {
    const int n = set.dim();
    const double inf = std::numeric_limits<double>::infinity();
    AxisBounds b{Vector::Constant(n, -inf), Vector::Constant(n, inf)};
    auto single_axis = [n](const QuadraticForm& f, int& axis, double& coef) {
        if (f.quadratic_block().cwiseAbs().maxCoeff() != 0.0) return false;
        const Vector lin = f.linear_block();
        int nz = 0;
        for (int i = 0; i < n; ++i) {
            if (lin(i) != 0.0) {
                ++nz;
                axis = i;
                coef = lin(i);
            }
        }
        return nz == 1;
    };
    for (const auto& f : set.qcs()) {
        int i = 0;
        double c = 0.0;
        if (!single_axis(f, i, c)) continue;
        // 2 c z_i + r >= 0
        const double bound = -f.constant() / (2.0 * c);
        if (c < 0.0) {
            b.upper(i) = std::min(b.upper(i), bound);
        } else {
            b.lower(i) = std::max(b.lower(i), bound);
        }
    }
    for (const auto& f : set.qces()) {
        int i = 0;
        double c = 0.0;
        if (!single_axis(f, i, c)) continue;
        const double v = -f.constant() / (2.0 * c);
        b.lower(i) = std::max(b.lower(i), v);
        b.upper(i) = std::min(b.upper(i), v);
    }
    return b;
}

}  // namespace crittime
