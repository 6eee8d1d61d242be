#pragma once
// Feasibility of G_0 + sum_j theta_j G_j >= 0 with sign-restricted theta.
//
// The embedded backend solves the phase-one problem
//
//     maximise t  s.t.  G_0 + sum_j theta_j G_j - t I >= 0,
//                       theta_j >= 0 (nonneg multipliers), |theta_j| <= bound, t <= 1
//
// with a primal-dual interior-point method (HKM direction, Mehrotra
// predictor-corrector) started from a strictly dual-feasible point. Blocks are
// normalised to unit Frobenius norm first. A Feasible verdict is only emitted
// after an independent eigenvalue check of the unscaled left-hand side;
// Infeasible is emitted when a weak-duality upper bound on t, corrected for the
// primal residual, proves the tolerance (or the margin) cannot be met.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crittime/lifting.hpp"

namespace crittime {

enum class Verdict { Feasible, Infeasible, NumericalFailure };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Feasible: return "Feasible";
        case Verdict::Infeasible: return "Infeasible";
        case Verdict::NumericalFailure: return "NumericalFailure";
    }
    return "?";
}

struct SolveOptions {
    double feas_tol = 1e-7;
    double margin = 1e-9;
    double time_limit = 30.0;  // seconds
    int max_iterations = 150;
    double multiplier_bound = 1e6;  // on normalised multipliers
};

struct SolveOutcome {
    Verdict verdict = Verdict::NumericalFailure;
    std::optional<Vector> multipliers;
    double residual_min_eig = -std::numeric_limits<double>::infinity();
    double solve_time = 0.0;
    int iterations = 0;
    double upper_bound = std::numeric_limits<double>::infinity();  // on max-t, unscaled
};

inline double min_eigenvalue(const Matrix& M) {
    if (M.rows() == 0) return std::numeric_limits<double>::infinity();
    Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    return es.eigenvalues()(0);
}

inline bool sign_mask_holds(const FeasibilityProblem& p, const Vector& theta, double tol) {
    for (std::size_t j = 0; j < p.signs.size(); ++j) {
        if (p.signs[j] == MultiplierSign::Nonnegative && theta(static_cast<Eigen::Index>(j)) < -tol) return false;
    }
    return theta.allFinite();
}

/// Sign mask and smallest eigenvalue of the left-hand side, checked with a
/// dense symmetric eigensolver.
inline bool verify_certificate(const FeasibilityProblem& p, const Vector& theta, double tol) {
    detail::require(static_cast<std::size_t>(theta.size()) == p.multiplier_count(),
                    "verify_certificate: multiplier count mismatch");
    if (!sign_mask_holds(p, theta, tol)) return false;
    return min_eigenvalue(p.lhs(theta)) >= -tol;
}

class SdpBackend {
public:
    virtual ~SdpBackend() = default;
    virtual std::string name() const = 0;
    virtual SolveOutcome solve(const FeasibilityProblem& p, const SolveOptions& opts) const = 0;
};

namespace detail {

/// Same problem with every block densified behind one identity lift.
inline FeasibilityProblem densified(const FeasibilityProblem& p) {
    FeasibilityProblem d;
    d.size = p.size;
    d.lifts.push_back(Matrix::Identity(p.size, p.size));
    d.target = {0, p.block(0), 1.0};
    for (std::size_t j = 0; j < p.terms.size(); ++j) d.terms.push_back({0, p.block(j + 1), 1.0});
    d.signs = p.signs;
    d.labels = p.labels;
    return d;
}

/// Splits R^size into flat directions V (in the common kernel of every
/// block's leading (size-1)x(size-1) part, last coordinate zero) and the
/// remaining orthonormal basis T, whose last column is the last coordinate.
/// In the basis [V, T] every LHS has a zero V-V block, so LHS >= 0 holds
/// exactly when V^T LHS e_last = 0 and T^T LHS T >= 0.
struct FlatSplit {
    Matrix T;
    Matrix V;
};

inline FlatSplit flat_split(const FeasibilityProblem& p, double rel_tol = 1e-12) {
    const Eigen::Index Z = p.size;
    const Eigen::Index q = Z - 1;
    FlatSplit out;
    if (q == 0) {
        out.T = Matrix::Identity(1, 1);
        out.V = Matrix::Zero(1, 0);
        return out;
    }
    Matrix K = Matrix::Zero(q, q);
    std::vector<Matrix> gram(p.lifts.size());
    auto add = [&](const LiftedTerm& t) {
        const Matrix& L = p.lifts[t.lift];
        if (gram[t.lift].size() == 0) gram[t.lift] = L.leftCols(q) * L.leftCols(q).transpose();
        const Matrix PT = t.form * gram[t.lift];
        const double n2 = PT.cwiseProduct(PT.transpose()).sum();
        if (!(n2 > 0.0)) return;
        const Matrix Gq = (L.leftCols(q).transpose() * t.form * L.leftCols(q)) / std::sqrt(n2);
        K.noalias() += Gq * Gq;
    };
    add(p.target);
    for (const auto& t : p.terms) add(t);

    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (K + K.transpose()));
    const Vector& ev = es.eigenvalues();
    const double top = q > 0 ? std::max(0.0, ev(q - 1)) : 0.0;
    Eigen::Index nflat = 0;
    while (nflat < q && ev(nflat) <= rel_tol * top) ++nflat;
    out.V = Matrix::Zero(Z, nflat);
    out.V.topRows(q) = es.eigenvectors().leftCols(nflat);
    out.T = Matrix::Zero(Z, q - nflat + 1);
    out.T.topLeftCorner(q, q - nflat) = es.eigenvectors().rightCols(q - nflat);
    out.T(Z - 1, q - nflat) = 1.0;
    return out;
}

/// Dense solve of the Newton system [[M, E^T], [E, 0]]: Jacobi scaling, a
/// tiny static shift and iterative refinement. M is frequently singular
/// (dependent multiplier blocks; equality multipliers cancelling inequality ones).
class NewtonSystem {
public:
    NewtonSystem(const Matrix& M, const Matrix& E) {
        const Eigen::Index n = M.rows(), ne = E.rows();
        K_ = Matrix::Zero(n + ne, n + ne);
        K_.topLeftCorner(n, n) = M;
        if (ne > 0) {
            K_.topRightCorner(n, ne) = E.transpose();
            K_.bottomLeftCorner(ne, n) = E;
        }
        ok_ = K_.allFinite();
        if (!ok_) return;
        const double top = std::max(1e-300, M.diagonal().cwiseAbs().maxCoeff());
        d_ = Vector::Ones(n + ne);
        for (Eigen::Index i = 0; i < n; ++i) d_(i) = 1.0 / std::sqrt(std::max(std::abs(M(i, i)), 1e-14 * top));
        Matrix Kr = d_.asDiagonal() * K_ * d_.asDiagonal();
        Kr.diagonal().head(n).array() += 1e-13;
        Kr.diagonal().tail(ne).array() -= 1e-13;
        lu_.compute(Kr);
    }

    bool ok() const { return ok_; }

    Vector solve(const Vector& b) const {
        auto step = [&](const Vector& r) -> Vector { return d_.cwiseProduct(lu_.solve(d_.cwiseProduct(r))); };
        Vector x = step(b);
        const double bn = std::max(1e-300, b.norm());
        for (int i = 0; i < 10; ++i) {
            const Vector r = b - K_ * x;
            if (r.norm() <= 1e-15 * bn) break;
            x += step(r);
        }
        return x;
    }

private:
    Matrix K_;
    Vector d_;
    Eigen::PartialPivLU<Matrix> lu_;
    bool ok_ = true;
};

class InteriorPointSolver {
public:
    InteriorPointSolver(const FeasibilityProblem& p, const SolveOptions& opts) : p_(p), opts_(opts) {}

    SolveOutcome run() {
        const auto start = std::chrono::steady_clock::now();
        auto elapsed = [&] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
        SolveOutcome out;
        p_.validate();
        const std::size_t m_all = p_.multiplier_count();

        // theta = 0 already certifies feasibility when G_0 is PSD to tolerance.
        const Matrix G0 = p_.block(0);
        {
            const Vector zero = Vector::Zero(static_cast<Eigen::Index>(m_all));
            if (min_eigenvalue(G0) >= -opts_.feas_tol) return finish(out, zero, elapsed(), 0);
        }
        scale0_ = G0.norm();

        const FlatSplit split = flat_split(p_);
        prepare_terms(split);
        const Eigen::Index ma = static_cast<Eigen::Index>(active_.size());
        const Eigen::Index ny = ma + 1;  // multipliers + t
        const Eigen::Index N = C_.rows();
        if (!prepare_equalities(split, ny)) {
            out.upper_bound = -std::numeric_limits<double>::infinity();
            return infeasible(out, Vector::Zero(ny), elapsed(), 0);
        }
        const Eigen::Index ne = Eq_.rows();

        // Dual start: nonnegative multipliers at 1, free ones at 0, t strictly
        // below the smallest eigenvalue.
        Vector y = Vector::Zero(ny);
        for (Eigen::Index i = 0; i < ma; ++i) {
            y(i) = p_.signs[active_[i]] == MultiplierSign::Nonnegative ? 1.0 : 0.0;
        }
        {
            const double lam = min_eigenvalue(operator_F(y));
            y(ma) = lam - std::max(1.0, 0.1 * std::abs(lam));
            t_floor_ = -1e3 * std::max(1.0, std::abs(y(ma)));
        }
        build_lp(ma);
        const Eigen::Index nlp = lp_c_.size();

        Matrix S = dual_slack(y);
        Vector s = lp_slack(y);
        Matrix X;
        {
            Eigen::LLT<Matrix> llt(S);
            if (llt.info() != Eigen::Success) return fail(out, y, elapsed(), 0);
            X = llt.solve(Matrix::Identity(N, N));
            X = (0.5 * (X + X.transpose())).eval();
        }
        Vector x = s.cwiseInverse();
        Vector lambda = Vector::Zero(ne);

        const double n_cone = static_cast<double>(N + nlp);
        const double bound = opts_.multiplier_bound;
        int stall = 0;
        double best_ub = std::numeric_limits<double>::infinity();
        int it = 0;
        for (; it < opts_.max_iterations; ++it) {
            if (elapsed() > opts_.time_limit) break;

            const double t = y(ma);
            const Vector r_e = eq_rhs_ - Eq_ * y;
            if (t * scale0_ >= -0.5 * opts_.feas_tol) {
                const Vector theta = unscaled(project_equalities(y));
                if (verify_certificate(p_, theta, opts_.feas_tol)) return finish(out, theta, elapsed(), it);
            }

            // Primal residual and a weak-duality bound on the optimal t.
            Vector Rp = -apply_A(X, x, ny);
            Rp(ma) += 1.0;
            if (ne > 0) Rp -= Eq_.transpose() * lambda;
            double ub = C_.cwiseProduct(X).sum() + lp_c_.dot(x) + eq_rhs_.dot(lambda);
            // Shifting the residual onto the LP rows gives a primal feasible point.
            for (Eigen::Index i = 0; i < ma; ++i) {
                const bool nonneg = p_.signs[active_[i]] == MultiplierSign::Nonnegative;
                ub += (Rp(i) < 0.0 && nonneg) ? 0.0 : bound * std::abs(Rp(i));
            }
            ub += Rp(ma) > 0.0 ? Rp(ma) : -t_floor_ * -Rp(ma);
            best_ub = std::min(best_ub, ub);
            if (best_ub * scale0_ < -opts_.feas_tol) {
                out.upper_bound = best_ub * scale0_;
                return infeasible(out, y, elapsed(), it);
            }

            const Matrix Rd = C_ - operator_sum(y) - S;
            const Vector rd_lp = lp_c_ - lp_apply(y) - s;
            const double mu = (X.cwiseProduct(S).sum() + x.dot(s)) / n_cone;
            if (!(mu > 0.0) || !std::isfinite(mu)) break;
            if (mu < 1e-18) break;

            Eigen::LLT<Matrix> Sllt(S);
            if (Sllt.info() != Eigen::Success) break;
            Matrix Sinv = Sllt.solve(Matrix::Identity(N, N));
            Sinv = (0.5 * (Sinv + Sinv.transpose())).eval();

            const NewtonSystem newton(schur(X, Sinv, x, s, ny), Eq_);
            if (!newton.ok()) break;
            const Matrix XRdSinv = X * Rd * Sinv;

            auto direction = [&](const Matrix& Rc, const Vector& rc_lp, Vector& dy, Vector& dl, Matrix& dS,
                                 Vector& ds, Matrix& dX, Vector& dx) {
                const Matrix T = Rc - XRdSinv;
                const Vector tl = rc_lp - x.cwiseProduct(rd_lp).cwiseQuotient(s);
                Vector rhs(ny + ne);
                rhs.head(ny) = Rp - apply_A(T, tl, ny);
                rhs.tail(ne) = r_e;
                const Vector sol = newton.solve(rhs);
                dy = sol.head(ny);
                dl = sol.tail(ne);
                dS = Rd - operator_sum(dy);
                ds = rd_lp - lp_apply(dy);
                dX = Rc - X * dS * Sinv;
                dX = (0.5 * (dX + dX.transpose())).eval();
                dx = rc_lp - x.cwiseProduct(ds).cwiseQuotient(s);
            };

            Vector dy, dl, ds, dx;
            Matrix dS, dX;
            direction(-X, -x, dy, dl, dS, ds, dX, dx);
            const double ap_aff = std::min(1.0, max_step(X, dX, x, dx));
            const double ad_aff = std::min(1.0, max_step(S, dS, s, ds));
            const double mu_aff =
                ((X + ap_aff * dX).cwiseProduct(S + ad_aff * dS).sum() + (x + ap_aff * dx).dot(s + ad_aff * ds)) /
                n_cone;
            const double sigma = std::clamp(std::pow(std::max(0.0, mu_aff) / mu, 3), 0.0, 1.0);

            const Matrix Rc = sigma * mu * Sinv - X - dX * dS * Sinv;
            const Vector rc_lp = (sigma * mu) * s.cwiseInverse() - x - dx.cwiseProduct(ds).cwiseQuotient(s);
            direction(Rc, rc_lp, dy, dl, dS, ds, dX, dx);

            const double gamma = 0.95;
            const double ap = std::min(1.0, gamma * max_step(X, dX, x, dx));
            const double ad = std::min(1.0, gamma * max_step(S, dS, s, ds));
            if (trace_) {
                std::fprintf(stderr, "ipm %3d rp=%.2e t=% .6e ub=% .6e mu=%.3e re=%.2e sigma=%.3f ap=%.3e ad=%.3e\n", it, Rp.cwiseAbs().maxCoeff(), t,
                             ub, mu, r_e.size() ? r_e.cwiseAbs().maxCoeff() : 0.0, sigma, ap, ad);
            }
            if (!(ap > 0.0) || !(ad > 0.0) || !std::isfinite(ap) || !std::isfinite(ad)) break;

            X += ap * dX;
            x += ap * dx;
            lambda += ap * dl;
            const Vector y_prev = y;
            y += ad * dy;
            S = dual_slack(y);
            s = lp_slack(y);
            if (s.minCoeff() <= 0.0 || Eigen::LLT<Matrix>(S).info() != Eigen::Success) {
                y = y_prev;
                S = dual_slack(y);
                s = lp_slack(y);
                break;
            }
            stall = (ap < 1e-8 && ad < 1e-8) ? stall + 1 : 0;
            if (stall >= 3) break;
        }

        // Out of iterations or stalled: last chance for a certificate, then the margin rule.
        const Vector theta = unscaled(project_equalities(y));
        if (verify_certificate(p_, theta, opts_.feas_tol)) return finish(out, theta, elapsed(), it);
        out.upper_bound = best_ub * scale0_;
        if (best_ub * scale0_ < opts_.margin && elapsed() <= opts_.time_limit) {
            return infeasible(out, y, elapsed(), it);
        }
        return fail(out, y, elapsed(), it);
    }

private:
    struct Group {
        int lift;
        Eigen::Index row0;
        Eigen::Index rows;
        std::vector<Eigen::Index> members;  // positions in active_
    };

    void prepare_terms(const FlatSplit& split) {
        // Frobenius norm of scale * L^T P L via tr(P K P K), K = L L^T.
        std::vector<Matrix> gram(p_.lifts.size());
        for (std::size_t i = 0; i < p_.lifts.size(); ++i) gram[i] = p_.lifts[i] * p_.lifts[i].transpose();
        std::vector<double> norms(p_.terms.size());
        double max_norm = 0.0;
        for (std::size_t j = 0; j < p_.terms.size(); ++j) {
            const auto& t = p_.terms[j];
            const Matrix PK = t.form * gram[t.lift];
            norms[j] = std::abs(t.scale) * std::sqrt(std::max(0.0, PK.cwiseProduct(PK.transpose()).sum()));
            max_norm = std::max(max_norm, norms[j]);
        }
        std::vector<int> group_of_lift(p_.lifts.size(), -1);
        Eigen::Index rows = 0;
        for (std::size_t j = 0; j < p_.terms.size(); ++j) {
            if (!(norms[j] > 1e-14 * max_norm)) continue;
            const auto& t = p_.terms[j];
            const Eigen::Index pos = static_cast<Eigen::Index>(active_.size());
            active_.push_back(j);
            term_scale_.push_back(norms[j]);
            // Dual-form data: A_i = -G_i / ||G_i||.
            forms_.push_back((-t.scale / norms[j]) * 0.5 * (t.form + t.form.transpose()));
            if (group_of_lift[t.lift] < 0) {
                group_of_lift[t.lift] = static_cast<int>(groups_.size());
                groups_.push_back({t.lift, rows, p_.lifts[t.lift].rows(), {}});
                rows += p_.lifts[t.lift].rows();
            }
            groups_[group_of_lift[t.lift]].members.push_back(pos);
        }
        L_.resize(rows, split.T.cols());
        for (const auto& g : groups_) L_.middleRows(g.row0, g.rows) = p_.lifts[g.lift] * split.T;
        const Matrix C = split.T.transpose() * p_.block(0) * split.T / scale0_;
        C_ = 0.5 * (C + C.transpose());
    }

    /// Rows of V^T LHS e_last = 0, compressed to an orthonormal row basis.
    /// Returns false when the equalities are inconsistent.
    bool prepare_equalities(const FlatSplit& split, Eigen::Index ny) {
        const Eigen::Index nv = split.V.cols();
        const Eigen::Index ma = ny - 1;
        Eq_ = Matrix::Zero(0, ny);
        eq_rhs_ = Vector::Zero(0);
        if (nv == 0) return true;
        const Eigen::Index last = p_.size - 1;
        auto column = [&](const LiftedTerm& t) -> Vector {
            const Matrix& L = p_.lifts[t.lift];
            return t.scale * ((L * split.V).transpose() * (t.form * L.col(last)));
        };
        const Vector rhs = -column(p_.target) / scale0_;
        Matrix E(nv, ma);
        for (Eigen::Index i = 0; i < ma; ++i) E.col(i) = column(p_.terms[active_[i]]) / term_scale_[i];
        if (ma == 0) return rhs.cwiseAbs().maxCoeff() <= 1e-10;
        Eigen::BDCSVD<Matrix> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& sv = svd.singularValues();
        const double top = sv.size() ? sv(0) : 0.0;
        Eigen::Index r = 0;
        while (r < sv.size() && sv(r) > 1e-10 * std::max(top, 1e-300)) ++r;
        const Matrix Ur = svd.matrixU().leftCols(r);
        const Vector inside = Ur.transpose() * rhs;
        if ((rhs - Ur * inside).norm() > 1e-9 * std::max(1.0, rhs.norm())) return false;
        Eq_ = Matrix::Zero(r, ny);
        Eq_.leftCols(ma) = svd.matrixV().leftCols(r).transpose();
        eq_rhs_ = inside.cwiseQuotient(sv.head(r));
        return true;
    }

    Vector project_equalities(const Vector& y) const {
        if (Eq_.rows() == 0) return y;
        return y + Eq_.transpose() * (eq_rhs_ - Eq_ * y);
    }

    void build_lp(Eigen::Index ma) {
        const double B = opts_.multiplier_bound;
        for (Eigen::Index i = 0; i < ma; ++i) {
            if (p_.signs[active_[i]] == MultiplierSign::Nonnegative) {
                add_lp_row(i, -1.0, 0.0);  // theta >= 0
            } else {
                add_lp_row(i, -1.0, B);  // theta >= -B
            }
            add_lp_row(i, 1.0, B);  // theta <= B
        }
        add_lp_row(ma, 1.0, 1.0);         // t <= 1
        add_lp_row(ma, -1.0, -t_floor_);  // t >= floor
    }

    void add_lp_row(Eigen::Index var, double coef, double c) {
        lp_var_.push_back(var);
        lp_coef_.push_back(coef);
        const auto n = lp_c_.size();
        lp_c_.conservativeResize(n + 1);
        lp_c_(n) = c;
    }

    Vector lp_apply(const Vector& y) const {
        Vector r(lp_c_.size());
        for (Eigen::Index l = 0; l < r.size(); ++l) r(l) = lp_coef_[l] * y(lp_var_[l]);
        return r;
    }

    Vector lp_slack(const Vector& y) const { return lp_c_ - lp_apply(y); }

    /// sum_i y_i A_i over the SDP block (A_t = I).
    Matrix operator_sum(const Vector& y) const {
        const Eigen::Index N = C_.rows();
        Matrix out = Matrix::Zero(N, N);
        for (const auto& g : groups_) {
            Matrix acc = Matrix::Zero(g.rows, g.rows);
            bool any = false;
            for (auto i : g.members) {
                if (y(i) == 0.0) continue;
                acc += y(i) * forms_[i];
                any = true;
            }
            if (!any) continue;
            const auto Lg = L_.middleRows(g.row0, g.rows);
            out.noalias() += Lg.transpose() * acc * Lg;
        }
        out.diagonal().array() += y(static_cast<Eigen::Index>(active_.size()));
        return 0.5 * (out + out.transpose());
    }

    Matrix dual_slack(const Vector& y) const { return C_ - operator_sum(y); }

    /// Scaled reduced F(theta) without the -tI shift.
    Matrix operator_F(const Vector& y) const {
        Vector yy = y;
        yy(static_cast<Eigen::Index>(active_.size())) = 0.0;
        return C_ - operator_sum(yy);
    }

    /// A(Y) for the SDP block plus the LP block contribution.
    Vector apply_A(const Matrix& Y, const Vector& ylp, Eigen::Index ny) const {
        Vector r = Vector::Zero(ny);
        const Matrix LY = L_ * Y;
        for (const auto& g : groups_) {
            const Matrix B = LY.middleRows(g.row0, g.rows) * L_.middleRows(g.row0, g.rows).transpose();
            for (auto i : g.members) r(i) = forms_[i].cwiseProduct(B).sum();
        }
        r(ny - 1) = Y.trace();
        for (Eigen::Index l = 0; l < ylp.size(); ++l) r(lp_var_[l]) += lp_coef_[l] * ylp(l);
        return r;
    }

    Matrix schur(const Matrix& X, const Matrix& Sinv, const Vector& x, const Vector& s, Eigen::Index ny) const {
        Matrix M = Matrix::Zero(ny, ny);
        const Matrix BX = L_ * X * L_.transpose();
        const Matrix BS = L_ * Sinv * L_.transpose();
        const Matrix XSinv = X * Sinv;
        const Matrix LXS = L_ * XSinv;
        for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
            const auto& g = groups_[gi];
            for (std::size_t hi = gi; hi < groups_.size(); ++hi) {
                const auto& h = groups_[hi];
                const Matrix Xgh = BX.block(g.row0, h.row0, g.rows, h.rows);
                const Matrix Shg = BS.block(h.row0, g.row0, h.rows, g.rows);
                const Eigen::Index len = g.rows * h.rows;
                Matrix TT(static_cast<Eigen::Index>(g.members.size()), len);
                for (std::size_t a = 0; a < g.members.size(); ++a) {
                    const Matrix T = forms_[g.members[a]] * Xgh;
                    TT.row(static_cast<Eigen::Index>(a)) = Eigen::Map<const Vector>(T.data(), len);
                }
                Matrix UU(static_cast<Eigen::Index>(h.members.size()), len);
                for (std::size_t b = 0; b < h.members.size(); ++b) {
                    const Matrix U = (forms_[h.members[b]] * Shg).transpose();
                    UU.row(static_cast<Eigen::Index>(b)) = Eigen::Map<const Vector>(U.data(), len);
                }
                const Matrix blk = TT * UU.transpose();
                for (std::size_t a = 0; a < g.members.size(); ++a) {
                    for (std::size_t b = 0; b < h.members.size(); ++b) {
                        const auto i = g.members[a], j = h.members[b];
                        M(i, j) = blk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                        M(j, i) = M(i, j);
                    }
                }
            }
            const Matrix D = LXS.middleRows(g.row0, g.rows) * L_.middleRows(g.row0, g.rows).transpose();
            for (auto i : g.members) {
                M(i, ny - 1) = forms_[i].cwiseProduct(D).sum();
                M(ny - 1, i) = M(i, ny - 1);
            }
        }
        M(ny - 1, ny - 1) = XSinv.trace();
        for (Eigen::Index l = 0; l < x.size(); ++l) {
            M(lp_var_[l], lp_var_[l]) += lp_coef_[l] * lp_coef_[l] * x(l) / s(l);
        }
        return 0.5 * (M + M.transpose());
    }

    /// Largest alpha keeping (Z + alpha dZ, z + alpha dz) in the cone.
    static double max_step(const Matrix& Z, const Matrix& dZ, const Vector& z, const Vector& dz) {
        double alpha = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            if (dz(i) < 0.0) alpha = std::min(alpha, -z(i) / dz(i));
        }
        Eigen::LLT<Matrix> llt(Z);
        if (llt.info() != Eigen::Success) return 0.0;
        const Matrix Linv_dZ = llt.matrixL().solve(dZ);
        Matrix T = llt.matrixL().solve(Linv_dZ.transpose());
        T = (0.5 * (T + T.transpose())).eval();
        const double lam = min_eigenvalue(T);
        if (lam < 0.0) alpha = std::min(alpha, -1.0 / lam);
        return alpha;
    }

    Vector unscaled(const Vector& y) const {
        Vector theta = Vector::Zero(static_cast<Eigen::Index>(p_.multiplier_count()));
        for (std::size_t i = 0; i < active_.size(); ++i) {
            theta(static_cast<Eigen::Index>(active_[i])) = y(static_cast<Eigen::Index>(i)) * scale0_ / term_scale_[i];
        }
        // Round tiny negative nonneg multipliers onto the bound.
        for (std::size_t j = 0; j < p_.signs.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            if (p_.signs[j] == MultiplierSign::Nonnegative && theta(jj) < 0.0) theta(jj) = 0.0;
        }
        return theta;
    }

    SolveOutcome& finish(SolveOutcome& out, const Vector& theta, double time, int it) const {
        out.verdict = Verdict::Feasible;
        out.multipliers = theta;
        out.residual_min_eig = min_eigenvalue(p_.lhs(theta));
        out.solve_time = time;
        out.iterations = it;
        return out;
    }

    SolveOutcome& infeasible(SolveOutcome& out, const Vector& y, double time, int it) const {
        out.verdict = Verdict::Infeasible;
        out.multipliers.reset();
        out.residual_min_eig = min_eigenvalue(p_.lhs(unscaled(y)));
        out.solve_time = time;
        out.iterations = it;
        return out;
    }

    SolveOutcome& fail(SolveOutcome& out, const Vector& y, double time, int it) const {
        out.verdict = Verdict::NumericalFailure;
        out.multipliers.reset();
        out.residual_min_eig = min_eigenvalue(p_.lhs(unscaled(y)));
        out.solve_time = time;
        out.iterations = it;
        return out;
    }

    const FeasibilityProblem& p_;
    SolveOptions opts_;
    bool trace_ = std::getenv("CRITTIME_IPM_TRACE") != nullptr;
    double scale0_ = 1.0;
    double t_floor_ = -1e3;
    Matrix C_;
    Matrix L_;
    std::vector<Group> groups_;
    std::vector<std::size_t> active_;
    std::vector<double> term_scale_;
    std::vector<Matrix> forms_;
    Matrix Eq_;
    Vector eq_rhs_;
    std::vector<Eigen::Index> lp_var_;
    std::vector<double> lp_coef_;
    Vector lp_c_;
};

}  // namespace detail

/// Embedded interior-point backend. With low_rank = false every block is
/// densified first (slower; useful as a cross-check of the lifted assembly).
class InteriorPointBackend : public SdpBackend {
public:
    explicit InteriorPointBackend(bool low_rank = true) : low_rank_(low_rank) {}

    std::string name() const override { return low_rank_ ? "ipm" : "dense-ipm"; }

    SolveOutcome solve(const FeasibilityProblem& p, const SolveOptions& opts) const override {
        if (low_rank_) return detail::InteriorPointSolver(p, opts).run();
        const FeasibilityProblem d = detail::densified(p);
        SolveOutcome out = detail::InteriorPointSolver(d, opts).run();
        return out;
    }

private:
    bool low_rank_;
};

inline std::unique_ptr<SdpBackend> make_backend(const std::string& name) {
    if (name.empty() || name == "ipm") return std::make_unique<InteriorPointBackend>(true);
    if (name == "dense-ipm") return std::make_unique<InteriorPointBackend>(false);
    throw ContractViolation("unknown SDP backend '" + name + "'");
}

/// Backend named by CRITTIME_SDP_BACKEND (default "ipm").
inline const SdpBackend& default_backend() {
    static const std::unique_ptr<SdpBackend> backend = [] {
        const char* env = std::getenv("CRITTIME_SDP_BACKEND");
        return make_backend(env ? std::string(env) : std::string());
    }();
    return *backend;
}

inline SolveOutcome solve_feasibility(const FeasibilityProblem& p, const SolveOptions& opts = {},
                                      const SdpBackend& backend = default_backend()) {
    detail::require(opts.feas_tol > 0.0 && opts.time_limit > 0.0, "solve_feasibility: bad options");
    SolveOutcome out = backend.solve(p, opts);
    // Never hand out an unverified feasibility verdict.
    if (out.verdict == Verdict::Feasible &&
        (!out.multipliers || !verify_certificate(p, *out.multipliers, opts.feas_tol))) {
        out.verdict = Verdict::NumericalFailure;
        out.multipliers.reset();
    }
    return out;
}

}  // namespace crittime
