#pragma once
// Trajectory lifting and S-procedure problem assembly.
//
// Over a horizon k_f the stacked vector
//   z = [xbar_0; wbar_0 .. wbar_{kf-1}; a_0 .. a_{kf-1}; 1]
// determines the whole trajectory. Each lift matrix maps z to an augmented
// quantity [v; 1], so a QC on v pulls back to the quadratic form L^T S L in z.

#include <iosfwd>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "crittime/scenario.hpp"

namespace crittime {

class LiftingContext {
public:
    LiftingContext(ClosedLoopModel model, int horizon) : model_(std::move(model)), horizon_(horizon) {
        model_.validate();
        detail::require(horizon_ >= 1, "LiftingContext: horizon must be >= 1");
        const auto nx = model_.dims.nx();
        powers_.reserve(horizon_ + 1);
        powers_.push_back(Matrix::Identity(nx, nx));
        for (int k = 0; k < horizon_; ++k) powers_.push_back(model_.A * powers_.back());
    }

    const ClosedLoopModel& model() const { return model_; }
    int horizon() const { return horizon_; }
    const Matrix& power(int k) const { return powers_.at(k); }

    Eigen::Index z_dim() const {
        const auto& d = model_.dims;
        return d.nx() + horizon_ * (d.nd() + d.m_a) + 1;
    }
    Eigen::Index disturbance_offset(int k) const { return model_.dims.nx() + k * model_.dims.nd(); }
    Eigen::Index anomaly_offset(int k) const {
        return model_.dims.nx() + horizon_ * model_.dims.nd() + k * model_.dims.m_a;
    }

    /// Packs a trajectory's free data into z.
    Vector stack(const Vector& x0, const std::vector<Vector>& wbar, const std::vector<Vector>& a) const {
        detail::require(static_cast<int>(wbar.size()) >= horizon_ && static_cast<int>(a.size()) >= horizon_,
                        "LiftingContext::stack: signals shorter than the horizon");
        Vector z(z_dim());
        z.head(model_.dims.nx()) = x0;
        for (int k = 0; k < horizon_; ++k) {
            z.segment(disturbance_offset(k), model_.dims.nd()) = wbar[k];
            z.segment(anomaly_offset(k), model_.dims.m_a) = a[k];
        }
        z(z_dim() - 1) = 1.0;
        return z;
    }

private:
    ClosedLoopModel model_;
    int horizon_;
    std::vector<Matrix> powers_;
};

/// M_k with M_k z = [xbar_k; 1].
inline Matrix lift_state(const LiftingContext& ctx, int k) {
    detail::require(k >= 0 && k <= ctx.horizon(), "lift_state: k out of range");
    const auto& m = ctx.model();
    const auto nx = m.dims.nx(), nd = m.dims.nd(), ma = m.dims.m_a;
    const auto Z = ctx.z_dim();
    Matrix M = Matrix::Zero(nx + 1, Z);
    M.topLeftCorner(nx, nx) = ctx.power(k);
    for (int j = 0; j < k; ++j) {
        const Matrix& Apow = ctx.power(k - 1 - j);
        if (nd > 0) M.block(0, ctx.disturbance_offset(j), nx, nd) = Apow * m.W;
        if (ma > 0) M.block(0, ctx.anomaly_offset(j), nx, ma) = Apow * m.B_a;
    }
    M(nx, Z - 1) = 1.0;
    return M;
}

/// E_k with E_k z = [wbar_k; 1].
inline Matrix selector_disturbance(const LiftingContext& ctx, int k) {
    detail::require(k >= 0 && k < ctx.horizon(), "selector_disturbance: k out of range");
    const auto nd = ctx.model().dims.nd();
    Matrix E = Matrix::Zero(nd + 1, ctx.z_dim());
    E.block(0, ctx.disturbance_offset(k), nd, nd).setIdentity();
    E(nd, ctx.z_dim() - 1) = 1.0;
    return E;
}

/// F_k with F_k z = [a_k; 1].
inline Matrix selector_anomaly(const LiftingContext& ctx, int k) {
    detail::require(k >= 0 && k < ctx.horizon(), "selector_anomaly: k out of range");
    const auto ma = ctx.model().dims.m_a;
    Matrix F = Matrix::Zero(ma + 1, ctx.z_dim());
    F.block(0, ctx.anomaly_offset(k), ma, ma).setIdentity();
    F(ma, ctx.z_dim() - 1) = 1.0;
    return F;
}

/// N_k with N_k z = [u_a_k; 1]: the leading rows are C_u M_k + V_u E_k + Gamma_a F_k
/// taken over the non-constant rows; the constant row is kept once.
inline Matrix lift_input(const LiftingContext& ctx, int k) {
    detail::require(k >= 0 && k < ctx.horizon(), "lift_input: k out of range");
    const auto& m = ctx.model();
    const auto nx = m.dims.nx(), nd = m.dims.nd(), ma = m.dims.m_a, mu = m.dims.m;
    const Matrix M = lift_state(ctx, k);
    const Matrix E = selector_disturbance(ctx, k);
    const Matrix F = selector_anomaly(ctx, k);
    Matrix N(mu + 1, ctx.z_dim());
    N.topRows(mu) = m.C_u * M.topRows(nx) + m.V_u * E.topRows(nd) + m.gamma_a * F.topRows(ma);
    N.row(mu) = M.row(nx);
    return N;
}

enum class MultiplierSign { Nonnegative, Free };

struct MultiplierLabel {
    std::string family;  // e.g. "initial", "input", "deviation_eq"
    int k = -1;          // time index, -1 when not time-indexed
    int index = 0;       // constraint index inside the family
};

/// One affine piece scale * L^T form L, with L = lifts[lift].
struct LiftedTerm {
    int lift = 0;
    Matrix form;
    double scale = 1.0;
};

/// Find theta with G_0 + sum_j theta_j G_j >= 0 (PSD) and theta_j >= 0 where
/// the sign mask says so. Blocks are kept in lifted form; block(j) densifies.
struct FeasibilityProblem {
    Eigen::Index size = 0;
    std::vector<Matrix> lifts;
    LiftedTerm target;
    std::vector<LiftedTerm> terms;
    std::vector<MultiplierSign> signs;
    std::vector<MultiplierLabel> labels;

    std::size_t multiplier_count() const { return terms.size(); }

    Matrix dense(const LiftedTerm& t) const {
        const Matrix& L = lifts.at(t.lift);
        Matrix G = t.scale * (L.transpose() * t.form * L);
        return 0.5 * (G + G.transpose());
    }

    /// Block 0 is G_0, block j >= 1 is the coefficient of theta_{j-1}.
    Matrix block(std::size_t j) const { return j == 0 ? dense(target) : dense(terms.at(j - 1)); }

    Matrix lhs(const Vector& theta) const {
        detail::require(static_cast<std::size_t>(theta.size()) == terms.size(), "lhs: multiplier count");
        std::vector<Matrix> acc(lifts.size());
        for (std::size_t i = 0; i < lifts.size(); ++i) acc[i] = Matrix::Zero(lifts[i].rows(), lifts[i].rows());
        acc.at(target.lift) += target.scale * target.form;
        for (std::size_t j = 0; j < terms.size(); ++j) {
            acc[terms[j].lift] += theta(static_cast<Eigen::Index>(j)) * terms[j].scale * terms[j].form;
        }
        Matrix out = Matrix::Zero(size, size);
        for (std::size_t i = 0; i < lifts.size(); ++i) {
            if (acc[i].cwiseAbs().maxCoeff() == 0.0) continue;
            out.noalias() += lifts[i].transpose() * acc[i] * lifts[i];
        }
        return 0.5 * (out + out.transpose());
    }

    void validate() const {
        detail::require(size > 0, "FeasibilityProblem: empty size");
        detail::require(signs.size() == terms.size() && labels.size() == terms.size(),
                        "FeasibilityProblem: sign/label count mismatch");
        auto check = [&](const LiftedTerm& t) {
            detail::require(t.lift >= 0 && static_cast<std::size_t>(t.lift) < lifts.size(),
                            "FeasibilityProblem: bad lift index");
            const Matrix& L = lifts[t.lift];
            detail::require(L.cols() == size, "FeasibilityProblem: lift width");
            detail::require(t.form.rows() == L.rows() && t.form.cols() == L.rows(),
                            "FeasibilityProblem: form/lift shape mismatch");
            detail::require((t.form - t.form.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * (1.0 + t.form.cwiseAbs().maxCoeff()),
                            "FeasibilityProblem: form not symmetric");
            detail::require(t.form.allFinite() && std::isfinite(t.scale), "FeasibilityProblem: non-finite data");
        };
        check(target);
        for (const auto& t : terms) check(t);
    }
};

namespace detail {

inline int add_lift(FeasibilityProblem& p, Matrix L) {
    p.lifts.push_back(std::move(L));
    return static_cast<int>(p.lifts.size()) - 1;
}

inline void add_family(FeasibilityProblem& p, int lift, const SetDescription& set, const std::string& family,
                       int k) {
    int idx = 0;
    for (const auto& f : set.qcs()) {
        p.terms.push_back({lift, f.matrix(), -1.0});
        p.signs.push_back(MultiplierSign::Nonnegative);
        p.labels.push_back({family, k, idx++});
    }
    idx = 0;
    for (const auto& f : set.qces()) {
        p.terms.push_back({lift, f.matrix(), -1.0});
        p.signs.push_back(MultiplierSign::Free);
        p.labels.push_back({family + "_eq", k, idx++});
    }
}

}  // namespace detail

/// S - sum tau_p P_p - sum mu_q Q_q >= 0 with tau >= 0 and mu free.
inline FeasibilityProblem s_procedure(const QuadraticForm& target, const std::vector<QuadraticForm>& inequalities,
                                      const std::vector<QuadraticForm>& equalities) {
    const int n = target.dim();
    FeasibilityProblem p;
    p.size = n + 1;
    const int lift = detail::add_lift(p, Matrix::Identity(n + 1, n + 1));
    p.target = {lift, target.matrix(), 1.0};
    int idx = 0;
    for (const auto& f : inequalities) {
        detail::require(f.dim() == n, "s_procedure: dimension mismatch");
        p.terms.push_back({lift, f.matrix(), -1.0});
        p.signs.push_back(MultiplierSign::Nonnegative);
        p.labels.push_back({"qc", -1, idx++});
    }
    idx = 0;
    for (const auto& f : equalities) {
        detail::require(f.dim() == n, "s_procedure: dimension mismatch");
        p.terms.push_back({lift, f.matrix(), -1.0});
        p.signs.push_back(MultiplierSign::Free);
        p.labels.push_back({"qce", -1, idx++});
    }
    return p;
}

/// Safety of QC number s (0-based) at time k_f = ctx.horizon(), over every
/// admissible initial state, deviation and anomaly sequence.
inline FeasibilityProblem horizon_problem(const LiftingContext& ctx, const ScenarioSpec& sc, int s) {
    const auto& d = ctx.model().dims;
    detail::require(sc.model.dims == d, "horizon_problem: scenario and lifting model differ");
    detail::require(sc.safety.dim() == d.nx() && sc.initial.dim() == d.nx() && sc.input_limits.dim() == d.m &&
                        sc.deviation.dim() == d.nd() && sc.anomaly.anomaly_set.dim() == d.m_a,
                    "horizon_problem: set dimensions do not match the model");
    detail::require(s >= 0 && static_cast<std::size_t>(s) < sc.safety.qcs().size(),
                    "horizon_problem: safety index out of range");
    const int kf = ctx.horizon();

    FeasibilityProblem p;
    p.size = ctx.z_dim();
    const int target_lift = detail::add_lift(p, lift_state(ctx, kf));
    p.target = {target_lift, sc.safety.qcs()[s].matrix(), 1.0};

    const int x0_lift = detail::add_lift(p, lift_state(ctx, 0));
    detail::add_family(p, x0_lift, sc.initial, "initial", -1);
    for (int k = 0; k < kf; ++k) {
        detail::add_family(p, detail::add_lift(p, lift_input(ctx, k)), sc.input_limits, "input", k);
        detail::add_family(p, detail::add_lift(p, selector_disturbance(ctx, k)), sc.deviation, "deviation", k);
        detail::add_family(p, detail::add_lift(p, selector_anomaly(ctx, k)), sc.anomaly.anomaly_set, "anomaly", k);
    }
    return p;
}

inline void write_problem(std::ostream& os, const FeasibilityProblem& p) {
    const auto prec = os.precision(17);
    os << "feasibility-problem " << p.size << ' ' << p.multiplier_count() << '\n';
    for (std::size_t j = 0; j < p.terms.size(); ++j) {
        os << "multiplier " << j + 1 << ' '
           << (p.signs[j] == MultiplierSign::Nonnegative ? "nonneg" : "free") << ' ' << p.labels[j].family << ' '
           << p.labels[j].k << ' ' << p.labels[j].index << '\n';
    }
    for (std::size_t j = 0; j <= p.terms.size(); ++j) {
        const Matrix G = p.block(j);
        for (Eigen::Index r = 0; r < G.rows(); ++r) {
            for (Eigen::Index c = r; c < G.cols(); ++c) {
                if (G(r, c) != 0.0) os << "entry " << j << ' ' << r << ' ' << c << ' ' << G(r, c) << '\n';
            }
        }
    }
    os << "end\n";
    os.precision(prec);
}

inline FeasibilityProblem read_problem(std::istream& is) {
    std::string word;
    Eigen::Index size = 0;
    std::size_t count = 0;
    if (!(is >> word) || word != "feasibility-problem" || !(is >> size >> count) || size <= 0) {
        throw FormatError("read_problem: bad header");
    }
    FeasibilityProblem p;
    p.size = size;
    p.lifts.push_back(Matrix::Identity(size, size));
    std::vector<Matrix> blocks(count + 1, Matrix::Zero(size, size));
    p.signs.resize(count);
    p.labels.resize(count);
    std::vector<bool> seen(count, false);
    while (is >> word) {
        if (word == "end") break;
        if (word == "multiplier") {
            std::size_t j = 0;
            std::string sign;
            MultiplierLabel label;
            if (!(is >> j >> sign >> label.family >> label.k >> label.index) || j == 0 || j > count) {
                throw FormatError("read_problem: bad multiplier record");
            }
            if (sign != "nonneg" && sign != "free") throw FormatError("read_problem: bad sign '" + sign + "'");
            p.signs[j - 1] = sign == "nonneg" ? MultiplierSign::Nonnegative : MultiplierSign::Free;
            p.labels[j - 1] = label;
            seen[j - 1] = true;
        } else if (word == "entry") {
            std::size_t j = 0;
            Eigen::Index r = 0, c = 0;
            double v = 0.0;
            if (!(is >> j >> r >> c >> v) || j > count || r < 0 || c < 0 || r >= size || c >= size) {
                throw FormatError("read_problem: bad entry record");
            }
            blocks[j](r, c) = v;
            blocks[j](c, r) = v;
        } else {
            throw FormatError("read_problem: unknown record '" + word + "'");
        }
    }
    for (std::size_t j = 0; j < count; ++j) {
        if (!seen[j]) throw FormatError("read_problem: multiplier " + std::to_string(j + 1) + " missing");
    }
    p.target = {0, std::move(blocks[0]), 1.0};
    for (std::size_t j = 0; j < count; ++j) p.terms.push_back({0, std::move(blocks[j + 1]), 1.0});
    return p;
}

}  // namespace crittime
