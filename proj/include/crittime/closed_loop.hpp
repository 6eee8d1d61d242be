#pragma once
// Plant / controller / anomaly-channel interconnection.
//
//   plant:       x+ = A_s x + B_s u_a + W_s w,   y = C_s x + V_s v
//   controller:  xi+ = A_k xi + B_k y,           u = C_k xi + D_k y
//   anomaly:     u_a = Gamma_u u + Gamma_a a,    a in anomaly_set
//
// Closed loop on xbar = [x; xi], wbar = [w; v]:
//   xbar+ = A xbar + W wbar + B_a a,   u_a = C_u xbar + V_u wbar + Gamma_a a

#include <optional>
#include <string>
#include <utility>

#include "crittime/qc_sets.hpp"
#include "crittime/text_format.hpp"

namespace crittime {

struct PlantModel {
    Matrix A;  // n x n
    Matrix B;  // n x m
    Matrix W;  // n x n_w
    Matrix C;  // p x n
    Matrix V;  // p x n_v

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
    Eigen::Index n_w() const { return W.cols(); }
    Eigen::Index p() const { return C.rows(); }
    Eigen::Index n_v() const { return V.cols(); }

    void validate() const {
        detail::require(A.rows() == A.cols(), "PlantModel: A must be square");
        detail::require(B.rows() == n(), "PlantModel: B row count");
        detail::require(W.rows() == n(), "PlantModel: W row count");
        detail::require(C.cols() == n(), "PlantModel: C column count");
        detail::require(V.rows() == p(), "PlantModel: V row count");
    }
};

/// Controller matrices; l = 0 (static output feedback) is allowed.
struct ControllerModel {
    Matrix A;  // l x l
    Matrix B;  // l x p
    Matrix C;  // m x l
    Matrix D;  // m x p

    Eigen::Index l() const { return A.rows(); }

    void validate(Eigen::Index p, Eigen::Index m) const {
        detail::require(A.rows() == A.cols(), "ControllerModel: A_K must be square");
        detail::require(B.rows() == l() && B.cols() == p, "ControllerModel: B_K shape");
        detail::require(C.rows() == m && C.cols() == l(), "ControllerModel: C_K shape");
        detail::require(D.rows() == m && D.cols() == p, "ControllerModel: D_K shape");
    }
};

struct AnomalyModel {
    Matrix gamma_u;  // m x m
    Matrix gamma_a;  // m x m_a
    SetDescription anomaly_set;

    AnomalyModel(Matrix gu, Matrix ga, SetDescription set)
        : gamma_u(std::move(gu)), gamma_a(std::move(ga)), anomaly_set(std::move(set)) {
        detail::require(gamma_u.rows() == gamma_u.cols(), "AnomalyModel: Gamma_u must be square");
        detail::require(gamma_a.rows() == gamma_u.rows(), "AnomalyModel: Gamma_a row count");
        detail::require(gamma_a.cols() == anomaly_set.dim(),
                        "AnomalyModel: Gamma_a columns must match the anomaly set dimension");
        detail::require(gamma_u.allFinite() && gamma_a.allFinite(), "AnomalyModel: non-finite entries");
    }

    Eigen::Index m() const { return gamma_u.rows(); }
    Eigen::Index m_a() const { return gamma_a.cols(); }
};

struct ClosedLoopDims {
    Eigen::Index n = 0, l = 0, m = 0, m_a = 0, n_w = 0, n_v = 0;

    Eigen::Index nx() const { return n + l; }
    Eigen::Index nd() const { return n_w + n_v; }
    bool operator==(const ClosedLoopDims&) const = default;
};

struct ClosedLoopModel {
    Matrix A;        // nx x nx
    Matrix W;        // nx x nd
    Matrix B_a;      // nx x m_a
    Matrix C_u;      // m x nx
    Matrix V_u;      // m x nd
    Matrix gamma_a;  // m x m_a
    ClosedLoopDims dims;

    void validate() const {
        const auto nx = dims.nx();
        const auto nd = dims.nd();
        detail::require(A.rows() == nx && A.cols() == nx, "ClosedLoopModel: A shape");
        detail::require(W.rows() == nx && W.cols() == nd, "ClosedLoopModel: W shape");
        detail::require(B_a.rows() == nx && B_a.cols() == dims.m_a, "ClosedLoopModel: B_a shape");
        detail::require(C_u.rows() == dims.m && C_u.cols() == nx, "ClosedLoopModel: C_u shape");
        detail::require(V_u.rows() == dims.m && V_u.cols() == nd, "ClosedLoopModel: V_u shape");
        detail::require(gamma_a.rows() == dims.m && gamma_a.cols() == dims.m_a,
                        "ClosedLoopModel: Gamma_a shape");
    }

    /// One step: returns (next state, applied input).
    std::pair<Vector, Vector> step(const Vector& x, const Vector& wbar, const Vector& a) const {
        detail::require(x.size() == dims.nx() && wbar.size() == dims.nd() && a.size() == dims.m_a,
                        "ClosedLoopModel::step: dimension mismatch");
        Vector u = C_u * x + V_u * wbar + gamma_a * a;
        Vector next = A * x + W * wbar + B_a * a;
        return {std::move(next), std::move(u)};
    }
};

inline ClosedLoopModel assemble(const PlantModel& plant, const ControllerModel& ctrl,
                                const AnomalyModel& anomaly) {
    plant.validate();
    ctrl.validate(plant.p(), plant.m());
    detail::require(anomaly.m() == plant.m(), "assemble: Gamma_u size must equal the input count");

    const auto n = plant.n(), l = ctrl.l(), m = plant.m(), nw = plant.n_w(), nv = plant.n_v();
    const auto ma = anomaly.m_a();
    const Matrix& Gu = anomaly.gamma_u;
    const Matrix& Ga = anomaly.gamma_a;

    ClosedLoopModel cl;
    cl.dims = {n, l, m, ma, nw, nv};

    cl.A.resize(n + l, n + l);
    cl.A.topLeftCorner(n, n) = plant.A + plant.B * Gu * ctrl.D * plant.C;
    cl.A.topRightCorner(n, l) = plant.B * Gu * ctrl.C;
    cl.A.bottomLeftCorner(l, n) = ctrl.B * plant.C;
    cl.A.bottomRightCorner(l, l) = ctrl.A;

    cl.B_a = Matrix::Zero(n + l, ma);
    cl.B_a.topRows(n) = plant.B * Ga;

    cl.W = Matrix::Zero(n + l, nw + nv);
    cl.W.topLeftCorner(n, nw) = plant.W;
    cl.W.topRightCorner(n, nv) = plant.B * Gu * ctrl.D * plant.V;
    cl.W.bottomRightCorner(l, nv) = ctrl.B * plant.V;

    cl.C_u.resize(m, n + l);
    cl.C_u.leftCols(n) = Gu * ctrl.D * plant.C;
    cl.C_u.rightCols(l) = Gu * ctrl.C;

    cl.V_u = Matrix::Zero(m, nw + nv);
    cl.V_u.rightCols(nv) = Gu * ctrl.D * plant.V;

    cl.gamma_a = Ga;
    return cl;
}

/// (Gamma_u, Gamma_a, A) = (0, I, input_set): the adversary may apply any input.
inline AnomalyModel worst_case_anomaly(int m, const SetDescription& input_set) {
    detail::require(m > 0 && input_set.dim() == m, "worst_case_anomaly: input set dimension must be m");
    return AnomalyModel(Matrix::Zero(m, m), Matrix::Identity(m, m), input_set);
}

/// Anomaly on one input channel (1-based index); the other channels stay nominal.
inline AnomalyModel channel_anomaly(int m, int channel, const SetDescription& channel_set) {
    detail::require(channel >= 1 && channel <= m, "channel_anomaly: channel out of range");
    detail::require(channel_set.dim() == 1, "channel_anomaly: channel set must be one-dimensional");
    Matrix gu = Matrix::Identity(m, m);
    gu(channel - 1, channel - 1) = 0.0;
    Matrix ga = Matrix::Zero(m, 1);
    ga(channel - 1, 0) = 1.0;
    return AnomalyModel(std::move(gu), std::move(ga), channel_set);
}

inline Document to_document(const ClosedLoopModel& model) {
    Document doc;
    doc.matrices.emplace("A", model.A);
    doc.matrices.emplace("W", model.W);
    doc.matrices.emplace("B_a", model.B_a);
    doc.matrices.emplace("C_u", model.C_u);
    doc.matrices.emplace("V_u", model.V_u);
    doc.matrices.emplace("gamma_a", model.gamma_a);
    doc.scalars["n"] = static_cast<double>(model.dims.n);
    doc.scalars["l"] = static_cast<double>(model.dims.l);
    doc.scalars["m"] = static_cast<double>(model.dims.m);
    doc.scalars["m_a"] = static_cast<double>(model.dims.m_a);
    doc.scalars["n_w"] = static_cast<double>(model.dims.n_w);
    doc.scalars["n_v"] = static_cast<double>(model.dims.n_v);
    return doc;
}

inline ClosedLoopModel model_from_document(const Document& doc) {
    ClosedLoopModel model;
    model.A = doc.matrix("A");
    model.W = doc.matrix("W");
    model.B_a = doc.matrix("B_a");
    model.C_u = doc.matrix("C_u");
    model.V_u = doc.matrix("V_u");
    model.gamma_a = doc.matrix("gamma_a");
    auto dim = [&](const char* key) { return static_cast<Eigen::Index>(doc.scalar(key)); };
    model.dims = {dim("n"), dim("l"), dim("m"), dim("m_a"), dim("n_w"), dim("n_v")};
    try {
        model.validate();
    } catch (const ContractViolation& e) {
        throw FormatError(std::string("closed-loop model record: ") + e.what());
    }
    return model;
}

}  // namespace crittime
