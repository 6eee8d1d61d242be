#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "crittime/closed_loop.hpp"

namespace crittime {

/// Everything one critical-time analysis needs: the closed loop plus the safety,
/// initial, input-limitation, deviation and anomaly sets.
struct ScenarioSpec {
    ClosedLoopModel model;
    SetDescription safety;        // over R^{n+l}, QCs only
    SetDescription initial;       // over R^{n+l}
    SetDescription input_limits;  // over R^m
    SetDescription deviation;     // over R^{n_w+n_v}
    AnomalyModel anomaly;
    std::string label;

    void validate() const {
        model.validate();
        const auto& d = model.dims;
        detail::require(safety.qces().empty(), "ScenarioSpec: safety set must use QC inequalities only");
        detail::require(safety.dim() == d.nx(), "ScenarioSpec: safety set dimension");
        detail::require(initial.dim() == d.nx(), "ScenarioSpec: initial set dimension");
        detail::require(input_limits.dim() == d.m, "ScenarioSpec: input set dimension");
        detail::require(deviation.dim() == d.nd(), "ScenarioSpec: deviation set dimension");
        detail::require(anomaly.m_a() == d.m_a && anomaly.m() == d.m, "ScenarioSpec: anomaly dimensions");
        detail::require((anomaly.gamma_a - model.gamma_a).cwiseAbs().maxCoeff() == 0.0,
                        "ScenarioSpec: anomaly Gamma_a differs from the assembled model");
        detail::require(initial_corners_safe(), "ScenarioSpec: initial set is not inside the safety set");
    }

    /// Corners of the initial set's axis-aligned hull that belong to the
    /// initial set must lie in the safety set.
    bool initial_corners_safe(double tol = kDefaultMembershipTol) const {
        const AxisBounds b = axis_bounds(initial);
        if (!b.bounded()) return true;
        const auto n = b.lower.size();
        auto check = [&](const Vector& corner) {
            return !contains(initial, corner, tol) || contains(safety, corner, tol);
        };
        if (n <= 16) {
            for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
                Vector c(n);
                for (Eigen::Index i = 0; i < n; ++i) c(i) = (mask >> i) & 1U ? b.upper(i) : b.lower(i);
                if (!check(c)) return false;
            }
            return true;
        }
        std::mt19937_64 rng(7);
        for (int s = 0; s < 4096; ++s) {
            Vector c(n);
            for (Eigen::Index i = 0; i < n; ++i) c(i) = (rng() & 1U) ? b.upper(i) : b.lower(i);
            if (!check(c)) return false;
        }
        return true;
    }
};

inline Document to_document(const ScenarioSpec& sc) {
    Document doc = to_document(sc.model);
    doc.sets.emplace("safety", sc.safety);
    doc.sets.emplace("initial", sc.initial);
    doc.sets.emplace("input_limits", sc.input_limits);
    doc.sets.emplace("deviation", sc.deviation);
    doc.sets.emplace("anomaly", sc.anomaly.anomaly_set);
    doc.matrices.emplace("gamma_u", sc.anomaly.gamma_u);
    doc.texts["label"] = sc.label;
    return doc;
}

inline ScenarioSpec scenario_from_document(const Document& doc) {
    ClosedLoopModel model = model_from_document(doc);
    AnomalyModel anomaly(doc.matrix("gamma_u"), doc.matrix("gamma_a"), doc.set("anomaly"));
    auto it = doc.texts.find("label");
    ScenarioSpec sc{std::move(model),         doc.set("safety"),    doc.set("initial"),
                    doc.set("input_limits"),  doc.set("deviation"), std::move(anomaly),
                    it == doc.texts.end() ? std::string("scenario") : it->second};
    try {
        sc.validate();
    } catch (const ContractViolation& e) {
        throw FormatError(std::string("scenario record: ") + e.what());
    }
    return sc;
}

}  // namespace crittime
