#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "circadia/core.hpp"
#include "circadia/math.hpp"

namespace circadia {

// ---------------------------------------------------------------------------
// Parameter vectors
// ---------------------------------------------------------------------------

/// Coefficients of the linear trigonometric model, ordered
/// (gamma_0, gamma_1, gamma_2, ..., gamma_{2K-1}, gamma_{2K}).
struct LinearParams {
    int order = 0;            // K; 0 is legal and means midline-only
    Vector coeffs;            // length 2K+1

    void validate() const {
        if (order < 0) throw invalid_input("LinearParams: negative order");
        if (coeffs.size() != 2 * order + 1)
            throw invalid_input("LinearParams: coefficient length must be 2K+1");
        if (!coeffs.allFinite()) throw invalid_input("LinearParams: non-finite coefficient");
    }
};

struct Harmonic {
    double amplitude = 0.0;   // >= 0
    double phase = 0.0;       // [-pi, pi)
};

/// Midline plus per-harmonic (amplitude, phase) parameters.
struct AmpPhaseParams {
    double midline = 0.0;
    std::vector<Harmonic> harmonics;

    int order() const { return static_cast<int>(harmonics.size()); }

    void validate() const {
        if (!std::isfinite(midline)) throw invalid_input("AmpPhaseParams: non-finite midline");
        for (const auto& h : harmonics) {
            if (!(h.amplitude >= 0.0)) throw invalid_input("AmpPhaseParams: negative amplitude");
            if (!(h.phase >= -pi && h.phase < pi))
                throw invalid_input("AmpPhaseParams: phase outside [-pi, pi)");
        }
    }
};

/// One subject's least-squares fit together with the pieces the two-stage
/// estimators consume: residuals, noise variance, and the within-subject
/// covariance sigma2 * (W^T W)^{-1}.
struct IndividualFit {
    LinearParams params;
    Vector residuals;
    double sigma2 = 0.0;
    Matrix within_cov;
    int n = 0;
};

// ---------------------------------------------------------------------------
// Design and fitting
// ---------------------------------------------------------------------------

/// Row j is [1, sin(pi t_j / 12), cos(pi t_j / 12), ..., sin(K pi t_j / 12),
/// cos(K pi t_j / 12)].
inline Matrix design_matrix(std::span<const double> times, int order) {
    if (order < 0) throw invalid_input("design_matrix: negative order");
    if (times.empty()) throw invalid_input("design_matrix: no time points");
    const auto n = static_cast<Eigen::Index>(times.size());
    Matrix w(n, 2 * order + 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double t = times[static_cast<std::size_t>(j)];
        if (!std::isfinite(t)) throw invalid_input("design_matrix: non-finite time");
        w(j, 0) = 1.0;
        for (int k = 1; k <= order; ++k) {
            const double arg = k * pi * t / 12.0;
            w(j, 2 * k - 1) = std::sin(arg);
            w(j, 2 * k) = std::cos(arg);
        }
    }
    return w;
}

namespace detail {

// Reusable per-design fitting state. Bootstrap refits hit this thousands of
// times with unchanged times, so the factorization is done once.
struct FitContext {
    int order = 0;
    int n = 0;
    Matrix design;                 // n x (2K+1)
    Matrix xtx;                    // W^T W
    Matrix xtx_inv;
    Eigen::LLT<Matrix> llt;
    bool use_llt = true;
    Eigen::ColPivHouseholderQR<Matrix> qr;

    FitContext(std::span<const double> times, int k) : order(k), n(static_cast<int>(times.size())) {
        const int p = 2 * k + 1;
        if (n <= p)
            throw insufficient_data("fit requires n > 2K+1 (n=" + std::to_string(n) +
                                    ", K=" + std::to_string(k) + ")");
        design = design_matrix(times, k);
        xtx = design.transpose() * design;
        // Duplicate times (mod 24) make W^T W numerically singular.
        Eigen::SelfAdjointEigenSolver<Matrix> eig(xtx);
        if (eig.eigenvalues().minCoeff() < 1e-10 * static_cast<double>(n))
            throw singular_design("design matrix is rank deficient at order " + std::to_string(k));
        llt.compute(xtx);
        if (llt.info() != Eigen::Success) {
            use_llt = false;
            qr.compute(xtx);
        }
        xtx_inv = use_llt ? llt.solve(Matrix::Identity(p, p)) : qr.solve(Matrix::Identity(p, p));
    }

    Vector solve(const Vector& xty) const { return use_llt ? llt.solve(xty) : qr.solve(xty); }

    IndividualFit fit(const Eigen::Ref<const Vector>& values) const {
        IndividualFit out;
        out.params.order = order;
        out.params.coeffs = solve(design.transpose() * values);
        out.residuals = values - design * out.params.coeffs;
        out.n = n;
        out.sigma2 = out.residuals.squaredNorm() / static_cast<double>(n - 2 * order - 1);
        out.within_cov = out.sigma2 * xtx_inv;
        return out;
    }
};

} // namespace detail

/// Least-squares fit of one subject at the given order. Requires
/// n_i > 2K + 1 so the noise variance estimate has positive degrees of
/// freedom; throws singular_design when the times cannot identify the model.
inline IndividualFit fit_individual(const SubjectSeries& series, int order) {
    series.validate();
    if (order < 0) throw invalid_input("fit_individual: negative order");
    detail::FitContext ctx(series.times, order);
    Eigen::Map<const Vector> y(series.values.data(), static_cast<Eigen::Index>(series.values.size()));
    return ctx.fit(y);
}

// ---------------------------------------------------------------------------
// Parameter identities and circular arithmetic
// ---------------------------------------------------------------------------

/// Linear coefficients -> (midline, amplitudes, phases).
/// A zero-amplitude harmonic gets phase 0 (atan2(0, 0) convention).
inline AmpPhaseParams gamma_to_theta(const LinearParams& p) {
    p.validate();
    AmpPhaseParams out;
    out.midline = p.coeffs(0);
    out.harmonics.resize(static_cast<std::size_t>(p.order));
    for (int k = 1; k <= p.order; ++k) {
        const double gs = p.coeffs(2 * k - 1);
        const double gc = p.coeffs(2 * k);
        auto& h = out.harmonics[static_cast<std::size_t>(k - 1)];
        h.amplitude = std::hypot(gs, gc);
        h.phase = (h.amplitude == 0.0) ? 0.0 : std::atan2(-gs, gc);
        if (h.phase >= pi) h.phase = -pi;
    }
    return out;
}

/// (midline, amplitudes, phases) -> linear coefficients.
inline LinearParams theta_to_gamma(const AmpPhaseParams& p) {
    p.validate();
    LinearParams out;
    out.order = p.order();
    out.coeffs.resize(2 * p.order() + 1);
    out.coeffs(0) = p.midline;
    for (int k = 1; k <= p.order(); ++k) {
        const auto& h = p.harmonics[static_cast<std::size_t>(k - 1)];
        out.coeffs(2 * k - 1) = -h.amplitude * std::sin(h.phase);
        out.coeffs(2 * k) = h.amplitude * std::cos(h.phase);
    }
    return out;
}

/// atan2(sin(a-b), cos(a-b)) in [-pi, pi).
inline double circular_diff(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw invalid_input("circular_diff: non-finite");
    return wrap_angle(a - b);
}

/// Evaluate the fitted model at the given times (24-hour periodic).
inline std::vector<double> predict(const LinearParams& p, std::span<const double> times) {
    p.validate();
    std::vector<double> out(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double t = times[j];
        if (!std::isfinite(t)) throw invalid_input("predict: non-finite time");
        double y = p.coeffs(0);
        for (int k = 1; k <= p.order; ++k)
            y += p.coeffs(2 * k - 1) * std::sin(k * pi * t / 12.0) +
                 p.coeffs(2 * k) * std::cos(k * pi * t / 12.0);
        out[j] = y;
    }
    return out;
}

/// Evaluate the amplitude-phase form directly: midline + sum of
/// amp_k * cos(k pi t / 12 + phase_k). Raw vectors, no range checks, so
/// synthetic generators can pass unwrapped phases.
inline double eval_amp_phase(double midline, std::span<const double> amplitudes,
                             std::span<const double> phases, double t) {
    double y = midline;
    for (std::size_t k = 0; k < amplitudes.size(); ++k)
        y += amplitudes[k] * std::cos((static_cast<double>(k + 1)) * pi * t / 12.0 + phases[k]);
    return y;
}

} // namespace circadia
