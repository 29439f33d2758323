#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "circadia/core.hpp"
#include "circadia/trig.hpp"

namespace circadia {

enum class Method { sts, rts };

inline const char* method_name(Method m) { return m == Method::sts ? "sts" : "rts"; }

namespace detail {

inline void check_cohort_fits(const std::vector<IndividualFit>& fits) {
    if (fits.size() < 2)
        throw insufficient_cohort("population estimate needs M >= 2 subjects, got " +
                                  std::to_string(fits.size()));
    for (const auto& f : fits)
        if (f.params.order != fits.front().params.order)
            throw order_mismatch("individual fits mix model orders");
}

// Sample covariance with the M-1 divisor, accumulated in a fixed order so
// identical inputs give bit-identical results.
inline Matrix sample_covariance(const std::vector<Vector>& xs, const Vector& mean) {
    const auto p = mean.size();
    Matrix cov = Matrix::Zero(p, p);
    for (const auto& x : xs) {
        const Vector d = x - mean;
        cov.noalias() += d * d.transpose();
    }
    return cov / static_cast<double>(xs.size() - 1);
}

} // namespace detail

// ---------------------------------------------------------------------------
// STS: average the linear coefficients
// ---------------------------------------------------------------------------

struct StsEstimate {
    Vector alpha;             // length 2K+1
    Matrix between_cov;       // D-hat, (M-1) divisor
    Matrix mean_within_cov;   // average of Sigma-hat_i
    Matrix var_alpha;         // (D-hat + mean_within_cov) / M
    int cohort_size = 0;      // M
    int order = 0;            // K
    std::vector<IndividualFit> fits;
};

inline StsEstimate sts_estimate(std::vector<IndividualFit> fits) {
    detail::check_cohort_fits(fits);
    const int k = fits.front().params.order;
    const auto m = static_cast<double>(fits.size());
    const Eigen::Index p = 2 * k + 1;

    StsEstimate est;
    est.order = k;
    est.cohort_size = static_cast<int>(fits.size());
    est.alpha = Vector::Zero(p);
    for (const auto& f : fits) est.alpha += f.params.coeffs;
    est.alpha /= m;

    std::vector<Vector> gammas;
    gammas.reserve(fits.size());
    for (const auto& f : fits) gammas.push_back(f.params.coeffs);
    est.between_cov = detail::sample_covariance(gammas, est.alpha);

    est.mean_within_cov = Matrix::Zero(p, p);
    for (const auto& f : fits) est.mean_within_cov += f.within_cov;
    est.mean_within_cov /= m;

    est.var_alpha = (est.between_cov + est.mean_within_cov) / m;
    est.fits = std::move(fits);
    return est;
}

// ---------------------------------------------------------------------------
// RTS: transform to (amplitude, sin phase, cos phase), then average
// ---------------------------------------------------------------------------

/// Map a fitted coefficient vector to the (3K+1)-vector
/// [gamma_0, then per harmonic amplitude, sin(phase), cos(phase)].
inline Vector rts_transform(const IndividualFit& fit) {
    const int k = fit.params.order;
    Vector theta(3 * k + 1);
    theta(0) = fit.params.coeffs(0);
    for (int j = 1; j <= k; ++j) {
        const double gs = fit.params.coeffs(2 * j - 1);
        const double gc = fit.params.coeffs(2 * j);
        const double amp = std::hypot(gs, gc);
        const double phase = (amp == 0.0) ? 0.0 : std::atan2(-gs, gc);
        theta(3 * j - 2) = amp;
        theta(3 * j - 1) = std::sin(phase);
        theta(3 * j) = std::cos(phase);
    }
    return theta;
}

struct RtsEstimate {
    Vector beta_tilde;                       // length 3K+1
    Matrix between_cov;                      // D-tilde, (M-1) divisor
    std::vector<Vector> individual_transforms;
    std::vector<IndividualFit> fits;
    int cohort_size = 0;
    int order = 0;

    double amplitude(int harmonic) const { return beta_tilde(3 * harmonic - 2); }
    /// Phase of the averaged unit-circle pair; the pair is reported raw
    /// (norm <= 1), never renormalized.
    double phase(int harmonic) const {
        return std::atan2(beta_tilde(3 * harmonic - 1), beta_tilde(3 * harmonic));
    }
};

inline RtsEstimate rts_estimate(std::vector<IndividualFit> fits) {
    detail::check_cohort_fits(fits);
    const int k = fits.front().params.order;
    const auto m = static_cast<double>(fits.size());

    RtsEstimate est;
    est.order = k;
    est.cohort_size = static_cast<int>(fits.size());
    est.individual_transforms.reserve(fits.size());
    for (const auto& f : fits) est.individual_transforms.push_back(rts_transform(f));

    est.beta_tilde = Vector::Zero(3 * k + 1);
    for (const auto& t : est.individual_transforms) est.beta_tilde += t;
    est.beta_tilde /= m;
    est.between_cov = detail::sample_covariance(est.individual_transforms, est.beta_tilde);
    est.fits = std::move(fits);
    return est;
}

// ---------------------------------------------------------------------------
// Hypothesis functions g and their Delta-method variances
// ---------------------------------------------------------------------------

/// Which function of the population parameters a test works with.
struct GSpec {
    enum class Kind { zero_amplitudes, equal_midlines, equal_rhythms, single_amplitude };

    Kind kind = Kind::zero_amplitudes;
    int harmonic = 0;   // only for single_amplitude

    static GSpec zero_amplitudes() { return {Kind::zero_amplitudes, 0}; }
    static GSpec equal_midlines() { return {Kind::equal_midlines, 0}; }
    static GSpec equal_rhythms() { return {Kind::equal_rhythms, 0}; }
    static GSpec single_amplitude(int k) { return {Kind::single_amplitude, k}; }

    int q(int order) const {
        switch (kind) {
        case Kind::zero_amplitudes: return order;
        case Kind::equal_midlines: return 1;
        case Kind::equal_rhythms: return 2 * order;
        case Kind::single_amplitude: return 1;
        }
        return 0;
    }

    void check(int order) const {
        if (kind == Kind::single_amplitude && (harmonic < 1 || harmonic > order))
            throw invalid_input("single_amplitude: harmonic out of range");
        if (kind != Kind::equal_midlines && order < 1)
            throw invalid_input("test requires at least one harmonic");
    }

    /// Components of g's output that are circular (phases) and must be
    /// differenced with atan2 wrapping in two-cohort statistics.
    std::vector<bool> circular_mask(int order) const {
        std::vector<bool> mask(static_cast<std::size_t>(q(order)), false);
        if (kind == Kind::equal_rhythms)
            for (int k = 0; k < order; ++k) mask[static_cast<std::size_t>(2 * k + 1)] = true;
        return mask;
    }

    const char* name() const {
        switch (kind) {
        case Kind::zero_amplitudes: return "zero-amplitudes";
        case Kind::equal_midlines: return "equal-midlines";
        case Kind::equal_rhythms: return "equal-rhythms";
        case Kind::single_amplitude: return "single-amplitude";
        }
        return "?";
    }
};

/// Value of g and its estimated q x q covariance.
struct GValue {
    Vector value;
    Matrix var;
};

namespace detail {

inline void require_nonzero_amplitude(double amp, int harmonic) {
    if (!(amp > 0.0))
        throw degenerate_point("amplitude of harmonic " + std::to_string(harmonic) +
                               " is zero; Jacobian undefined");
}

// Harmonics of interest for a spec (1-based indices).
inline std::vector<int> g_harmonics(const GSpec& spec, int order) {
    if (spec.kind == GSpec::Kind::single_amplitude) return {spec.harmonic};
    std::vector<int> ks;
    for (int k = 1; k <= order; ++k) ks.push_back(k);
    return ks;
}

// g and Jacobian on the linear-coefficient scale (2K+1 columns). Serves both
// the STS population estimate and the per-individual factors G(gamma_i) /
// G2(gamma_i); for the RTS method this is exactly g1 composed with the
// per-individual transform.
inline void g_of_gamma(const GSpec& spec, const Vector& gamma, int order, Vector* value,
                       Matrix* jac) {
    const Eigen::Index p = 2 * order + 1;
    const int q = spec.q(order);
    if (value) *value = Vector::Zero(q);
    if (jac) *jac = Matrix::Zero(q, p);

    if (spec.kind == GSpec::Kind::equal_midlines) {
        if (value) (*value)(0) = gamma(0);
        if (jac) (*jac)(0, 0) = 1.0;
        return;
    }

    const auto ks = g_harmonics(spec, order);
    int row = 0;
    for (int k : ks) {
        const double gs = gamma(2 * k - 1);
        const double gc = gamma(2 * k);
        const double amp = std::hypot(gs, gc);
        require_nonzero_amplitude(amp, k);
        if (value) (*value)(row) = amp;
        if (jac) {
            (*jac)(row, 2 * k - 1) = gs / amp;
            (*jac)(row, 2 * k) = gc / amp;
        }
        ++row;
        if (spec.kind == GSpec::Kind::equal_rhythms) {
            if (value) (*value)(row) = std::atan2(-gs, gc);
            if (jac) {
                (*jac)(row, 2 * k - 1) = -gc / (amp * amp);
                (*jac)(row, 2 * k) = gs / (amp * amp);
            }
            ++row;
        }
    }
}

// g1 and Jacobian on the RTS (3K+1) scale.
inline void g_of_beta_tilde(const GSpec& spec, const Vector& beta, int order, Vector* value,
                            Matrix* jac) {
    const Eigen::Index p = 3 * order + 1;
    const int q = spec.q(order);
    if (value) *value = Vector::Zero(q);
    if (jac) *jac = Matrix::Zero(q, p);

    if (spec.kind == GSpec::Kind::equal_midlines) {
        if (value) (*value)(0) = beta(0);
        if (jac) (*jac)(0, 0) = 1.0;
        return;
    }

    const auto ks = g_harmonics(spec, order);
    int row = 0;
    for (int k : ks) {
        if (value) (*value)(row) = beta(3 * k - 2);
        if (jac) (*jac)(row, 3 * k - 2) = 1.0;
        ++row;
        if (spec.kind == GSpec::Kind::equal_rhythms) {
            const double s = beta(3 * k - 1);
            const double c = beta(3 * k);
            const double r2 = s * s + c * c;
            if (!(r2 > 0.0))
                throw degenerate_point("averaged phase vector of harmonic " + std::to_string(k) +
                                       " is zero");
            if (value) (*value)(row) = std::atan2(s, c);
            if (jac) {
                (*jac)(row, 3 * k - 1) = c / r2;
                (*jac)(row, 3 * k) = -s / r2;
            }
            ++row;
        }
    }
}

// Average of G(gamma_i) Sigma_i G(gamma_i)^T over the cohort.
inline Matrix mean_within_g(const GSpec& spec, const std::vector<IndividualFit>& fits, int order) {
    const int q = spec.q(order);
    Matrix acc = Matrix::Zero(q, q);
    Matrix jac;
    for (const auto& f : fits) {
        g_of_gamma(spec, f.params.coeffs, order, nullptr, &jac);
        acc.noalias() += jac * f.within_cov * jac.transpose();
    }
    return acc / static_cast<double>(fits.size());
}

} // namespace detail

/// g evaluated on an STS estimate with the Delta-method variance
/// [G(alpha)^T D G(alpha) + mean_i G(gamma_i)^T Sigma_i G(gamma_i)] / M.
inline GValue apply_g(const StsEstimate& est, const GSpec& spec) {
    spec.check(est.order);
    GValue out;
    Matrix jac;
    detail::g_of_gamma(spec, est.alpha, est.order, &out.value, &jac);
    const Matrix between = jac * est.between_cov * jac.transpose();
    const Matrix within = detail::mean_within_g(spec, est.fits, est.order);
    out.var = (between + within) / static_cast<double>(est.cohort_size);
    return out;
}

/// g1 evaluated on an RTS estimate; the variance uses D-tilde for the
/// between part and the composed g2 = g1 (individual transform) for the
/// within part, so g1(theta_i) = g2(gamma_i) holds exactly.
inline GValue apply_g(const RtsEstimate& est, const GSpec& spec) {
    spec.check(est.order);
    GValue out;
    Matrix jac1;
    detail::g_of_beta_tilde(spec, est.beta_tilde, est.order, &out.value, &jac1);
    const Matrix between = jac1 * est.between_cov * jac1.transpose();
    const Matrix within = detail::mean_within_g(spec, est.fits, est.order);
    out.var = (between + within) / static_cast<double>(est.cohort_size);
    return out;
}

} // namespace circadia
