#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include "circadia/core.hpp"
#include "circadia/math.hpp"
#include "circadia/parallel.hpp"
#include "circadia/rng.hpp"
#include "circadia/trig.hpp"
#include "circadia/two_stage.hpp"

namespace circadia {

// ---------------------------------------------------------------------------
// Wald statistics and p-values
// ---------------------------------------------------------------------------

namespace detail {

// Quadratic form v^T V^{-1} v through the eigendecomposition of V, with the
// invertibility check folded in (condition number must stay below 1e12).
inline double wald_quadratic_form(const Vector& value, const Matrix& var) {
    if (var.rows() != var.cols() || var.rows() != value.size())
        throw invalid_input("wald statistic: dimension mismatch");
    const Matrix sym = 0.5 * (var + var.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Vector& lambda = eig.eigenvalues();
    const double lo = lambda.minCoeff();
    const double hi = lambda.maxCoeff();
    if (!(lo > 0.0) || hi / lo > 1e12)
        throw singular_covariance("test covariance is singular or ill-conditioned");
    const Vector proj = eig.eigenvectors().transpose() * value;
    double tau = 0.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i) tau += proj(i) * proj(i) / lambda(i);
    return tau;
}

} // namespace detail

/// tau = value^T var^{-1} value.
inline double wald_statistic(const Vector& value, const Matrix& var) {
    return detail::wald_quadratic_form(value, var);
}

/// tau = (v1 - v0)^T (var1 + var0)^{-1} (v1 - v0).
inline double wald_two_cohort(const Vector& v1, const Matrix& var1, const Vector& v0,
                              const Matrix& var0) {
    if (v1.size() != v0.size()) throw invalid_input("wald_two_cohort: value dimension mismatch");
    return detail::wald_quadratic_form(v1 - v0, var1 + var0);
}

/// Upper tail of the central chi-squared distribution with q degrees of
/// freedom, via the regularized incomplete gamma function.
inline double chisq_sf(double tau, int q) {
    if (q < 1) throw invalid_input("chisq_sf: q must be positive");
    if (!(tau >= 0.0) || !std::isfinite(tau))
        throw invalid_input("chisq_sf: tau must be finite and >= 0");
    if (tau == 0.0) return 1.0;
    return math::gamma_q(0.5 * q, 0.5 * tau);
}

/// p = (1/R) * sum of 1(tau <= tau_r); ties count toward p.
inline double empirical_pvalue(double tau, std::span<const double> replicate_taus) {
    if (replicate_taus.empty()) throw invalid_input("empirical_pvalue: no replicates");
    std::size_t count = 0;
    for (double t : replicate_taus)
        if (tau <= t) ++count;
    return static_cast<double>(count) / static_cast<double>(replicate_taus.size());
}

struct TestResult {
    double statistic = 0.0;
    int q = 0;
    double p_asymptotic = 1.0;
    std::optional<double> p_bootstrap;
    std::optional<int> replicates;
    Method method = Method::sts;
    GSpec test;
    int failed_replicates = 0;
};

// ---------------------------------------------------------------------------
// Bootstrap engines
// ---------------------------------------------------------------------------

namespace detail {

// Pre-fitted cohort: per-subject design factorizations plus original fits.
struct PreparedCohort {
    int order = 0;
    std::vector<FitContext> contexts;
    std::vector<IndividualFit> fits;

    PreparedCohort(const CohortData& cohort, int order_) : order(order_) {
        cohort.validate();
        contexts.reserve(cohort.subjects.size());
        fits.reserve(cohort.subjects.size());
        for (const auto& s : cohort.subjects) {
            contexts.emplace_back(std::span<const double>(s.times), order_);
            Eigen::Map<const Vector> y(s.values.data(),
                                       static_cast<Eigen::Index>(s.values.size()));
            fits.push_back(contexts.back().fit(y));
        }
    }
};

inline double tau_for_method(std::vector<IndividualFit> fits, Method method, const GSpec& spec) {
    if (method == Method::sts) {
        const GValue gv = apply_g(sts_estimate(std::move(fits)), spec);
        return wald_quadratic_form(gv.value, gv.var);
    }
    const GValue gv = apply_g(rts_estimate(std::move(fits)), spec);
    return wald_quadratic_form(gv.value, gv.var);
}

// Population amplitude per harmonic used by the null imposition: the
// amplitude the method itself reports (STS: derived from alpha-hat; RTS: the
// averaged individual amplitudes).
inline Vector population_amplitudes(const std::vector<IndividualFit>& fits, Method method,
                                    int order) {
    Vector amps(order);
    if (method == Method::sts) {
        const StsEstimate est = sts_estimate(fits);
        for (int k = 1; k <= order; ++k)
            amps(k - 1) = std::hypot(est.alpha(2 * k - 1), est.alpha(2 * k));
    } else {
        const RtsEstimate est = rts_estimate(fits);
        for (int k = 1; k <= order; ++k) amps(k - 1) = est.beta_tilde(3 * k - 2);
    }
    return amps;
}

// Null-imposing transform of a resampled coefficient vector: recentered
// harmonics keep the resampled individual's phase direction but have the
// population amplitude subtracted, so the cohort-level amplitude vanishes
// under H0. `recenter` selects which harmonics are transformed (all for the
// zero-amplitudes test, a single one for the order-selection step).
inline Vector impose_null(const Vector& gamma, const Vector& pop_amps,
                          const std::vector<int>& recenter) {
    Vector out = gamma;
    for (int k : recenter) {
        const double gs = gamma(2 * k - 1);
        const double gc = gamma(2 * k);
        const double amp = std::hypot(gs, gc);
        const double phase = (amp == 0.0) ? 0.0 : std::atan2(-gs, gc);
        const double recentered = amp - pop_amps(k - 1);
        out(2 * k - 1) = -recentered * std::sin(phase);
        out(2 * k) = recentered * std::cos(phase);
    }
    return out;
}

// Run `fn(r, substream)` for every replicate, retrying a failed replicate on
// its next (replicate, attempt) substream. Replicates are schedule
// independent; the failure total is data determined. Returns the number of
// failed attempts; > 1% of R aborts.
template <typename ReplicateFn>
int run_replicates(int replicate_count, const RngStream& rng, const ExecPolicy& exec,
                   ReplicateFn&& fn) {
    if (replicate_count < 1) throw invalid_input("bootstrap: R must be positive");
    std::atomic<int> failures{0};
    parallel_for_index(static_cast<std::size_t>(replicate_count), exec, [&](std::size_t r) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (attempt > 100)
                throw bootstrap_failure("bootstrap replicate " + std::to_string(r) +
                                        " failed repeatedly");
            RngStream sub = rng.child({static_cast<std::uint64_t>(r), attempt});
            try {
                fn(r, sub);
                return;
            } catch (const error&) {
                failures.fetch_add(1);
            }
        }
    });
    const int total = failures.load();
    if (total > replicate_count / 100)
        throw bootstrap_failure("more than 1% of bootstrap replicates failed (" +
                                std::to_string(total) + " of " + std::to_string(replicate_count) +
                                ")");
    return total;
}

struct BootstrapOutcome {
    std::vector<double> replicate_taus;
    int failures = 0;
};

// Replicate statistics for the null-imposing bootstrap, computed for every
// requested method from common resample draws.
inline std::vector<BootstrapOutcome> null_bootstrap_batch(const PreparedCohort& prep,
                                                          const GSpec& spec,
                                                          std::span<const Method> methods,
                                                          int replicate_count,
                                                          const RngStream& rng,
                                                          const ExecPolicy& exec) {
    const int order = prep.order;
    const auto m = prep.fits.size();
    std::vector<int> recenter;
    if (spec.kind == GSpec::Kind::single_amplitude)
        recenter = {spec.harmonic};
    else
        for (int k = 1; k <= order; ++k) recenter.push_back(k);

    std::vector<Vector> pop_amps;
    pop_amps.reserve(methods.size());
    for (Method method : methods)
        pop_amps.push_back(population_amplitudes(prep.fits, method, order));

    std::vector<std::vector<double>> taus(
        methods.size(), std::vector<double>(static_cast<std::size_t>(replicate_count)));
    const int failures =
        run_replicates(replicate_count, rng, exec, [&](std::size_t r, RngStream& sub) {
            // Step 1: resample subjects' coefficient vectors.
            std::vector<std::size_t> idx(m);
            for (auto& i : idx) i = static_cast<std::size_t>(sub.next_below(m));
            // Step 2: resample each slot's residuals from its own subject.
            std::vector<Vector> eps(m);
            for (std::size_t i = 0; i < m; ++i) {
                const Vector& res = prep.fits[i].residuals;
                const auto n = static_cast<std::size_t>(res.size());
                eps[i].resize(static_cast<Eigen::Index>(n));
                for (std::size_t j = 0; j < n; ++j)
                    eps[i](static_cast<Eigen::Index>(j)) =
                        res(static_cast<Eigen::Index>(sub.next_below(n)));
            }
            // Steps 3-5 per method: impose the null, regenerate, refit, test.
            for (std::size_t mi = 0; mi < methods.size(); ++mi) {
                std::vector<IndividualFit> refits;
                refits.reserve(m);
                for (std::size_t i = 0; i < m; ++i) {
                    const Vector tilde =
                        impose_null(prep.fits[idx[i]].params.coeffs, pop_amps[mi], recenter);
                    const Vector y = prep.contexts[i].design * tilde + eps[i];
                    IndividualFit f = prep.contexts[i].fit(y);
                    f.residuals.resize(0);
                    refits.push_back(std::move(f));
                }
                taus[mi][r] = tau_for_method(std::move(refits), methods[mi], spec);
            }
        });

    std::vector<BootstrapOutcome> out(methods.size());
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        out[mi].replicate_taus = std::move(taus[mi]);
        out[mi].failures = failures;
    }
    return out;
}

// Difference of two cohorts' g-values with circular wrap on phase components.
inline double two_cohort_tau(const GValue& case_gv, const GValue& control_gv,
                             const std::vector<bool>& circular) {
    Vector diff = case_gv.value - control_gv.value;
    for (Eigen::Index i = 0; i < diff.size(); ++i)
        if (circular[static_cast<std::size_t>(i)])
            diff(i) = wrap_angle(case_gv.value(i) - control_gv.value(i));
    return wald_quadratic_form(diff, case_gv.var + control_gv.var);
}

// Per-cohort STS and RTS estimates of one replicate, shared across tests.
struct MethodEstimates {
    StsEstimate sts;
    RtsEstimate rts;

    explicit MethodEstimates(const std::vector<IndividualFit>& fits)
        : sts(sts_estimate(fits)), rts(rts_estimate(fits)) {}

    GValue g(Method method, const GSpec& spec) const {
        return method == Method::sts ? apply_g(sts, spec) : apply_g(rts, spec);
    }
};

inline double two_cohort_tau_for_method(const MethodEstimates& case_est,
                                        const MethodEstimates& control_est, Method method,
                                        const GSpec& spec, int order) {
    return two_cohort_tau(case_est.g(method, spec), control_est.g(method, spec),
                          spec.circular_mask(order));
}

// Pooled two-cohort bootstrap: one pass computes replicate statistics for
// every (method, test) pair. No null-imposing transform; pooling the
// coefficient vectors across cohorts is what encodes H0.
inline std::vector<std::vector<BootstrapOutcome>> pooled_bootstrap_batch(
    const PreparedCohort& case_prep, const PreparedCohort& control_prep,
    std::span<const Method> methods, std::span<const GSpec> tests, int replicate_count,
    const RngStream& rng, const ExecPolicy& exec) {
    const int order = case_prep.order;
    const auto m1 = case_prep.fits.size();
    const auto m0 = control_prep.fits.size();
    const auto pool_size = m1 + m0;

    auto pooled_coeffs = [&](std::size_t p) -> const Vector& {
        return p < m1 ? case_prep.fits[p].params.coeffs : control_prep.fits[p - m1].params.coeffs;
    };

    std::vector<std::vector<std::vector<double>>> taus(
        methods.size(),
        std::vector<std::vector<double>>(
            tests.size(), std::vector<double>(static_cast<std::size_t>(replicate_count))));

    const int failures =
        run_replicates(replicate_count, rng, exec, [&](std::size_t r, RngStream& sub) {
            auto rebuild = [&](const PreparedCohort& prep, std::size_t slots) {
                std::vector<IndividualFit> refits;
                refits.reserve(slots);
                for (std::size_t i = 0; i < slots; ++i) {
                    const Vector& coeffs =
                        pooled_coeffs(static_cast<std::size_t>(sub.next_below(pool_size)));
                    const Vector& res = prep.fits[i].residuals;
                    const auto n = static_cast<std::size_t>(res.size());
                    Vector y = prep.contexts[i].design * coeffs;
                    for (std::size_t j = 0; j < n; ++j)
                        y(static_cast<Eigen::Index>(j)) +=
                            res(static_cast<Eigen::Index>(sub.next_below(n)));
                    IndividualFit f = prep.contexts[i].fit(y);
                    f.residuals.resize(0);
                    refits.push_back(std::move(f));
                }
                return refits;
            };
            const MethodEstimates case_est(rebuild(case_prep, m1));
            const MethodEstimates control_est(rebuild(control_prep, m0));
            for (std::size_t mi = 0; mi < methods.size(); ++mi)
                for (std::size_t ti = 0; ti < tests.size(); ++ti)
                    taus[mi][ti][r] =
                        two_cohort_tau_for_method(case_est, control_est, methods[mi], tests[ti],
                                                  order);
        });

    std::vector<std::vector<BootstrapOutcome>> out(methods.size(),
                                                   std::vector<BootstrapOutcome>(tests.size()));
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
        for (std::size_t ti = 0; ti < tests.size(); ++ti) {
            out[mi][ti].replicate_taus = std::move(taus[mi][ti]);
            out[mi][ti].failures = failures;
        }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Public testing operations
// ---------------------------------------------------------------------------

/// Zero-amplitudes (or, via `spec`, single-amplitude) bootstrap test on one
/// cohort: nonparametric random-effects and individual-residual bootstrap
/// with the null imposed on the resampled coefficients.
inline TestResult bootstrap_null_test(const CohortData& cohort, int order, Method method,
                                      const GSpec& spec, int replicate_count, RngStream rng,
                                      const ExecPolicy& exec = {}) {
    spec.check(order);
    if (spec.kind != GSpec::Kind::zero_amplitudes && spec.kind != GSpec::Kind::single_amplitude)
        throw invalid_input("bootstrap_null_test: spec must test amplitudes");
    detail::PreparedCohort prep(cohort, order);

    TestResult result;
    result.method = method;
    result.test = spec;
    result.q = spec.q(order);
    result.statistic = detail::tau_for_method(prep.fits, method, spec);
    result.p_asymptotic = chisq_sf(result.statistic, result.q);

    const Method methods[] = {method};
    auto outcomes = detail::null_bootstrap_batch(prep, spec, methods, replicate_count, rng, exec);
    result.p_bootstrap = empirical_pvalue(result.statistic, outcomes[0].replicate_taus);
    result.replicates = replicate_count;
    result.failed_replicates = outcomes[0].failures;
    return result;
}

inline TestResult bootstrap_zero_amplitudes(const CohortData& cohort, int order, Method method,
                                            int replicate_count, RngStream rng,
                                            const ExecPolicy& exec = {}) {
    return bootstrap_null_test(cohort, order, method, GSpec::zero_amplitudes(), replicate_count,
                               std::move(rng), exec);
}

/// Two-cohort bootstrap test (equal-midlines or equal-rhythms): subjects'
/// coefficient vectors are pooled across cohorts and resampled without any
/// null-imposing transform.
inline TestResult bootstrap_two_cohort(const CohortData& case_cohort,
                                       const CohortData& control_cohort, int order, Method method,
                                       const GSpec& spec, int replicate_count, RngStream rng,
                                       const ExecPolicy& exec = {}) {
    spec.check(order);
    if (spec.kind != GSpec::Kind::equal_midlines && spec.kind != GSpec::Kind::equal_rhythms)
        throw invalid_input("bootstrap_two_cohort: spec must be equal-midlines or equal-rhythms");
    detail::PreparedCohort case_prep(case_cohort, order);
    detail::PreparedCohort control_prep(control_cohort, order);

    TestResult result;
    result.method = method;
    result.test = spec;
    result.q = spec.q(order);
    {
        const detail::MethodEstimates case_est(case_prep.fits);
        const detail::MethodEstimates control_est(control_prep.fits);
        result.statistic =
            detail::two_cohort_tau_for_method(case_est, control_est, method, spec, order);
    }
    result.p_asymptotic = chisq_sf(result.statistic, result.q);

    const Method methods[] = {method};
    const GSpec tests[] = {spec};
    auto outcomes = detail::pooled_bootstrap_batch(case_prep, control_prep, methods, tests,
                                                   replicate_count, rng, exec);
    result.p_bootstrap = empirical_pvalue(result.statistic, outcomes[0][0].replicate_taus);
    result.replicates = replicate_count;
    result.failed_replicates = outcomes[0][0].failures;
    return result;
}

} // namespace circadia
