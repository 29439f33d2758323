#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "circadia/inference.hpp"
#include "circadia/rng.hpp"
#include "circadia/select.hpp"

namespace circadia {

// ---------------------------------------------------------------------------
// Study settings
// ---------------------------------------------------------------------------

enum class StudyKind { single, two_cohort };

/// How the individual-level amplitude random effect is drawn. The studies'
/// two printed specifications disagree; all three readings are selectable.
///   design_factor:  TN tied to the signal-to-noise factor, as printed.
///   design_factor_centered: the same TN shifted to mean zero (default).
///   quantity_4:     TN(0, 1/2, -beta, beta).
enum class AmplitudeEffect { design_factor, design_factor_centered, quantity_4 };

/// One simulation setting: the four design factors plus the amplitude-effect
/// mode. Enumerated values expand to the studies' exact numeric parameters.
struct SimSetting {
    StudyKind study = StudyKind::single;
    int order = 1;                 // 1 or 3
    bool high_phase_variability = true;
    bool large_size = true;        // large: n=192, M=20; small: n=12, M=10
    bool high_snr = true;
    AmplitudeEffect effect_mode = AmplitudeEffect::design_factor_centered;

    int samples_per_subject() const { return large_size ? 192 : 12; }
    int cohort_size() const { return large_size ? 20 : 10; }

    std::uint64_t hash() const {
        std::uint64_t h = 0x73696D;
        auto fold = [&h](std::uint64_t v) { h = detail::mix64(h ^ detail::mix64(v)); };
        fold(study == StudyKind::single ? 0 : 1);
        fold(static_cast<std::uint64_t>(order));
        fold(high_phase_variability ? 1 : 0);
        fold(large_size ? 1 : 0);
        fold(high_snr ? 1 : 0);
        fold(static_cast<std::uint64_t>(effect_mode));
        return h;
    }
};

/// Fully expanded generator for one cohort.
struct CohortGenerator {
    std::string cohort_id;
    int samples = 0;
    int subjects = 0;
    double midline = 0.0;
    std::vector<double> amplitudes;          // population, per harmonic
    std::vector<double> phases;              // population, per harmonic
    DistributionSpec intercept_effect = DistributionSpec::normal(0.0, 1.0);
    DistributionSpec amplitude_effect = DistributionSpec::point_mass(0.0);
    DistributionSpec phase_effect = DistributionSpec::point_mass(0.0);
    DistributionSpec noise = DistributionSpec::normal(0.0, 1.0);
};

namespace detail {

inline DistributionSpec amplitude_effect_spec(AmplitudeEffect mode, bool high_snr, bool case_cohort,
                                              double beta_amp) {
    const double inv_sqrt2 = 0.70710678118654752440;
    double mean, var;
    if (case_cohort) {
        mean = high_snr ? -0.5 : -0.125;
        var = high_snr ? 0.5 : 0.375;
    } else {
        mean = high_snr ? -0.75 : -0.25;
        var = high_snr ? 0.75 : 0.25;
    }
    switch (mode) {
    case AmplitudeEffect::design_factor:
        return DistributionSpec::truncated_normal(mean, var, 0.0, inv_sqrt2);
    case AmplitudeEffect::design_factor_centered: {
        DistributionSpec raw = DistributionSpec::truncated_normal(mean, var, 0.0, inv_sqrt2);
        const double shift = raw.mean();
        return DistributionSpec::truncated_normal(mean - shift, var, -shift, inv_sqrt2 - shift);
    }
    case AmplitudeEffect::quantity_4:
        return DistributionSpec::truncated_normal(0.0, 0.5, -beta_amp, beta_amp);
    }
    throw invalid_input("unknown amplitude effect mode");
}

} // namespace detail

/// Expand a setting into the control-cohort generator (the single-cohort
/// study is defined on the control cohort).
inline CohortGenerator control_generator(const SimSetting& setting) {
    CohortGenerator g;
    g.cohort_id = "control";
    g.samples = setting.samples_per_subject();
    g.subjects = setting.cohort_size();
    g.midline = 6.0;
    const double amp = setting.high_snr ? 1.5 : 0.5;
    if (setting.order == 1) {
        g.amplitudes = {amp};
        g.phases = {pi / 4.0};
    } else if (setting.order == 3) {
        g.amplitudes = {amp, amp, amp};
        g.phases = {pi / 8.0, pi / 4.0, 3.0 * pi / 8.0};
    } else {
        throw invalid_input("SimSetting: order must be 1 or 3");
    }
    g.phase_effect = DistributionSpec::von_mises(0.0, setting.high_phase_variability ? 2.0 : 8.0);
    g.amplitude_effect =
        detail::amplitude_effect_spec(setting.effect_mode, setting.high_snr, false, amp);
    return g;
}

/// Expand a setting into the case-cohort generator of the two-cohort study.
inline CohortGenerator case_generator(const SimSetting& setting) {
    CohortGenerator g;
    g.cohort_id = "case";
    g.samples = setting.samples_per_subject();
    g.subjects = setting.cohort_size();
    g.midline = setting.high_snr ? 5.0 : 4.0;
    const double amp = setting.high_snr ? 1.0 : 0.25;
    if (setting.order == 1) {
        g.amplitudes = {amp};
        g.phases = {pi / 2.0};
    } else if (setting.order == 3) {
        g.amplitudes = {amp, amp, amp};
        g.phases = {pi / 4.0, pi / 2.0, 3.0 * pi / 4.0};
    } else {
        throw invalid_input("SimSetting: order must be 1 or 3");
    }
    g.phase_effect = DistributionSpec::von_mises(0.0, setting.high_phase_variability ? 4.0 : 16.0);
    g.amplitude_effect =
        detail::amplitude_effect_spec(setting.effect_mode, setting.high_snr, true, amp);
    return g;
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

/// Generate one subject on the equispaced grid t_j = 24(j-1)/n. Effects are
/// drawn in parameter order (intercept, then amplitude and phase per
/// harmonic), then one noise draw per sample.
inline SubjectSeries generate_subject(RngStream& rng, int samples, int order,
                                      const AmpPhaseParams& population,
                                      std::span<const DistributionSpec> effects,
                                      const DistributionSpec& noise) {
    if (samples < 1) throw invalid_input("generate_subject: n must be positive");
    if (population.order() != order || static_cast<int>(effects.size()) != 2 * order + 1)
        throw invalid_input("generate_subject: effects list must have 2K+1 entries");

    const double midline = population.midline + sample(rng, effects[0]);
    std::vector<double> amps(static_cast<std::size_t>(order));
    std::vector<double> phases(static_cast<std::size_t>(order));
    for (int k = 1; k <= order; ++k) {
        const auto& h = population.harmonics[static_cast<std::size_t>(k - 1)];
        amps[static_cast<std::size_t>(k - 1)] =
            h.amplitude + sample(rng, effects[static_cast<std::size_t>(2 * k - 1)]);
        phases[static_cast<std::size_t>(k - 1)] =
            h.phase + sample(rng, effects[static_cast<std::size_t>(2 * k)]);
    }

    SubjectSeries s;
    s.times.resize(static_cast<std::size_t>(samples));
    s.values.resize(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j) {
        const double t = 24.0 * j / samples;
        s.times[static_cast<std::size_t>(j)] = t;
        s.values[static_cast<std::size_t>(j)] =
            eval_amp_phase(midline, amps, phases, t) + sample(rng, noise);
    }
    return s;
}

namespace detail {

// Dataset variants zero out parts of the generator. Single study:
//   2: phase effects = 0;  3: amplitudes and amplitude effects = 0;
//   4: both. Two-cohort study: 2: phase effects = 0 in both cohorts;
//   3: control's population parameters copied from the case cohort;
//   4: both.
inline CohortGenerator apply_variant_single(CohortGenerator g, int variant) {
    if (variant == 2 || variant == 4) g.phase_effect = DistributionSpec::point_mass(0.0);
    if (variant == 3 || variant == 4) {
        std::fill(g.amplitudes.begin(), g.amplitudes.end(), 0.0);
        g.amplitude_effect = DistributionSpec::point_mass(0.0);
    }
    return g;
}

} // namespace detail

/// Optional overrides for degenerate test configurations.
struct StudyOptions {
    std::vector<int> datasets = {1, 2, 3, 4};
    ExecPolicy exec;
    std::optional<DistributionSpec> noise_override;
    std::optional<DistributionSpec> amplitude_effect_override;
    std::optional<DistributionSpec> intercept_effect_override;
};

/// The generated data of one (trial, variant): control cohort, plus the case
/// cohort for two-cohort studies.
struct GeneratedDatasets {
    CohortData control;
    std::optional<CohortData> case_cohort;
};

inline GeneratedDatasets generate_datasets(const SimSetting& setting, int variant, int trial,
                                           std::uint64_t seed, const StudyOptions& opts = {}) {
    if (variant < 1 || variant > 4) throw invalid_input("generate_datasets: variant must be 1..4");

    CohortGenerator control = control_generator(setting);
    std::optional<CohortGenerator> case_gen;
    if (setting.study == StudyKind::two_cohort) {
        case_gen = case_generator(setting);
        if (variant == 3 || variant == 4) {
            control.midline = case_gen->midline;
            control.amplitudes = case_gen->amplitudes;
            control.phases = case_gen->phases;
        }
        if (variant == 2 || variant == 4) {
            control.phase_effect = DistributionSpec::point_mass(0.0);
            case_gen->phase_effect = DistributionSpec::point_mass(0.0);
        }
    } else {
        control = detail::apply_variant_single(control, variant);
    }

    auto apply_overrides = [&](CohortGenerator& g) {
        if (opts.noise_override) g.noise = *opts.noise_override;
        if (opts.amplitude_effect_override) g.amplitude_effect = *opts.amplitude_effect_override;
        if (opts.intercept_effect_override) g.intercept_effect = *opts.intercept_effect_override;
    };
    apply_overrides(control);
    if (case_gen) apply_overrides(*case_gen);

    const std::uint64_t h = setting.hash();
    auto build = [&](const CohortGenerator& g, std::uint64_t cohort_index) {
        AmpPhaseParams pop;
        pop.midline = g.midline;
        for (std::size_t k = 0; k < g.amplitudes.size(); ++k)
            pop.harmonics.push_back({g.amplitudes[k], wrap_angle(g.phases[k])});
        std::vector<DistributionSpec> effects;
        effects.push_back(g.intercept_effect);
        for (std::size_t k = 0; k < g.amplitudes.size(); ++k) {
            effects.push_back(g.amplitude_effect);
            effects.push_back(g.phase_effect);
        }
        CohortData cohort;
        cohort.cohort_id = g.cohort_id;
        cohort.subjects.reserve(static_cast<std::size_t>(g.subjects));
        for (int i = 0; i < g.subjects; ++i) {
            RngStream sub = derive_stream(
                seed, {h, static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(variant),
                       cohort_index, static_cast<std::uint64_t>(i)});
            SubjectSeries s = generate_subject(sub, g.samples,
                                               static_cast<int>(g.amplitudes.size()), pop, effects,
                                               g.noise);
            s.subject_id = g.cohort_id + "-" + std::to_string(i + 1);
            cohort.subjects.push_back(std::move(s));
        }
        return cohort;
    };

    GeneratedDatasets out;
    out.control = build(control, 0);
    if (case_gen) out.case_cohort = build(*case_gen, 1);
    return out;
}

// ---------------------------------------------------------------------------
// Trial records
// ---------------------------------------------------------------------------

/// Quantities recorded for one (dataset, method) pair within a trial.
struct TrialCell {
    int dataset = 1;
    Method method = Method::sts;
    std::optional<double> midline_error;
    std::vector<double> amplitude_error;     // per harmonic
    std::vector<double> phase_error;         // per harmonic, circular, [-pi, pi)
    std::optional<double> p_zero_amplitudes;
    std::optional<double> p_equal_midlines;
    std::optional<double> p_equal_rhythms;
};

struct TrialRecord {
    int trial = 0;
    std::vector<TrialCell> cells;
};

namespace detail {

struct DerivedPopulation {
    double midline = 0.0;
    std::vector<double> amplitudes;
    std::vector<double> phases;
};

inline DerivedPopulation derive_population(const StsEstimate& est) {
    DerivedPopulation d;
    const AmpPhaseParams theta = gamma_to_theta(LinearParams{est.order, est.alpha});
    d.midline = theta.midline;
    for (const auto& h : theta.harmonics) {
        d.amplitudes.push_back(h.amplitude);
        d.phases.push_back(h.phase);
    }
    return d;
}

inline DerivedPopulation derive_population(const RtsEstimate& est) {
    DerivedPopulation d;
    d.midline = est.beta_tilde(0);
    for (int k = 1; k <= est.order; ++k) {
        d.amplitudes.push_back(est.amplitude(k));
        d.phases.push_back(est.phase(k));
    }
    return d;
}

inline void record_errors(TrialCell& cell, const DerivedPopulation& est,
                          const CohortGenerator& truth) {
    cell.midline_error = est.midline - truth.midline;
    for (std::size_t k = 0; k < truth.amplitudes.size(); ++k) {
        cell.amplitude_error.push_back(est.amplitudes[k] - truth.amplitudes[k]);
        cell.phase_error.push_back(circular_diff(est.phases[k], wrap_angle(truth.phases[k])));
    }
}

} // namespace detail

/// Run a full study: for each trial and requested dataset variant, generate
/// data, estimate with both methods, and record the per-trial quantities
/// (parameter errors on datasets 1-2 of the single study; bootstrap p-values
/// everywhere). R = 0 skips the bootstraps, leaving the p fields empty.
inline std::vector<TrialRecord> run_study(const SimSetting& setting, int trials,
                                          int replicate_count, std::uint64_t seed,
                                          const StudyOptions& opts = {}) {
    if (trials < 1) throw invalid_input("run_study: trials must be positive");
    const std::uint64_t h = setting.hash();
    constexpr std::uint64_t tag_null_bootstrap = 10;
    constexpr std::uint64_t tag_pooled_bootstrap = 11;
    const Method both_methods[] = {Method::sts, Method::rts};

    std::vector<TrialRecord> records(static_cast<std::size_t>(trials));
    parallel_for_index(static_cast<std::size_t>(trials), opts.exec, [&](std::size_t t) {
        TrialRecord rec;
        rec.trial = static_cast<int>(t);
        for (int variant : opts.datasets) {
            GeneratedDatasets data =
                generate_datasets(setting, variant, static_cast<int>(t), seed, opts);
            const CohortGenerator control_truth = control_generator(setting);

            if (setting.study == StudyKind::single) {
                detail::PreparedCohort prep(data.control, setting.order);
                const StsEstimate sts = sts_estimate(prep.fits);
                const RtsEstimate rts = rts_estimate(prep.fits);

                TrialCell sts_cell{variant, Method::sts, {}, {}, {}, {}, {}, {}};
                TrialCell rts_cell{variant, Method::rts, {}, {}, {}, {}, {}, {}};
                if (variant == 1 || variant == 2) {
                    detail::record_errors(sts_cell, detail::derive_population(sts), control_truth);
                    detail::record_errors(rts_cell, detail::derive_population(rts), control_truth);
                }
                if (replicate_count > 0) {
                    const RngStream boot = derive_stream(
                        seed, {h, static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(variant), tag_null_bootstrap});
                    auto outs = detail::null_bootstrap_batch(prep, GSpec::zero_amplitudes(),
                                                             both_methods, replicate_count, boot,
                                                             ExecPolicy::serial());
                    const GSpec spec = GSpec::zero_amplitudes();
                    const GValue gv_sts = apply_g(sts, spec);
                    const GValue gv_rts = apply_g(rts, spec);
                    sts_cell.p_zero_amplitudes = empirical_pvalue(
                        wald_statistic(gv_sts.value, gv_sts.var), outs[0].replicate_taus);
                    rts_cell.p_zero_amplitudes = empirical_pvalue(
                        wald_statistic(gv_rts.value, gv_rts.var), outs[1].replicate_taus);
                }
                rec.cells.push_back(std::move(sts_cell));
                rec.cells.push_back(std::move(rts_cell));
            } else {
                detail::PreparedCohort case_prep(*data.case_cohort, setting.order);
                detail::PreparedCohort control_prep(data.control, setting.order);

                TrialCell sts_cell{variant, Method::sts, {}, {}, {}, {}, {}, {}};
                TrialCell rts_cell{variant, Method::rts, {}, {}, {}, {}, {}, {}};
                if (replicate_count > 0) {
                    const detail::MethodEstimates case_est(case_prep.fits);
                    const detail::MethodEstimates control_est(control_prep.fits);
                    const GSpec tests[] = {GSpec::equal_midlines(), GSpec::equal_rhythms()};
                    const RngStream boot = derive_stream(
                        seed, {h, static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(variant), tag_pooled_bootstrap});
                    auto outs = detail::pooled_bootstrap_batch(case_prep, control_prep,
                                                               both_methods, tests,
                                                               replicate_count, boot,
                                                               ExecPolicy::serial());
                    for (std::size_t mi = 0; mi < 2; ++mi) {
                        TrialCell& cell = (mi == 0) ? sts_cell : rts_cell;
                        for (std::size_t ti = 0; ti < 2; ++ti) {
                            const double tau = detail::two_cohort_tau_for_method(
                                case_est, control_est, both_methods[mi], tests[ti], setting.order);
                            const double p =
                                empirical_pvalue(tau, outs[mi][ti].replicate_taus);
                            if (ti == 0)
                                cell.p_equal_midlines = p;
                            else
                                cell.p_equal_rhythms = p;
                        }
                    }
                }
                rec.cells.push_back(std::move(sts_cell));
                rec.cells.push_back(std::move(rts_cell));
            }
        }
        records[t] = std::move(rec);
    });
    return records;
}

// ---------------------------------------------------------------------------
// Power / type-I curves
// ---------------------------------------------------------------------------

enum class CurveKind { power, type_i };

struct DkwBand {
    double level = 0.95;
    double epsilon = 0.0;
};

/// Empirical curve over significance thresholds: value(rho) = fraction of
/// recorded p-values <= rho. The AUC equals mean(1 - p) exactly.
struct PowerCurve {
    std::vector<double> pvalues;     // sorted ascending
    CurveKind kind = CurveKind::power;
    double auc = 0.0;
    std::optional<DkwBand> band;

    double value_at(double rho) const {
        const auto it = std::upper_bound(pvalues.begin(), pvalues.end(), rho);
        return static_cast<double>(it - pvalues.begin()) / static_cast<double>(pvalues.size());
    }
    double lower_at(double rho) const {
        return band ? std::max(0.0, value_at(rho) - band->epsilon) : value_at(rho);
    }
    double upper_at(double rho) const {
        return band ? std::min(1.0, value_at(rho) + band->epsilon) : value_at(rho);
    }
};

inline PowerCurve power_curve(std::vector<double> pvalues, CurveKind kind) {
    if (pvalues.empty()) throw invalid_input("power_curve: no p-values");
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0)) throw invalid_input("power_curve: p outside [0,1]");
    PowerCurve c;
    c.kind = kind;
    std::sort(pvalues.begin(), pvalues.end());
    double acc = 0.0;
    for (double p : pvalues) acc += 1.0 - p;
    c.auc = acc / static_cast<double>(pvalues.size());
    c.pvalues = std::move(pvalues);
    return c;
}

/// Dvoretzky-Kiefer-Wolfowitz envelope half-width for the curve's sample
/// size at the given confidence level.
inline DkwBand dkw_band(const PowerCurve& curve, double level) {
    if (!(level > 0.0 && level < 1.0)) throw invalid_input("dkw_band: level must be in (0,1)");
    DkwBand b;
    b.level = level;
    b.epsilon =
        std::sqrt(std::log(2.0 / (1.0 - level)) / (2.0 * static_cast<double>(curve.pvalues.size())));
    return b;
}

// ---------------------------------------------------------------------------
// Study summaries
// ---------------------------------------------------------------------------

/// One curve of the study report: (dataset, method, test) with its AUC.
struct CurveSummary {
    int dataset = 1;
    Method method = Method::sts;
    GSpec::Kind test = GSpec::Kind::zero_amplitudes;
    PowerCurve curve;
};

inline CurveKind dataset_curve_kind(int dataset) {
    return dataset <= 2 ? CurveKind::power : CurveKind::type_i;
}

/// Collect the per-trial p-values into power / type-I curves with 95% DKW
/// bands, one per (dataset, method, test).
inline std::vector<CurveSummary> summarize_study(const SimSetting& setting,
                                                 const std::vector<TrialRecord>& records,
                                                 double band_level = 0.95) {
    std::vector<CurveSummary> out;
    std::vector<GSpec::Kind> tests;
    if (setting.study == StudyKind::single)
        tests = {GSpec::Kind::zero_amplitudes};
    else
        tests = {GSpec::Kind::equal_midlines, GSpec::Kind::equal_rhythms};

    for (int dataset = 1; dataset <= 4; ++dataset)
        for (Method method : {Method::sts, Method::rts})
            for (GSpec::Kind test : tests) {
                std::vector<double> ps;
                for (const auto& rec : records)
                    for (const auto& cell : rec.cells) {
                        if (cell.dataset != dataset || cell.method != method) continue;
                        const std::optional<double>& p =
                            test == GSpec::Kind::zero_amplitudes ? cell.p_zero_amplitudes
                            : test == GSpec::Kind::equal_midlines ? cell.p_equal_midlines
                                                                  : cell.p_equal_rhythms;
                        if (p) ps.push_back(*p);
                    }
                if (ps.empty()) continue;
                CurveSummary cs;
                cs.dataset = dataset;
                cs.method = method;
                cs.test = test;
                cs.curve = power_curve(std::move(ps), dataset_curve_kind(dataset));
                cs.curve.band = dkw_band(cs.curve, band_level);
                out.push_back(std::move(cs));
            }
    return out;
}

} // namespace circadia
