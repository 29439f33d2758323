#pragma once

#include <vector>

#include "circadia/inference.hpp"

namespace circadia {

struct OrderStep {
    int harmonic = 0;
    double p_value = 1.0;
    bool retained = false;
};

/// Outcome of the forward order-selection procedure. `selected_order` may be
/// 0, in which case downstream fitting reduces to midline-only estimation.
struct OrderSelection {
    int selected_order = 0;
    std::vector<OrderStep> steps;
    Method method = Method::sts;
    int replicates = 0;
    bool truncated = false;    // stopped early because data ran out, not by the test
};

/// Forward selection of the harmonic order: at step k an order-k model is
/// fitted and H0: k-th population amplitude = 0 is bootstrap-tested; the
/// first p >= threshold stops the scan. Each step draws from its own
/// substream, so runs with different max_order agree on the shared steps.
inline OrderSelection forward_order_select(const CohortData& cohort, int max_order, Method method,
                                           int replicate_count, RngStream rng,
                                           double threshold = 0.05, const ExecPolicy& exec = {}) {
    if (max_order < 1) throw invalid_input("forward_order_select: max_order must be >= 1");
    cohort.validate();

    OrderSelection sel;
    sel.method = method;
    sel.replicates = replicate_count;

    std::size_t min_n = cohort.subjects.front().size();
    for (const auto& s : cohort.subjects) min_n = std::min(min_n, s.size());

    for (int k = 1; k <= max_order; ++k) {
        if (min_n <= static_cast<std::size_t>(2 * k + 1)) {
            sel.truncated = true;
            break;
        }
        const TestResult res =
            bootstrap_null_test(cohort, k, method, GSpec::single_amplitude(k), replicate_count,
                                rng.child({static_cast<std::uint64_t>(k)}), exec);
        OrderStep step;
        step.harmonic = k;
        step.p_value = *res.p_bootstrap;
        step.retained = step.p_value < threshold;
        sel.steps.push_back(step);
        if (!step.retained) break;
        sel.selected_order = k;
    }
    return sel;
}

} // namespace circadia
