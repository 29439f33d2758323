#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace circadia {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by this library.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid argument or distribution parameter.
class invalid_input : public error {
public:
    using error::error;
};

/// Too few observations for the requested model order.
class insufficient_data : public error {
public:
    using error::error;
};

/// Design matrix is rank deficient (e.g. duplicated measurement times).
class singular_design : public error {
public:
    using error::error;
};

/// Fewer than two subjects in a cohort-level estimate.
class insufficient_cohort : public error {
public:
    using error::error;
};

/// Individual fits disagree on the model order.
class order_mismatch : public error {
public:
    using error::error;
};

/// Jacobian undefined at the evaluation point (zero amplitude).
class degenerate_point : public error {
public:
    using error::error;
};

/// Covariance matrix not invertible at working precision.
class singular_covariance : public error {
public:
    using error::error;
};

/// More than 1% of bootstrap replicates failed to refit.
class bootstrap_failure : public error {
public:
    using error::error;
};

/// Malformed input file; carries the 1-based offending line.
class parse_error : public error {
public:
    parse_error(const std::string& msg, std::size_t line)
        : error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class io_error : public error {
public:
    using error::error;
};

// ---------------------------------------------------------------------------
// Longitudinal data
// ---------------------------------------------------------------------------

/// One individual's timestamped measurements. Times are real hours; the model
/// is 24-hour periodic, so values outside [0, 24) are legal and used as-is.
struct SubjectSeries {
    std::string subject_id;
    std::vector<double> times;
    std::vector<double> values;

    std::size_t size() const { return times.size(); }

    void validate() const {
        if (times.size() != values.size())
            throw invalid_input("subject '" + subject_id + "': times and values differ in length");
        if (times.empty())
            throw invalid_input("subject '" + subject_id + "': empty series");
        for (std::size_t j = 0; j < times.size(); ++j)
            if (!std::isfinite(times[j]) || !std::isfinite(values[j]))
                throw invalid_input("subject '" + subject_id + "': non-finite entry at index " +
                                    std::to_string(j));
    }
};

/// A named cohort of subjects.
struct CohortData {
    std::string cohort_id;
    std::vector<SubjectSeries> subjects;

    std::size_t size() const { return subjects.size(); }

    void validate() const {
        if (subjects.empty())
            throw invalid_input("cohort '" + cohort_id + "': no subjects");
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            subjects[i].validate();
            for (std::size_t j = i + 1; j < subjects.size(); ++j)
                if (subjects[i].subject_id == subjects[j].subject_id)
                    throw invalid_input("cohort '" + cohort_id + "': duplicate subject id '" +
                                        subjects[i].subject_id + "'");
        }
    }
};

} // namespace circadia
