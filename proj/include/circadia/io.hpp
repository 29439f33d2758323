#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "circadia/core.hpp"
#include "circadia/inference.hpp"
#include "circadia/select.hpp"
#include "circadia/simulate.hpp"

namespace circadia {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim ASCII whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

inline double parse_number(const std::string& text, const char* column, std::size_t line_no) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw parse_error(std::string("non-numeric ") + column + " value '" + text + "'", line_no);
    }
    if (pos != text.size() || !std::isfinite(v))
        throw parse_error(std::string("non-numeric ") + column + " value '" + text + "'", line_no);
    return v;
}

} // namespace detail

/// Read long-format CSV with header cohort,subject,time,value (any column
/// order, extra columns ignored). Rows are grouped by (cohort, subject) in
/// first-appearance order; row order within a subject is preserved.
inline std::vector<CohortData> load_cohorts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw parse_error("empty file", 0);
    ++line_no;
    const auto header = detail::split_csv_line(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
    for (const char* required : {"cohort", "subject", "time", "value"})
        if (!col.count(required))
            throw parse_error(std::string("missing required column '") + required + "'", 1);

    std::vector<CohortData> cohorts;
    std::map<std::string, std::size_t> cohort_index;
    std::map<std::pair<std::string, std::string>, std::size_t> subject_index;
    bool any_row = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() < header.size())
            throw parse_error("expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()),
                              line_no);
        const std::string& cohort_id = fields[col["cohort"]];
        const std::string& subject_id = fields[col["subject"]];
        if (cohort_id.empty() || subject_id.empty())
            throw parse_error("empty cohort or subject id", line_no);
        const double t = detail::parse_number(fields[col["time"]], "time", line_no);
        const double v = detail::parse_number(fields[col["value"]], "value", line_no);

        auto [cit, cnew] = cohort_index.try_emplace(cohort_id, cohorts.size());
        if (cnew) cohorts.push_back(CohortData{cohort_id, {}});
        CohortData& cohort = cohorts[cit->second];

        auto [sit, snew] =
            subject_index.try_emplace({cohort_id, subject_id}, cohort.subjects.size());
        if (snew) cohort.subjects.push_back(SubjectSeries{subject_id, {}, {}});
        SubjectSeries& subject = cohort.subjects[sit->second];

        for (double existing : subject.times)
            if (existing == t)
                throw parse_error("duplicate time " + fields[col["time"]] + " for subject '" +
                                      subject_id + "'",
                                  line_no);
        subject.times.push_back(t);
        subject.values.push_back(v);
        any_row = true;
    }
    if (!any_row) throw parse_error("no data rows", line_no);
    for (auto& c : cohorts) c.validate();
    return cohorts;
}

/// FNV-1a 64-bit digest of a file's bytes, as fixed-width hex.
inline std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Everything a command run wants to persist: parameters per cohort/method,
/// test results, a selection trace, and the provenance that makes the run
/// reproducible. Serialized both as a readable table and as JSON.
struct AnalysisReport {
    std::string command;
    json provenance = json::object();
    json body = json::object();
    std::string text;

    void write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "report.txt", std::ios::binary);
            if (!out) throw io_error("cannot write report.txt under '" + dir.string() + "'");
            out << text;
        }
        json doc = json::object();
        doc["command"] = command;
        doc["provenance"] = provenance;
        doc["results"] = body;
        std::ofstream out(dir / "report.json", std::ios::binary);
        if (!out) throw io_error("cannot write report.json under '" + dir.string() + "'");
        out << doc.dump(2) << "\n";
    }
};

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace detail

inline json test_result_json(const TestResult& r) {
    json j = json::object();
    j["test"] = r.test.name();
    j["method"] = method_name(r.method);
    j["statistic"] = r.statistic;
    j["df"] = r.q;
    j["p_asymptotic"] = r.p_asymptotic;
    if (r.p_bootstrap) {
        j["p_bootstrap"] = *r.p_bootstrap;
        j["replicates"] = *r.replicates;
        j["failed_replicates"] = r.failed_replicates;
    }
    return j;
}

inline json sts_json(const StsEstimate& est) {
    json j = json::object();
    j["method"] = "sts";
    j["order"] = est.order;
    j["cohort_size"] = est.cohort_size;
    j["coefficients"] = std::vector<double>(est.alpha.data(), est.alpha.data() + est.alpha.size());
    const auto d = detail::derive_population(est);
    j["midline"] = d.midline;
    j["amplitudes"] = d.amplitudes;
    j["phases"] = d.phases;
    return j;
}

inline json rts_json(const RtsEstimate& est) {
    json j = json::object();
    j["method"] = "rts";
    j["order"] = est.order;
    j["cohort_size"] = est.cohort_size;
    j["coefficients"] = std::vector<double>(est.beta_tilde.data(),
                                            est.beta_tilde.data() + est.beta_tilde.size());
    const auto d = detail::derive_population(est);
    j["midline"] = d.midline;
    j["amplitudes"] = d.amplitudes;
    j["phases"] = d.phases;
    return j;
}

inline json selection_json(const OrderSelection& sel) {
    json j = json::object();
    j["method"] = method_name(sel.method);
    j["selected_order"] = sel.selected_order;
    j["replicates"] = sel.replicates;
    j["truncated"] = sel.truncated;
    json steps = json::array();
    for (const auto& s : sel.steps)
        steps.push_back({{"harmonic", s.harmonic}, {"p", s.p_value}, {"retained", s.retained}});
    j["steps"] = steps;
    return j;
}

// ---------------------------------------------------------------------------
// Curve export
// ---------------------------------------------------------------------------

/// Write one delimited file per curve on the fixed 1001-point threshold grid
/// {0, 0.001, ..., 1}: columns threshold,value,band_lo,band_hi.
inline std::vector<std::string> export_curves(
    const std::vector<std::pair<std::string, const PowerCurve*>>& curves,
    const std::filesystem::path& dir) {
    if (curves.empty()) throw invalid_input("export_curves: no curves");
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;
    for (const auto& [name, curve] : curves) {
        const std::filesystem::path path = dir / (name + ".csv");
        std::ofstream out(path, std::ios::binary);
        if (!out) throw io_error("cannot write '" + path.string() + "'");
        out << "threshold,value,band_lo,band_hi\n";
        char buf[96];
        for (int i = 0; i <= 1000; ++i) {
            const double rho = static_cast<double>(i) / 1000.0;
            std::snprintf(buf, sizeof(buf), "%.3f,%.9g,%.9g,%.9g\n", rho, curve->value_at(rho),
                          curve->lower_at(rho), curve->upper_at(rho));
            out << buf;
        }
        written.push_back(path.string());
    }
    return written;
}

inline std::string curve_file_name(const CurveSummary& cs) {
    std::string test;
    switch (cs.test) {
    case GSpec::Kind::zero_amplitudes: test = "zero_amplitudes"; break;
    case GSpec::Kind::equal_midlines: test = "equal_midlines"; break;
    case GSpec::Kind::equal_rhythms: test = "equal_rhythms"; break;
    case GSpec::Kind::single_amplitude: test = "single_amplitude"; break;
    }
    const std::string kind = cs.curve.kind == CurveKind::power ? "power" : "type1";
    return kind + "_" + test + "_dataset" + std::to_string(cs.dataset) + "_" +
           method_name(cs.method);
}

/// Long-format per-trial record table.
inline void write_trials_csv(const std::vector<TrialRecord>& records,
                             const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out << "trial,dataset,method,quantity,harmonic,value\n";
    char buf[128];
    auto row = [&](int trial, int dataset, Method m, const char* quantity, int harmonic,
                   double value) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%s,%s,%d,%.9g\n", trial, dataset, method_name(m),
                      quantity, harmonic, value);
        out << buf;
    };
    for (const auto& rec : records)
        for (const auto& cell : rec.cells) {
            if (cell.midline_error)
                row(rec.trial, cell.dataset, cell.method, "midline_error", 0, *cell.midline_error);
            for (std::size_t k = 0; k < cell.amplitude_error.size(); ++k)
                row(rec.trial, cell.dataset, cell.method, "amplitude_error",
                    static_cast<int>(k + 1), cell.amplitude_error[k]);
            for (std::size_t k = 0; k < cell.phase_error.size(); ++k)
                row(rec.trial, cell.dataset, cell.method, "phase_error", static_cast<int>(k + 1),
                    cell.phase_error[k]);
            if (cell.p_zero_amplitudes)
                row(rec.trial, cell.dataset, cell.method, "p_zero_amplitudes", 0,
                    *cell.p_zero_amplitudes);
            if (cell.p_equal_midlines)
                row(rec.trial, cell.dataset, cell.method, "p_equal_midlines", 0,
                    *cell.p_equal_midlines);
            if (cell.p_equal_rhythms)
                row(rec.trial, cell.dataset, cell.method, "p_equal_rhythms", 0,
                    *cell.p_equal_rhythms);
        }
}

} // namespace circadia
