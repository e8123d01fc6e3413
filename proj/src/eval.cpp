#include "eefit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "eefit/errors.hpp"
#include "eefit/mathutil.hpp"
#include "eefit/rng.hpp"

namespace eefit {

ResidualPanel pearson_residuals(const FittedModel& fitted, const Dataset& data, bool no_sqrt) {
    const MeanPanel mp = conditional_mean(fitted.spec, fitted.coeffs, data);
    const ParamLayout layout = build_layout(fitted.spec, data);
    const int T = data.counts.T(), m = data.counts.m();
    ResidualPanel out;
    out.first_valid = mp.first_valid;
    out.r = Eigen::MatrixXd::Constant(T, m, std::numeric_limits<double>::quiet_NaN());
    for (int i = 0; i < m; ++i) {
        const double psi =
            std::exp(fitted.coeffs.values(layout.log_psi_base + (layout.log_psi_count == 1 ? 0 : i)));
        for (int t = mp.first_valid; t < T; ++t) {
            const double lam = mp.lambda(t, i);
            const double v = lam + psi * lam * lam;
            out.r(t, i) = (data.counts.counts(t, i) - lam) / (no_sqrt ? v : std::sqrt(v));
        }
    }
    return out;
}

AcfResult residual_acf(const ResidualPanel& resid, int max_lag) {
    const int T = static_cast<int>(resid.r.rows());
    const int m = static_cast<int>(resid.r.cols());
    const int n = T - resid.first_valid;
    if (max_lag < 1) throw ConfigError("max_lag must be >= 1");
    if (max_lag >= n / 4) throw ConfigError("max_lag must be below a quarter of the residual length");

    AcfResult out;
    out.n = n;
    out.band = 1.96 / std::sqrt(static_cast<double>(n));
    out.acf.resize(max_lag + 1, m);
    out.crossings.resize(m);
    for (int i = 0; i < m; ++i) {
        const Eigen::VectorXd x = resid.r.col(i).tail(n);
        const double mu = x.mean();
        const double denom = (x.array() - mu).square().sum();
        out.acf(0, i) = 1.0;
        for (int k = 1; k <= max_lag; ++k) {
            double num = 0.0;
            for (int t = k; t < n; ++t) num += (x(t) - mu) * (x(t - k) - mu);
            out.acf(k, i) = num / denom;
            if (std::abs(out.acf(k, i)) > out.band) out.crossings[i].push_back(k);
        }
    }
    return out;
}

double permutation_test(const std::vector<double>& a, const std::vector<double>& b, int n_perm,
                        std::uint64_t seed) {
    if (a.size() != b.size() || a.empty()) throw DataError("paired series must have equal nonzero length");
    if (n_perm < 999) throw ConfigError("need at least 999 permutations");
    const int n = static_cast<int>(a.size());
    std::vector<double> d(n);
    bool all_zero = true;
    for (int i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
        if (d[i] != 0.0) all_zero = false;
    }
    if (all_zero) return 1.0;
    const double obs = std::abs(mean(d));

    std::vector<char> hit(n_perm, 0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n_perm; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += rng.uniform01() < 0.5 ? d[i] : -d[i];
        if (std::abs(s / n) >= obs) hit[r] = 1;
    }
    long count = 0;
    for (char h : hit) count += h;
    return (1.0 + count) / (1.0 + n_perm);
}

ScoreFile read_scores_csv(const std::string& path, const std::string& label) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scores file: " + path);
    ScoreFile out;
    out.label = label;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty scores file: " + path);
    while (line.size() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line != "origin_week,horizon,score,mc_se,n_paths,seed")
        throw DataError("unexpected scores header in " + path + ": " + line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        while (line.size() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 6)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                            std::to_string(fields.size()));
        ScoreRow row;
        row.origin_week = fields[0];
        try {
            row.horizon = std::stoi(fields[1]);
            row.score = std::stod(fields[2]);
            row.mc_se = std::stod(fields[3]);
            row.n_paths = std::stoi(fields[4]);
            row.seed = std::stoull(fields[5]);
        } catch (const std::exception&) {
            throw DataError(path + ":" + std::to_string(lineno) + ": malformed numeric field");
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

namespace {

// (horizon -> ordered (origin_week, score)) per file.
std::map<int, std::vector<std::pair<std::string, double>>> by_horizon(const ScoreFile& f) {
    std::map<int, std::vector<std::pair<std::string, double>>> out;
    for (const auto& row : f.rows) out[row.horizon].push_back({row.origin_week, row.score});
    return out;
}

} // namespace

ComparisonReport compare_models(const std::vector<ScoreFile>& files, const std::string& baseline_label,
                                int n_perm, std::uint64_t seed) {
    if (files.size() < 2) throw ConfigError("need at least two score files to compare");
    const ScoreFile* base = nullptr;
    for (const auto& f : files)
        if (f.label == baseline_label) base = &f;
    if (!base) throw ConfigError("baseline label not found: " + baseline_label);

    ComparisonReport report;
    report.baseline = baseline_label;
    const auto base_h = by_horizon(*base);

    for (const auto& f : files) {
        if (&f == base) continue;
        const auto fh = by_horizon(f);
        for (const auto& [h, base_rows] : base_h) {
            const auto it = fh.find(h);
            if (it == fh.end())
                throw DataError("model " + f.label + " lacks horizon " + std::to_string(h) + " rows");
            const auto& rows = it->second;
            if (rows.size() != base_rows.size()) {
                throw DataError("model " + f.label + ", horizon " + std::to_string(h) + ": " +
                                std::to_string(rows.size()) + " rows vs baseline " +
                                std::to_string(base_rows.size()));
            }
            std::vector<double> a(rows.size()), b(rows.size());
            std::string misaligned;
            for (size_t k = 0; k < rows.size(); ++k) {
                if (rows[k].first != base_rows[k].first)
                    misaligned += (misaligned.empty() ? "" : ", ") + rows[k].first + "!=" + base_rows[k].first;
                a[k] = rows[k].second;
                b[k] = base_rows[k].second;
            }
            if (!misaligned.empty())
                throw DataError("model " + f.label + ", horizon " + std::to_string(h) +
                                ": origins misaligned with baseline: " + misaligned);
            ComparisonRow row;
            row.label = f.label;
            row.horizon = h;
            row.n = static_cast<int>(rows.size());
            row.mean_score = mean(a);
            row.mean_diff = row.mean_score - mean(b);
            row.p_value = permutation_test(a, b, n_perm, derive_seed(seed, static_cast<std::uint64_t>(h)));
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void write_comparison_csv(const ComparisonReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write comparison file: " + path);
    out << "model,baseline,horizon,mean_score,mean_diff,p_value,n\n";
    char buf[64];
    for (const auto& row : report.rows) {
        out << row.label << ',' << report.baseline << ',' << row.horizon << ',';
        std::snprintf(buf, sizeof(buf), "%.10g", row.mean_score);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.10g", row.mean_diff);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.6g", row.p_value);
        out << buf << ',' << row.n << '\n';
    }
}

std::string format_comparison_table(const ComparisonReport& report) {
    std::ostringstream os;
    os << "baseline: " << report.baseline << "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-20s %8s %12s %12s %10s %6s\n", "model", "horizon", "mean_score",
                  "mean_diff", "p_value", "n");
    os << buf;
    for (const auto& row : report.rows) {
        std::snprintf(buf, sizeof(buf), "%-20s %8d %12.4f %+12.4f %10.4g %6d\n", row.label.c_str(), row.horizon,
                      row.mean_score, row.mean_diff, row.p_value, row.n);
        os << buf;
    }
    return os.str();
}

} // namespace eefit
