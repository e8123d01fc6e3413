#include "eefit/data.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace eefit {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::string> read_lines(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string(what) + " file not found: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

long parse_count(const std::string& tok, int line_no) {
    if (tok.empty())
        throw DataError("missing count at line " + std::to_string(line_no));
    std::size_t pos = 0;
    long v = 0;
    try {
        v = std::stol(tok, &pos);
    } catch (const std::exception&) {
        throw DataError("non-integer count '" + tok + "' at line " + std::to_string(line_no));
    }
    if (pos != tok.size())
        throw DataError("non-integer count '" + tok + "' at line " + std::to_string(line_no));
    if (v < 0)
        throw DataError("negative count '" + tok + "' at line " + std::to_string(line_no));
    return v;
}

double parse_real(const std::string& tok, int line_no, const char* what) {
    std::size_t pos = 0;
    double v = 0;
    try {
        v = std::stod(tok, &pos);
    } catch (const std::exception&) {
        throw DataError(std::string("malformed ") + what + " '" + tok + "' at line " + std::to_string(line_no));
    }
    if (pos != tok.size() || !std::isfinite(v))
        throw DataError(std::string("malformed ") + what + " '" + tok + "' at line " + std::to_string(line_no));
    return v;
}

bool valid_week_succession(const IsoWeek& a, const IsoWeek& b) {
    if (b.year == a.year && b.week == a.week + 1) return true;
    if (b.year == a.year + 1 && b.week == 1 && a.week >= 52) return true;
    return false;
}

} // namespace

IsoWeek parse_iso_week(const std::string& label) {
    // YYYY-Www
    if (label.size() != 8 || label[4] != '-' || label[5] != 'W')
        throw DataError("malformed week label '" + label + "' (expected YYYY-Www)");
    for (int i : {0, 1, 2, 3, 6, 7})
        if (!std::isdigit(static_cast<unsigned char>(label[i])))
            throw DataError("malformed week label '" + label + "' (expected YYYY-Www)");
    IsoWeek w;
    w.year = std::stoi(label.substr(0, 4));
    w.week = std::stoi(label.substr(6, 2));
    if (w.week < 1 || w.week > 53)
        throw DataError("invalid calendar week in label '" + label + "'");
    return w;
}

std::string format_iso_week(const IsoWeek& w) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-W%02d", w.year, w.week);
    return buf;
}

CountsPanel CountsPanel::head(int t) const {
    if (t < 2 || t > T()) throw DataError("head(t) requires 2 <= t <= T");
    CountsPanel out;
    out.counts = counts.topRows(t);
    out.week_labels.assign(week_labels.begin(), week_labels.begin() + t);
    out.calendar_week.assign(calendar_week.begin(), calendar_week.begin() + t);
    out.unit_names = unit_names;
    return out;
}

void CountsPanel::validate() const {
    if (T() < 2) throw DataError("panel needs at least two weeks");
    if (m() < 1) throw DataError("panel needs at least one unit");
    if (static_cast<int>(week_labels.size()) != T() || static_cast<int>(calendar_week.size()) != T())
        throw DataError("panel metadata length mismatch");
    if (static_cast<int>(unit_names.size()) != m())
        throw DataError("unit name count mismatch");
    for (int t = 0; t < T(); ++t)
        for (int i = 0; i < m(); ++i)
            if (counts(t, i) < 0) throw DataError("negative count in panel");
    IsoWeek prev = parse_iso_week(week_labels[0]);
    if (calendar_week[0] != prev.week) throw DataError("calendar week does not match label");
    for (int t = 1; t < T(); ++t) {
        IsoWeek cur = parse_iso_week(week_labels[t]);
        if (calendar_week[t] != cur.week) throw DataError("calendar week does not match label");
        if (!valid_week_succession(prev, cur))
            throw DataError("weeks not in weekly succession at '" + week_labels[t] + "'");
        prev = cur;
    }
}

void NeighbourhoodMatrix::validate() const {
    const auto n = order.rows();
    if (n != order.cols()) throw DataError("neighbourhood matrix not square");
    if (static_cast<long>(unit_names.size()) != n) throw DataError("neighbourhood label count mismatch");
    for (long i = 0; i < n; ++i) {
        if (order(i, i) != 0) throw DataError("nonzero diagonal in neighbourhood matrix");
        for (long j = 0; j < n; ++j) {
            if (order(i, j) < 0) throw DataError("negative path distance");
            if (order(i, j) != order(j, i)) throw DataError("asymmetric neighbourhood matrix");
            if (i != j && order(i, j) == 0) throw DataError("zero off-diagonal path distance (disconnected labels?)");
        }
    }
}

void PopulationShares::validate() const {
    if (share.size() != static_cast<long>(unit_names.size()))
        throw DataError("population share label count mismatch");
    double total = 0.0;
    for (long i = 0; i < share.size(); ++i) {
        if (!(share(i) > 0.0)) throw DataError("population share must be positive");
        total += share(i);
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw DataError("population shares must sum to 1");
}

bool CovariateTable::has(const std::string& name) const {
    for (const auto& n : names)
        if (n == name) return true;
    return false;
}

Eigen::VectorXd CovariateTable::column(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k)
        if (names[k] == name) return columns.col(static_cast<long>(k));
    throw ConfigError("unknown covariate '" + name + "'");
}

CovariateTable CovariateTable::head(int t) const {
    CovariateTable out;
    out.names = names;
    out.columns = columns.topRows(t);
    return out;
}

Dataset Dataset::head(int t) const {
    Dataset out;
    out.counts = counts.head(t);
    out.neighbourhood = neighbourhood;
    out.populations = populations;
    out.covariates = covariates.head(t);
    return out;
}

CountsPanel load_counts(const std::string& path) {
    auto lines = read_lines(path, "counts");
    if (lines.size() < 3) throw DataError("counts file needs a header and at least two rows: " + path);
    auto header = split_csv_line(lines[0]);
    if (header.size() < 2 || header[0] != "week")
        throw DataError("counts header must be 'week,<unit>,...': " + path);

    CountsPanel panel;
    panel.unit_names.assign(header.begin() + 1, header.end());
    const int m = static_cast<int>(panel.unit_names.size());
    const int T = static_cast<int>(lines.size()) - 1;
    panel.counts.resize(T, m);
    panel.week_labels.resize(T);
    panel.calendar_week.resize(T);
    for (int t = 0; t < T; ++t) {
        auto fields = split_csv_line(lines[t + 1]);
        if (static_cast<int>(fields.size()) != m + 1)
            throw DataError("ragged row at line " + std::to_string(t + 2) + " in " + path);
        IsoWeek w = parse_iso_week(fields[0]);
        panel.week_labels[t] = fields[0];
        panel.calendar_week[t] = w.week;
        for (int i = 0; i < m; ++i)
            panel.counts(t, i) = static_cast<int>(parse_count(fields[i + 1], t + 2));
    }
    panel.validate();
    return panel;
}

void write_counts(const CountsPanel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write counts file: " + path);
    out << "week";
    for (const auto& u : panel.unit_names) out << ',' << u;
    out << '\n';
    for (int t = 0; t < panel.T(); ++t) {
        out << panel.week_labels[t];
        for (int i = 0; i < panel.m(); ++i) out << ',' << panel.counts(t, i);
        out << '\n';
    }
}

NeighbourhoodMatrix load_neighbourhood(const std::string& path, const std::vector<std::string>& unit_names) {
    auto lines = read_lines(path, "neighbourhood");
    const int m = static_cast<int>(unit_names.size());
    if (static_cast<int>(lines.size()) != m + 1)
        throw DataError("neighbourhood file must have one row per unit: " + path);
    auto header = split_csv_line(lines[0]);
    if (static_cast<int>(header.size()) != m + 1)
        throw DataError("neighbourhood header width mismatch: " + path);
    for (int i = 0; i < m; ++i)
        if (header[i + 1] != unit_names[i])
            throw DataError("neighbourhood unit label mismatch: got '" + header[i + 1] + "', expected '" +
                            unit_names[i] + "'");
    NeighbourhoodMatrix nb;
    nb.unit_names = unit_names;
    nb.order.resize(m, m);
    for (int j = 0; j < m; ++j) {
        auto fields = split_csv_line(lines[j + 1]);
        if (static_cast<int>(fields.size()) != m + 1)
            throw DataError("ragged neighbourhood row at line " + std::to_string(j + 2));
        if (fields[0] != unit_names[j])
            throw DataError("neighbourhood row label mismatch: got '" + fields[0] + "', expected '" + unit_names[j] +
                            "'");
        for (int i = 0; i < m; ++i)
            nb.order(j, i) = static_cast<int>(parse_count(fields[i + 1], j + 2));
    }
    nb.validate();
    return nb;
}

PopulationShares load_populations(const std::string& path, const std::vector<std::string>& unit_names) {
    auto lines = read_lines(path, "populations");
    const int m = static_cast<int>(unit_names.size());
    if (static_cast<int>(lines.size()) != m + 1)
        throw DataError("populations file must have one row per unit: " + path);
    auto header = split_csv_line(lines[0]);
    if (header.size() != 2 || header[0] != "unit" || header[1] != "share")
        throw DataError("populations header must be 'unit,share': " + path);
    PopulationShares pop;
    pop.unit_names = unit_names;
    pop.share.resize(m);
    for (int i = 0; i < m; ++i) {
        auto fields = split_csv_line(lines[i + 1]);
        if (fields.size() != 2) throw DataError("ragged populations row at line " + std::to_string(i + 2));
        if (fields[0] != unit_names[i])
            throw DataError("populations unit label mismatch: got '" + fields[0] + "', expected '" + unit_names[i] +
                            "'");
        pop.share(i) = parse_real(fields[1], i + 2, "population share");
    }
    pop.validate();
    return pop;
}

Eigen::VectorXd christmas_indicator(const CountsPanel& panel) {
    Eigen::VectorXd x(panel.T());
    for (int t = 0; t < panel.T(); ++t) {
        int w = panel.calendar_week[t];
        x(t) = (w == 52 || w == 1) ? 1.0 : 0.0;
    }
    return x;
}

CovariateTable build_covariates(const CountsPanel& panel, const std::string& covariates_path) {
    CovariateTable table;
    const int T = panel.T();
    std::vector<Eigen::VectorXd> cols;

    table.names.push_back("christmas");
    cols.push_back(christmas_indicator(panel));

    Eigen::VectorXd trend(T);
    for (int t = 0; t < T; ++t) trend(t) = static_cast<double>(t + 1) / static_cast<double>(T);
    table.names.push_back("trend");
    cols.push_back(trend);

    if (!covariates_path.empty()) {
        auto lines = read_lines(covariates_path, "covariates");
        if (static_cast<int>(lines.size()) != T + 1)
            throw DataError("covariates file must align with the counts panel (one row per week)");
        auto header = split_csv_line(lines[0]);
        if (header.size() < 2 || header[0] != "week")
            throw DataError("covariates header must be 'week,<name>,...'");
        const int k = static_cast<int>(header.size()) - 1;
        for (int c = 0; c < k; ++c) {
            const std::string& name = header[c + 1];
            for (const auto& existing : table.names)
                if (existing == name) throw DataError("covariate name '" + name + "' is reserved or duplicated");
            table.names.push_back(name);
        }
        Eigen::MatrixXd file_cols(T, k);
        for (int t = 0; t < T; ++t) {
            auto fields = split_csv_line(lines[t + 1]);
            if (static_cast<int>(fields.size()) != k + 1)
                throw DataError("ragged covariates row at line " + std::to_string(t + 2));
            if (fields[0] != panel.week_labels[t])
                throw DataError("covariates week '" + fields[0] + "' does not match counts week '" +
                                panel.week_labels[t] + "'");
            for (int c = 0; c < k; ++c) file_cols(t, c) = parse_real(fields[c + 1], t + 2, "covariate");
        }
        for (int c = 0; c < k; ++c) cols.push_back(file_cols.col(c));
    }

    table.columns.resize(T, static_cast<long>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) table.columns.col(static_cast<long>(c)) = cols[c];
    return table;
}

} // namespace eefit
