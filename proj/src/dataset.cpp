#include "sfcausal/dataset.hpp"

#include "sfcausal/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace sfcausal {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

double parse_cell(std::string_view cell, bool never_treated_column, std::size_t line_no) {
    if (cell.empty()) {
        return never_treated_column ? std::numeric_limits<double>::infinity()
                                    : std::numeric_limits<double>::quiet_NaN();
    }
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw InputError("CSV line " + std::to_string(line_no) + ": cannot parse '" +
                         std::string(cell) + "' as a number");
    }
    return value;
}

bool is_role_index(std::string_view name, std::string_view prefix) {
    if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix) return false;
    return std::all_of(name.begin() + static_cast<long>(prefix.size()), name.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

void Dataset::add_column(std::string name, std::vector<double> values) {
    if (has(name)) throw InputError("duplicate column '" + name + "'");
    if (!names_.empty() && values.size() != rows_) {
        throw InputError("column '" + name + "' has " + std::to_string(values.size()) +
                         " rows, expected " + std::to_string(rows_));
    }
    rows_ = values.size();
    names_.push_back(std::move(name));
    columns_.push_back(std::move(values));
}

bool Dataset::has(std::string_view name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const std::vector<double>& Dataset::column(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) {
        throw SchemaError(std::string(name), "missing column '" + std::string(name) + "'");
    }
    return columns_[static_cast<std::size_t>(it - names_.begin())];
}

Vector Dataset::column_vector(std::string_view name) const {
    const auto& c = column(name);
    return Eigen::Map<const Vector>(c.data(), static_cast<Eigen::Index>(c.size()));
}

std::vector<std::string> Dataset::role_columns(std::string_view prefix) const {
    std::vector<std::string> out;
    for (const auto& n : names_) {
        if (is_role_index(n, prefix)) out.push_back(n);
    }
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
        return std::stoul(a.substr(prefix.size())) < std::stoul(b.substr(prefix.size()));
    });
    return out;
}

Dataset Dataset::select_rows(std::span<const std::size_t> rows) const {
    Dataset out;
    for (std::size_t c = 0; c < names_.size(); ++c) {
        std::vector<double> values;
        values.reserve(rows.size());
        for (const auto r : rows) {
            if (r >= rows_) throw InputError("row index out of range");
            values.push_back(columns_[c][r]);
        }
        out.add_column(names_[c], std::move(values));
    }
    out.rows_ = rows.size();
    return out;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
    if (a.names_ != b.names_) throw InputError("concat: column names differ");
    Dataset out;
    for (std::size_t c = 0; c < a.names_.size(); ++c) {
        std::vector<double> values = a.columns_[c];
        values.insert(values.end(), b.columns_[c].begin(), b.columns_[c].end());
        out.add_column(a.names_[c], std::move(values));
    }
    out.rows_ = a.rows_ + b.rows_;
    return out;
}

Dataset Dataset::read_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw InputError("CSV input has no header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    for (const auto cell : split_commas(line)) {
        if (cell.empty()) throw InputError("CSV header has an empty column name");
        header.emplace_back(cell);
    }
    std::vector<std::vector<double>> cols(header.size());
    std::vector<bool> never_treated(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) never_treated[c] = header[c] == "cohort";

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw InputError("CSV line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " fields, found " +
                             std::to_string(cells.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            cols[c].push_back(parse_cell(cells[c], never_treated[c], line_no));
        }
    }
    Dataset out;
    for (std::size_t c = 0; c < header.size(); ++c) out.add_column(header[c], std::move(cols[c]));
    return out;
}

Dataset Dataset::read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return read_csv(in);
}

void Dataset::write_csv(std::ostream& out) const {
    for (std::size_t c = 0; c < names_.size(); ++c) {
        if (c) out << ',';
        out << names_[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < names_.size(); ++c) {
            if (c) out << ',';
            const double v = columns_[c][r];
            if (!std::isnan(v)) out << format_double(v);
        }
        out << '\n';
    }
}

void Dataset::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    write_csv(out);
}

Matrix design_matrix(const Dataset& data, std::span<const std::string> cols, bool intercept) {
    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto offset = intercept ? 1 : 0;
    Matrix X(n, static_cast<Eigen::Index>(cols.size()) + offset);
    if (intercept) X.col(0).setOnes();
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto& c = data.column(cols[j]);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(c[static_cast<std::size_t>(i)])) {
                throw InputError("column '" + cols[j] + "' has a missing or non-finite value at row " +
                                 std::to_string(i + 1));
            }
            X(i, static_cast<Eigen::Index>(j) + offset) = c[static_cast<std::size_t>(i)];
        }
    }
    return X;
}

std::vector<std::size_t> canonical_row_order(const Matrix& rows_by_cols) {
    std::vector<std::size_t> order(static_cast<std::size_t>(rows_by_cols.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto k = rows_by_cols.cols();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double va = rows_by_cols(static_cast<Eigen::Index>(a), j);
            const double vb = rows_by_cols(static_cast<Eigen::Index>(b), j);
            if (va < vb) return true;
            if (vb < va) return false;
        }
        return false;
    });
    return order;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

}  // namespace sfcausal
