#pragma once

#include "sfcausal/common.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sfcausal {

/// Immutable-after-load columnar table of doubles with named columns.
///
/// CSV schema: a header row is required; reserved role names are
/// `y, d, t, cohort, z, id, w1..wm, x1..xk`. The never-treated cohort is an
/// empty cell or `inf` and is stored as +infinity. Empty cells in other columns
/// load as NaN and are rejected by the estimators that use the column.
class Dataset {
public:
    Dataset() = default;

    /// Appends a column. Throws InputError on a duplicate name or a length mismatch.
    void add_column(std::string name, std::vector<double> values);

    bool has(std::string_view name) const;
    /// Throws SchemaError naming the column when it is absent.
    const std::vector<double>& column(std::string_view name) const;
    Vector column_vector(std::string_view name) const;

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return names_.size(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    /// Column names with the given prefix followed by digits, in index order (x1, x2, ..., x10).
    std::vector<std::string> role_columns(std::string_view prefix) const;

    Dataset select_rows(std::span<const std::size_t> rows) const;
    Dataset permuted(std::span<const std::size_t> order) const { return select_rows(order); }

    /// Row-wise concatenation; both datasets must have identical column names.
    static Dataset concat(const Dataset& a, const Dataset& b);

    static Dataset read_csv(std::istream& in);
    static Dataset read_csv(const std::filesystem::path& path);
    void write_csv(std::ostream& out) const;
    void write_csv(const std::filesystem::path& path) const;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<double>> columns_;
    std::size_t rows_ = 0;
};

/// Builds an n x k matrix from named columns (optionally with a leading column of ones).
Matrix design_matrix(const Dataset& data, std::span<const std::string> cols, bool intercept);

/// Permutation sorting rows lexicographically by the given columns. Fitting on the
/// canonical order makes estimates independent of the input row order, bit for bit.
std::vector<std::size_t> canonical_row_order(const Matrix& rows_by_cols);

/// Formats a double with the shortest representation that round-trips.
std::string format_double(double value);

}  // namespace sfcausal
