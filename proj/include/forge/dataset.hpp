#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

enum class ColumnKind { numeric, categorical };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view s);

// Canonical target levels after encoding.
inline constexpr std::string_view kGood = "good";
inline constexpr std::string_view kBad = "bad";

// One typed column. Cells are either numbers or labels depending on kind;
// every cell carries its own missing flag.
class Column {
public:
    static Column numeric(std::string name, std::vector<double> values,
                          std::vector<std::uint8_t> missing = {});
    static Column categorical(std::string name, std::vector<std::string> values,
                              std::vector<std::uint8_t> missing = {},
                              std::vector<std::string> level_order = {});

    const std::string& name() const { return name_; }
    ColumnKind kind() const { return kind_; }
    bool is_numeric() const { return kind_ == ColumnKind::numeric; }
    std::size_t size() const { return missing_.size(); }

    bool is_missing(std::size_t row) const { return missing_[row] != 0; }
    double number(std::size_t row) const { return numbers_[row]; }
    const std::string& label(std::size_t row) const { return labels_[row]; }

    std::span<const double> numbers() const { return numbers_; }
    std::span<const std::string> labels() const { return labels_; }
    std::span<const std::uint8_t> missing() const { return missing_; }

    // Observed levels of a categorical column: declared order first, then
    // first appearance for anything undeclared.
    const std::vector<std::string>& levels() const { return levels_; }

    std::size_t missing_count() const;
    Column renamed(std::string name) const;
    Column take(std::span<const std::size_t> rows) const;

    // Text form of a cell as written to CSV; empty for missing.
    std::string cell_text(std::size_t row) const;

    bool operator==(const Column&) const = default;

private:
    std::string name_;
    ColumnKind kind_ = ColumnKind::numeric;
    std::vector<double> numbers_;
    std::vector<std::string> labels_;
    std::vector<std::uint8_t> missing_;
    std::vector<std::string> levels_;
};

struct TargetSpec {
    std::string column;
    std::string bad_level;
    std::string good_level;

    bool operator==(const TargetSpec&) const = default;
};

struct SplitSpec {
    double ratio = 0.7;
    std::uint64_t seed = 42;
    bool stratify = true;
};

// Immutable column-oriented table with an optional encoded binary target.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Column> columns, std::optional<TargetSpec> target = std::nullopt);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return columns_.size(); }
    const std::vector<Column>& columns() const { return columns_; }

    bool has_column(std::string_view name) const;
    const Column& column(std::string_view name) const;
    std::optional<std::size_t> index_of(std::string_view name) const;

    const std::optional<TargetSpec>& target() const { return target_; }
    bool has_target() const { return target_.has_value(); }
    const std::string& target_name() const;
    // 1 for bad, 0 for good. Requires an encoded target.
    std::vector<int> bad_flags() const;
    std::size_t bad_count() const;

    // Names of all non-target columns, in column order.
    std::vector<std::string> predictors() const;

    Dataset take_rows(std::span<const std::size_t> rows) const;
    Dataset select(std::span<const std::string> names, bool keep_target = true) const;
    Dataset with_column(Column column) const;  // appends or replaces by name
    Dataset without_column(std::string_view name) const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<Column> columns_;
    std::size_t n_rows_ = 0;
    std::optional<TargetSpec> target_;
};

// Per-column overrides for CSV ingestion.
struct ColumnSchema {
    std::optional<ColumnKind> kind;
    std::vector<std::string> levels;  // declared level order for categoricals
};
using Schema = std::map<std::string, ColumnSchema>;

struct CsvOptions {
    char delimiter = ',';
    std::vector<std::string> missing_tokens{"", "NA"};
};

Schema load_schema(const std::filesystem::path& path);

Dataset read_csv(std::istream& in, const std::optional<TargetSpec>& target = std::nullopt,
                 const Schema& schema = {}, const CsvOptions& options = {});
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<TargetSpec>& target = std::nullopt,
                 const Schema& schema = {}, const CsvOptions& options = {});

void write_csv(std::ostream& out, const Dataset& ds, char delimiter = ',');
void save_csv(const std::filesystem::path& path, const Dataset& ds, char delimiter = ',');

// Replace the target column by canonical good/bad levels and attach the spec.
Dataset encode_target(const Dataset& ds, const TargetSpec& spec);

// Row-disjoint train/validation partition. Rows keep their input order
// within each part.
struct SplitResult {
    Dataset train;
    Dataset valid;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> valid_rows;
};
SplitResult split(const Dataset& ds, const SplitSpec& spec);

// Shortest text that parses back to the same double.
std::string format_number(double v);

} // namespace forge
