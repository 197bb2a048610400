#include "forge/dataset.hpp"

#include "forge/error.hpp"
#include "forge/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace forge {

std::string_view to_string(ColumnKind kind) {
    return kind == ColumnKind::numeric ? "numeric" : "categorical";
}

ColumnKind column_kind_from_string(std::string_view s) {
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "categorical") return ColumnKind::categorical;
    throw ValidationError("unknown column kind '" + std::string(s) + "'");
}

std::string format_number(double v) {
    if (std::isnan(v)) return "NaN";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    if (v == 0.0) return "0";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

// ---------------------------------------------------------------- Column

Column Column::numeric(std::string name, std::vector<double> values,
                       std::vector<std::uint8_t> missing) {
    Column c;
    c.name_ = std::move(name);
    c.kind_ = ColumnKind::numeric;
    if (missing.empty()) missing.assign(values.size(), 0);
    if (missing.size() != values.size())
        throw ValidationError("column '" + c.name_ + "': missing flags length mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) missing[i] = 1;
        if (missing[i]) values[i] = 0.0;
    }
    c.numbers_ = std::move(values);
    c.missing_ = std::move(missing);
    return c;
}

Column Column::categorical(std::string name, std::vector<std::string> values,
                           std::vector<std::uint8_t> missing,
                           std::vector<std::string> level_order) {
    Column c;
    c.name_ = std::move(name);
    c.kind_ = ColumnKind::categorical;
    if (missing.empty()) missing.assign(values.size(), 0);
    if (missing.size() != values.size())
        throw ValidationError("column '" + c.name_ + "': missing flags length mismatch");
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (missing[i]) {
            values[i].clear();
            continue;
        }
        seen.insert(values[i]);
    }
    std::unordered_set<std::string> placed;
    for (auto& level : level_order) {
        if (seen.count(level) && placed.insert(level).second) c.levels_.push_back(level);
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!missing[i] && placed.insert(values[i]).second) c.levels_.push_back(values[i]);
    }
    c.labels_ = std::move(values);
    c.missing_ = std::move(missing);
    return c;
}

std::size_t Column::missing_count() const {
    return static_cast<std::size_t>(std::count(missing_.begin(), missing_.end(), 1));
}

Column Column::renamed(std::string name) const {
    Column c = *this;
    c.name_ = std::move(name);
    return c;
}

Column Column::take(std::span<const std::size_t> rows) const {
    std::vector<std::uint8_t> missing;
    missing.reserve(rows.size());
    for (auto r : rows) missing.push_back(missing_.at(r));
    if (is_numeric()) {
        std::vector<double> values;
        values.reserve(rows.size());
        for (auto r : rows) values.push_back(numbers_[r]);
        return numeric(name_, std::move(values), std::move(missing));
    }
    std::vector<std::string> values;
    values.reserve(rows.size());
    for (auto r : rows) values.push_back(labels_[r]);
    return categorical(name_, std::move(values), std::move(missing), levels_);
}

std::string Column::cell_text(std::size_t row) const {
    if (is_missing(row)) return {};
    return is_numeric() ? format_number(numbers_[row]) : labels_[row];
}

// --------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<Column> columns, std::optional<TargetSpec> target)
    : columns_(std::move(columns)), target_(std::move(target)) {
    std::unordered_set<std::string> names;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (c.name().empty()) throw ValidationError("column names must be non-empty");
        if (!names.insert(c.name()).second)
            throw ValidationError("duplicate column name '" + c.name() + "'");
        if (i == 0) n_rows_ = c.size();
        else if (c.size() != n_rows_)
            throw ValidationError("column '" + c.name() + "' has " + std::to_string(c.size()) +
                                  " cells, expected " + std::to_string(n_rows_));
    }
    if (target_) {
        if (!names.count(target_->column))
            throw NotFound("target column '" + target_->column + "' not found");
        const auto& t = column(target_->column);
        if (t.is_numeric()) throw ValidationError("target column must be encoded (categorical)");
        for (std::size_t r = 0; r < n_rows_; ++r) {
            if (t.is_missing(r)) throw ValidationError("missing target value in row " + std::to_string(r + 1));
            if (t.label(r) != kGood && t.label(r) != kBad)
                throw ValidationError("target value '" + t.label(r) + "' is not a canonical level");
        }
    }
}

bool Dataset::has_column(std::string_view name) const { return index_of(name).has_value(); }

std::optional<std::size_t> Dataset::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name() == name) return i;
    return std::nullopt;
}

const Column& Dataset::column(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw NotFound("column '" + std::string(name) + "' not found");
    return columns_[*i];
}

const std::string& Dataset::target_name() const {
    if (!target_) throw ValidationError("dataset has no encoded target");
    return target_->column;
}

std::vector<int> Dataset::bad_flags() const {
    const auto& t = column(target_name());
    std::vector<int> y(n_rows_);
    for (std::size_t r = 0; r < n_rows_; ++r) y[r] = t.label(r) == kBad ? 1 : 0;
    return y;
}

std::size_t Dataset::bad_count() const {
    auto y = bad_flags();
    return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

std::vector<std::string> Dataset::predictors() const {
    std::vector<std::string> out;
    for (const auto& c : columns_)
        if (!target_ || c.name() != target_->column) out.push_back(c.name());
    return out;
}

Dataset Dataset::take_rows(std::span<const std::size_t> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) cols.push_back(c.take(rows));
    return Dataset(std::move(cols), target_);
}

Dataset Dataset::select(std::span<const std::string> names, bool keep_target) const {
    std::vector<Column> cols;
    for (const auto& n : names) cols.push_back(column(n));
    std::optional<TargetSpec> target;
    if (keep_target && target_) {
        if (std::find(names.begin(), names.end(), target_->column) == names.end())
            cols.push_back(column(target_->column));
        target = target_;
    }
    return Dataset(std::move(cols), target);
}

Dataset Dataset::with_column(Column c) const {
    auto cols = columns_;
    auto i = index_of(c.name());
    if (i) cols[*i] = std::move(c);
    else cols.push_back(std::move(c));
    return Dataset(std::move(cols), target_);
}

Dataset Dataset::without_column(std::string_view name) const {
    std::vector<Column> cols;
    for (const auto& c : columns_)
        if (c.name() != name) cols.push_back(c);
    auto target = target_;
    if (target && target->column == name) target.reset();
    return Dataset(std::move(cols), target);
}

// ------------------------------------------------------------------- CSV

namespace {

// RFC-4180 record reader: quoted fields, doubled quotes, CRLF or LF.
bool read_record(std::istream& in, char delim, std::vector<std::string>& fields, std::size_t& line) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    int ch;
    ++line;
    while ((ch = in.get()) != std::char_traits<char>::eof()) {
        char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    field.push_back('"');
                    in.get();
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !was_quoted) {
            quoted = true;
            was_quoted = true;
        } else if (c == delim) {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (c == '\r') {
            if (in.peek() == '\n') in.get();
            break;
        } else if (c == '\n') {
            break;
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw ValidationError("unterminated quoted field at line " + std::to_string(line));
    fields.push_back(std::move(field));
    return true;
}

std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool needs_quotes(const std::string& s, char delim) {
    if (s.empty()) return false;
    if (s.front() == ' ' || s.back() == ' ') return true;
    return s.find_first_of(std::string{delim, '"', '\n', '\r'}) != std::string::npos;
}

void write_field(std::ostream& out, const std::string& s, char delim) {
    if (!needs_quotes(s, delim)) {
        out << s;
        return;
    }
    out << '"';
    for (char c : s) {
        if (c == '"') out << '"';
        out << c;
    }
    out << '"';
}

} // namespace

Schema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read schema file " + path.string());
    auto j = nlohmann::json::parse(in);
    Schema schema;
    for (auto& [name, spec] : j.at("columns").items()) {
        ColumnSchema cs;
        if (spec.contains("kind")) cs.kind = column_kind_from_string(spec.at("kind").get<std::string>());
        if (spec.contains("levels")) cs.levels = spec.at("levels").get<std::vector<std::string>>();
        schema.emplace(name, std::move(cs));
    }
    return schema;
}

Dataset read_csv(std::istream& in, const std::optional<TargetSpec>& target, const Schema& schema,
                 const CsvOptions& options) {
    std::vector<std::string> header;
    std::size_t line = 0;
    if (!read_record(in, options.delimiter, header, line) ||
        (header.size() == 1 && header[0].empty()))
        throw ValidationError("no header");
    if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

    std::vector<std::vector<std::string>> cells(header.size());
    std::vector<std::string> fields;
    while (read_record(in, options.delimiter, fields, line)) {
        if (fields.size() == 1 && fields[0].empty()) continue;  // blank line
        if (fields.size() != header.size())
            throw ValidationError("ragged row at line " + std::to_string(line) + ": " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
        for (std::size_t j = 0; j < fields.size(); ++j) cells[j].push_back(std::move(fields[j]));
    }

    auto is_missing_token = [&](const std::string& s) {
        return std::find(options.missing_tokens.begin(), options.missing_tokens.end(), s) !=
               options.missing_tokens.end();
    };

    std::vector<Column> columns;
    columns.reserve(header.size());
    for (std::size_t j = 0; j < header.size(); ++j) {
        auto& raw = cells[j];
        std::vector<std::uint8_t> missing(raw.size(), 0);
        for (std::size_t r = 0; r < raw.size(); ++r) missing[r] = is_missing_token(raw[r]) ? 1 : 0;

        const ColumnSchema* override_spec = nullptr;
        if (auto it = schema.find(header[j]); it != schema.end()) override_spec = &it->second;

        std::vector<double> numbers(raw.size(), 0.0);
        bool all_numeric = true;
        for (std::size_t r = 0; r < raw.size() && all_numeric; ++r) {
            if (missing[r]) continue;
            auto v = parse_number(raw[r]);
            if (!v) all_numeric = false;
            else numbers[r] = *v;
        }
        ColumnKind kind = all_numeric ? ColumnKind::numeric : ColumnKind::categorical;
        if (target && header[j] == target->column) kind = ColumnKind::categorical;
        if (override_spec && override_spec->kind) kind = *override_spec->kind;

        if (kind == ColumnKind::numeric) {
            if (!all_numeric)
                throw ValidationError("column '" + header[j] + "' declared numeric but has non-numeric cells");
            columns.push_back(Column::numeric(header[j], std::move(numbers), std::move(missing)));
        } else {
            columns.push_back(Column::categorical(header[j], std::move(raw), std::move(missing),
                                                  override_spec ? override_spec->levels
                                                                : std::vector<std::string>{}));
        }
    }
    Dataset ds(std::move(columns));
    if (target) return encode_target(ds, *target);
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<TargetSpec>& target,
                 const Schema& schema, const CsvOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read file " + path.string());
    return read_csv(in, target, schema, options);
}

void write_csv(std::ostream& out, const Dataset& ds, char delimiter) {
    const auto& cols = ds.columns();
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (j) out << delimiter;
        write_field(out, cols[j].name(), delimiter);
    }
    out << '\n';
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            if (j) out << delimiter;
            const auto& c = cols[j];
            if (c.is_missing(r)) continue;
            write_field(out, c.cell_text(r), delimiter);
        }
        out << '\n';
    }
}

void save_csv(const std::filesystem::path& path, const Dataset& ds, char delimiter) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file " + path.string());
    write_csv(out, ds, delimiter);
}

// ---------------------------------------------------------------- target

Dataset encode_target(const Dataset& ds, const TargetSpec& spec) {
    if (spec.bad_level == spec.good_level)
        throw ValidationError("bad and good target levels must differ");
    const auto& col = ds.column(spec.column);
    std::vector<std::string> encoded(ds.n_rows());
    bool saw_bad = false, saw_good = false;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (col.is_missing(r))
            throw ValidationError("missing target value in row " + std::to_string(r + 1));
        const std::string text = col.cell_text(r);
        if (text == spec.bad_level) {
            encoded[r] = kBad;
            saw_bad = true;
        } else if (text == spec.good_level || spec.good_level.empty()) {
            encoded[r] = kGood;
            saw_good = true;
        } else {
            throw ValidationError("unknown target level '" + text + "' in column '" + spec.column + "'");
        }
    }
    if (!saw_bad || !saw_good)
        throw ValidationError("target column '" + spec.column + "' must contain exactly two observed levels");
    TargetSpec resolved = spec;
    if (resolved.good_level.empty()) {
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            auto text = col.cell_text(r);
            if (text != spec.bad_level) {
                resolved.good_level = text;
                break;
            }
        }
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            auto text = col.cell_text(r);
            if (text != spec.bad_level && text != resolved.good_level)
                throw ValidationError("target column '" + spec.column + "' has more than two levels");
        }
    }
    auto cols = ds.columns();
    auto idx = *ds.index_of(spec.column);
    cols[idx] = Column::categorical(spec.column, std::move(encoded), {},
                                    {std::string(kGood), std::string(kBad)});
    return Dataset(std::move(cols), resolved);
}

// ----------------------------------------------------------------- split

SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    if (!(spec.ratio > 0.0 && spec.ratio < 1.0))
        throw ValidationError("split ratio must lie strictly between 0 and 1");
    std::vector<std::vector<std::size_t>> strata;
    if (spec.stratify) {
        if (!ds.has_target()) throw ValidationError("stratified split requires an encoded target");
        auto y = ds.bad_flags();
        strata.resize(2);
        for (std::size_t r = 0; r < ds.n_rows(); ++r) strata[static_cast<std::size_t>(y[r])].push_back(r);
    } else {
        strata.emplace_back(ds.n_rows());
        for (std::size_t r = 0; r < ds.n_rows(); ++r) strata[0][r] = r;
    }

    Rng rng(spec.seed);
    std::vector<std::uint8_t> in_train(ds.n_rows(), 0);
    for (auto& s : strata) {
        rng.shuffle(s);
        auto k = static_cast<std::size_t>(std::llround(spec.ratio * static_cast<double>(s.size())));
        for (std::size_t i = 0; i < k; ++i) in_train[s[i]] = 1;
    }
    SplitResult out;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        (in_train[r] ? out.train_rows : out.valid_rows).push_back(r);
    out.train = ds.take_rows(out.train_rows);
    out.valid = ds.take_rows(out.valid_rows);
    return out;
}

} // namespace forge
