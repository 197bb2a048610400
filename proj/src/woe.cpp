#include "forge/woe.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace forge {

std::vector<WoeValue> woe_from_counts(std::span<const ClassCounts> bins, double zero_adj,
                                      bool bad_numerator) {
    if (zero_adj < 0.0) throw ValidationError("zero adjustment must be nonnegative");
    double raw_good = 0.0, raw_bad = 0.0;
    for (const auto& b : bins) {
        raw_good += b.good;
        raw_bad += b.bad;
    }
    if (raw_good <= 0.0 || raw_bad <= 0.0)
        throw ValidationError("WoE needs both classes present");

    std::vector<ClassCounts> adjusted(bins.begin(), bins.end());
    double total_good = 0.0, total_bad = 0.0;
    for (auto& b : adjusted) {
        if (b.good == 0.0) b.good = zero_adj;
        if (b.bad == 0.0) b.bad = zero_adj;
        total_good += b.good;
        total_bad += b.bad;
    }

    std::vector<WoeValue> out(adjusted.size());
    for (std::size_t i = 0; i < adjusted.size(); ++i) {
        auto& v = out[i];
        v.f_good = adjusted[i].good / total_good;
        v.f_bad = adjusted[i].bad / total_bad;
        double woe = std::log(v.f_bad / v.f_good);
        v.woe = bad_numerator ? woe : -woe;
        v.iv = (v.f_bad - v.f_good) * woe;
    }
    return out;
}

const WoeBin* VariableWoe::find(std::string_view label) const {
    for (const auto& b : bins)
        if (b.label == label) return &b;
    return nullptr;
}

const VariableWoe* WoeMap::find(std::string_view variable) const {
    auto name = base_variable_name(variable);
    for (const auto& v : variables)
        if (v.variable == name) return &v;
    return nullptr;
}

const VariableWoe& WoeMap::at(std::string_view variable) const {
    if (auto* v = find(variable)) return *v;
    throw NotFound("variable '" + std::string(variable) + "' has no WoE mapping");
}

std::string base_variable_name(std::string_view column_name) {
    for (std::string_view suffix : {"_bin", "_woe"}) {
        if (column_name.size() > suffix.size() && column_name.ends_with(suffix))
            return std::string(column_name.substr(0, column_name.size() - suffix.size()));
    }
    return std::string(column_name);
}

std::string bin_column_name(std::string_view variable) { return std::string(variable) + "_bin"; }
std::string woe_column_name(std::string_view variable) { return std::string(variable) + "_woe"; }

WoeMap fit_woe(const Dataset& binned, std::optional<std::span<const double>> weights, double zero_adj,
               bool bad_numerator) {
    if (weights && weights->size() != binned.n_rows())
        throw ValidationError("weights length does not match the number of rows");
    if (weights) {
        for (double w : *weights)
            if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("observation weights must be nonnegative");
    }
    auto y = binned.bad_flags();

    WoeMap map;
    map.zero_adj = zero_adj;
    map.bad_numerator = bad_numerator;
    map.weighted = weights.has_value();

    for (const auto& name : binned.predictors()) {
        const auto& col = binned.column(name);
        if (col.is_numeric())
            throw ValidationError("column '" + name + "' is not categorical; bin it before fitting WoE");
        const auto& levels = col.levels();
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < levels.size(); ++i) index.emplace(levels[i], i);
        std::vector<ClassCounts> counts(levels.size());
        for (std::size_t r = 0; r < binned.n_rows(); ++r) {
            if (col.is_missing(r)) continue;
            double w = weights ? (*weights)[r] : 1.0;
            auto& c = counts[index.at(col.label(r))];
            (y[r] ? c.bad : c.good) += w;
        }
        auto values = woe_from_counts(counts, zero_adj, bad_numerator);

        VariableWoe vw;
        vw.variable = base_variable_name(name);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            WoeBin b;
            b.label = levels[i];
            b.n_good = counts[i].good;
            b.n_bad = counts[i].bad;
            b.f_good = values[i].f_good;
            b.f_bad = values[i].f_bad;
            b.woe = values[i].woe;
            b.iv = values[i].iv;
            vw.iv += b.iv;
            vw.bins.push_back(std::move(b));
        }
        map.variables.push_back(std::move(vw));
    }
    return map;
}

Dataset apply_woe(const WoeMap& map, const Dataset& binned) {
    std::vector<Column> cols;
    for (const auto& col : binned.columns()) {
        const VariableWoe* vw = nullptr;
        if (!col.is_numeric() && !(binned.has_target() && col.name() == binned.target_name()))
            vw = map.find(col.name());
        if (!vw) {
            cols.push_back(col);
            continue;
        }
        std::vector<double> values(col.size(), 0.0);
        std::vector<std::uint8_t> missing(col.size(), 0);
        for (std::size_t r = 0; r < col.size(); ++r) {
            if (col.is_missing(r)) {
                missing[r] = 1;
                continue;
            }
            const auto* bin = vw->find(col.label(r));
            if (!bin)
                throw ValidationError("unknown bin label '" + col.label(r) + "' for variable '" +
                                      vw->variable + "'");
            values[r] = bin->woe;
        }
        cols.push_back(Column::numeric(woe_column_name(vw->variable), std::move(values), std::move(missing)));
    }
    return Dataset(std::move(cols), binned.target());
}

std::string_view to_string(StabilityLabel label) {
    switch (label) {
    case StabilityLabel::stable: return "stable";
    case StabilityLabel::shifting: return "shifting";
    case StabilityLabel::shifted: return "shifted";
    }
    return "stable";
}

StabilityLabel stability_label(double value) {
    if (value < 0.1) return StabilityLabel::stable;
    if (value > 0.25) return StabilityLabel::shifted;
    return StabilityLabel::shifting;
}

PsiResult psi(std::span<const double> expected, std::span<const double> actual, double zero_adj,
              std::span<const std::string> labels) {
    if (expected.size() != actual.size())
        throw ValidationError("PSI needs the same bins on both samples");
    if (!labels.empty() && labels.size() != expected.size())
        throw ValidationError("PSI labels do not match the bins");
    auto normalise = [zero_adj](std::span<const double> mass) {
        std::vector<double> v(mass.begin(), mass.end());
        double total = 0.0;
        for (auto& x : v) {
            if (x < 0.0) throw ValidationError("PSI masses must be nonnegative");
            if (x == 0.0) x = zero_adj;
            total += x;
        }
        if (total <= 0.0) throw ValidationError("PSI distribution is empty");
        for (auto& x : v) x /= total;
        return v;
    };
    auto e = normalise(expected);
    auto a = normalise(actual);

    PsiResult out;
    for (std::size_t i = 0; i < e.size(); ++i) {
        PsiRow row;
        row.label = labels.empty() ? std::to_string(i + 1) : labels[i];
        row.expected = e[i];
        row.actual = a[i];
        row.difference = a[i] - e[i];
        row.index = a[i] == e[i] ? 0.0 : row.difference * std::log(a[i] / e[i]);
        out.psi += row.index;
        out.rows.push_back(std::move(row));
    }
    out.label = stability_label(out.psi);
    return out;
}

const VariableStability* StabilityReport::find(std::string_view variable) const {
    auto name = base_variable_name(variable);
    for (const auto& v : variables)
        if (v.variable == name) return &v;
    return nullptr;
}

StabilityReport stability(const Dataset& expected_binned, const Dataset& actual_binned, double zero_adj) {
    StabilityReport report;
    for (const auto& name : expected_binned.predictors()) {
        const auto& ec = expected_binned.column(name);
        if (ec.is_numeric() || !actual_binned.has_column(name)) continue;
        const auto& ac = actual_binned.column(name);
        if (ac.is_numeric()) continue;

        std::vector<std::string> labels = ec.levels();
        for (const auto& l : ac.levels())
            if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);

        std::vector<double> e(labels.size(), 0.0), a(labels.size(), 0.0);
        for (std::size_t r = 0; r < ec.size(); ++r)
            if (!ec.is_missing(r)) e[index.at(ec.label(r))] += 1.0;
        for (std::size_t r = 0; r < ac.size(); ++r)
            if (!ac.is_missing(r)) a[index.at(ac.label(r))] += 1.0;
        report.variables.push_back({base_variable_name(name), psi(e, a, zero_adj, labels)});
    }
    return report;
}

void to_json(nlohmann::json& j, const WoeMap& m) {
    j = nlohmann::json::object();
    j["zero_adj"] = m.zero_adj;
    j["bad_numerator"] = m.bad_numerator;
    j["weighted"] = m.weighted;
    auto vars = nlohmann::json::array();
    for (const auto& v : m.variables) {
        auto bins = nlohmann::json::array();
        for (const auto& b : v.bins) {
            bins.push_back({{"label", b.label}, {"n_good", b.n_good}, {"n_bad", b.n_bad},
                            {"f_good", b.f_good}, {"f_bad", b.f_bad}, {"woe", b.woe}, {"iv", b.iv}});
        }
        vars.push_back({{"name", v.variable}, {"iv", v.iv}, {"bins", std::move(bins)}});
    }
    j["variables"] = std::move(vars);
}

void from_json(const nlohmann::json& j, WoeMap& m) {
    m.zero_adj = j.at("zero_adj").get<double>();
    m.bad_numerator = j.at("bad_numerator").get<bool>();
    m.weighted = j.value("weighted", false);
    m.variables.clear();
    for (const auto& v : j.at("variables")) {
        VariableWoe vw;
        vw.variable = v.at("name").get<std::string>();
        vw.iv = v.at("iv").get<double>();
        for (const auto& b : v.at("bins")) {
            WoeBin bin;
            bin.label = b.at("label").get<std::string>();
            bin.n_good = b.at("n_good").get<double>();
            bin.n_bad = b.at("n_bad").get<double>();
            bin.f_good = b.at("f_good").get<double>();
            bin.f_bad = b.at("f_bad").get<double>();
            bin.woe = b.at("woe").get<double>();
            bin.iv = b.at("iv").get<double>();
            vw.bins.push_back(std::move(bin));
        }
        m.variables.push_back(std::move(vw));
    }
}

void to_json(nlohmann::json& j, const StabilityReport& r) {
    j = nlohmann::json::array();
    for (const auto& v : r.variables) {
        auto rows = nlohmann::json::array();
        for (const auto& row : v.result.rows) {
            rows.push_back({{"label", row.label}, {"expected", row.expected}, {"actual", row.actual},
                            {"difference", row.difference}, {"index", row.index}});
        }
        j.push_back({{"variable", v.variable}, {"psi", v.result.psi},
                     {"label", std::string(to_string(v.result.label))}, {"rows", std::move(rows)}});
    }
}

} // namespace forge
