#include "forge/preselect.hpp"

#include "forge/error.hpp"
#include "forge/woe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace forge {

const VariableFilter* FilterReport::find(std::string_view variable) const {
    auto name = base_variable_name(variable);
    for (const auto& v : variables)
        if (v.variable == name) return &v;
    return nullptr;
}

std::vector<std::string> FilterReport::kept() const {
    std::vector<std::string> out;
    for (const auto& v : variables)
        if (v.kept) out.push_back(v.variable);
    return out;
}

std::vector<std::string> FilterReport::dropped() const {
    std::vector<std::string> out;
    for (const auto& v : variables)
        if (!v.kept) out.push_back(v.variable);
    return out;
}

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(4);
    os << x;
    return os.str();
}

void drop(VariableFilter& v, std::string rule, double threshold, std::string reason) {
    v.kept = false;
    v.rule = std::move(rule);
    v.threshold = threshold;
    v.reason = std::move(reason);
}

} // namespace

FilterReport iv_filter(const VariableValues& ivs, double threshold) {
    FilterReport report;
    for (const auto& [name, iv] : ivs) {
        if (!std::isfinite(iv) || iv < 0.0) throw ValidationError("IV of '" + name + "' must be finite and >= 0");
        VariableFilter v;
        v.variable = name;
        v.iv = iv;
        if (iv < threshold) drop(v, "iv", threshold, "iv " + fmt(iv) + " < " + fmt(threshold));
        report.variables.push_back(std::move(v));
    }
    return report;
}

FilterReport psi_filter(const VariableValues& psis, double threshold) {
    FilterReport report;
    for (const auto& [name, value] : psis) {
        VariableFilter v;
        v.variable = name;
        v.psi = value;
        if (value > threshold) drop(v, "psi", threshold, "psi " + fmt(value) + " > " + fmt(threshold));
        report.variables.push_back(std::move(v));
    }
    return report;
}

FilterReport missing_filter(const Dataset& ds, double max_ratio) {
    FilterReport report;
    for (const auto& name : ds.predictors()) {
        const auto& col = ds.column(name);
        VariableFilter v;
        v.variable = base_variable_name(name);
        double ratio = ds.n_rows() ? static_cast<double>(col.missing_count()) / static_cast<double>(ds.n_rows()) : 0.0;
        v.missing_ratio = ratio;
        if (ratio > max_ratio)
            drop(v, "missing", max_ratio, "missing ratio " + fmt(ratio) + " > " + fmt(max_ratio));
        report.variables.push_back(std::move(v));
    }
    return report;
}

double pearson(const Column& x, const Column& y) {
    if (!x.is_numeric() || !y.is_numeric()) throw ValidationError("correlation needs numeric columns");
    if (x.size() != y.size()) throw ValidationError("correlation needs columns of equal length");
    double n = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) {
        if (x.is_missing(r) || y.is_missing(r)) continue;
        n += 1.0;
        mx += x.number(r);
        my += y.number(r);
    }
    if (n < 2.0) return std::numeric_limits<double>::quiet_NaN();
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) {
        if (x.is_missing(r) || y.is_missing(r)) continue;
        double dx = x.number(r) - mx, dy = y.number(r) - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

bool is_constant(const Column& c) {
    std::optional<double> first;
    for (std::size_t r = 0; r < c.size(); ++r) {
        if (c.is_missing(r)) continue;
        if (!first) first = c.number(r);
        else if (c.number(r) != *first) return false;
    }
    return true;
}

} // namespace

FilterReport correlation_filter(const Dataset& woe_data, double threshold) {
    if (woe_data.n_rows() < 3) throw ValidationError("correlation filter needs at least 3 rows");
    auto names = woe_data.predictors();
    for (const auto& n : names)
        if (!woe_data.column(n).is_numeric()) throw ValidationError("column '" + n + "' is not numeric");
    // Name order makes the result independent of column order.
    std::sort(names.begin(), names.end());

    FilterReport report;
    std::vector<std::string> active;
    for (const auto& n : names) {
        VariableFilter v;
        v.variable = base_variable_name(n);
        if (is_constant(woe_data.column(n))) {
            report.warnings.push_back("'" + v.variable + "' is constant; excluded from the correlation matrix");
        } else {
            active.push_back(n);
        }
        report.variables.push_back(std::move(v));
    }
    const std::size_t k = active.size();
    std::vector<double> r(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            double v = pearson(woe_data.column(active[i]), woe_data.column(active[j]));
            r[i * k + j] = r[j * k + i] = std::isnan(v) ? 0.0 : std::abs(v);
        }
    }
    std::vector<bool> alive(k, true);
    auto find_entry = [&](const std::string& col) -> VariableFilter& {
        auto base = base_variable_name(col);
        for (auto& v : report.variables)
            if (v.variable == base) return v;
        throw NotFound(base);
    };
    while (true) {
        double best = -1.0;
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (!alive[i]) continue;
            for (std::size_t j = i + 1; j < k; ++j) {
                if (!alive[j]) continue;
                if (r[i * k + j] > best) {
                    best = r[i * k + j];
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best < threshold || best < 0.0) break;
        auto mean_abs = [&](std::size_t i) {
            double s = 0.0;
            std::size_t m = 0;
            for (std::size_t j = 0; j < k; ++j) {
                if (j == i || !alive[j]) continue;
                s += r[i * k + j];
                ++m;
            }
            return m ? s / static_cast<double>(m) : 0.0;
        };
        const double mi = mean_abs(bi), mj = mean_abs(bj);
        // bj is the lexicographically later name.
        const std::size_t victim = mi > mj ? bi : bj;
        const std::size_t other = victim == bi ? bj : bi;
        alive[victim] = false;
        drop(find_entry(active[victim]), "correlation", threshold,
             "|r| " + fmt(best) + " with '" + base_variable_name(active[other]) + "' >= " + fmt(threshold) +
                 ", larger mean |r|");
    }
    return report;
}

CramersV cramers_v(const Column& x, const Column& y) {
    if (x.size() != y.size()) throw ValidationError("Cramer's V needs columns of equal length");
    if (x.is_numeric() || y.is_numeric()) throw ValidationError("Cramer's V needs categorical columns");
    std::unordered_map<std::string, std::size_t> xi, yi;
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t r = 0; r < x.size(); ++r) {
        if (x.is_missing(r) || y.is_missing(r)) continue;
        auto a = xi.emplace(x.label(r), xi.size()).first->second;
        auto b = yi.emplace(y.label(r), yi.size()).first->second;
        cells.emplace_back(a, b);
    }
    if (xi.size() < 2 || yi.size() < 2) return {0.0, true};
    const std::size_t R = xi.size(), C = yi.size();
    std::vector<double> table(R * C, 0.0), rows(R, 0.0), cols(C, 0.0);
    for (auto [a, b] : cells) {
        table[a * C + b] += 1.0;
        rows[a] += 1.0;
        cols[b] += 1.0;
    }
    const double n = static_cast<double>(cells.size());
    double chi = 0.0;
    for (std::size_t a = 0; a < R; ++a) {
        for (std::size_t b = 0; b < C; ++b) {
            double e = rows[a] * cols[b] / n;
            chi += (table[a * C + b] - e) * (table[a * C + b] - e) / e;
        }
    }
    double denom = n * static_cast<double>(std::min(R, C) - 1);
    return {std::clamp(std::sqrt(chi / denom), 0.0, 1.0), false};
}

FilterReport cv_filter(const Dataset& binned, const VariableValues& ivs, double threshold) {
    FilterReport report;
    std::vector<std::string> cols;
    for (const auto& name : binned.predictors()) {
        auto base = base_variable_name(name);
        auto it = ivs.find(base);
        if (it == ivs.end()) continue;
        if (binned.column(name).is_numeric()) throw ValidationError("column '" + name + "' is not categorical");
        VariableFilter v;
        v.variable = base;
        v.iv = it->second;
        report.variables.push_back(std::move(v));
        cols.push_back(name);
    }
    struct Pair {
        double v;
        std::size_t i, j;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        for (std::size_t j = i + 1; j < cols.size(); ++j) {
            auto cv = cramers_v(binned.column(cols[i]), binned.column(cols[j]));
            if (cv.degenerate)
                report.warnings.push_back("Cramer's V of '" + report.variables[i].variable + "' and '" +
                                          report.variables[j].variable + "' set to 0 (single level)");
            if (cv.v > threshold) pairs.push_back({cv.v, i, j});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.v > b.v; });
    for (const auto& p : pairs) {
        auto& a = report.variables[p.i];
        auto& b = report.variables[p.j];
        if (!a.kept || !b.kept) continue;
        bool drop_a = *a.iv < *b.iv || (*a.iv == *b.iv && a.variable > b.variable);
        auto& victim = drop_a ? a : b;
        auto& other = drop_a ? b : a;
        drop(victim, "cramers_v", threshold,
             "Cramer's V " + fmt(p.v) + " with '" + other.variable + "' > " + fmt(threshold) + ", lower iv");
    }
    return report;
}

FilterReport combine(std::span<const FilterReport> reports) {
    FilterReport out;
    for (const auto& rep : reports) {
        for (const auto& v : rep.variables) {
            auto it = std::find_if(out.variables.begin(), out.variables.end(),
                                   [&](const VariableFilter& o) { return o.variable == v.variable; });
            if (it == out.variables.end()) {
                out.variables.push_back(v);
                continue;
            }
            if (v.iv) it->iv = v.iv;
            if (v.psi) it->psi = v.psi;
            if (v.missing_ratio) it->missing_ratio = v.missing_ratio;
            if (it->kept && !v.kept) {
                it->kept = false;
                it->rule = v.rule;
                it->threshold = v.threshold;
                it->reason = v.reason;
            }
        }
        out.warnings.insert(out.warnings.end(), rep.warnings.begin(), rep.warnings.end());
    }
    return out;
}

void to_json(nlohmann::json& j, const FilterReport& r) {
    auto vars = nlohmann::json::array();
    for (const auto& v : r.variables) {
        nlohmann::json e = {{"name", v.variable}, {"kept", v.kept}};
        e["iv"] = v.iv ? nlohmann::json(*v.iv) : nlohmann::json();
        e["psi"] = v.psi ? nlohmann::json(*v.psi) : nlohmann::json();
        e["missing_ratio"] = v.missing_ratio ? nlohmann::json(*v.missing_ratio) : nlohmann::json();
        if (!v.kept) {
            e["rule"] = v.rule;
            e["threshold"] = v.threshold;
            e["reason"] = v.reason;
        }
        vars.push_back(std::move(e));
    }
    j = {{"variables", std::move(vars)}, {"warnings", r.warnings}};
}

void from_json(const nlohmann::json& j, FilterReport& r) {
    r = FilterReport{};
    for (const auto& e : j.at("variables")) {
        VariableFilter v;
        v.variable = e.at("name").get<std::string>();
        v.kept = e.at("kept").get<bool>();
        if (e.contains("iv") && !e["iv"].is_null()) v.iv = e["iv"].get<double>();
        if (e.contains("psi") && !e["psi"].is_null()) v.psi = e["psi"].get<double>();
        if (e.contains("missing_ratio") && !e["missing_ratio"].is_null())
            v.missing_ratio = e["missing_ratio"].get<double>();
        if (!v.kept) {
            v.rule = e.at("rule").get<std::string>();
            v.threshold = e.at("threshold").get<double>();
            v.reason = e.at("reason").get<std::string>();
        }
        r.variables.push_back(std::move(v));
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
}

} // namespace forge
