#include "forge/scorecard.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace forge {

double ScalingParams::factor() const { return pdo / std::numbers::ln2; }
double ScalingParams::offset() const { return points0 + factor() * std::log(odds0); }

void ScalingParams::validate() const {
    if (!(pdo > 0.0) || !std::isfinite(pdo)) throw ValidationError("pdo must be positive");
    if (!(odds0 > 0.0) || !std::isfinite(odds0)) throw ValidationError("odds0 must be positive");
    if (!std::isfinite(points0)) throw ValidationError("points0 must be finite");
}

const CardBin* CardVariable::find(std::string_view label) const {
    for (const auto& b : bins)
        if (b.label == label) return &b;
    return nullptr;
}

const CardVariable& Scorecard::at(std::string_view name) const {
    for (const auto& v : variables)
        if (v.name == name) return v;
    throw NotFound("scorecard has no variable '" + std::string(name) + "'");
}

namespace {

int round_points(double x) { return static_cast<int>(std::lround(x)); }

} // namespace

Scorecard build_scorecard(const LogitModel& model, const BinningModel& bins, const WoeMap& woe,
                          const ScalingParams& scaling) {
    scaling.validate();
    Scorecard card;
    card.scaling = scaling;
    card.intercept = model.intercept;
    card.unseen = bins.params.unseen;
    card.conservative_missing = bins.params.conservative_missing;
    if (!model.converged) card.warnings.push_back("model did not converge; points may be unreliable");

    const double factor = scaling.factor();
    const double base = scaling.offset() - factor * model.intercept;
    const std::size_t nvars = model.features.size();
    const bool spread = scaling.basepoints_eq0 && nvars > 0;
    if (scaling.basepoints_eq0 && nvars == 0)
        card.warnings.push_back("no variables to carry the base points; kept as basepoints");
    const double share = spread ? base / static_cast<double>(nvars) : 0.0;
    card.base_unrounded = spread ? 0.0 : base;
    card.basepoints = spread ? 0 : round_points(base);

    for (std::size_t i = 0; i < nvars; ++i) {
        const auto& feature = model.features[i];
        const auto name = base_variable_name(feature);
        if (!bins.contains(name)) throw NotFound("model feature '" + feature + "' has no binning");
        const auto* vw = woe.find(name);
        if (!vw) throw NotFound("model feature '" + feature + "' has no WoE mapping");

        CardVariable cv;
        cv.name = name;
        cv.feature = feature;
        cv.coefficient = model.coefficients[i];
        cv.share = share;
        cv.binning = bins.at(name);
        cv.neutral_points = round_points(share);
        for (const auto& stat : cv.binning.bins) {
            const auto* wb = vw->find(stat.label);
            if (!wb) throw NotFound("bin '" + stat.label + "' of '" + name + "' has no WoE value");
            CardBin b;
            b.label = stat.label;
            b.woe = wb->woe;
            b.is_missing = stat.is_missing;
            b.unrounded = -factor * cv.coefficient * b.woe + share;
            b.points = round_points(b.unrounded);
            if (b.is_missing && card.conservative_missing) {
                b.unrounded = std::min(b.unrounded, share);
                b.points = std::min(b.points, cv.neutral_points);
            }
            cv.bins.push_back(std::move(b));
        }
        card.variables.push_back(std::move(cv));
    }
    return card;
}

ScoreResult score(const Scorecard& card, const Dataset& ds, bool per_variable) {
    const std::size_t n = ds.n_rows();
    ScoreResult out;
    out.total.assign(n, static_cast<double>(card.basepoints));
    out.unrounded.assign(n, card.base_unrounded);

    BinningModel model;
    model.params.unseen = card.unseen;
    for (const auto& v : card.variables) {
        if (!ds.has_column(v.name)) throw NotFound("scoring data lacks variable '" + v.name + "'");
        model.variables.push_back(v.binning);
    }
    std::vector<std::string> names;
    for (const auto& v : card.variables) names.push_back(v.name);
    const Dataset binned = apply_bins(model, ds.select(names, false), BinTarget::bin);

    for (const auto& v : card.variables) {
        const auto& col = binned.column(bin_column_name(v.name));
        std::vector<int> pts(n, 0);
        for (std::size_t r = 0; r < n; ++r) {
            double unrounded = v.share;
            int p = v.neutral_points;
            if (!col.is_missing(r)) {
                const auto* b = v.find(col.label(r));
                if (!b) throw NotFound("bin '" + col.label(r) + "' of '" + v.name + "' has no points");
                unrounded = b->unrounded;
                p = b->points;
            }
            pts[r] = p;
            out.total[r] += p;
            out.unrounded[r] += unrounded;
        }
        if (per_variable) {
            out.variables.push_back(v.name);
            out.points.push_back(std::move(pts));
        }
    }
    return out;
}

double score_to_pd(double score, const ScalingParams& p) {
    const double odds = p.odds0 * std::exp2(-(score - p.points0) / p.pdo);
    return odds / (1.0 + odds);
}

double pd_to_score(double pd, const ScalingParams& p) {
    if (!(pd > 0.0 && pd < 1.0)) throw ValidationError("pd must lie strictly between 0 and 1");
    const double odds = pd / (1.0 - pd);
    return p.points0 - p.pdo * std::log2(odds / p.odds0);
}

GainsTable gains_table(std::span<const double> scores, std::span<const int> bad, std::size_t bin_num) {
    if (scores.size() != bad.size()) throw ValidationError("scores and target differ in length");
    if (scores.empty()) throw ValidationError("gains table needs scores");
    if (bin_num < 1) throw ValidationError("bin_num must be positive");
    for (double s : scores)
        if (!std::isfinite(s)) throw ValidationError("scores must be finite");

    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::vector<double> breaks;
    for (std::size_t k = 1; k < bin_num; ++k) {
        const double h = (n - 1.0) * static_cast<double>(k) / static_cast<double>(bin_num);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double q = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
        if (q > sorted.front() && (breaks.empty() || q > breaks.back())) breaks.push_back(q);
    }
    GainsTable table;
    const std::size_t nbands = breaks.size() + 1;
    if (nbands < bin_num)
        table.warnings.push_back("only " + std::to_string(nbands) + " distinct score bands (requested " +
                                 std::to_string(bin_num) + ")");

    std::vector<GainsRow> rows(nbands);
    for (std::size_t b = 0; b < nbands; ++b) {
        rows[b].lower = b == 0 ? -std::numeric_limits<double>::infinity() : breaks[b - 1];
        rows[b].upper = b == breaks.size() ? std::numeric_limits<double>::infinity() : breaks[b];
        rows[b].bin = numeric_bin_label(rows[b].lower, rows[b].upper);
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto b = static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), scores[i]) - breaks.begin());
        rows[b].count += 1.0;
        (bad[i] ? rows[b].bad : rows[b].good) += 1.0;
    }
    std::reverse(rows.begin(), rows.end());
    double cc = 0.0, cg = 0.0, cb = 0.0;
    for (auto& r : rows) {
        cc += r.count;
        cg += r.good;
        cb += r.bad;
        r.cum_count = cc;
        r.cum_good = cg;
        r.cum_bad = cb;
        r.badprob = r.count > 0.0 ? r.bad / r.count : 0.0;
        r.approval_rate = cc / n;
        r.cum_badprob = cc > 0.0 ? cb / cc : 0.0;
    }
    table.rows = std::move(rows);
    return table;
}

void to_json(nlohmann::json& j, const ScalingParams& p) {
    j = {{"pdo", p.pdo}, {"points0", p.points0}, {"odds0", p.odds0}, {"basepoints_eq0", p.basepoints_eq0},
         {"rounding", "nearest_int"}, {"factor", p.factor()}, {"offset", p.offset()}};
}

void from_json(const nlohmann::json& j, ScalingParams& p) {
    ScalingParams d;
    p.pdo = j.value("pdo", d.pdo);
    p.points0 = j.value("points0", d.points0);
    p.odds0 = j.value("odds0", d.odds0);
    p.basepoints_eq0 = j.value("basepoints_eq0", d.basepoints_eq0);
    p.validate();
}

void to_json(nlohmann::json& j, const Scorecard& c) {
    auto vars = nlohmann::json::array();
    for (const auto& v : c.variables) {
        auto bins = nlohmann::json::array();
        for (const auto& b : v.bins)
            bins.push_back({{"label", b.label}, {"woe", b.woe}, {"points", b.points}, {"unrounded", b.unrounded},
                            {"is_missing", b.is_missing}});
        vars.push_back({{"name", v.name},
                        {"feature", v.feature},
                        {"coefficient", v.coefficient},
                        {"share", v.share},
                        {"neutral_points", v.neutral_points},
                        {"bins", std::move(bins)},
                        {"binning", v.binning}});
    }
    j = {{"scaling", c.scaling},
         {"intercept", c.intercept},
         {"basepoints", c.basepoints},
         {"base_unrounded", c.base_unrounded},
         {"unseen", to_string(c.unseen)},
         {"conservative_missing", c.conservative_missing},
         {"variables", std::move(vars)},
         {"warnings", c.warnings}};
}

void from_json(const nlohmann::json& j, Scorecard& c) {
    c = Scorecard{};
    c.scaling = j.at("scaling").get<ScalingParams>();
    c.intercept = j.at("intercept").get<double>();
    c.basepoints = j.at("basepoints").get<int>();
    c.base_unrounded = j.at("base_unrounded").get<double>();
    c.unseen = unseen_policy_from_string(j.at("unseen").get<std::string>());
    c.conservative_missing = j.value("conservative_missing", false);
    for (const auto& v : j.at("variables")) {
        CardVariable cv;
        cv.name = v.at("name").get<std::string>();
        cv.feature = v.at("feature").get<std::string>();
        cv.coefficient = v.at("coefficient").get<double>();
        cv.share = v.at("share").get<double>();
        cv.neutral_points = v.at("neutral_points").get<int>();
        for (const auto& b : v.at("bins")) {
            CardBin cb;
            cb.label = b.at("label").get<std::string>();
            cb.woe = b.at("woe").get<double>();
            cb.points = b.at("points").get<int>();
            cb.unrounded = b.at("unrounded").get<double>();
            cb.is_missing = b.value("is_missing", false);
            cv.bins.push_back(std::move(cb));
        }
        cv.binning = v.at("binning").get<VariableBinning>();
        c.variables.push_back(std::move(cv));
    }
    c.warnings = j.value("warnings", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const GainsTable& g) {
    auto rows = nlohmann::json::array();
    for (const auto& r : g.rows)
        rows.push_back({{"bin", r.bin},
                        {"count", r.count},
                        {"cum_count", r.cum_count},
                        {"good", r.good},
                        {"cum_good", r.cum_good},
                        {"bad", r.bad},
                        {"cum_bad", r.cum_bad},
                        {"badprob", r.badprob},
                        {"approval_rate", r.approval_rate},
                        {"cum_badprob", r.cum_badprob}});
    j = {{"rows", std::move(rows)}, {"warnings", g.warnings}};
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string scorecard_csv(const Scorecard& c) {
    std::ostringstream os;
    os << "variable,bin,woe,points\n";
    os << "basepoints,,," << c.basepoints << "\n";
    for (const auto& v : c.variables)
        for (const auto& b : v.bins)
            os << csv_field(v.name) << "," << csv_field(b.label) << "," << format_number(b.woe) << "," << b.points
               << "\n";
    return os.str();
}

} // namespace forge
