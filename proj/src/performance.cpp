#include "forge/performance.hpp"

#include "forge/error.hpp"
#include "forge/random.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace forge {

std::string_view to_string(Direction d) { return d == Direction::higher_is_good ? "higher_is_good" : "higher_is_bad"; }

Direction direction_from_string(std::string_view s) {
    if (s == "higher_is_good") return Direction::higher_is_good;
    if (s == "higher_is_bad") return Direction::higher_is_bad;
    throw ValidationError("unknown direction '" + std::string(s) + "'");
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> bad) {
    if (scores.size() != bad.size()) throw ValidationError("scores and target differ in length");
    std::size_t nb = 0;
    for (std::size_t i = 0; i < bad.size(); ++i) {
        if (bad[i] != 0 && bad[i] != 1) throw ValidationError("target must be coded 0/1");
        if (std::isnan(scores[i])) throw ValidationError("scores must not be NaN");
        nb += static_cast<std::size_t>(bad[i]);
    }
    if (nb == 0 || nb == bad.size()) throw ValidationError("both classes must be present");
}

// Mann-Whitney U of `first` over `second` from midranks, ties counted 0.5.
double auc_from_ranks(std::span<const double> scores, std::span<const int> bad, Direction dir) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    // Twice the midrank keeps everything integral.
    double rank2_good = 0.0;
    std::size_t ng = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double r2 = static_cast<double>(i + j + 2);  // 2 * average 1-based rank
        for (std::size_t t = i; t <= j; ++t)
            if (!bad[order[t]]) {
                rank2_good += r2;
                ++ng;
            }
        i = j + 1;
    }
    const std::size_t nb = n - ng;
    const double u_good2 = rank2_good - static_cast<double>(ng) * static_cast<double>(ng + 1);
    const double u_good = u_good2 / 2.0;
    const double pairs = static_cast<double>(ng) * static_cast<double>(nb);
    const double u = dir == Direction::higher_is_good ? u_good : pairs - u_good;
    return u / pairs;
}

} // namespace

double quantile7(std::vector<double> v, double prob) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

AucResult roc_auc(std::span<const double> scores, std::span<const int> bad, Direction dir) {
    check_inputs(scores, bad);
    const double auc = auc_from_ranks(scores, bad, dir);
    return {auc, 2.0 * (auc - 0.5)};
}

double ks(std::span<const double> scores, std::span<const int> bad) {
    check_inputs(scores, bad);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    std::size_t nb = 0;
    for (int b : bad) nb += static_cast<std::size_t>(b);
    const std::size_t ng = n - nb;
    std::size_t cg = 0, cb = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (bad[order[j]] ? cb : cg) += 1;
            ++j;
        }
        const double d = std::abs(static_cast<double>(cg) / static_cast<double>(ng) -
                                  static_cast<double>(cb) / static_cast<double>(nb));
        best = std::max(best, d);
        i = j;
    }
    return best;
}

BootstrapCI auc_ci_bootstrap(std::span<const double> scores, std::span<const int> bad, Direction dir,
                             std::size_t replicates, std::uint64_t seed, double level) {
    check_inputs(scores, bad);
    if (replicates < 100) throw ValidationError("bootstrap needs at least 100 replicates");
    if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
    std::vector<double> goods, bads;
    for (std::size_t i = 0; i < scores.size(); ++i) (bad[i] ? bads : goods).push_back(scores[i]);

    std::vector<double> aucs(replicates);
    std::vector<double> s(scores.size());
    std::vector<int> y(scores.size());
    for (std::size_t b = 0; b < replicates; ++b) {
        Rng rng(derive_seed(seed, b));
        std::size_t k = 0;
        for (std::size_t i = 0; i < goods.size(); ++i, ++k) {
            s[k] = goods[rng.below(goods.size())];
            y[k] = 0;
        }
        for (std::size_t i = 0; i < bads.size(); ++i, ++k) {
            s[k] = bads[rng.below(bads.size())];
            y[k] = 1;
        }
        aucs[b] = auc_from_ranks(s, y, dir);
    }
    BootstrapCI ci;
    ci.level = level;
    ci.replicates = replicates;
    ci.seed = seed;
    ci.lower = quantile7(aucs, (1.0 - level) / 2.0);
    ci.upper = quantile7(aucs, (1.0 + level) / 2.0);
    return ci;
}

Confusion confusion(std::span<const double> scores, std::span<const int> bad, double cutoff, Direction dir) {
    if (scores.size() != bad.size()) throw ValidationError("scores and target differ in length");
    Confusion c;
    c.cutoff = cutoff;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted_good = dir == Direction::higher_is_good ? scores[i] >= cutoff : scores[i] < cutoff;
        if (bad[i]) (predicted_good ? c.fn : c.tp) += 1;
        else (predicted_good ? c.tn : c.fp) += 1;
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    c.accuracy = ratio(c.tp + c.tn, scores.size());
    c.sensitivity = ratio(c.tp, c.tp + c.fn);
    c.specificity = ratio(c.tn, c.tn + c.fp);
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.npv = ratio(c.tn, c.tn + c.fn);
    c.youden = c.sensitivity + c.specificity - 1.0;
    return c;
}

double optimal_cutoff(std::span<const double> scores, std::span<const int> bad, CutoffObjective objective,
                      Direction dir) {
    check_inputs(scores, bad);
    std::vector<double> cand(scores.begin(), scores.end());
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    double best_cut = cand.front();
    double best = -std::numeric_limits<double>::infinity();
    for (double t : cand) {
        auto c = confusion(scores, bad, t, dir);
        const double value = objective == CutoffObjective::youden ? c.youden : -static_cast<double>(c.fp + c.fn);
        if (value > best) {
            best = value;
            best_cut = t;
        }
    }
    return best_cut;
}

std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> bad, Direction dir) {
    check_inputs(scores, bad);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Walk from the riskiest end: those rows are flagged bad first.
    if (dir == Direction::higher_is_good)
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    else
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    std::size_t nb = 0;
    for (int b : bad) nb += static_cast<std::size_t>(b);
    const double ng = static_cast<double>(n - nb);
    std::vector<CurvePoint> pts{{0.0, 0.0}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (bad[order[j]] ? tp : fp) += 1;
            ++j;
        }
        pts.push_back({static_cast<double>(fp) / ng, static_cast<double>(tp) / static_cast<double>(nb)});
        i = j;
    }
    return pts;
}

std::vector<CurvePoint> ecdf(std::span<const double> scores, std::span<const int> bad, int cls) {
    std::vector<double> v;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (bad[i] == cls) v.push_back(scores[i]);
    std::sort(v.begin(), v.end());
    std::vector<CurvePoint> pts;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i + 1 == v.size() || v[i + 1] != v[i])
            pts.push_back({v[i], static_cast<double>(i + 1) / static_cast<double>(v.size())});
    return pts;
}

double hhi(std::span<const double> counts) {
    double n = 0.0;
    for (double c : counts) {
        if (c < 0.0) throw ValidationError("grade counts must be nonnegative");
        n += c;
    }
    if (n <= 0.0) throw ValidationError("grade counts are all zero");
    double h = 0.0;
    for (double c : counts) h += (c / n) * (c / n);
    return h;
}

double binomial_test(std::size_t k, std::size_t n, double p) {
    if (k > n) throw ValidationError("binomial test needs k <= n");
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("binomial probability must lie in [0, 1]");
    if (p == 0.0) return k == 0 ? 1.0 : 0.0;
    if (p == 1.0) return k == n ? 1.0 : 0.0;
    boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
    const double d = boost::math::pdf(dist, static_cast<double>(k)) * (1.0 + 1e-7);
    double total = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double q = boost::math::pdf(dist, static_cast<double>(i));
        if (q <= d) total += q;
    }
    return std::min(1.0, total);
}

GradeTable master_scale(std::span<const double> pd, std::span<const int> bad, BinningParams params) {
    if (pd.size() != bad.size()) throw ValidationError("pd and target differ in length");
    for (double p : pd)
        if (!(p > 0.0 && p < 1.0)) throw ValidationError("pd values must lie strictly between 0 and 1");
    std::vector<std::string> labels;
    for (int b : bad) labels.emplace_back(b ? kBad : kGood);
    Dataset ds({Column::numeric("pd", std::vector<double>(pd.begin(), pd.end())),
                Column::categorical("target", std::move(labels))},
               TargetSpec{"target", std::string(kBad), std::string(kGood)});
    params.method = BinningMethod::woe_merge;
    params.monotone = Monotone::none;
    std::vector<std::string> vars{"pd"};
    const auto model = auto_bin(ds, vars, params);
    const auto& vb = model.variables.front();

    GradeTable gt;
    gt.grades.resize(vb.regular_bin_count());
    std::vector<double> pd_sum(gt.grades.size(), 0.0);
    for (std::size_t i = 0; i < pd.size(); ++i) {
        auto g = vb.bin_of_value(pd[i]);
        gt.grades[g].count += 1.0;
        gt.grades[g].bad += bad[i];
        pd_sum[g] += pd[i];
    }
    for (std::size_t g = 0; g < gt.grades.size(); ++g) {
        auto& grade = gt.grades[g];
        grade.label = vb.bins[g].label;
        grade.lower = g == 0 ? -std::numeric_limits<double>::infinity() : vb.breaks[g - 1];
        grade.upper = g == vb.breaks.size() ? std::numeric_limits<double>::infinity() : vb.breaks[g];
        grade.pd = grade.count > 0.0 ? pd_sum[g] / grade.count : 0.0;
        grade.observed = grade.count > 0.0 ? grade.bad / grade.count : 0.0;
        gt.n += grade.count;
    }
    if (gt.grades.size() < 2) gt.warnings.push_back("fewer than 2 grades could be formed");
    return gt;
}

GradeTable calibration_tests(GradeTable gt, double test_level, double ct_tolerance) {
    gt.test_level = test_level;
    gt.ct_tolerance = ct_tolerance;
    double n = 0.0, bads = 0.0, pd_mass = 0.0, hl = 0.0;
    std::vector<double> counts;
    for (auto& g : gt.grades) {
        if (!(g.count > 0.0)) throw ValidationError("grade '" + g.label + "' is empty");
        if (!(g.pd > 0.0 && g.pd < 1.0)) throw ValidationError("grade '" + g.label + "' pd must lie in (0, 1)");
        g.observed = g.bad / g.count;
        g.p_value = binomial_test(static_cast<std::size_t>(std::llround(g.bad)),
                                  static_cast<std::size_t>(std::llround(g.count)), g.pd);
        g.pass = *g.p_value >= test_level;
        const double e = g.count * g.pd;
        hl += (g.bad - e) * (g.bad - e) / (e * (1.0 - g.pd));
        n += g.count;
        bads += g.bad;
        pd_mass += g.count * g.pd;
        counts.push_back(g.count);
    }
    gt.n = n;
    gt.hhi = counts.empty() ? 0.0 : hhi(counts);
    gt.mean_pd = n > 0.0 ? pd_mass / n : 0.0;
    gt.observed_rate = n > 0.0 ? bads / n : 0.0;
    gt.ct_pass = std::abs(gt.observed_rate - gt.mean_pd) <= ct_tolerance * gt.mean_pd;
    const int df = static_cast<int>(gt.grades.size()) - 2;
    if (df <= 0) {
        gt.hl_statistic.reset();
        gt.hl_df.reset();
        gt.hl_p_value.reset();
        gt.warnings.push_back("Hosmer-Lemeshow test omitted: needs at least 3 grades");
    } else {
        gt.hl_statistic = hl;
        gt.hl_df = df;
        gt.hl_p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), hl));
    }
    return gt;
}

PerformanceReport evaluate(std::span<const double> scores, std::span<const int> bad, const EvaluateOptions& opts) {
    check_inputs(scores, bad);
    PerformanceReport r;
    r.direction = opts.direction;
    r.n = scores.size();
    for (int b : bad) r.n_bad += static_cast<std::size_t>(b);
    auto a = roc_auc(scores, bad, opts.direction);
    r.auc = a.auc;
    r.gini = a.gini;
    r.ks = ks(scores, bad);
    if (opts.bootstrap > 0)
        r.ci = auc_ci_bootstrap(scores, bad, opts.direction, opts.bootstrap, opts.seed, opts.level);
    const double cut =
        opts.cutoff ? *opts.cutoff : optimal_cutoff(scores, bad, CutoffObjective::youden, opts.direction);
    r.confusion = confusion(scores, bad, cut, opts.direction);
    return r;
}

void to_json(nlohmann::json& j, const BootstrapCI& c) {
    j = {{"level", c.level}, {"lower", c.lower}, {"upper", c.upper}, {"replicates", c.replicates},
         {"seed", c.seed},   {"redraws", c.redraws}};
}

void to_json(nlohmann::json& j, const Confusion& c) {
    j = {{"cutoff", c.cutoff},           {"tp", c.tp},
         {"fp", c.fp},                   {"tn", c.tn},
         {"fn", c.fn},                   {"accuracy", c.accuracy},
         {"sensitivity", c.sensitivity}, {"specificity", c.specificity},
         {"precision", c.precision},     {"npv", c.npv},
         {"youden", c.youden}};
}

void to_json(nlohmann::json& j, const PerformanceReport& r) {
    j = {{"direction", to_string(r.direction)}, {"n", r.n}, {"n_bad", r.n_bad}, {"auc", r.auc},
         {"gini", r.gini}, {"ks", r.ks}};
    j["ci"] = r.ci ? nlohmann::json(*r.ci) : nlohmann::json();
    j["confusion"] = r.confusion ? nlohmann::json(*r.confusion) : nlohmann::json();
}

void to_json(nlohmann::json& j, const GradeTable& g) {
    auto grades = nlohmann::json::array();
    for (const auto& x : g.grades) {
        nlohmann::json e = {{"grade", x.label}, {"pd", x.pd}, {"count", x.count}, {"bad", x.bad},
                            {"observed", x.observed}};
        e["p_value"] = x.p_value ? nlohmann::json(*x.p_value) : nlohmann::json();
        e["pass"] = x.pass ? nlohmann::json(*x.pass) : nlohmann::json();
        grades.push_back(std::move(e));
    }
    j = {{"grades", std::move(grades)}, {"n", g.n}, {"hhi", g.hhi}, {"mean_pd", g.mean_pd},
         {"observed_rate", g.observed_rate}, {"test_level", g.test_level}, {"ct_tolerance", g.ct_tolerance}};
    j["ct_pass"] = g.ct_pass ? nlohmann::json(*g.ct_pass) : nlohmann::json();
    if (g.hl_statistic) {
        j["hosmer_lemeshow"] = {{"statistic", *g.hl_statistic}, {"df", *g.hl_df}, {"p_value", *g.hl_p_value}};
    } else {
        j["hosmer_lemeshow"] = nullptr;
    }
    j["warnings"] = g.warnings;
}

void to_json(nlohmann::json& j, const CurvePoint& p) { j = nlohmann::json::array({p.x, p.y}); }

} // namespace forge
