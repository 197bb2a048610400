#include "forge/binning.hpp"

#include "forge/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

namespace forge {

// ------------------------------------------------------------ enum names

std::string_view to_string(BinningMethod m) {
    switch (m) {
    case BinningMethod::tree: return "tree";
    case BinningMethod::chimerge: return "chimerge";
    case BinningMethod::equal_width: return "equal_width";
    case BinningMethod::equal_freq: return "equal_freq";
    case BinningMethod::woe_merge: return "woe_merge";
    }
    return "tree";
}

std::string_view to_string(Monotone m) {
    switch (m) {
    case Monotone::none: return "none";
    case Monotone::increasing: return "increasing";
    case Monotone::decreasing: return "decreasing";
    case Monotone::automatic: return "auto";
    }
    return "none";
}

std::string_view to_string(MissingPolicy m) {
    return m == MissingPolicy::own_bin ? "own_bin" : "merge_nearest";
}

std::string_view to_string(UnseenPolicy m) {
    switch (m) {
    case UnseenPolicy::error: return "error";
    case UnseenPolicy::missing_bin: return "missing_bin";
    case UnseenPolicy::neutral: return "neutral";
    }
    return "error";
}

BinningMethod binning_method_from_string(std::string_view s) {
    for (auto m : {BinningMethod::tree, BinningMethod::chimerge, BinningMethod::equal_width,
                   BinningMethod::equal_freq, BinningMethod::woe_merge})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown binning method '" + std::string(s) + "'");
}

Monotone monotone_from_string(std::string_view s) {
    for (auto m : {Monotone::none, Monotone::increasing, Monotone::decreasing, Monotone::automatic})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown monotone direction '" + std::string(s) + "'");
}

MissingPolicy missing_policy_from_string(std::string_view s) {
    if (s == "own_bin") return MissingPolicy::own_bin;
    if (s == "merge_nearest") return MissingPolicy::merge_nearest;
    throw ValidationError("unknown missing policy '" + std::string(s) + "'");
}

UnseenPolicy unseen_policy_from_string(std::string_view s) {
    for (auto m : {UnseenPolicy::error, UnseenPolicy::missing_bin, UnseenPolicy::neutral})
        if (to_string(m) == s) return m;
    throw ValidationError("unknown unseen-level policy '" + std::string(s) + "'");
}

void BinningParams::validate() const {
    if (!(min_bin_fraction > 0.0 && min_bin_fraction < 0.5))
        throw ValidationError("min_bin_fraction must lie in (0, 0.5)");
    if (!(stop_limit >= 0.0 && stop_limit < 1.0)) throw ValidationError("stop_limit must lie in [0, 1)");
    if (max_bins < 2) throw ValidationError("max_bins must be at least 2");
    if (!(rare_level_threshold >= 0.0 && rare_level_threshold < 1.0))
        throw ValidationError("rare_level_threshold must lie in [0, 1)");
    if (!(zero_adj >= 0.0)) throw ValidationError("zero_adj must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
}

// ---------------------------------------------------------------- labels

std::string numeric_bin_label(double lower, double upper) {
    return "[" + format_number(lower) + "," + format_number(upper) + ")";
}

std::string group_label(std::span<const std::string> levels) {
    std::string out;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (i) out += kLevelSeparator;
        out += levels[i];
    }
    return out;
}

std::vector<std::string> split_group_label(std::string_view label) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = label.find(kLevelSeparator, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(label.substr(start));
            break;
        }
        out.emplace_back(label.substr(start, pos - start));
        start = pos + kLevelSeparator.size();
    }
    return out;
}

// --------------------------------------------------- VariableBinning/Model

std::size_t VariableBinning::bin_of_value(double x) const {
    return static_cast<std::size_t>(std::upper_bound(breaks.begin(), breaks.end(), x) - breaks.begin());
}

std::optional<std::size_t> VariableBinning::bin_of_level(std::string_view level) const {
    for (std::size_t g = 0; g < level_groups.size(); ++g)
        for (const auto& l : level_groups[g])
            if (l == level) return g;
    return std::nullopt;
}

std::optional<std::size_t> VariableBinning::missing_bin() const {
    if (has_missing_bin) return bins.size() - 1;
    return missing_merged_into;
}

bool BinningModel::contains(std::string_view name) const {
    return std::any_of(variables.begin(), variables.end(), [&](const auto& v) { return v.variable == name; });
}

const VariableBinning& BinningModel::at(std::string_view name) const {
    for (const auto& v : variables)
        if (v.variable == name) return v;
    throw NotFound("variable '" + std::string(name) + "' is not binned");
}

std::vector<std::string> BinningModel::names() const {
    std::vector<std::string> out;
    for (const auto& v : variables) out.push_back(v.variable);
    return out;
}

double chi_square_2x2(const ClassCounts& a, const ClassCounts& b) {
    const double n = a.total() + b.total();
    if (n <= 0.0) return 0.0;
    const double col_good = a.good + b.good;
    const double col_bad = a.bad + b.bad;
    double chi = 0.0;
    for (const auto* row : {&a, &b}) {
        const double rt = row->total();
        for (auto [obs, col] : {std::pair{row->good, col_good}, std::pair{row->bad, col_bad}}) {
            const double expected = rt * col / n;
            if (expected > 0.0) chi += (obs - expected) * (obs - expected) / expected;
        }
    }
    return chi;
}

namespace {

// Ordered units (distinct values or level groups) and a segmentation of
// them given by ascending cut positions in (0, units).
using Cuts = std::vector<std::size_t>;

ClassCounts add(const ClassCounts& a, const ClassCounts& b) { return {a.good + b.good, a.bad + b.bad}; }

std::vector<ClassCounts> aggregate(std::span<const ClassCounts> units, const Cuts& cuts) {
    std::vector<ClassCounts> bins(cuts.size() + 1);
    std::size_t b = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        while (b < cuts.size() && i >= cuts[b]) ++b;
        bins[b] = add(bins[b], units[i]);
    }
    return bins;
}

double total_iv(std::span<const ClassCounts> bins, double zero_adj) {
    double iv = 0.0;
    for (const auto& v : woe_from_counts(bins, zero_adj)) iv += v.iv;
    return iv;
}

double chi2_sf_df1(double x) { return std::erfc(std::sqrt(std::max(x, 0.0) / 2.0)); }

constexpr double kTestedCovariates = 1.0;

// Recursive binary chi-square partitioning with Bonferroni-adjusted
// significance, minimum bin size, relative IV gain and bin-count stops.
Cuts tree_cuts(std::span<const ClassCounts> units, double n_total, const BinningParams& p) {
    Cuts cuts;
    if (units.size() < 2) return cuts;
    const double min_n = p.min_bin_fraction * n_total;

    std::vector<ClassCounts> prefix(units.size() + 1);
    for (std::size_t i = 0; i < units.size(); ++i) prefix[i + 1] = add(prefix[i], units[i]);
    auto range = [&](std::size_t lo, std::size_t hi) {
        return ClassCounts{prefix[hi].good - prefix[lo].good, prefix[hi].bad - prefix[lo].bad};
    };

    while (cuts.size() + 1 < p.max_bins) {
        const auto bins = aggregate(units, cuts);
        const double iv_now = total_iv(bins, p.zero_adj);

        std::optional<std::size_t> chosen;
        double chosen_iv = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s <= cuts.size(); ++s) {
            const std::size_t lo = s == 0 ? 0 : cuts[s - 1];
            const std::size_t hi = s == cuts.size() ? units.size() : cuts[s];
            std::size_t candidates = 0;
            double best_chi = -1.0;
            std::size_t best_cut = 0;
            for (std::size_t c = lo + 1; c < hi; ++c) {
                auto left = range(lo, c);
                auto right = range(c, hi);
                if (left.total() < min_n || right.total() < min_n) continue;
                ++candidates;
                double chi = chi_square_2x2(left, right);
                if (chi > best_chi) {
                    best_chi = chi;
                    best_cut = c;
                }
            }
            if (candidates == 0) continue;
            // Bonferroni runs over tested covariates as in conditional
            // inference trees; binning tests a single one.
            const double p_adj = std::min(1.0, chi2_sf_df1(best_chi) * kTestedCovariates);
            if (p_adj > p.alpha) continue;
            Cuts trial = cuts;
            trial.insert(std::upper_bound(trial.begin(), trial.end(), best_cut), best_cut);
            const double iv_new = total_iv(aggregate(units, trial), p.zero_adj);
            if (iv_new > chosen_iv) {
                chosen_iv = iv_new;
                chosen = best_cut;
            }
        }
        if (!chosen) break;
        if (iv_now > 0.0 && (chosen_iv - iv_now) / iv_now < p.stop_limit) break;
        cuts.insert(std::upper_bound(cuts.begin(), cuts.end(), *chosen), *chosen);
    }
    return cuts;
}

// Greedy initial grouping: consecutive units accumulated until each group
// holds at least min_count rows; a short tail joins the previous group.
Cuts initial_groups(std::span<const ClassCounts> units, double min_count) {
    Cuts cuts;
    double acc = 0.0;
    for (std::size_t i = 0; i < units.size(); ++i) {
        acc += units[i].total();
        if (acc >= min_count && i + 1 < units.size()) {
            cuts.push_back(i + 1);
            acc = 0.0;
        }
    }
    if (!cuts.empty() && acc < min_count) cuts.pop_back();
    return cuts;
}

void remove_cut(Cuts& cuts, std::size_t bin_left, std::vector<double>* values = nullptr) {
    cuts.erase(cuts.begin() + static_cast<std::ptrdiff_t>(bin_left));
    if (values) values->erase(values->begin() + static_cast<std::ptrdiff_t>(bin_left));
}

// Index of the smallest bin below min_n (leftmost on ties), if any.
std::optional<std::size_t> smallest_undersized(std::span<const ClassCounts> bins, double min_n) {
    std::optional<std::size_t> out;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (bins[i].total() >= min_n) continue;
        if (!out || bins[i].total() < bins[*out].total()) out = i;
    }
    return out;
}

// Merge undersized bins into the neighbour chosen by `prefer_left`.
template <typename PreferLeft>
void merge_undersized(std::span<const ClassCounts> units, Cuts& cuts, double min_n, PreferLeft prefer_left,
                      std::vector<double>* values = nullptr) {
    while (!cuts.empty()) {
        auto bins = aggregate(units, cuts);
        auto small = smallest_undersized(bins, min_n);
        if (!small) break;
        std::size_t i = *small;
        bool left = i == bins.size() - 1 || (i > 0 && prefer_left(bins, i));
        remove_cut(cuts, left ? i - 1 : i, values);
    }
}

Cuts chimerge_cuts(std::span<const ClassCounts> units, double n_total, const BinningParams& p, bool fine) {
    Cuts cuts;
    if (fine) {
        for (std::size_t i = 1; i < units.size(); ++i) cuts.push_back(i);
    } else {
        cuts = initial_groups(units, 0.02 * n_total);
    }
    const double min_n = p.min_bin_fraction * n_total;
    const double critical = boost::math::quantile(boost::math::chi_squared(1.0), 1.0 - p.alpha);

    while (!cuts.empty()) {
        auto bins = aggregate(units, cuts);
        std::vector<double> chi(bins.size() - 1);
        for (std::size_t i = 0; i + 1 < bins.size(); ++i) chi[i] = chi_square_2x2(bins[i], bins[i + 1]);

        if (auto small = smallest_undersized(bins, min_n)) {
            std::size_t i = *small;
            bool left = i == bins.size() - 1 || (i > 0 && chi[i - 1] <= chi[i]);
            remove_cut(cuts, left ? i - 1 : i);
            continue;
        }
        auto it = std::min_element(chi.begin(), chi.end());
        if (bins.size() > p.max_bins || *it < critical) {
            remove_cut(cuts, static_cast<std::size_t>(it - chi.begin()));
            continue;
        }
        break;
    }
    return cuts;
}

Cuts woe_merge_cuts(std::span<const ClassCounts> units, double n_total, const BinningParams& p, bool fine) {
    const double min_n = p.min_bin_fraction * n_total;
    Cuts cuts;
    if (fine) {
        for (std::size_t i = 1; i < units.size(); ++i) cuts.push_back(i);
    } else {
        cuts = initial_groups(units, min_n);
    }
    while (!cuts.empty()) {
        auto bins = aggregate(units, cuts);
        auto woes = woe_from_counts(bins, p.zero_adj);
        if (auto small = smallest_undersized(bins, min_n)) {
            std::size_t i = *small;
            bool left = i == bins.size() - 1 ||
                        (i > 0 && std::abs(woes[i].woe - woes[i - 1].woe) <= std::abs(woes[i].woe - woes[i + 1].woe));
            remove_cut(cuts, left ? i - 1 : i);
            continue;
        }
        std::size_t pair = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i + 1 < bins.size(); ++i) {
            double d = std::abs(woes[i + 1].woe - woes[i].woe);
            if (d < best) {
                best = d;
                pair = i;
            }
        }
        double iv_now = 0.0;
        for (const auto& w : woes) iv_now += w.iv;
        Cuts trial = cuts;
        remove_cut(trial, pair);
        const double iv_new = total_iv(aggregate(units, trial), p.zero_adj);
        if (bins.size() > p.max_bins || iv_now <= 0.0 || (iv_now - iv_new) / iv_now < p.stop_limit) {
            cuts = std::move(trial);
            continue;
        }
        break;
    }
    return cuts;
}

struct NumericSegmentation {
    Cuts cuts;
    std::vector<double> break_values;
};

NumericSegmentation equal_width_cuts(std::span<const ValueCount> values, double n_total, const BinningParams& p) {
    NumericSegmentation seg;
    if (values.size() < 2) return seg;
    const double lo = values.front().value;
    const double hi = values.back().value;
    const double width = (hi - lo) / static_cast<double>(p.max_bins);
    for (std::size_t k = 1; k < p.max_bins; ++k) {
        double b = lo + width * static_cast<double>(k);
        auto pos = static_cast<std::size_t>(
            std::lower_bound(values.begin(), values.end(), b,
                             [](const ValueCount& vc, double x) { return vc.value < x; }) -
            values.begin());
        if (pos == 0 || pos >= values.size()) continue;
        if (!seg.cuts.empty() && seg.cuts.back() == pos) continue;  // empty interval
        seg.cuts.push_back(pos);
        seg.break_values.push_back(b);
    }
    std::vector<ClassCounts> units;
    for (const auto& v : values) units.push_back(v.counts);
    merge_undersized(
        units, seg.cuts, p.min_bin_fraction * n_total,
        [](const std::vector<ClassCounts>& bins, std::size_t i) { return bins[i - 1].total() <= bins[i + 1].total(); },
        &seg.break_values);
    return seg;
}

Cuts equal_freq_cuts(std::span<const ClassCounts> units, double n_total, const BinningParams& p) {
    double n = 0.0;
    for (const auto& u : units) n += u.total();
    Cuts cuts;
    double acc = 0.0;
    std::size_t k = 1;
    for (std::size_t i = 0; i + 1 < units.size() && k < p.max_bins; ++i) {
        acc += units[i].total();
        if (acc >= n * static_cast<double>(k) / static_cast<double>(p.max_bins)) {
            cuts.push_back(i + 1);
            while (k < p.max_bins && acc >= n * static_cast<double>(k) / static_cast<double>(p.max_bins)) ++k;
        }
    }
    merge_undersized(units, cuts, p.min_bin_fraction * n_total,
                     [](const std::vector<ClassCounts>& bins, std::size_t i) {
                         return bins[i - 1].total() <= bins[i + 1].total();
                     });
    return cuts;
}

Cuts segment_units(std::span<const ClassCounts> units, double n_total, const BinningParams& p, bool categorical) {
    switch (p.method) {
    case BinningMethod::tree: return tree_cuts(units, n_total, p);
    case BinningMethod::chimerge: return chimerge_cuts(units, n_total, p, categorical);
    case BinningMethod::woe_merge: return woe_merge_cuts(units, n_total, p, categorical);
    case BinningMethod::equal_freq: return equal_freq_cuts(units, n_total, p);
    case BinningMethod::equal_width: {
        // Only meaningful for numerics; categorical levels start one per bin.
        Cuts cuts;
        for (std::size_t i = 1; i < units.size(); ++i) cuts.push_back(i);
        merge_undersized(units, cuts, p.min_bin_fraction * n_total,
                         [](const std::vector<ClassCounts>& bins, std::size_t i) {
                             return bins[i - 1].total() <= bins[i + 1].total();
                         });
        return cuts;
    }
    }
    return {};
}

// Fill bins, WoE and IV from the stored training statistics.
void compute_stats(VariableBinning& vb, double zero_adj) {
    std::vector<ClassCounts> counts;
    std::vector<std::string> labels;
    if (vb.kind == ColumnKind::numeric) {
        counts.assign(vb.breaks.size() + 1, {});
        for (const auto& v : vb.value_counts) {
            auto& c = counts[vb.bin_of_value(v.value)];
            c = add(c, v.counts);
        }
        for (std::size_t i = 0; i <= vb.breaks.size(); ++i) {
            double lo = i == 0 ? -std::numeric_limits<double>::infinity() : vb.breaks[i - 1];
            double hi = i == vb.breaks.size() ? std::numeric_limits<double>::infinity() : vb.breaks[i];
            labels.push_back(numeric_bin_label(lo, hi));
        }
    } else {
        counts.assign(vb.level_groups.size(), {});
        std::unordered_map<std::string, std::size_t> group;
        for (std::size_t g = 0; g < vb.level_groups.size(); ++g)
            for (const auto& l : vb.level_groups[g]) group.emplace(l, g);
        for (const auto& lc : vb.level_counts) {
            auto& c = counts[group.at(lc.level)];
            c = add(c, lc.counts);
        }
        for (const auto& g : vb.level_groups) labels.push_back(group_label(g));
    }
    if (vb.missing_merged_into) {
        auto& c = counts.at(*vb.missing_merged_into);
        c = add(c, vb.missing_counts);
    }
    if (vb.has_missing_bin) {
        counts.push_back(vb.missing_counts);
        labels.emplace_back(kMissingLabel);
    }

    double n = 0.0;
    for (const auto& c : counts) n += c.total();
    auto woes = woe_from_counts(counts, zero_adj);
    vb.bins.clear();
    vb.total_iv = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        BinStat s;
        s.label = labels[i];
        s.count = counts[i].total();
        s.count_distr = n > 0.0 ? s.count / n : 0.0;
        s.good = counts[i].good;
        s.bad = counts[i].bad;
        s.badprob = s.count > 0.0 ? s.bad / s.count : 0.0;
        s.woe = woes[i].woe;
        s.bin_iv = woes[i].iv;
        s.is_missing = vb.has_missing_bin && i + 1 == counts.size();
        vb.total_iv += s.bin_iv;
        vb.bins.push_back(std::move(s));
    }
}

void validate_breaks(const VariableBinning& vb, const Breaks& breaks) {
    if (vb.kind == ColumnKind::numeric) {
        const auto* b = std::get_if<NumericBreaks>(&breaks);
        if (!b) throw ValidationError("variable '" + vb.variable + "' is numeric; expected numeric breaks");
        for (std::size_t i = 0; i < b->size(); ++i) {
            if (!std::isfinite((*b)[i]))
                throw ValidationError("breaks for '" + vb.variable + "' must be finite");
            if (i > 0 && !((*b)[i - 1] < (*b)[i]))
                throw ValidationError("breaks for '" + vb.variable + "' must be strictly ascending");
        }
        return;
    }
    const auto* g = std::get_if<LevelGroups>(&breaks);
    if (!g) throw ValidationError("variable '" + vb.variable + "' is categorical; expected level groups");
    std::set<std::string> known;
    for (const auto& lc : vb.level_counts) known.insert(lc.level);
    std::set<std::string> seen;
    for (const auto& group : *g) {
        if (group.empty()) throw ValidationError("empty level group for '" + vb.variable + "'");
        for (const auto& level : group) {
            if (!known.count(level))
                throw ValidationError("unknown level '" + level + "' for '" + vb.variable + "'");
            if (!seen.insert(level).second)
                throw ValidationError("level '" + level + "' appears in more than one group of '" +
                                      vb.variable + "'");
        }
    }
    for (const auto& level : known)
        if (!seen.count(level))
            throw ValidationError("level '" + level + "' of '" + vb.variable + "' is not assigned to a group");
}

void merge_missing_nearest(VariableBinning& vb, double zero_adj) {
    if (vb.missing_counts.total() <= 0.0 || vb.bins.empty()) return;
    const double rate = vb.missing_counts.bad / vb.missing_counts.total();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < vb.bins.size(); ++i) {
        if (vb.bins[i].count <= 0.0) continue;
        double d = std::abs(vb.bins[i].badprob - rate);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    vb.missing_merged_into = best;
    compute_stats(vb, zero_adj);
}

VariableBinning bin_numeric(const Column& col, std::span<const int> y, const BinningParams& p) {
    VariableBinning vb;
    vb.variable = col.name();
    vb.kind = ColumnKind::numeric;

    std::vector<std::pair<double, int>> rows;
    rows.reserve(col.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
        if (col.is_missing(r)) {
            (y[r] ? vb.missing_counts.bad : vb.missing_counts.good) += 1.0;
            continue;
        }
        rows.emplace_back(col.number(r), y[r]);
    }
    std::sort(rows.begin(), rows.end());
    for (const auto& [x, bad] : rows) {
        if (vb.value_counts.empty() || vb.value_counts.back().value != x) vb.value_counts.push_back({x, {}});
        (bad ? vb.value_counts.back().counts.bad : vb.value_counts.back().counts.good) += 1.0;
    }
    const double n_total = static_cast<double>(col.size());
    vb.constant = vb.value_counts.size() <= 1;

    std::vector<ClassCounts> units;
    for (const auto& v : vb.value_counts) units.push_back(v.counts);
    if (p.method == BinningMethod::equal_width) {
        auto seg = equal_width_cuts(vb.value_counts, n_total, p);
        vb.breaks = seg.break_values;
    } else {
        for (auto c : segment_units(units, n_total, p, false)) vb.breaks.push_back(vb.value_counts[c].value);
    }
    return vb;
}

VariableBinning bin_categorical(const Dataset& train, const Column& col, std::span<const int> y,
                                const BinningParams& p) {
    VariableBinning vb;
    vb.variable = col.name();
    vb.kind = ColumnKind::categorical;

    std::unordered_map<std::string, std::size_t> index;
    for (const auto& level : col.levels()) {
        index.emplace(level, vb.level_counts.size());
        vb.level_counts.push_back({level, {}});
    }
    for (std::size_t r = 0; r < col.size(); ++r) {
        if (col.is_missing(r)) {
            (y[r] ? vb.missing_counts.bad : vb.missing_counts.good) += 1.0;
            continue;
        }
        auto& c = vb.level_counts[index.at(col.label(r))].counts;
        (y[r] ? c.bad : c.good) += 1.0;
    }
    const double n_total = static_cast<double>(col.size());

    // Units: rare levels bundled, then ordered by their WoE.
    auto mapping = bundle_rare_levels(train, col.name(), p.rare_level_threshold, p.zero_adj);
    struct Unit {
        std::vector<std::string> levels;
        ClassCounts counts;
        double woe = 0.0;
    };
    std::vector<Unit> units;
    std::unordered_map<std::string, std::size_t> unit_of;
    for (const auto& lc : vb.level_counts) {
        const auto key = map_level(mapping, lc.level);
        auto [it, inserted] = unit_of.emplace(key, units.size());
        if (inserted) units.push_back({});
        auto& u = units[it->second];
        u.levels.push_back(lc.level);
        u.counts = add(u.counts, lc.counts);
    }
    vb.constant = units.size() <= 1;
    if (units.size() > 1) {
        std::vector<ClassCounts> counts;
        for (const auto& u : units) counts.push_back(u.counts);
        auto woes = woe_from_counts(counts, p.zero_adj);
        for (std::size_t i = 0; i < units.size(); ++i) units[i].woe = woes[i].woe;
        std::stable_sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) { return a.woe < b.woe; });
    }

    std::vector<ClassCounts> counts;
    for (const auto& u : units) counts.push_back(u.counts);
    auto cuts = segment_units(counts, n_total, p, true);
    std::size_t b = 0;
    vb.level_groups.assign(cuts.size() + 1, {});
    for (std::size_t i = 0; i < units.size(); ++i) {
        while (b < cuts.size() && i >= cuts[b]) ++b;
        for (const auto& l : units[i].levels) vb.level_groups[b].push_back(l);
    }
    if (units.empty()) vb.level_groups.clear();
    return vb;
}

double spearman_sign(std::span<const double> values) {
    const std::size_t k = values.size();
    if (k < 2) return 0.0;
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> rank(k);
    for (std::size_t i = 0; i < k;) {
        std::size_t j = i;
        while (j + 1 < k && values[order[j + 1]] == values[order[i]]) ++j;
        double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
        i = j + 1;
    }
    const double mean = (static_cast<double>(k) + 1.0) / 2.0;
    double cov = 0.0;
    for (std::size_t i = 0; i < k; ++i) cov += (static_cast<double>(i + 1) - mean) * (rank[i] - mean);
    return cov;
}

} // namespace

LevelMapping bundle_rare_levels(const Dataset& ds, std::string_view var, double threshold, double zero_adj) {
    const auto& col = ds.column(var);
    if (col.is_numeric()) throw ValidationError("variable '" + std::string(var) + "' is not categorical");
    auto y = ds.bad_flags();
    const auto& levels = col.levels();
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < levels.size(); ++i) index.emplace(levels[i], i);
    std::vector<ClassCounts> counts(levels.size());
    for (std::size_t r = 0; r < col.size(); ++r) {
        if (col.is_missing(r)) continue;
        auto& c = counts[index.at(col.label(r))];
        (y[r] ? c.bad : c.good) += 1.0;
    }
    LevelMapping mapping;
    const double n = static_cast<double>(col.size());
    std::vector<WoeValue> woes;
    double bad_total = 0.0, good_total = 0.0;
    for (const auto& c : counts) {
        bad_total += c.bad;
        good_total += c.good;
    }
    if (bad_total > 0.0 && good_total > 0.0) woes = woe_from_counts(counts, zero_adj);
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const bool rare = n > 0.0 && counts[i].total() / n < threshold;
        if (!rare || woes.empty()) {
            mapping[levels[i]] = levels[i];
            continue;
        }
        mapping[levels[i]] = std::string(woes[i].woe > 0.0 ? kMiscPositive : kMiscNegative);
    }
    return mapping;
}

std::string map_level(const LevelMapping& mapping, const std::string& level) {
    auto it = mapping.find(level);
    return it == mapping.end() ? level : it->second;
}

BinningModel auto_bin(const Dataset& train, std::span<const std::string> vars, const BinningParams& params) {
    params.validate();
    if (!train.has_target()) throw ValidationError("binning requires an encoded target");
    auto y = train.bad_flags();

    BinningModel model;
    model.params = params;
    model.n_train = train.n_rows();
    model.bad_rate = train.n_rows() ? static_cast<double>(train.bad_count()) / static_cast<double>(train.n_rows()) : 0.0;

    for (const auto& name : vars) {
        if (name == train.target_name()) continue;
        const auto& col = train.column(name);
        VariableBinning vb = col.is_numeric() ? bin_numeric(col, y, params) : bin_categorical(train, col, y, params);
        vb.has_missing_bin = vb.missing_counts.total() > 0.0 && params.missing_policy == MissingPolicy::own_bin;
        compute_stats(vb, params.zero_adj);
        if (params.monotone != Monotone::none && vb.kind == ColumnKind::numeric)
            vb = enforce_monotone(vb, params.monotone, params);
        if (params.missing_policy == MissingPolicy::merge_nearest) merge_missing_nearest(vb, params.zero_adj);
        model.variables.push_back(std::move(vb));
    }
    return model;
}

BinningModel auto_bin(const Dataset& train, const BinningParams& params) {
    auto vars = train.predictors();
    return auto_bin(train, vars, params);
}

BinSummary bin_summary(const BinningModel& model, std::string_view var) {
    const auto& vb = model.at(var);
    return {vb.variable, vb.bins, vb.total_iv};
}

Breaks current_breaks(const VariableBinning& vb) {
    if (vb.kind == ColumnKind::numeric) return vb.breaks;
    return vb.level_groups;
}

VariableBinning rebin(const VariableBinning& vb, const Breaks& breaks, const BinningParams& params) {
    validate_breaks(vb, breaks);
    VariableBinning out = vb;
    if (vb.kind == ColumnKind::numeric) out.breaks = std::get<NumericBreaks>(breaks);
    else out.level_groups = std::get<LevelGroups>(breaks);
    if (out.missing_merged_into) {
        out.missing_merged_into.reset();
        compute_stats(out, params.zero_adj);
        merge_missing_nearest(out, params.zero_adj);
    } else {
        compute_stats(out, params.zero_adj);
    }
    return out;
}

BinningModel set_breaks(const BinningModel& model, std::string_view var, const Breaks& breaks) {
    BinningModel out = model;
    for (auto& vb : out.variables) {
        if (vb.variable == var) {
            vb = rebin(vb, breaks, model.params);
            return out;
        }
    }
    throw NotFound("variable '" + std::string(var) + "' is not binned");
}

VariableBinning enforce_monotone(const VariableBinning& vb, Monotone direction, const BinningParams& params) {
    if (vb.kind != ColumnKind::numeric)
        throw ValidationError("monotonicity is undefined for categorical variable '" + vb.variable + "'");
    if (direction == Monotone::none) return vb;

    VariableBinning cur = vb;
    auto regular_rates = [](const VariableBinning& b) {
        std::vector<double> rates;
        for (std::size_t i = 0; i < b.regular_bin_count(); ++i) rates.push_back(b.bins[i].badprob);
        return rates;
    };
    // Empty regular bins carry no rate; fold them into a neighbour first.
    for (bool changed = true; changed && !cur.breaks.empty();) {
        changed = false;
        for (std::size_t i = 0; i < cur.regular_bin_count(); ++i) {
            if (cur.bins[i].count > 0.0) continue;
            auto breaks = cur.breaks;
            breaks.erase(breaks.begin() + static_cast<std::ptrdiff_t>(i == 0 ? 0 : i - 1));
            cur = rebin(cur, breaks, params);
            changed = true;
            break;
        }
    }
    if (direction == Monotone::automatic) {
        direction = spearman_sign(regular_rates(cur)) < 0.0 ? Monotone::decreasing : Monotone::increasing;
    }
    while (!cur.breaks.empty()) {
        auto rates = regular_rates(cur);
        std::optional<std::size_t> violation;
        for (std::size_t i = 0; i + 1 < rates.size(); ++i) {
            bool bad = direction == Monotone::increasing ? rates[i + 1] < rates[i] : rates[i + 1] > rates[i];
            if (bad) {
                violation = i;
                break;
            }
        }
        if (!violation) break;
        auto breaks = cur.breaks;
        breaks.erase(breaks.begin() + static_cast<std::ptrdiff_t>(*violation));
        cur = rebin(cur, breaks, params);
    }
    return cur;
}

BinningModel enforce_monotone(const BinningModel& model, std::string_view var, Monotone direction) {
    BinningModel out = model;
    for (auto& vb : out.variables) {
        if (vb.variable == var) {
            vb = enforce_monotone(vb, direction, model.params);
            return out;
        }
    }
    throw NotFound("variable '" + std::string(var) + "' is not binned");
}

Dataset apply_bins(const BinningModel& model, const Dataset& ds, BinTarget to, std::span<const std::string> vars) {
    std::vector<std::string> selected(vars.begin(), vars.end());
    if (selected.empty()) {
        for (const auto& vb : model.variables)
            if (ds.has_column(vb.variable)) selected.push_back(vb.variable);
    }
    const auto policy = model.params.unseen;

    std::vector<Column> cols;
    for (const auto& col : ds.columns()) {
        if (std::find(selected.begin(), selected.end(), col.name()) == selected.end()) {
            cols.push_back(col);
            continue;
        }
        const auto& vb = model.at(col.name());
        if (vb.kind != col.kind())
            throw ValidationError("column '" + col.name() + "' is " + std::string(to_string(col.kind())) +
                                  " but was binned as " + std::string(to_string(vb.kind)));

        // Resolve each row to a bin index, or nullopt for a neutral cell.
        auto unassigned = [&](std::size_t r, bool is_missing) -> std::optional<std::size_t> {
            if (is_missing) {
                if (auto m = vb.missing_bin()) return m;
            }
            switch (policy) {
            case UnseenPolicy::error:
                throw ValidationError(is_missing ? "missing value in '" + col.name() + "' (row " +
                                                       std::to_string(r + 1) + ") has no bin"
                                                 : "unseen level '" + col.label(r) + "' in '" + col.name() +
                                                       "' (row " + std::to_string(r + 1) + ")");
            case UnseenPolicy::missing_bin:
                if (auto m = vb.missing_bin()) return m;
                return std::nullopt;
            case UnseenPolicy::neutral: return std::nullopt;
            }
            return std::nullopt;
        };

        std::vector<std::optional<std::size_t>> assigned(col.size());
        for (std::size_t r = 0; r < col.size(); ++r) {
            if (col.is_missing(r)) {
                assigned[r] = unassigned(r, true);
            } else if (col.is_numeric()) {
                assigned[r] = vb.bin_of_value(col.number(r));
            } else {
                auto g = vb.bin_of_level(col.label(r));
                assigned[r] = g ? g : unassigned(r, false);
            }
        }

        std::vector<std::uint8_t> missing(col.size(), 0);
        if (to == BinTarget::bin) {
            std::vector<std::string> labels(col.size());
            std::vector<std::string> order;
            for (const auto& b : vb.bins) order.push_back(b.label);
            for (std::size_t r = 0; r < col.size(); ++r) {
                if (assigned[r]) labels[r] = vb.bins[*assigned[r]].label;
                else missing[r] = 1;
            }
            cols.push_back(Column::categorical(bin_column_name(vb.variable), std::move(labels), std::move(missing),
                                               std::move(order)));
        } else {
            std::vector<double> values(col.size(), 0.0);
            for (std::size_t r = 0; r < col.size(); ++r)
                values[r] = assigned[r] ? vb.bins[*assigned[r]].woe : 0.0;
            cols.push_back(Column::numeric(woe_column_name(vb.variable), std::move(values), std::move(missing)));
        }
    }
    return Dataset(std::move(cols), ds.target());
}

// ---------------------------------------------------------- breaks files

std::map<std::string, Breaks> parse_breaks_document(const nlohmann::json& doc) {
    std::map<std::string, Breaks> out;
    const auto& vars = doc.contains("variables") ? doc.at("variables") : doc;
    if (!vars.is_array()) throw ValidationError("breaks document must hold a 'variables' array");
    for (const auto& v : vars) {
        auto name = v.at("name").get<std::string>();
        if (v.contains("breaks")) {
            NumericBreaks b;
            for (const auto& x : v.at("breaks")) {
                if (!x.is_number()) throw ValidationError("breaks for '" + name + "' must be numbers");
                b.push_back(x.get<double>());
            }
            out[name] = std::move(b);
        } else if (v.contains("groups")) {
            LevelGroups groups;
            for (const auto& g : v.at("groups")) {
                if (g.is_string()) groups.push_back(split_group_label(g.get<std::string>()));
                else groups.push_back(g.get<std::vector<std::string>>());
            }
            out[name] = std::move(groups);
        } else {
            throw ValidationError("variable '" + name + "' needs 'breaks' or 'groups'");
        }
    }
    return out;
}

nlohmann::json breaks_document(const BinningModel& model) {
    auto vars = nlohmann::json::array();
    for (const auto& vb : model.variables) {
        if (vb.kind == ColumnKind::numeric) vars.push_back({{"name", vb.variable}, {"breaks", vb.breaks}});
        else vars.push_back({{"name", vb.variable}, {"groups", vb.level_groups}});
    }
    return {{"variables", std::move(vars)}};
}

// ------------------------------------------------------------------ JSON

void to_json(nlohmann::json& j, const BinningParams& p) {
    j = {{"method", to_string(p.method)},
         {"min_bin_fraction", p.min_bin_fraction},
         {"stop_limit", p.stop_limit},
         {"max_bins", p.max_bins},
         {"monotone", to_string(p.monotone)},
         {"rare_level_threshold", p.rare_level_threshold},
         {"missing_policy", to_string(p.missing_policy)},
         {"zero_adj", p.zero_adj},
         {"unseen", to_string(p.unseen)},
         {"conservative_missing", p.conservative_missing},
         {"alpha", p.alpha}};
}

void from_json(const nlohmann::json& j, BinningParams& p) {
    BinningParams d;
    p.method = binning_method_from_string(j.value("method", std::string(to_string(d.method))));
    p.min_bin_fraction = j.value("min_bin_fraction", d.min_bin_fraction);
    p.stop_limit = j.value("stop_limit", d.stop_limit);
    p.max_bins = j.value("max_bins", d.max_bins);
    p.monotone = monotone_from_string(j.value("monotone", std::string(to_string(d.monotone))));
    p.rare_level_threshold = j.value("rare_level_threshold", d.rare_level_threshold);
    p.missing_policy = missing_policy_from_string(j.value("missing_policy", std::string(to_string(d.missing_policy))));
    p.zero_adj = j.value("zero_adj", d.zero_adj);
    p.unseen = unseen_policy_from_string(j.value("unseen", std::string(to_string(d.unseen))));
    p.conservative_missing = j.value("conservative_missing", d.conservative_missing);
    p.alpha = j.value("alpha", d.alpha);
    p.validate();
}

void to_json(nlohmann::json& j, const BinStat& s) {
    j = {{"bin", s.label}, {"count", s.count}, {"count_distr", s.count_distr}, {"good", s.good},
         {"bad", s.bad},   {"badprob", s.badprob}, {"woe", s.woe}, {"bin_iv", s.bin_iv},
         {"is_missing", s.is_missing}};
}

void to_json(nlohmann::json& j, const VariableBinning& vb) {
    j = nlohmann::json::object();
    j["name"] = vb.variable;
    j["kind"] = to_string(vb.kind);
    if (vb.kind == ColumnKind::numeric) j["breaks"] = vb.breaks;
    else j["groups"] = vb.level_groups;
    j["has_missing_bin"] = vb.has_missing_bin;
    if (vb.missing_merged_into) j["missing_merged_into"] = *vb.missing_merged_into;
    j["constant"] = vb.constant;
    j["total_iv"] = vb.total_iv;
    j["bins"] = vb.bins;
    auto training = nlohmann::json::object();
    if (vb.kind == ColumnKind::numeric) {
        auto values = nlohmann::json::array();
        for (const auto& v : vb.value_counts) values.push_back({v.value, v.counts.good, v.counts.bad});
        training["values"] = std::move(values);
    } else {
        auto levels = nlohmann::json::array();
        for (const auto& l : vb.level_counts) levels.push_back({l.level, l.counts.good, l.counts.bad});
        training["levels"] = std::move(levels);
    }
    training["missing"] = {vb.missing_counts.good, vb.missing_counts.bad};
    j["training"] = std::move(training);
}

void from_json(const nlohmann::json& j, VariableBinning& vb) {
    vb = VariableBinning{};
    vb.variable = j.at("name").get<std::string>();
    vb.kind = column_kind_from_string(j.at("kind").get<std::string>());
    if (vb.kind == ColumnKind::numeric) vb.breaks = j.at("breaks").get<std::vector<double>>();
    else vb.level_groups = j.at("groups").get<LevelGroups>();
    vb.has_missing_bin = j.at("has_missing_bin").get<bool>();
    if (j.contains("missing_merged_into")) vb.missing_merged_into = j.at("missing_merged_into").get<std::size_t>();
    vb.constant = j.value("constant", false);
    vb.total_iv = j.at("total_iv").get<double>();
    for (const auto& b : j.at("bins")) {
        BinStat s;
        s.label = b.at("bin").get<std::string>();
        s.count = b.at("count").get<double>();
        s.count_distr = b.at("count_distr").get<double>();
        s.good = b.at("good").get<double>();
        s.bad = b.at("bad").get<double>();
        s.badprob = b.at("badprob").get<double>();
        s.woe = b.at("woe").get<double>();
        s.bin_iv = b.at("bin_iv").get<double>();
        s.is_missing = b.value("is_missing", false);
        vb.bins.push_back(std::move(s));
    }
    const auto& training = j.at("training");
    if (vb.kind == ColumnKind::numeric) {
        for (const auto& v : training.at("values"))
            vb.value_counts.push_back({v.at(0).get<double>(), {v.at(1).get<double>(), v.at(2).get<double>()}});
    } else {
        for (const auto& l : training.at("levels"))
            vb.level_counts.push_back({l.at(0).get<std::string>(), {l.at(1).get<double>(), l.at(2).get<double>()}});
    }
    const auto& m = training.at("missing");
    vb.missing_counts = {m.at(0).get<double>(), m.at(1).get<double>()};
}

void to_json(nlohmann::json& j, const BinningModel& m) {
    j = {{"version", 1}, {"params", m.params}, {"bad_rate", m.bad_rate}, {"n_train", m.n_train},
         {"variables", m.variables}};
}

void from_json(const nlohmann::json& j, BinningModel& m) {
    if (j.value("version", 0) != 1) throw ValidationError("unsupported binning model version");
    m.params = j.at("params").get<BinningParams>();
    m.bad_rate = j.at("bad_rate").get<double>();
    m.n_train = j.at("n_train").get<std::size_t>();
    m.variables = j.at("variables").get<std::vector<VariableBinning>>();
}

} // namespace forge
