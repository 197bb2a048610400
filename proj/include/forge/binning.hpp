#pragma once

#include "forge/dataset.hpp"
#include "forge/woe.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace forge {

enum class BinningMethod { tree, chimerge, equal_width, equal_freq, woe_merge };
enum class Monotone { none, increasing, decreasing, automatic };
enum class MissingPolicy { own_bin, merge_nearest };
// What apply_bins does with a categorical level (or a missing value) that
// has no bin of its own.
enum class UnseenPolicy { error, missing_bin, neutral };

std::string_view to_string(BinningMethod m);
std::string_view to_string(Monotone m);
std::string_view to_string(MissingPolicy m);
std::string_view to_string(UnseenPolicy m);
BinningMethod binning_method_from_string(std::string_view s);
Monotone monotone_from_string(std::string_view s);
MissingPolicy missing_policy_from_string(std::string_view s);
UnseenPolicy unseen_policy_from_string(std::string_view s);

struct BinningParams {
    BinningMethod method = BinningMethod::tree;
    double min_bin_fraction = 0.05;
    double stop_limit = 0.10;
    std::size_t max_bins = 8;
    Monotone monotone = Monotone::none;
    double rare_level_threshold = 0.01;
    MissingPolicy missing_policy = MissingPolicy::own_bin;
    double zero_adj = 0.5;
    UnseenPolicy unseen = UnseenPolicy::error;
    // Missing bins never score better than a neutral (WoE 0) attribute.
    bool conservative_missing = false;
    // Significance level for tree splits (Bonferroni adjusted) and chimerge merges.
    double alpha = 0.05;

    void validate() const;
};

inline constexpr std::string_view kMissingLabel = "missing";
inline constexpr std::string_view kMiscPositive = "misc_pos";
inline constexpr std::string_view kMiscNegative = "misc_neg";
// Separator between levels of a merged categorical bin.
inline constexpr std::string_view kLevelSeparator = "%,%";

struct BinStat {
    std::string label;
    double count = 0.0;
    double count_distr = 0.0;
    double good = 0.0;
    double bad = 0.0;
    double badprob = 0.0;
    double woe = 0.0;
    double bin_iv = 0.0;
    bool is_missing = false;
};

struct ValueCount {
    double value = 0.0;
    ClassCounts counts;
};

struct LevelCount {
    std::string level;
    ClassCounts counts;
};

struct VariableBinning {
    std::string variable;
    ColumnKind kind = ColumnKind::numeric;
    // numeric: bins are [-Inf,b1), [b1,b2), ..., [bk,Inf)
    std::vector<double> breaks;
    // categorical: ordered groups of original levels
    std::vector<std::vector<std::string>> level_groups;
    bool has_missing_bin = false;
    // Set when missing values were folded into a regular bin.
    std::optional<std::size_t> missing_merged_into;

    std::vector<BinStat> bins;  // regular bins in order, then the missing bin
    double total_iv = 0.0;
    bool constant = false;

    // Training statistics the bins are computed from.
    std::vector<ValueCount> value_counts;  // numeric, ascending by value
    std::vector<LevelCount> level_counts;  // categorical, level order
    ClassCounts missing_counts;

    std::size_t regular_bin_count() const { return bins.size() - (has_missing_bin ? 1 : 0); }
    std::size_t bin_of_value(double x) const;
    std::optional<std::size_t> bin_of_level(std::string_view level) const;
    std::optional<std::size_t> missing_bin() const;
};

struct BinningModel {
    BinningParams params;
    double bad_rate = 0.0;
    std::size_t n_train = 0;
    std::vector<VariableBinning> variables;

    bool contains(std::string_view name) const;
    const VariableBinning& at(std::string_view name) const;
    std::vector<std::string> names() const;
};

std::string numeric_bin_label(double lower, double upper);
std::string group_label(std::span<const std::string> levels);
std::vector<std::string> split_group_label(std::string_view label);

BinningModel auto_bin(const Dataset& train, std::span<const std::string> vars, const BinningParams& params);
BinningModel auto_bin(const Dataset& train, const BinningParams& params);  // every predictor

struct BinSummary {
    std::string variable;
    std::vector<BinStat> rows;
    double total_iv = 0.0;
};
BinSummary bin_summary(const BinningModel& model, std::string_view var);

using NumericBreaks = std::vector<double>;
using LevelGroups = std::vector<std::vector<std::string>>;
using Breaks = std::variant<NumericBreaks, LevelGroups>;

// Current breaks of a variable in the form set_breaks accepts.
Breaks current_breaks(const VariableBinning& vb);

BinningModel set_breaks(const BinningModel& model, std::string_view var, const Breaks& breaks);

// Rebin one variable on its stored training statistics.
VariableBinning rebin(const VariableBinning& vb, const Breaks& breaks, const BinningParams& params);

enum class BinTarget { bin, woe };
Dataset apply_bins(const BinningModel& model, const Dataset& ds, BinTarget to,
                   std::span<const std::string> vars = {});

BinningModel enforce_monotone(const BinningModel& model, std::string_view var, Monotone direction);
VariableBinning enforce_monotone(const VariableBinning& vb, Monotone direction, const BinningParams& params);

// Rare categorical levels folded into misc_pos / misc_neg by the sign of
// their own zero-adjusted WoE. Frequent levels map to themselves.
using LevelMapping = std::map<std::string, std::string>;
LevelMapping bundle_rare_levels(const Dataset& ds, std::string_view var, double threshold,
                                double zero_adj = 0.5);
std::string map_level(const LevelMapping& mapping, const std::string& level);

// Pearson chi-square of the 2x2 table formed by two class-count cells.
double chi_square_2x2(const ClassCounts& a, const ClassCounts& b);

// Breaks files: the model's JSON, or {"variables":[{"name", "breaks"|"groups"}]},
// where groups may be arrays of levels or "%,%"-joined strings.
std::map<std::string, Breaks> parse_breaks_document(const nlohmann::json& doc);
nlohmann::json breaks_document(const BinningModel& model);

void to_json(nlohmann::json& j, const BinningParams& p);
void from_json(const nlohmann::json& j, BinningParams& p);
void to_json(nlohmann::json& j, const VariableBinning& vb);
void from_json(const nlohmann::json& j, VariableBinning& vb);
void to_json(nlohmann::json& j, const BinningModel& m);
void from_json(const nlohmann::json& j, BinningModel& m);
void to_json(nlohmann::json& j, const BinStat& s);

} // namespace forge
