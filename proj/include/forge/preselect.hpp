#pragma once

#include "forge/dataset.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

// Per-variable outcome of one or more preselection rules. A dropped
// variable names the single rule that removed it.
struct VariableFilter {
    std::string variable;
    std::optional<double> iv;
    std::optional<double> psi;
    std::optional<double> missing_ratio;
    bool kept = true;
    std::string rule;        // rule that fired, empty when kept
    double threshold = 0.0;  // threshold of that rule
    std::string reason;
};

struct FilterReport {
    std::vector<VariableFilter> variables;
    std::vector<std::string> warnings;

    const VariableFilter* find(std::string_view variable) const;
    std::vector<std::string> kept() const;
    std::vector<std::string> dropped() const;
};

using VariableValues = std::map<std::string, double>;

FilterReport iv_filter(const VariableValues& ivs, double threshold = 0.02);

// Drops variables whose PSI exceeds threshold (0.25 marks a shifted population).
FilterReport psi_filter(const VariableValues& psis, double threshold = 0.25);

FilterReport missing_filter(const Dataset& ds, double max_ratio);

// Pairwise-complete Pearson correlation; NaN when either side is constant.
double pearson(const Column& x, const Column& y);

FilterReport correlation_filter(const Dataset& woe_data, double threshold = 0.7);

struct CramersV {
    double v = 0.0;
    bool degenerate = false;  // a side had a single level; v is 0
};
CramersV cramers_v(const Column& x, const Column& y);

FilterReport cv_filter(const Dataset& binned, const VariableValues& ivs, double threshold = 0.7);

// Later reports only see the survivors of earlier ones; the first rule to
// drop a variable is the one reported.
FilterReport combine(std::span<const FilterReport> reports);

void to_json(nlohmann::json& j, const FilterReport& r);
void from_json(const nlohmann::json& j, FilterReport& r);

} // namespace forge
