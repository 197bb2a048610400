#pragma once

#include "forge/dataset.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

struct ClassCounts {
    double good = 0.0;
    double bad = 0.0;
    double total() const { return good + bad; }
};

// Weight of evidence of one bin together with its adjusted class shares.
struct WoeValue {
    double f_good = 0.0;
    double f_bad = 0.0;
    double woe = 0.0;
    double iv = 0.0;
};

// WoE and IV contributions for a set of bins.
//
// A bin with a zero count in one class gets zero_adj added to that class
// count before the class shares are normalised. With bad_numerator the
// WoE is ln(f_bad / f_good), so riskier bins carry larger values.
std::vector<WoeValue> woe_from_counts(std::span<const ClassCounts> bins, double zero_adj,
                                      bool bad_numerator = true);

struct WoeBin {
    std::string label;
    double n_good = 0.0;
    double n_bad = 0.0;
    double f_good = 0.0;
    double f_bad = 0.0;
    double woe = 0.0;
    double iv = 0.0;
};

struct VariableWoe {
    std::string variable;
    std::vector<WoeBin> bins;
    double iv = 0.0;

    const WoeBin* find(std::string_view label) const;
};

struct WoeMap {
    double zero_adj = 0.5;
    bool bad_numerator = true;
    bool weighted = false;
    std::vector<VariableWoe> variables;

    const VariableWoe* find(std::string_view variable) const;
    const VariableWoe& at(std::string_view variable) const;
};

// Column naming used between binning, WoE and modelling stages.
std::string base_variable_name(std::string_view column_name);  // strips _bin / _woe
std::string bin_column_name(std::string_view variable);
std::string woe_column_name(std::string_view variable);

// Fit WoEs on a binned dataset: every non-target column must be
// categorical (bin labels). Missing cells are skipped.
WoeMap fit_woe(const Dataset& binned, std::optional<std::span<const double>> weights = std::nullopt,
               double zero_adj = 0.5, bool bad_numerator = true);

// Replace every mapped bin column by its numeric WoE column (<var>_woe).
Dataset apply_woe(const WoeMap& map, const Dataset& binned);

enum class StabilityLabel { stable, shifting, shifted };
std::string_view to_string(StabilityLabel label);
StabilityLabel stability_label(double psi);

struct PsiRow {
    std::string label;
    double expected = 0.0;
    double actual = 0.0;
    double difference = 0.0;
    double index = 0.0;
};

struct PsiResult {
    double psi = 0.0;
    StabilityLabel label = StabilityLabel::stable;
    std::vector<PsiRow> rows;
};

// Population stability index between two bin distributions. Inputs are
// counts or shares per bin in the same order; each side is normalised and
// zero masses receive zero_adj first.
PsiResult psi(std::span<const double> expected, std::span<const double> actual, double zero_adj = 0.5,
              std::span<const std::string> labels = {});

struct VariableStability {
    std::string variable;
    PsiResult result;
};

struct StabilityReport {
    std::vector<VariableStability> variables;
    const VariableStability* find(std::string_view variable) const;
};

// PSI of every shared categorical (binned) column between two samples. The
// bin universe is the union of labels, ordered as in the expected sample.
StabilityReport stability(const Dataset& expected_binned, const Dataset& actual_binned,
                          double zero_adj = 0.5);

void to_json(nlohmann::json& j, const WoeMap& m);
void from_json(const nlohmann::json& j, WoeMap& m);
void to_json(nlohmann::json& j, const StabilityReport& r);

} // namespace forge
