#pragma once

#include "forge/binning.hpp"
#include "forge/logit.hpp"
#include "forge/woe.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

struct ScalingParams {
    double pdo = 50.0;
    double points0 = 600.0;
    double odds0 = 1.0 / 19.0;  // bad odds at points0
    bool basepoints_eq0 = false;

    double factor() const;  // pdo / ln 2
    double offset() const;  // points0 + factor * ln(odds0)
    void validate() const;
};

struct CardBin {
    std::string label;
    double woe = 0.0;
    double unrounded = 0.0;
    int points = 0;
    bool is_missing = false;
};

struct CardVariable {
    std::string name;     // raw variable
    std::string feature;  // model feature (<name>_woe)
    double coefficient = 0.0;
    double share = 0.0;  // base points carried by this variable
    std::vector<CardBin> bins;
    int neutral_points = 0;  // rows resolved to no bin (neutral policy)
    VariableBinning binning;

    const CardBin* find(std::string_view label) const;
};

struct Scorecard {
    ScalingParams scaling;
    double intercept = 0.0;
    double base_unrounded = 0.0;
    int basepoints = 0;
    UnseenPolicy unseen = UnseenPolicy::error;
    bool conservative_missing = false;
    std::vector<CardVariable> variables;
    std::vector<std::string> warnings;

    const CardVariable& at(std::string_view name) const;
};

// Every model feature must be the WoE column of a binned variable. WoE
// values are taken from the WoE map (which may be weighted); bin
// definitions from the binning model.
Scorecard build_scorecard(const LogitModel& model, const BinningModel& bins, const WoeMap& woe,
                          const ScalingParams& scaling);

struct ScoreResult {
    std::vector<double> total;      // basepoints + sum of integer points
    std::vector<double> unrounded;  // offset - factor * eta
    std::vector<std::string> variables;
    std::vector<std::vector<int>> points;  // [variable][row], when requested
};

// Scores raw (unbinned) data.
ScoreResult score(const Scorecard& card, const Dataset& ds, bool per_variable = false);

double score_to_pd(double score, const ScalingParams& p);
double pd_to_score(double pd, const ScalingParams& p);

struct GainsRow {
    std::string bin;
    double lower = 0.0;
    double upper = 0.0;
    double count = 0.0;
    double cum_count = 0.0;
    double good = 0.0;
    double cum_good = 0.0;
    double bad = 0.0;
    double cum_bad = 0.0;
    double badprob = 0.0;
    double approval_rate = 0.0;
    double cum_badprob = 0.0;
};

struct GainsTable {
    std::vector<GainsRow> rows;  // highest scores first
    std::vector<std::string> warnings;
};

GainsTable gains_table(std::span<const double> scores, std::span<const int> bad, std::size_t bin_num = 10);

void to_json(nlohmann::json& j, const ScalingParams& p);
void from_json(const nlohmann::json& j, ScalingParams& p);
void to_json(nlohmann::json& j, const Scorecard& c);
void from_json(const nlohmann::json& j, Scorecard& c);
void to_json(nlohmann::json& j, const GainsTable& g);

// Flat per-bin table: variable,bin,woe,points
std::string scorecard_csv(const Scorecard& c);

} // namespace forge
