#pragma once

#include "forge/binning.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

enum class Direction { higher_is_good, higher_is_bad };
std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

// `bad` is 1 for bad rows, 0 for good.
struct AucResult {
    double auc = 0.5;
    double gini = 0.0;
};
// Sample quantile with linear interpolation between order statistics (type 7).
double quantile7(std::vector<double> v, double prob);

AucResult roc_auc(std::span<const double> scores, std::span<const int> bad, Direction dir);

double ks(std::span<const double> scores, std::span<const int> bad);

struct BootstrapCI {
    double level = 0.95;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t replicates = 0;
    std::uint64_t seed = 0;
    std::size_t redraws = 0;  // degenerate resamples that were redrawn
};

// Percentile interval over stratified resamples. Replicate b draws from
// its own stream derive_seed(seed, b).
BootstrapCI auc_ci_bootstrap(std::span<const double> scores, std::span<const int> bad, Direction dir,
                             std::size_t replicates = 2000, std::uint64_t seed = 42, double level = 0.95);

// Bad is the positive class.
struct Confusion {
    double cutoff = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    double precision = 0.0;
    double npv = 0.0;
    double youden = 0.0;
};

// higher_is_good: score >= cutoff predicted good; higher_is_bad: score < cutoff predicted good.
Confusion confusion(std::span<const double> scores, std::span<const int> bad, double cutoff, Direction dir);

enum class CutoffObjective { misclassification, youden };
double optimal_cutoff(std::span<const double> scores, std::span<const int> bad, CutoffObjective objective,
                      Direction dir);

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};
// ROC as (false positive rate, true positive rate) with bad as positive.
std::vector<CurvePoint> roc_curve(std::span<const double> scores, std::span<const int> bad, Direction dir);
// Empirical CDF of one class's scores at each distinct score.
std::vector<CurvePoint> ecdf(std::span<const double> scores, std::span<const int> bad, int cls);

struct Grade {
    std::string label;
    double lower = 0.0;
    double upper = 0.0;
    double pd = 0.0;  // mean predicted pd of the grade
    double count = 0.0;
    double bad = 0.0;
    double observed = 0.0;
    std::optional<double> p_value;
    std::optional<bool> pass;
};

struct GradeTable {
    std::vector<Grade> grades;
    double n = 0.0;
    double hhi = 0.0;
    double mean_pd = 0.0;
    double observed_rate = 0.0;
    double test_level = 0.05;
    double ct_tolerance = 0.20;
    std::optional<bool> ct_pass;
    std::optional<double> hl_statistic;
    std::optional<int> hl_df;
    std::optional<double> hl_p_value;
    std::vector<std::string> warnings;
};

GradeTable master_scale(std::span<const double> pd, std::span<const int> bad, BinningParams params = {});
GradeTable calibration_tests(GradeTable gt, double test_level = 0.05, double ct_tolerance = 0.20);

// Two-sided exact binomial test of k successes in n trials at probability p.
double binomial_test(std::size_t k, std::size_t n, double p);

double hhi(std::span<const double> counts);

struct PerformanceReport {
    Direction direction = Direction::higher_is_good;
    std::size_t n = 0;
    std::size_t n_bad = 0;
    double auc = 0.5;
    double gini = 0.0;
    double ks = 0.0;
    std::optional<BootstrapCI> ci;
    std::optional<Confusion> confusion;
};

struct EvaluateOptions {
    Direction direction = Direction::higher_is_good;
    std::size_t bootstrap = 2000;  // 0 disables the interval
    std::uint64_t seed = 42;
    double level = 0.95;
    std::optional<double> cutoff;  // default: Youden-optimal
};

PerformanceReport evaluate(std::span<const double> scores, std::span<const int> bad, const EvaluateOptions& opts);

void to_json(nlohmann::json& j, const BootstrapCI& c);
void to_json(nlohmann::json& j, const Confusion& c);
void to_json(nlohmann::json& j, const PerformanceReport& r);
void to_json(nlohmann::json& j, const GradeTable& g);
void to_json(nlohmann::json& j, const CurvePoint& p);

} // namespace forge
