#pragma once

#include "forge/dataset.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

// Binomial logit for P(bad): eta = intercept + sum(beta * x).
struct LogitModel {
    double intercept = 0.0;
    std::vector<std::string> features;
    std::vector<double> coefficients;
    std::vector<double> std_errors;  // intercept first, then features
    std::size_t n_obs = 0;
    double weight_sum = 0.0;
    double log_likelihood = 0.0;
    double deviance = 0.0;
    bool converged = false;
    bool separation = false;
    int iterations = 0;
    std::vector<std::string> warnings;

    std::size_t n_params() const { return features.size() + 1; }
    double coefficient(std::string_view feature) const;
};

struct LogitOptions {
    double tol = 1e-8;
    int max_iter = 25;
};

// X holds the features only; the intercept column is added internally.
LogitModel fit_logit(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const std::string> names,
                     std::optional<std::span<const double>> weights = std::nullopt, const LogitOptions& opts = {});
LogitModel fit_logit(const Dataset& ds, std::span<const std::string> features,
                     std::optional<std::span<const double>> weights = std::nullopt, const LogitOptions& opts = {});

Eigen::MatrixXd design_matrix(const Dataset& ds, std::span<const std::string> features);

Eigen::VectorXd linear_predictor(const LogitModel& m, const Eigen::MatrixXd& X);
Eigen::VectorXd predict_logit(const LogitModel& m, const Eigen::MatrixXd& X);
Eigen::VectorXd predict_logit(const LogitModel& m, const Dataset& ds);

// Weighted score vector X'(y - p), intercept component first.
Eigen::VectorXd score_vector(const LogitModel& m, const Eigen::MatrixXd& X, std::span<const int> y,
                             std::optional<std::span<const double>> weights = std::nullopt);

enum class StepDirection { forward, backward, both };
std::string_view to_string(StepDirection d);
StepDirection step_direction_from_string(std::string_view s);

struct StepwiseSpec {
    double k = 2.0;  // 2 for AIC, ln(n) for BIC
    StepDirection direction = StepDirection::both;
    std::vector<std::string> scope;
    std::vector<std::string> start;
    std::size_t max_steps = 1000;
    LogitOptions fit;
};

// deviance + k * (#features + 1)
double information_criterion(const LogitModel& m, double k);

struct StepCandidate {
    std::string action;  // "add" or "drop"
    std::string variable;
    double criterion = 0.0;
    bool failed = false;
    std::string error;
};

struct StepRecord {
    std::size_t step = 0;
    double incumbent = 0.0;  // criterion before the step
    std::vector<StepCandidate> candidates;
    std::optional<std::size_t> chosen;  // index into candidates
};

struct StepwiseResult {
    LogitModel model;
    double criterion = 0.0;
    std::vector<StepRecord> trace;
    std::vector<std::string> dropped_constant;
    std::vector<std::string> warnings;
};

StepwiseResult stepwise(const Dataset& data, const StepwiseSpec& spec,
                        std::optional<std::span<const double>> weights = std::nullopt);

struct VifRow {
    std::string variable;
    double r2 = 0.0;
    double vif = 1.0;  // +infinity under exact collinearity
};
struct VifReport {
    std::vector<VifRow> rows;
};

VifReport vif(const Eigen::MatrixXd& X, std::span<const std::string> names);
VifReport vif(const Dataset& ds, std::span<const std::string> features);

void to_json(nlohmann::json& j, const LogitModel& m);
void from_json(const nlohmann::json& j, LogitModel& m);
void to_json(nlohmann::json& j, const StepwiseResult& r);
void to_json(nlohmann::json& j, const VifReport& r);

} // namespace forge
