#include "forge/logit.hpp"

#include "forge/error.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>

namespace forge {

double LogitModel::coefficient(std::string_view feature) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i] == feature) return coefficients[i];
    throw NotFound("model has no feature '" + std::string(feature) + "'");
}

namespace {

constexpr double kMuEps = 10.0 * DBL_EPSILON;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double inv_logit(double eta) {
    double mu = 1.0 / (1.0 + std::exp(-eta));
    return std::clamp(mu, kMuEps, 1.0 - kMuEps);
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Xd(X.rows(), X.cols() + 1);
    Xd.col(0).setOnes();
    Xd.rightCols(X.cols()) = X;
    return Xd;
}

// -2 log-likelihood as a function of the linear predictor.
double deviance_of(const Eigen::VectorXd& eta, std::span<const int> y, const Eigen::VectorXd& w) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (w[i] == 0.0) continue;
        dev += 2.0 * w[i] * (y[static_cast<std::size_t>(i)] ? softplus(-eta[i]) : softplus(eta[i]));
    }
    return dev;
}

std::string column_name(std::span<const std::string> names, Eigen::Index j) {
    if (j == 0) return "(intercept)";
    auto k = static_cast<std::size_t>(j - 1);
    return k < names.size() ? names[k] : "x" + std::to_string(k + 1);
}

void check_rank(const Eigen::MatrixXd& Xd, const Eigen::VectorXd& w, std::span<const std::string> names) {
    Eigen::MatrixXd A = Xd;
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        if (w[i] == 0.0) A.row(i).setZero();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    lu.setThreshold(1e-10);
    if (lu.rank() == A.cols()) return;
    Eigen::MatrixXd K = lu.kernel();
    std::string cols;
    for (Eigen::Index j = 0; j < K.rows(); ++j) {
        if (K.row(j).cwiseAbs().maxCoeff() > 1e-8) {
            if (!cols.empty()) cols += ", ";
            cols += column_name(names, j);
        }
    }
    throw ValidationError("singular design matrix; collinear columns: " + cols);
}

} // namespace

LogitModel fit_logit(const Eigen::MatrixXd& X, std::span<const int> y, std::span<const std::string> names,
                     std::optional<std::span<const double>> weights, const LogitOptions& opts) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols() + 1;
    if (static_cast<std::size_t>(n) != y.size()) throw ValidationError("target length does not match the design");
    if (!names.empty() && names.size() != static_cast<std::size_t>(X.cols()))
        throw ValidationError("feature names do not match the design");
    if (n < p) throw ValidationError("need at least as many rows as parameters");
    if (!X.allFinite()) throw ValidationError("design matrix has non-finite values");

    Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
    if (weights) {
        if (weights->size() != static_cast<std::size_t>(n)) throw ValidationError("weights length mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = (*weights)[static_cast<std::size_t>(i)];
            if (!std::isfinite(v) || v < 0.0) throw ValidationError("observation weights must be nonnegative");
            w[i] = v;
        }
    }
    for (int v : y)
        if (v != 0 && v != 1) throw ValidationError("target must be coded 0/1");

    const Eigen::MatrixXd Xd = with_intercept(X);
    check_rank(Xd, w, names);

    Eigen::VectorXd mu(n), eta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        mu[i] = (w[i] * y[static_cast<std::size_t>(i)] + 0.5) / (w[i] + 1.0);
        eta[i] = std::log(mu[i] / (1.0 - mu[i]));
    }
    double dev_old = deviance_of(eta, y, w);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd beta_old;
    bool have_old = false;
    bool converged = false;
    double last_change = 0.0;
    int iter = 0;

    for (iter = 1; iter <= opts.max_iter; ++iter) {
        Eigen::VectorXd sw(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = mu[i] * (1.0 - mu[i]);
            z[i] = eta[i] + (y[static_cast<std::size_t>(i)] - mu[i]) / v;
            sw[i] = std::sqrt(w[i] * v);
        }
        Eigen::MatrixXd A = sw.asDiagonal() * Xd;
        Eigen::VectorXd b = sw.cwiseProduct(z);
        beta = A.colPivHouseholderQr().solve(b);
        eta = Xd * beta;
        double dev = deviance_of(eta, y, w);

        for (int half = 0; have_old && half < 30 && (!std::isfinite(dev) || dev > dev_old); ++half) {
            beta = 0.5 * (beta + beta_old);
            eta = Xd * beta;
            dev = deviance_of(eta, y, w);
        }
        if (!std::isfinite(dev)) throw Error("IRLS produced a non-finite deviance");
        for (Eigen::Index i = 0; i < n; ++i) mu[i] = inv_logit(eta[i]);

        last_change = dev_old - dev;
        const bool done = std::abs(dev - dev_old) < opts.tol * (std::abs(dev) + 0.1);
        dev_old = dev;
        beta_old = beta;
        have_old = true;
        if (done) {
            converged = true;
            break;
        }
    }

    LogitModel m;
    m.intercept = beta[0];
    m.features.assign(names.begin(), names.end());
    if (m.features.empty())
        for (Eigen::Index j = 1; j < p; ++j) m.features.push_back(column_name(names, j));
    m.coefficients.assign(beta.data() + 1, beta.data() + p);
    m.n_obs = static_cast<std::size_t>(n);
    m.weight_sum = w.sum();
    m.deviance = dev_old;
    m.log_likelihood = -0.5 * dev_old;
    m.iterations = std::min(iter, opts.max_iter);
    m.converged = converged;

    const double max_beta = beta.cwiseAbs().maxCoeff();
    if (max_beta > 15.0 && last_change > 0.0) {
        m.separation = true;
        m.converged = false;
        m.warnings.push_back("coefficients diverging (|beta| > 15 while the likelihood still improves); "
                             "data look separable");
    } else if (!converged) {
        m.warnings.push_back("IRLS did not converge in " + std::to_string(opts.max_iter) + " iterations");
    }

    Eigen::VectorXd W(n);
    for (Eigen::Index i = 0; i < n; ++i) W[i] = w[i] * mu[i] * (1.0 - mu[i]);
    Eigen::MatrixXd info = Xd.transpose() * W.asDiagonal() * Xd;
    Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    for (Eigen::Index j = 0; j < p; ++j) m.std_errors.push_back(std::sqrt(std::max(cov(j, j), 0.0)));
    return m;
}

Eigen::MatrixXd design_matrix(const Dataset& ds, std::span<const std::string> features) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.n_rows()), static_cast<Eigen::Index>(features.size()));
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (!ds.has_column(features[j])) throw NotFound("missing feature column '" + features[j] + "'");
        const auto& col = ds.column(features[j]);
        if (!col.is_numeric()) throw ValidationError("feature '" + features[j] + "' is not numeric");
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            if (col.is_missing(r))
                throw ValidationError("feature '" + features[j] + "' has a missing value in row " +
                                      std::to_string(r + 1));
            X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = col.number(r);
        }
    }
    return X;
}

LogitModel fit_logit(const Dataset& ds, std::span<const std::string> features,
                     std::optional<std::span<const double>> weights, const LogitOptions& opts) {
    auto y = ds.bad_flags();
    return fit_logit(design_matrix(ds, features), y, features, weights, opts);
}

Eigen::VectorXd linear_predictor(const LogitModel& m, const Eigen::MatrixXd& X) {
    if (static_cast<std::size_t>(X.cols()) != m.features.size())
        throw ValidationError("design has " + std::to_string(X.cols()) + " columns, model expects " +
                              std::to_string(m.features.size()));
    Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(m.coefficients.data(),
                                                             static_cast<Eigen::Index>(m.coefficients.size()));
    Eigen::VectorXd eta = X * beta;
    eta.array() += m.intercept;
    return eta;
}

Eigen::VectorXd predict_logit(const LogitModel& m, const Eigen::MatrixXd& X) {
    Eigen::VectorXd eta = linear_predictor(m, X);
    return eta.unaryExpr([](double e) { return 1.0 / (1.0 + std::exp(-e)); });
}

Eigen::VectorXd predict_logit(const LogitModel& m, const Dataset& ds) {
    return predict_logit(m, design_matrix(ds, m.features));
}

Eigen::VectorXd score_vector(const LogitModel& m, const Eigen::MatrixXd& X, std::span<const int> y,
                             std::optional<std::span<const double>> weights) {
    Eigen::VectorXd p = predict_logit(m, X);
    Eigen::VectorXd r(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double w = weights ? (*weights)[static_cast<std::size_t>(i)] : 1.0;
        r[i] = w * (y[static_cast<std::size_t>(i)] - p[i]);
    }
    return with_intercept(X).transpose() * r;
}

std::string_view to_string(StepDirection d) {
    switch (d) {
    case StepDirection::forward: return "forward";
    case StepDirection::backward: return "backward";
    case StepDirection::both: return "both";
    }
    return "both";
}

StepDirection step_direction_from_string(std::string_view s) {
    for (auto d : {StepDirection::forward, StepDirection::backward, StepDirection::both})
        if (to_string(d) == s) return d;
    throw ValidationError("unknown stepwise direction '" + std::string(s) + "'");
}

double information_criterion(const LogitModel& m, double k) {
    return m.deviance + k * static_cast<double>(m.n_params());
}

StepwiseResult stepwise(const Dataset& data, const StepwiseSpec& spec, std::optional<std::span<const double>> weights) {
    if (!(spec.k > 0.0)) throw ValidationError("criterion penalty k must be positive");
    for (const auto& s : spec.start)
        if (std::find(spec.scope.begin(), spec.scope.end(), s) == spec.scope.end())
            throw ValidationError("start variable '" + s + "' is not in scope");

    StepwiseResult result;
    std::vector<std::string> scope;
    for (const auto& name : spec.scope) {
        const auto& col = data.column(name);
        if (!col.is_numeric()) throw ValidationError("candidate '" + name + "' is not numeric");
        bool constant = true;
        for (std::size_t r = 1; r < col.size() && constant; ++r)
            constant = col.number(r) == col.number(0);
        if (constant) {
            result.dropped_constant.push_back(name);
            result.warnings.push_back("'" + name + "' has zero variance; removed from the candidates");
            continue;
        }
        scope.push_back(name);
    }
    std::vector<std::string> current;
    for (const auto& s : spec.start)
        if (std::find(scope.begin(), scope.end(), s) != scope.end()) current.push_back(s);

    auto y = data.bad_flags();
    auto fit = [&](const std::vector<std::string>& vars) {
        return fit_logit(design_matrix(data, vars), y, vars, weights, spec.fit);
    };

    result.model = fit(current);
    result.criterion = information_criterion(result.model, spec.k);

    const bool can_add = spec.direction != StepDirection::backward;
    const bool can_drop = spec.direction != StepDirection::forward;
    for (std::size_t step = 1; step <= spec.max_steps; ++step) {
        StepRecord rec;
        rec.step = step;
        rec.incumbent = result.criterion;
        std::vector<std::vector<std::string>> moves;
        if (can_drop) {
            for (const auto& v : current) {
                std::vector<std::string> next;
                for (const auto& c : current)
                    if (c != v) next.push_back(c);
                rec.candidates.push_back({"drop", v, 0.0, false, {}});
                moves.push_back(std::move(next));
            }
        }
        if (can_add) {
            for (const auto& v : scope) {
                if (std::find(current.begin(), current.end(), v) != current.end()) continue;
                auto next = current;
                next.push_back(v);
                rec.candidates.push_back({"add", v, 0.0, false, {}});
                moves.push_back(std::move(next));
            }
        }
        if (rec.candidates.empty()) break;

        std::vector<std::optional<LogitModel>> fits(moves.size());
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < moves.size(); ++i) {
            auto& cand = rec.candidates[i];
            try {
                fits[i] = fit(moves[i]);
                cand.criterion = information_criterion(*fits[i], spec.k);
            } catch (const Error& e) {
                cand.failed = true;
                cand.error = e.what();
                cand.criterion = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            if (!best || cand.criterion < rec.candidates[*best].criterion) best = i;
        }
        const bool improves = best && rec.candidates[*best].criterion < result.criterion;
        if (improves) {
            rec.chosen = best;
            current = moves[*best];
            result.model = std::move(*fits[*best]);
            result.criterion = rec.candidates[*best].criterion;
        }
        result.trace.push_back(std::move(rec));
        if (!improves) break;
    }
    for (const auto& w : result.model.warnings) result.warnings.push_back(w);
    return result;
}

VifReport vif(const Eigen::MatrixXd& X, std::span<const std::string> names) {
    const Eigen::Index n = X.rows(), k = X.cols();
    if (k < 2) throw ValidationError("VIF needs at least two columns");
    if (n <= k) throw ValidationError("VIF needs more rows than columns");
    VifReport report;
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::MatrixXd A(n, k);
        A.col(0).setOnes();
        Eigen::Index c = 1;
        for (Eigen::Index j = 0; j < k; ++j)
            if (j != i) A.col(c++) = X.col(j);
        Eigen::VectorXd target = X.col(i);
        Eigen::VectorXd resid = target - A * A.colPivHouseholderQr().solve(target);
        const double sst = (target.array() - target.mean()).square().sum();
        const double ssr = resid.squaredNorm();
        VifRow row;
        row.variable = static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                    : "x" + std::to_string(i + 1);
        if (sst <= 0.0 || ssr <= 1e-12 * sst) {
            row.r2 = 1.0;
            row.vif = std::numeric_limits<double>::infinity();
        } else {
            row.r2 = 1.0 - ssr / sst;
            row.vif = 1.0 / (1.0 - row.r2);
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

VifReport vif(const Dataset& ds, std::span<const std::string> features) {
    return vif(design_matrix(ds, features), features);
}

namespace {

nlohmann::json number_or_marker(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
    return v;
}

} // namespace

void to_json(nlohmann::json& j, const LogitModel& m) {
    auto coefs = nlohmann::json::object();
    for (std::size_t i = 0; i < m.features.size(); ++i) coefs[m.features[i]] = m.coefficients[i];
    j = {{"intercept", m.intercept},
         {"features", m.features},
         {"coefficients", coefs},
         {"std_errors", m.std_errors},
         {"diagnostics",
          {{"n_obs", m.n_obs},
           {"weight_sum", m.weight_sum},
           {"log_likelihood", m.log_likelihood},
           {"deviance", m.deviance},
           {"converged", m.converged},
           {"separation", m.separation},
           {"iterations", m.iterations},
           {"warnings", m.warnings}}}};
}

void from_json(const nlohmann::json& j, LogitModel& m) {
    m = LogitModel{};
    m.intercept = j.at("intercept").get<double>();
    m.features = j.at("features").get<std::vector<std::string>>();
    for (const auto& f : m.features) m.coefficients.push_back(j.at("coefficients").at(f).get<double>());
    m.std_errors = j.value("std_errors", std::vector<double>{});
    const auto& d = j.at("diagnostics");
    m.n_obs = d.at("n_obs").get<std::size_t>();
    m.weight_sum = d.at("weight_sum").get<double>();
    m.log_likelihood = d.at("log_likelihood").get<double>();
    m.deviance = d.at("deviance").get<double>();
    m.converged = d.at("converged").get<bool>();
    m.separation = d.value("separation", false);
    m.iterations = d.at("iterations").get<int>();
    m.warnings = d.value("warnings", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const StepwiseResult& r) {
    auto trace = nlohmann::json::array();
    for (const auto& rec : r.trace) {
        auto cands = nlohmann::json::array();
        for (const auto& c : rec.candidates) {
            nlohmann::json e = {{"action", c.action}, {"variable", c.variable},
                                {"criterion", number_or_marker(c.criterion)}};
            if (c.failed) e["error"] = c.error;
            cands.push_back(std::move(e));
        }
        nlohmann::json e = {{"step", rec.step}, {"incumbent", rec.incumbent}, {"candidates", std::move(cands)}};
        if (rec.chosen) {
            e["chosen"] = {{"action", rec.candidates[*rec.chosen].action},
                           {"variable", rec.candidates[*rec.chosen].variable}};
        } else {
            e["chosen"] = nullptr;
        }
        trace.push_back(std::move(e));
    }
    j = {{"model", r.model},
         {"criterion", r.criterion},
         {"trace", std::move(trace)},
         {"dropped_constant", r.dropped_constant},
         {"warnings", r.warnings}};
}

void to_json(nlohmann::json& j, const VifReport& r) {
    j = nlohmann::json::array();
    for (const auto& row : r.rows)
        j.push_back({{"variable", row.variable}, {"r2", row.r2}, {"vif", number_or_marker(row.vif)}});
}

} // namespace forge
