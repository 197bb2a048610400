#include "forge/error.hpp"
#include "forge/logit.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace forge;

namespace {

std::vector<std::string> names(std::initializer_list<const char*> l) { return {l.begin(), l.end()}; }

// Negative log-likelihood of a one-feature logit.
double nll(double b0, double b1, const std::vector<double>& x, const std::vector<int>& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = b0 + b1 * x[i];
        s += std::log1p(std::exp(-std::abs(eta))) + std::max(eta, 0.0) - y[i] * eta;
    }
    return s;
}

// Brute-force minimizer: repeatedly shrinking grid search around the best point.
std::pair<double, double> grid_minimize(const std::function<double(double, double)>& f) {
    double c0 = 0, c1 = 0, h = 4;
    for (int round = 0; round < 60; ++round) {
        double best = f(c0, c1), b0 = c0, b1 = c1;
        for (int i = -10; i <= 10; ++i)
            for (int j = -10; j <= 10; ++j) {
                const double v = f(c0 + h * i / 10, c1 + h * j / 10);
                if (v < best) best = v, b0 = c0 + h * i / 10, b1 = c1 + h * j / 10;
            }
        c0 = b0, c1 = b1;
        h *= 0.5;
    }
    return {c0, c1};
}

} // namespace

TEST_CASE("intercept-only model recovers the log odds") {
    std::vector<int> y(1000, 0);
    for (int i = 0; i < 300; ++i) y[i] = 1;
    Eigen::MatrixXd X(1000, 0);
    auto m = fit_logit(X, y, std::vector<std::string>{});
    CHECK(m.converged);
    CHECK(std::abs(m.intercept - std::log(0.3 / 0.7)) < 1e-8);
    auto p = predict_logit(m, X);
    CHECK(std::abs(p[0] - 0.3) < 1e-8);
    CHECK(std::abs(m.deviance + 2 * m.log_likelihood) < 1e-9);
}

TEST_CASE("2x2 table recovers the log odds ratio") {
    std::vector<double> x;
    std::vector<int> y;
    auto add = [&](double xv, int yv, int n) {
        for (int i = 0; i < n; ++i) x.push_back(xv), y.push_back(yv);
    };
    add(0, 0, 40);
    add(0, 1, 10);
    add(1, 0, 10);
    add(1, 1, 40);
    Eigen::MatrixXd X = Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    auto m = fit_logit(X, y, names({"x"}));
    CHECK(std::abs(m.coefficients[0] - std::log(40.0 * 40.0 / (10.0 * 10.0))) < 1e-8);
    CHECK(std::abs(m.intercept - std::log(10.0 / 40.0)) < 1e-8);
    auto g = score_vector(m, X, y);
    CHECK(g.cwiseAbs().maxCoeff() < 1e-6 * static_cast<double>(x.size()));

    SUBCASE("weights scale the deviance only") {
        std::vector<double> w(x.size(), 10.0);
        auto mw = fit_logit(X, y, names({"x"}), std::span<const double>(w));
        CHECK(std::abs(mw.coefficients[0] - m.coefficients[0]) < 1e-8);
        CHECK(std::abs(mw.intercept - m.intercept) < 1e-8);
        CHECK(std::abs(mw.deviance - 10 * m.deviance) < 1e-6);
    }
}

TEST_CASE("IRLS agrees with a brute-force likelihood search") {
    std::mt19937_64 g(9);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> x(150);
        std::vector<int> y(150);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = z(g);
            y[i] = u(g) < 1 / (1 + std::exp(-(-0.5 + 1.2 * x[i])));
        }
        Eigen::MatrixXd X = Eigen::Map<Eigen::VectorXd>(x.data(), 150);
        auto m = fit_logit(X, y, names({"x"}));
        auto [b0, b1] = grid_minimize([&](double a, double b) { return nll(a, b, x, y); });
        CHECK(std::abs(m.intercept - b0) < 1e-4);
        CHECK(std::abs(m.coefficients[0] - b1) < 1e-4);
        CHECK(score_vector(m, X, y).cwiseAbs().maxCoeff() < 1e-6 * 150);
    }
}

TEST_CASE("prediction") {
    LogitModel m;
    m.features = {"a"};
    m.coefficients = {2.0};
    Eigen::MatrixXd X(3, 1);
    X << 0, 1, 2;
    auto p = predict_logit(m, X);
    CHECK(p[0] == 0.5);
    CHECK(p[1] > p[0]);
    CHECK(p[2] > p[1]);
    Dataset ds({Column::numeric("b", {1.0})});
    CHECK_THROWS_AS(predict_logit(m, ds), NotFound);
}

TEST_CASE("collinear columns are named in the error") {
    std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8}, b{2, 4, 6, 8, 10, 12, 14, 16}, c{1, 0, 1, 1, 0, 0, 1, 0};
    std::vector<int> y{0, 1, 0, 1, 1, 0, 1, 0};
    auto ds = testing::make_numeric({{"a", a}, {"b", b}, {"c", c}}, y);
    try {
        fit_logit(ds, names({"a", "b", "c"}));
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("a") != std::string::npos);
        CHECK(msg.find("b") != std::string::npos);
    }
}

TEST_CASE("perfect separation is flagged, not fatal") {
    std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
    auto ds = testing::make_numeric({{"x", x}}, y);
    auto m = fit_logit(ds, names({"x"}));
    CHECK(m.separation);
    CHECK_FALSE(m.warnings.empty());
}

TEST_CASE("stepwise") {
    std::mt19937_64 g(17);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    const int n = 500;
    std::vector<double> inf(n), noise(n), konst(n, 1.0);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
        inf[i] = z(g);
        noise[i] = z(g);
        y[i] = u(g) < 1 / (1 + std::exp(-(0.3 + 1.5 * inf[i])));
    }
    auto ds = testing::make_numeric({{"inf", inf}, {"noise", noise}, {"konst", konst}}, y);

    SUBCASE("empty scope gives the intercept-only model") {
        StepwiseSpec spec;
        auto r = stepwise(ds, spec);
        CHECK(r.model.features.empty());
        CHECK(r.trace.empty());
    }
    SUBCASE("BIC adds the informative variable and the criterion falls") {
        StepwiseSpec spec;
        spec.k = std::log(static_cast<double>(n));
        spec.scope = names({"inf", "noise", "konst"});
        auto r = stepwise(ds, spec);
        CHECK(r.model.features == names({"inf"}));
        CHECK(r.dropped_constant == names({"konst"}));
        double prev = INFINITY;
        for (const auto& step : r.trace) {
            CHECK(step.incumbent < prev);
            prev = step.incumbent;
            for (const auto& c : step.candidates)
                if (!c.failed) CHECK(c.criterion >= 0.0);
        }
        CHECK(r.criterion < prev + 1e-12);
        CHECK(std::abs(r.criterion - information_criterion(r.model, spec.k)) < 1e-9);
        // direct oracle: the intercept-only and the 'inf' model criteria
        auto m0 = fit_logit(ds, std::vector<std::string>{});
        auto m1 = fit_logit(ds, names({"inf"}));
        CHECK(m1.deviance + spec.k * 2 < m0.deviance + spec.k);
        CHECK(std::abs(r.trace.front().incumbent - (m0.deviance + spec.k)) < 1e-9);
    }
    SUBCASE("forward from the full scope keeps the start model") {
        StepwiseSpec spec;
        spec.direction = StepDirection::forward;
        spec.scope = names({"inf", "noise"});
        spec.start = spec.scope;
        auto r = stepwise(ds, spec);
        CHECK(r.model.features == spec.start);
    }
    SUBCASE("backward drops the noise column under BIC") {
        StepwiseSpec spec;
        spec.k = std::log(static_cast<double>(n));
        spec.direction = StepDirection::backward;
        spec.scope = names({"inf", "noise"});
        spec.start = spec.scope;
        auto r = stepwise(ds, spec);
        CHECK(r.model.features == names({"inf"}));
    }
}

TEST_CASE("vif examples") {
    const int n = 300;
    std::mt19937_64 g(4);
    std::normal_distribution<double> z;
    Eigen::MatrixXd raw(n, 2);
    for (int i = 0; i < n; ++i) raw(i, 0) = z(g), raw(i, 1) = z(g);
    raw.rowwise() -= raw.colwise().mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 2);

    auto r = vif(q, names({"a", "b"}));
    CHECK(r.rows[0].vif == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(r.rows[1].vif == doctest::Approx(1.0).epsilon(1e-10));

    // x2 = x1 + e with var(e) = var(x1)/3 gives R^2 = 0.75
    Eigen::MatrixXd X(n, 2);
    X.col(0) = q.col(0);
    X.col(1) = q.col(0) + q.col(1) / std::sqrt(3.0);
    auto r2 = vif(X, names({"x1", "x2"}));
    CHECK(r2.rows[0].r2 == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(r2.rows[0].vif == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(r2.rows[1].vif == doctest::Approx(4.0).epsilon(1e-10));

    // affine rescaling of a column leaves VIF unchanged
    Eigen::MatrixXd Y = X;
    Y.col(1) = 7.0 * Y.col(1).array() + 3.0;
    CHECK(vif(Y, names({"x1", "x2"})).rows[0].vif == doctest::Approx(4.0).epsilon(1e-9));

    Eigen::MatrixXd D(n, 2);
    D.col(0) = q.col(0);
    D.col(1) = q.col(0);
    auto rd = vif(D, names({"x1", "x2"}));
    CHECK(std::isinf(rd.rows[0].vif));
    nlohmann::json j = rd;
    CHECK(j[0]["vif"] == "Infinity");
}

TEST_CASE("model JSON round trip") {
    std::vector<int> y{0, 1, 0, 1, 1, 0, 0, 0, 1, 0};
    std::vector<double> x{1, 3, 2, 5, 4, 1, 2, 2, 3, 1};
    auto ds = testing::make_numeric({{"x", x}}, y);
    auto m = fit_logit(ds, names({"x"}));
    nlohmann::json j = m;
    CHECK(j["coefficients"]["x"] == m.coefficients[0]);
    CHECK(nlohmann::json(j.get<LogitModel>()) == j);
}
