#include "forge/error.hpp"
#include "forge/woe.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace forge;

namespace {

// Binned dataset with one column from (label, good, bad) triples.
Dataset binned(const std::vector<std::tuple<std::string, int, int>>& cells, const std::string& name = "x_bin") {
    std::vector<std::string> labels, y;
    for (const auto& [l, g, b] : cells) {
        for (int i = 0; i < g; ++i) labels.push_back(l), y.emplace_back("good");
        for (int i = 0; i < b; ++i) labels.push_back(l), y.emplace_back("bad");
    }
    return Dataset({Column::categorical(name, labels), Column::categorical("y", y)}, TargetSpec{"y", "bad", "good"});
}

} // namespace

TEST_CASE("toy table A(g3,b1) B(g1,b3)") {
    std::vector<ClassCounts> bins{{3, 1}, {1, 3}};
    auto v = woe_from_counts(bins, 0.5);
    CHECK(v[0].woe == doctest::Approx(std::log((1.0 / 4) / (3.0 / 4))).epsilon(1e-12));
    CHECK(v[1].woe == doctest::Approx(std::log((3.0 / 4) / (1.0 / 4))).epsilon(1e-12));
    CHECK(std::abs(v[0].woe + 1.0986122886681098) < 1e-12);
    const double iv = v[0].iv + v[1].iv;
    const double oracle = (0.25 - 0.75) * std::log(1.0 / 3.0) + (0.75 - 0.25) * std::log(3.0);
    CHECK(std::abs(iv - oracle) < 1e-12);
    CHECK(std::abs(iv - std::log(3.0)) < 1e-12);
}

TEST_CASE("single bin has zero WoE and IV") {
    std::vector<ClassCounts> bins{{5, 2}};
    auto v = woe_from_counts(bins, 0.5);
    CHECK(v[0].woe == 0.0);
    CHECK(v[0].iv == 0.0);
}

TEST_CASE("zero adjustment applies to the empty class only") {
    std::vector<ClassCounts> bins{{3, 1}, {2, 0}};
    auto v = woe_from_counts(bins, 0.5);
    const double oracle = std::log((0.5 / 1.5) / (2.0 / 5.0));
    CHECK(std::abs(v[1].woe - oracle) < 1e-12);
    CHECK(std::abs(v[1].woe + 0.1823215567939546) < 1e-12);
    double fg = 0, fb = 0;
    for (auto& x : v) fg += x.f_good, fb += x.f_bad;
    CHECK(std::abs(fg - 1) < 1e-12);
    CHECK(std::abs(fb - 1) < 1e-12);
}

TEST_CASE("WoE input errors") {
    std::vector<ClassCounts> one_class{{3, 0}, {2, 0}};
    CHECK_THROWS_AS(woe_from_counts(one_class, 0.5), ValidationError);
    std::vector<ClassCounts> ok{{3, 1}};
    CHECK_THROWS_AS(woe_from_counts(ok, -1), ValidationError);
}

TEST_CASE("fit_woe and apply_woe on a binned dataset") {
    auto ds = binned({{"A", 3, 1}, {"B", 1, 3}});
    auto map = fit_woe(ds);
    const auto& v = map.at("x");
    CHECK(v.variable == "x");
    CHECK(std::abs(v.iv - std::log(3.0)) < 1e-12);
    CHECK(std::abs(v.find("A")->woe + 1.0986122886681098) < 1e-12);

    auto applied = apply_woe(map, ds);
    REQUIRE(applied.has_column("x_woe"));
    CHECK(std::abs(applied.column("x_woe").number(0) + 1.0986122886681098) < 1e-12);

    // sum of n_x * woe_x equals the decomposition by class shares
    double lhs = 0, rhs = 0;
    for (double w : applied.column("x_woe").numbers()) lhs += w;
    for (const auto& b : v.bins) rhs += (b.n_good + b.n_bad) * (std::log(b.f_bad) - std::log(b.f_good));
    CHECK(std::abs(lhs - rhs) < 1e-12);

    auto unknown = binned({{"Z", 1, 1}});
    CHECK_THROWS_AS(apply_woe(map, unknown), ValidationError);
}

TEST_CASE("fit_woe rejects numeric columns and bad weights") {
    auto ds = testing::make_numeric({{"x", {1, 2}}}, {0, 1});
    CHECK_THROWS_AS(fit_woe(ds), ValidationError);
    auto b = binned({{"A", 3, 1}, {"B", 1, 3}});
    std::vector<double> neg(8, 1.0);
    neg[0] = -1;
    CHECK_THROWS_AS(fit_woe(b, std::span<const double>(neg)), ValidationError);
    std::vector<double> short_w(3, 1.0);
    CHECK_THROWS_AS(fit_woe(b, std::span<const double>(short_w)), ValidationError);
}

TEST_CASE("label swap negates WoE and keeps IV") {
    auto ds = binned({{"A", 30, 10}, {"B", 12, 30}, {"C", 7, 0}});
    auto swapped = binned({{"A", 10, 30}, {"B", 30, 12}, {"C", 0, 7}});
    auto m = fit_woe(ds);
    auto s = fit_woe(swapped);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(m.variables[0].bins[i].woe + s.variables[0].bins[i].woe) < 1e-12);
    CHECK(std::abs(m.variables[0].iv - s.variables[0].iv) < 1e-12);

    auto flipped = fit_woe(ds, std::nullopt, 0.5, false);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(flipped.variables[0].bins[i].woe + m.variables[0].bins[i].woe) < 1e-12);
}

TEST_CASE("weights: unit weights equal none, scaling leaves WoE unchanged") {
    auto ds = binned({{"A", 30, 10}, {"B", 12, 30}, {"C", 7, 4}});
    std::vector<double> ones(ds.n_rows(), 1.0), tens(ds.n_rows(), 10.0);
    auto plain = fit_woe(ds, std::nullopt, 0.0);
    auto unit = fit_woe(ds, std::span<const double>(ones), 0.0);
    auto scaled = fit_woe(ds, std::span<const double>(tens), 0.0);
    CHECK(unit.weighted);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(plain.variables[0].bins[i].woe == unit.variables[0].bins[i].woe);
        CHECK(std::abs(plain.variables[0].bins[i].woe - scaled.variables[0].bins[i].woe) < 1e-12);
    }
    CHECK(std::abs(plain.variables[0].iv - scaled.variables[0].iv) < 1e-12);

    // with a zero cell, delta scaled with the weights keeps WoE unchanged
    auto z = binned({{"A", 30, 10}, {"C", 7, 0}});
    std::vector<double> w10(z.n_rows(), 10.0);
    auto a = fit_woe(z, std::nullopt, 0.5);
    auto b = fit_woe(z, std::span<const double>(w10), 5.0);
    CHECK(std::abs(a.variables[0].bins[1].woe - b.variables[0].bins[1].woe) < 1e-12);
}

TEST_CASE("psi examples") {
    std::vector<double> e{0.5, 0.5}, a{0.5, 0.5};
    auto same = psi(e, a);
    CHECK(same.psi == 0.0);
    CHECK(same.label == StabilityLabel::stable);

    std::vector<double> a2{0.6, 0.4};
    auto r = psi(e, a2);
    const double oracle = 0.1 * std::log(0.6 / 0.5) + (-0.1) * std::log(0.4 / 0.5);
    CHECK(std::abs(r.psi - oracle) < 1e-12);
    CHECK(std::abs(r.psi - 0.04055) < 1e-5);
    CHECK(r.label == StabilityLabel::stable);

    std::vector<double> e3{0.9, 0.1}, a3{0.5, 0.5};
    auto r3 = psi(e3, a3);
    const double oracle3 = (0.5 - 0.9) * std::log(0.5 / 0.9) + (0.5 - 0.1) * std::log(0.5 / 0.1);
    CHECK(std::abs(r3.psi - oracle3) < 1e-12);
    CHECK(r3.label == StabilityLabel::shifted);

    double sum = 0;
    for (const auto& row : r3.rows) sum += row.index;
    CHECK(std::abs(sum - r3.psi) < 1e-15);
}

TEST_CASE("psi labels, zero masses and errors") {
    CHECK(stability_label(0.0999) == StabilityLabel::stable);
    CHECK(stability_label(0.1) == StabilityLabel::shifting);
    CHECK(stability_label(0.25) == StabilityLabel::shifting);
    CHECK(stability_label(0.2501) == StabilityLabel::shifted);

    std::vector<double> e{10, 0}, a{5, 5};
    auto r = psi(e, a);
    CHECK(std::isfinite(r.psi));
    CHECK(r.psi > 0);
    std::vector<double> three{1, 1, 1};
    CHECK_THROWS_AS(psi(e, three), ValidationError);
}

TEST_CASE("psi is nonnegative on random share vectors") {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> e(5), a(5);
        for (auto& x : e) x = u(g);
        for (auto& x : a) x = u(g);
        CHECK(psi(e, a).psi >= 0.0);
    }
}

TEST_CASE("stability compares shared binned columns") {
    auto e = binned({{"A", 30, 10}, {"B", 30, 30}});
    auto a = binned({{"A", 10, 10}, {"B", 30, 30}, {"C", 5, 5}});
    auto rep = stability(e, a);
    REQUIRE(rep.variables.size() == 1);
    const auto* v = rep.find("x_bin");
    REQUIRE(v);
    CHECK(v->result.rows.size() == 3);
    CHECK(v->result.rows[2].label == "C");
    CHECK(v->result.psi > 0);
}

TEST_CASE("WoE map JSON round trip") {
    auto m = fit_woe(binned({{"A", 30, 10}, {"B", 12, 30}}));
    nlohmann::json j = m;
    WoeMap back = j.get<WoeMap>();
    CHECK(nlohmann::json(back) == j);
}
