#include "forge/error.hpp"
#include "forge/pipeline.hpp"
#include "forge/report.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace forge;
namespace fs = std::filesystem;

namespace {

ProjectConfig fixture_config() {
    ProjectConfig c;
    c.data = testing::data_dir() / "germancredit.csv";
    c.schema = testing::data_dir() / "germancredit.schema.json";
    c.target = {"creditability", "bad", "good"};
    return c;
}

Pipeline run_all(const fs::path& dir) {
    Pipeline p(Project::create(dir / "project.json", fixture_config()));
    p.run_split();
    p.run_bin();
    p.run_woe();
    p.run_preselect();
    p.run_fit();
    p.run_scale();
    p.run_evaluate();
    return p;
}

std::string without_generated(const std::string& text) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line))
        if (line.find("Generated: ") == std::string::npos) out += line + "\n";
    return out;
}

// Headings of one level inside a named "## " section of the Markdown report.
std::vector<std::string> subsections(const std::string& md, const std::string& section) {
    std::istringstream in(md);
    std::string line;
    bool inside = false;
    std::vector<std::string> out;
    while (std::getline(in, line)) {
        if (line.rfind("## ", 0) == 0) inside = line == "## " + section;
        else if (inside && line.rfind("### ", 0) == 0) out.push_back(line.substr(4));
    }
    return out;
}

} // namespace

TEST_CASE("stages require their prerequisites") {
    testing::TempDir tmp;
    Pipeline p(Project::create(tmp.path() / "project.json", fixture_config()));
    CHECK_THROWS_AS(p.run_bin(), StageError);
    p.run_split();
    try {
        p.run_fit();
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(std::string(e.what()).find("'bin'") != std::string::npos);
    }
    CHECK_THROWS_AS(p.run_report(), StageError);
}

TEST_CASE("fixture pipeline end to end") {
    testing::TempDir tmp;
    auto p = run_all(tmp.path());
    const auto& train = p.train();
    const auto& valid = p.valid();
    CHECK(train.n_rows() + valid.n_rows() == 1000);
    CHECK(train.n_rows() == 700);
    // stratified split keeps the bad rate
    CHECK(std::abs(static_cast<double>(train.bad_count()) / 700 - 0.3) < 0.01);

    CHECK(p.bins().variables.size() == 20);
    const auto& model = p.fit().model;
    CHECK(model.converged);
    CHECK_FALSE(model.features.empty());
    for (const auto& f : model.features) {
        const auto v = base_variable_name(f);
        CHECK(p.preselection().find(v)->kept);
    }

    const auto& perf = p.performance();
    CHECK(perf["valid"]["auc"].get<double>() >= 0.70);
    CHECK(perf["train"]["auc"].get<double>() >= perf["valid"]["auc"].get<double>() - 0.1);

    SUBCASE("scorecard artifacts agree") {
        const auto& card = p.scorecard();
        auto j = p.stage_json(Stage::scale);
        CHECK(j == nlohmann::json(card));
        CHECK(card.variables.size() == model.features.size());
        auto csv = read_file(p.project().artifact(Stage::scale, "csv"));
        std::size_t rows = 0;
        for (const auto& v : card.variables) rows += v.bins.size();
        CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == rows + 2);  // header and basepoints
        for (const auto& v : card.variables)
            for (const auto& b : v.bins) {
                std::string cell = b.label.find(',') != std::string::npos ? "\"" + b.label + "\"" : b.label;
                CHECK(csv.find(v.name + "," + cell + ",") != std::string::npos);
            }
    }

    SUBCASE("scores map back to model pd") {
        auto scored = p.score_dataset(valid);
        REQUIRE(scored.has_column("score"));
        CHECK(scored.n_rows() == valid.n_rows());
    }

    SUBCASE("reopening reads the same artifacts") {
        Pipeline q(Project::open(tmp.path() / "project.json"));
        CHECK(nlohmann::json(q.bins()) == nlohmann::json(p.bins()));
        CHECK(nlohmann::json(q.scorecard()) == nlohmann::json(p.scorecard()));
        CHECK(to_json(q.fit()) == to_json(p.fit()));
    }

    SUBCASE("adjusting bins with the current breaks changes nothing") {
        const auto hash = p.project().record(Stage::bins).hash;
        std::map<std::string, Breaks> same;
        for (const auto& vb : p.bins().variables) same[vb.variable] = current_breaks(vb);
        CHECK_FALSE(p.run_adjust_bins(same));
        CHECK(p.project().record(Stage::bins).hash == hash);
        CHECK(p.project().has(Stage::evaluate));
    }

    SUBCASE("changing breaks drops downstream stages") {
        p.set_variable_breaks("duration.in.month", NumericBreaks{12, 24});
        CHECK(p.project().has(Stage::bins));
        CHECK_FALSE(p.project().has(Stage::woe));
        CHECK_FALSE(p.project().has(Stage::scale));
        CHECK(std::get<NumericBreaks>(current_breaks(p.bins().at("duration.in.month"))) == NumericBreaks{12, 24});
    }

    SUBCASE("report") {
        auto html = p.run_report();
        CHECK(fs::exists(html));
        CHECK(p.project().has(Stage::report));
        const auto md = read_file(tmp.path() / "report.md");
        std::vector<std::string> expected;
        for (const auto& f : model.features) expected.push_back(base_variable_name(f));
        CHECK(subsections(md, "Binning") == expected);
        for (const auto& section : {"Data", "Preselection", "Variable selection", "Scorecard", "Performance",
                                    "Rating grades"})
            CHECK(md.find(std::string("## ") + section) != std::string::npos);
        CHECK(md.find("HHI") != std::string::npos);

        auto a = render_report(p, "2001-01-01T00:00:00Z");
        auto b = render_report(p, "2031-12-31T23:59:59Z");
        CHECK(a.html != b.html);
        CHECK(without_generated(a.html) == without_generated(b.html));
        CHECK(without_generated(a.markdown) == without_generated(b.markdown));
    }

    SUBCASE("stability") {
        p.run_stability(std::nullopt);
        auto j = p.stage_json(Stage::stability);
        CHECK(j["variables"].size() == 20);
        CHECK(j.contains("score_psi"));
        CHECK(j["score_psi"]["psi"].get<double>() >= 0.0);
    }

    SUBCASE("reject inference") {
        auto rejects = tmp.path() / "rejects.csv";
        {
            std::ofstream out(rejects);
            write_csv(out, valid.without_column("creditability"));
        }
        p.run_reject_infer(rejects, RejectMethod::augmentation, ParcellingSpec{});
        auto aug = p.stage_json(Stage::reject_infer);
        double sum = 0;
        for (const auto& b : aug["bands"])
            if (b["covered"].get<bool>()) sum += b["weight"].get<double>() * b["n_accepted"].get<double>();
        const auto combined_aug = load_csv(p.project().artifact(Stage::reject_infer, "combined"));
        auto weights = combined_aug.column("weight").numbers();
        CHECK(std::abs(std::accumulate(weights.begin(), weights.end(), 0.0) - sum) < 1e-9);
        CHECK(std::abs(sum - (700.0 + 300.0 - aug["uncovered_rejected"].get<double>())) < 1e-9);

        p.run_reject_infer(rejects, RejectMethod::parcelling, ParcellingSpec{});
        auto par = p.stage_json(Stage::reject_infer);
        CHECK(par["bands"].size() == 6);
        auto combined = p.project().artifact(Stage::reject_infer, "combined");
        auto ds = load_csv(combined);
        CHECK(ds.n_rows() == 1000);
        CHECK(ds.has_column("source"));
        CHECK(ds.has_column("weight"));
    }
}

TEST_CASE("two runs give identical artifacts") {
    testing::TempDir a, b;
    auto pa = run_all(a.path());
    auto pb = run_all(b.path());
    for (auto s : {Stage::split, Stage::bins, Stage::woe, Stage::preselect, Stage::fit, Stage::scale, Stage::evaluate})
        CHECK(pa.project().record(s).hash == pb.project().record(s).hash);
    CHECK(read_file(a.path() / "scorecard.json") == read_file(b.path() / "scorecard.json"));
}
