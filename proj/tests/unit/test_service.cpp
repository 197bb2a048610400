#include "forge/service.hpp"

#include "helpers.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cmath>
#include <thread>

using namespace forge;
using nlohmann::json;

namespace {

Pipeline fresh_pipeline(const std::filesystem::path& dir) {
    ProjectConfig c;
    c.data = testing::data_dir() / "germancredit.csv";
    c.schema = testing::data_dir() / "germancredit.schema.json";
    c.target = {"creditability", "bad", "good"};
    return Pipeline(Project::create(dir / "project.json", c));
}

struct Call {
    Session& s;
    ApiResponse get(const std::string& path) { return s.handle("GET", path, ""); }
    ApiResponse post(const std::string& path, const json& body) { return s.handle("POST", path, body.dump()); }
};

} // namespace

TEST_CASE("session API") {
    testing::TempDir tmp;
    Session session(fresh_pipeline(tmp.path()));
    Call api{session};

    CHECK(api.get("/variables").status == 400);  // nothing binned yet
    CHECK(api.get("/nope").status == 404);

    auto ab = api.post("/autobin", {{"method", "tree"}});
    REQUIRE(ab.status == 200);
    const auto rev = ab.body["revision"].get<std::uint64_t>();
    CHECK(rev == 2);

    auto vars = api.get("/variables");
    REQUIRE(vars.status == 200);
    REQUIRE(vars.body["variables"].size() == 20);
    for (const auto& v : vars.body["variables"]) {
        CHECK(std::isfinite(v["iv"].get<double>()));
        CHECK(v["kept"].is_null());
        CHECK_FALSE(v["dirty"].get<bool>());
    }

    const std::string dur = "/variables/duration.in.month";
    auto current = api.get(dur + "/bins");
    REQUIRE(current.status == 200);
    CHECK(current.body["series"]["labels"].size() == current.body["rows"].size());

    SUBCASE("preview of the current breaks reproduces the summary") {
        auto p = api.post(dur + "/breaks", {{"breaks", current.body["breaks"]}});
        REQUIRE(p.status == 200);
        CHECK(p.body["rows"] == current.body["rows"]);
        CHECK(p.body["revision"] == rev);
    }
    SUBCASE("preview does not touch committed bins") {
        auto p = api.post(dur + "/breaks", {{"breaks", {8, 20, 40}}});
        REQUIRE(p.status == 200);
        CHECK(p.body["series"]["labels"].size() == 4);
        CHECK(session.revision() == rev);
        auto after = api.get(dur + "/bins");
        CHECK(after.body["rows"] == current.body["rows"]);
        CHECK(after.body["dirty"].get<bool>());
        CHECK(after.body["pending"]["breaks"] == json{8, 20, 40});

        // commit the pending edit without resending it
        auto c = api.post(dur + "/commit", {{"revision", rev}});
        REQUIRE(c.status == 200);
        CHECK(c.body["changed"].get<bool>());
        CHECK(c.body["revision"] == rev + 1);
        CHECK(api.get(dur + "/bins").body["breaks"] == json{8, 20, 40});
    }
    SUBCASE("validation and lookup errors") {
        CHECK(api.post(dur + "/breaks", {{"breaks", {40, 20}}}).status == 422);
        CHECK(api.post("/variables/ghost/breaks", {{"breaks", {1}}}).status == 404);
        CHECK(api.get("/variables/ghost/bins").status == 404);
        CHECK(session.handle("POST", dur + "/breaks", "{not json").status == 400);
        CHECK(api.post("/fit", {{"criterion", "xyz"}}).status == 422);
        CHECK(api.get("/scorecard").status == 400);
    }
    SUBCASE("stale revision is a conflict") {
        auto c = api.post(dur + "/commit", {{"revision", rev - 1}, {"breaks", {10, 30}}});
        CHECK(c.status == 409);
        CHECK(session.revision() == rev);
        CHECK(api.post("/fit", {{"revision", rev + 5}}).status == 409);
    }
    SUBCASE("commit then fit") {
        REQUIRE(api.post(dur + "/commit", {{"breaks", {12, 24}}}).status == 200);
        auto f = api.post("/fit", {{"criterion", "bic"}, {"revision", rev + 1}});
        REQUIRE(f.status == 200);
        CHECK(f.body["revision"] == rev + 2);
        auto card = api.get("/scorecard");
        REQUIRE(card.status == 200);
        CHECK(card.body["scorecard"] == read_json(tmp.path() / "scorecard.json"));
        for (const auto& v : card.body["scorecard"]["variables"])
            if (v["name"] == "duration.in.month") {
                CHECK(v["bins"][0]["label"] == "[-Inf,12)");
                CHECK(v["bins"][1]["label"] == "[12,24)");
            }
        auto perf = api.get("/performance");
        REQUIRE(perf.status == 200);
        CHECK(perf.body["valid"]["auc"].get<double>() > 0.6);
        CHECK(perf.body["stepwise"].is_array());
        auto vars2 = api.get("/variables");
        for (const auto& v : vars2.body["variables"]) CHECK(v["kept"].is_boolean());
        auto proj = api.get("/project");
        CHECK(proj.body["completed"].size() == 7);
    }
}

TEST_CASE("http front end") {
    testing::TempDir tmp;
    ServiceOptions opts;
    opts.port = 0;
    Service service(fresh_pipeline(tmp.path()), opts);
    const int port = service.bind();
    REQUIRE(port > 0);
    std::thread server([&] { service.listen(); });
    service.wait_until_ready();

    httplib::Client cli("127.0.0.1", port);
    auto ab = cli.Post("/autobin", R"({"method":"tree"})", "application/json");
    REQUIRE(ab);
    CHECK(ab->status == 200);
    CHECK(ab->get_header_value("Access-Control-Allow-Origin") == "*");

    auto vars = cli.Get("/variables");
    REQUIRE(vars);
    CHECK(vars->status == 200);
    auto body = json::parse(vars->body);
    CHECK(body["variables"].size() == 20);

    auto bad = cli.Post("/variables/age.in.years/breaks", R"({"breaks":[50,30]})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 422);
    CHECK(json::parse(bad->body).contains("error"));

    auto opt = cli.Options("/variables");
    REQUIRE(opt);
    CHECK(opt->status == 204);

    // concurrent readers
    std::vector<std::thread> readers;
    std::atomic<int> ok{0};
    for (int i = 0; i < 4; ++i)
        readers.emplace_back([&] {
            httplib::Client c("127.0.0.1", port);
            for (int k = 0; k < 5; ++k)
                if (auto r = c.Get("/variables/age.in.years/bins"); r && r->status == 200) ++ok;
        });
    for (auto& t : readers) t.join();
    CHECK(ok == 20);

    service.stop();
    server.join();
}
