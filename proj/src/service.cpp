#include "forge/service.hpp"

#include "forge/error.hpp"

#include <httplib.h>

#include <mutex>

namespace forge {

using nlohmann::json;

namespace {

class Conflict : public Error {
public:
    using Error::Error;
};

ApiResponse error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::string monotone_trend(const VariableBinning& vb) {
    std::vector<double> p;
    for (const auto& b : vb.bins)
        if (!b.is_missing) p.push_back(b.badprob);
    if (p.size() < 2) return "flat";
    bool inc = true, dec = true;
    for (std::size_t i = 1; i < p.size(); ++i) {
        inc = inc && p[i] >= p[i - 1];
        dec = dec && p[i] <= p[i - 1];
    }
    if (inc && dec) return "flat";
    if (inc) return "increasing";
    if (dec) return "decreasing";
    return "none";
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < path.size()) {
        while (i < path.size() && path[i] == '/') ++i;
        std::size_t j = path.find('/', i);
        if (j == std::string_view::npos) j = path.size();
        if (j > i) parts.emplace_back(path.substr(i, j - i));
        i = j;
    }
    return parts;
}

Breaks breaks_from_body(const std::string& var, const json& body) {
    json entry = {{"name", var}};
    if (body.contains("breaks")) entry["breaks"] = body["breaks"];
    else if (body.contains("groups")) entry["groups"] = body["groups"];
    else throw ValidationError("request needs 'breaks' or 'groups'");
    return parse_breaks_document({{"variables", json::array({entry})}}).at(var);
}

json breaks_json(const Breaks& b) {
    if (auto* n = std::get_if<NumericBreaks>(&b)) return {{"breaks", *n}};
    return {{"groups", std::get<LevelGroups>(b)}};
}

} // namespace

Session::Session(Pipeline pipeline) : pipeline_(std::move(pipeline)) {}

std::uint64_t Session::revision() const {
    std::shared_lock lock(mutex_);
    return revision_;
}

void Session::check_revision(const json& body) const {
    if (!body.contains("revision") || body["revision"].is_null()) return;
    if (!body["revision"].is_number_unsigned() && !body["revision"].is_number_integer())
        throw ValidationError("revision must be an integer");
    auto r = body["revision"].get<std::uint64_t>();
    if (r != revision_)
        throw Conflict("stale revision " + std::to_string(r) + "; current revision is " + std::to_string(revision_));
}

ApiResponse Session::handle(std::string_view method, std::string_view path, std::string_view body_text) {
    try {
        json body = json::object();
        if (method == "POST" && !body_text.empty()) {
            body = json::parse(body_text, nullptr, false);
            if (body.is_discarded() || !body.is_object()) return error_response(400, "request body is not a JSON object");
        }
        auto parts = split_path(path);
        if (method == "GET") {
            std::shared_lock lock(mutex_);
            if (parts == std::vector<std::string>{"project"}) return get_project();
            if (parts == std::vector<std::string>{"variables"}) return get_variables();
            if (parts.size() == 3 && parts[0] == "variables" && parts[2] == "bins") return get_bins(parts[1]);
            if (parts == std::vector<std::string>{"scorecard"}) return get_scorecard();
            if (parts == std::vector<std::string>{"performance"}) return get_performance();
        } else if (method == "POST") {
            std::unique_lock lock(mutex_);
            if (parts.size() == 3 && parts[0] == "variables" && parts[2] == "breaks") return preview(parts[1], body);
            if (parts.size() == 3 && parts[0] == "variables" && parts[2] == "commit") return commit(parts[1], body);
            if (parts == std::vector<std::string>{"autobin"}) return autobin(body);
            if (parts == std::vector<std::string>{"fit"}) return fit(body);
        }
        return error_response(404, "no route for " + std::string(method) + " " + std::string(path));
    } catch (const Conflict& e) {
        return error_response(409, e.what());
    } catch (const NotFound& e) {
        return error_response(404, e.what());
    } catch (const ValidationError& e) {
        return error_response(422, e.what());
    } catch (const StageError& e) {
        return error_response(400, e.what());
    } catch (const json::exception& e) {
        return error_response(422, e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

ApiResponse Session::get_project() {
    const auto& project = pipeline_.project();
    json j = project.to_json();
    j["revision"] = revision_;
    json pending = json::array();
    for (const auto& [name, b] : pending_) pending.push_back(name);
    j["pending"] = pending;
    json done = json::array();
    for (auto s : all_stages())
        if (project.has(s)) done.push_back(std::string(to_string(s)));
    j["completed"] = done;
    return {200, j};
}

ApiResponse Session::get_variables() {
    pipeline_.project().require(Stage::woe);
    const auto& bins = pipeline_.bins();
    auto psi = pipeline_.variable_psi();
    std::optional<FilterReport> pre;
    if (pipeline_.project().has(Stage::preselect)) pre = pipeline_.preselection();

    json vars = json::array();
    for (const auto& vb : bins.variables) {
        json e = {{"name", vb.variable},
                  {"kind", std::string(to_string(vb.kind))},
                  {"iv", vb.total_iv},
                  {"psi", psi.count(vb.variable) ? json(psi.at(vb.variable)) : json()},
                  {"kept", nullptr},
                  {"dirty", pending_.count(vb.variable) != 0},
                  {"monotone", monotone_trend(vb)},
                  {"bins", vb.bins.size()}};
        if (pre)
            if (const auto* f = pre->find(vb.variable)) e["kept"] = f->kept;
        vars.push_back(std::move(e));
    }
    return {200, {{"revision", revision_}, {"variables", vars}}};
}

json Session::bins_payload(const VariableBinning& vb) const {
    json rows = json::array();
    json labels = json::array(), distr = json::array(), badprob = json::array(), woe = json::array();
    for (const auto& b : vb.bins) {
        rows.push_back(b);
        labels.push_back(b.label);
        distr.push_back(b.count_distr);
        badprob.push_back(b.badprob);
        woe.push_back(b.woe);
    }
    json j = {{"variable", vb.variable},
              {"kind", std::string(to_string(vb.kind))},
              {"total_iv", vb.total_iv},
              {"monotone", monotone_trend(vb)},
              {"rows", rows},
              {"series", {{"labels", labels}, {"count_distr", distr}, {"badprob", badprob}, {"woe", woe}}}};
    j.update(breaks_json(current_breaks(vb)));
    return j;
}

ApiResponse Session::get_bins(const std::string& var) {
    pipeline_.project().require(Stage::woe);
    json j = bins_payload(pipeline_.bins().at(var));
    j["revision"] = revision_;
    j["dirty"] = pending_.count(var) != 0;
    if (pending_.count(var)) j["pending"] = breaks_json(pending_.at(var));
    return {200, j};
}

ApiResponse Session::preview(const std::string& var, const json& body) {
    pipeline_.project().require(Stage::woe);
    const auto& bins = pipeline_.bins();
    const auto& vb = bins.at(var);
    auto breaks = breaks_from_body(vb.variable, body);
    auto preview = rebin(vb, breaks, bins.params);
    pending_[vb.variable] = breaks;
    json j = bins_payload(preview);
    j["revision"] = revision_;
    j["preview"] = true;
    return {200, j};
}

ApiResponse Session::commit(const std::string& var, const json& body) {
    check_revision(body);
    pipeline_.project().require(Stage::woe);
    const std::string name = pipeline_.bins().at(var).variable;
    Breaks breaks;
    if (body.contains("breaks") || body.contains("groups")) breaks = breaks_from_body(name, body);
    else if (pending_.count(name)) breaks = pending_.at(name);
    else throw ValidationError("no breaks supplied and no pending edit for '" + name + "'");

    bool changed = pipeline_.run_adjust_bins({{name, breaks}});
    pending_.erase(name);
    ++revision_;
    json j = bins_payload(pipeline_.bins().at(name));
    j["revision"] = revision_;
    j["changed"] = changed;
    return {200, j};
}

ApiResponse Session::autobin(const json& body) {
    check_revision(body);
    auto& cfg = pipeline_.project().config();
    json params = cfg.binning;
    if (body.contains("params")) {
        if (!body["params"].is_object()) throw ValidationError("params must be an object");
        params.update(body["params"]);
    }
    if (body.contains("method")) params["method"] = body["method"];
    cfg.binning = params.get<BinningParams>();
    if (!pipeline_.project().has(Stage::split)) pipeline_.run_split();
    pipeline_.run_bin();
    pending_.clear();
    ++revision_;
    return {200, {{"revision", revision_}, {"variables", pipeline_.bins().names().size()}}};
}

ApiResponse Session::fit(const json& body) {
    check_revision(body);
    auto& cfg = pipeline_.project().config();
    if (body.contains("criterion")) {
        auto c = body["criterion"].get<std::string>();
        if (c != "aic" && c != "bic") throw ValidationError("criterion must be aic or bic");
        cfg.criterion = c;
    }
    pipeline_.run_woe();
    pipeline_.run_preselect();
    pipeline_.run_fit();
    pipeline_.run_scale();
    pipeline_.run_evaluate();
    ++revision_;
    return {200, {{"revision", revision_},
                  {"criterion", cfg.criterion},
                  {"model", pipeline_.fit().model},
                  {"valid_auc", pipeline_.performance()["valid"]["auc"]}}};
}

ApiResponse Session::get_scorecard() {
    if (!pipeline_.project().has(Stage::scale)) throw StageError("no scorecard yet; run fit first");
    return {200, {{"revision", revision_}, {"scorecard", pipeline_.scorecard()}}};
}

ApiResponse Session::get_performance() {
    if (!pipeline_.project().has(Stage::evaluate)) throw StageError("no performance yet; run fit first");
    json j = pipeline_.performance();
    j["revision"] = revision_;
    j["stepwise"] = pipeline_.fit().stepwise["trace"];
    return {200, j};
}

struct Service::Impl {
    Session session;
    ServiceOptions options;
    httplib::Server server;

    Impl(Pipeline p, ServiceOptions o) : session(std::move(p)), options(std::move(o)) {}
};

Service::Service(Pipeline pipeline, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(pipeline), std::move(options))) {
    auto& srv = impl_->server;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    auto forward = [this](const httplib::Request& req, httplib::Response& res) {
        auto r = impl_->session.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    for (const char* route : {"/project", "/variables", R"(/variables/([^/]+)/bins)", "/scorecard", "/performance"})
        srv.Get(route, forward);
    for (const char* route : {R"(/variables/([^/]+)/breaks)", R"(/variables/([^/]+)/commit)", "/autobin", "/fit"})
        srv.Post(route, forward);
    srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (impl_->options.ui_dir) {
        if (!srv.set_mount_point("/", impl_->options.ui_dir->string()))
            throw NotFound("UI directory '" + impl_->options.ui_dir->string() + "' does not exist");
    }
}

Service::~Service() { stop(); }

int Service::bind() {
    int port = impl_->options.port;
    if (port == 0) {
        port = impl_->server.bind_to_any_port(impl_->options.host);
        if (port < 0) throw Error("could not bind " + impl_->options.host);
    } else if (!impl_->server.bind_to_port(impl_->options.host, port)) {
        throw Error("could not bind " + impl_->options.host + ":" + std::to_string(port));
    }
    return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

Session& Service::session() { return impl_->session; }

} // namespace forge
