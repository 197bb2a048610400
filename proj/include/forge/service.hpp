#pragma once

#include "forge/pipeline.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

namespace forge {

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

// Live modelling session behind the JSON API. Reads run concurrently,
// mutations are serialised and bump the revision.
class Session {
public:
    explicit Session(Pipeline pipeline);

    ApiResponse handle(std::string_view method, std::string_view path, std::string_view body);

    std::uint64_t revision() const;

private:
    ApiResponse get_project();
    ApiResponse get_variables();
    ApiResponse get_bins(const std::string& var);
    ApiResponse preview(const std::string& var, const nlohmann::json& body);
    ApiResponse commit(const std::string& var, const nlohmann::json& body);
    ApiResponse autobin(const nlohmann::json& body);
    ApiResponse fit(const nlohmann::json& body);
    ApiResponse get_scorecard();
    ApiResponse get_performance();

    void check_revision(const nlohmann::json& body) const;
    nlohmann::json bins_payload(const VariableBinning& vb) const;

    mutable std::shared_mutex mutex_;
    Pipeline pipeline_;
    std::uint64_t revision_ = 1;
    std::map<std::string, Breaks> pending_;
};

struct ServiceOptions {
    std::string host = "127.0.0.1";
    int port = 8372;  // 0 picks a free port
    std::optional<std::filesystem::path> ui_dir;
};

// HTTP front end for a Session.
class Service {
public:
    Service(Pipeline pipeline, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds the socket and returns the port.
    int bind();
    // Serves until stop(); bind() must have succeeded.
    void listen();
    void stop();
    void wait_until_ready() const;

    Session& session();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace forge
