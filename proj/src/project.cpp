#include "forge/project.hpp"

#include "forge/error.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::split: return "split";
    case Stage::bins: return "bin";
    case Stage::woe: return "woe";
    case Stage::preselect: return "preselect";
    case Stage::fit: return "fit";
    case Stage::scale: return "scale";
    case Stage::evaluate: return "evaluate";
    case Stage::stability: return "stability";
    case Stage::reject_infer: return "reject-infer";
    case Stage::report: return "report";
    }
    return "split";
}

std::vector<Stage> all_stages() {
    return {Stage::split,    Stage::bins,      Stage::woe,          Stage::preselect, Stage::fit,
            Stage::scale,    Stage::evaluate,  Stage::stability,    Stage::reject_infer, Stage::report};
}

Stage stage_from_string(std::string_view s) {
    for (auto st : all_stages())
        if (to_string(st) == s) return st;
    throw ValidationError("unknown stage '" + std::string(s) + "'");
}

std::vector<Stage> prerequisites(Stage s) {
    switch (s) {
    case Stage::split: return {};
    case Stage::bins: return {Stage::split};
    case Stage::woe: return {Stage::bins};
    case Stage::preselect: return {Stage::woe};
    case Stage::fit: return {Stage::preselect};
    case Stage::scale: return {Stage::fit};
    case Stage::evaluate: return {Stage::scale};
    case Stage::stability: return {Stage::bins};
    case Stage::reject_infer: return {Stage::fit};
    case Stage::report: return {Stage::evaluate};
    }
    return {};
}

std::vector<Stage> dependents(Stage s) {
    std::set<Stage> found{s};
    bool grew = true;
    while (grew) {
        grew = false;
        for (auto st : all_stages()) {
            if (found.count(st)) continue;
            for (auto p : prerequisites(st)) {
                if (found.count(p)) {
                    found.insert(st);
                    grew = true;
                    break;
                }
            }
        }
    }
    found.erase(s);
    return {found.begin(), found.end()};
}

std::string fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string hash_files(const std::vector<fs::path>& files) {
    std::string all;
    for (const auto& f : files) {
        all += fnv1a64(read_file(f));
    }
    return files.size() == 1 ? all : fnv1a64(all);
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read '" + p.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, std::string_view content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + p.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("cannot write '" + p.string() + "'");
    }
    fs::rename(tmp, p);
}

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

void to_json(nlohmann::json& j, const PreselectParams& p) {
    j = {{"max_missing", p.max_missing}, {"min_iv", p.min_iv}, {"max_psi", p.max_psi},
         {"max_cramers_v", p.max_cramers_v}, {"max_correlation", p.max_correlation}};
}

void from_json(const nlohmann::json& j, PreselectParams& p) {
    PreselectParams d;
    p.max_missing = j.value("max_missing", d.max_missing);
    p.min_iv = j.value("min_iv", d.min_iv);
    p.max_psi = j.value("max_psi", d.max_psi);
    p.max_cramers_v = j.value("max_cramers_v", d.max_cramers_v);
    p.max_correlation = j.value("max_correlation", d.max_correlation);
}

void to_json(nlohmann::json& j, const ProjectConfig& c) {
    j = {{"data", c.data.string()},
         {"schema", c.schema.string()},
         {"target", {{"column", c.target.column}, {"bad_level", c.target.bad_level}, {"good_level", c.target.good_level}}},
         {"split", {{"ratio", c.split.ratio}, {"seed", c.split.seed}, {"stratify", c.split.stratify}}},
         {"binning", c.binning},
         {"preselect", c.preselect},
         {"criterion", c.criterion},
         {"scaling", c.scaling},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ProjectConfig& c) {
    c = ProjectConfig{};
    c.data = j.at("data").get<std::string>();
    c.schema = j.value("schema", std::string{});
    const auto& t = j.at("target");
    c.target.column = t.at("column").get<std::string>();
    c.target.bad_level = t.at("bad_level").get<std::string>();
    c.target.good_level = t.value("good_level", std::string{});
    const auto& s = j.at("split");
    c.split.ratio = s.at("ratio").get<double>();
    c.split.seed = s.at("seed").get<std::uint64_t>();
    c.split.stratify = s.value("stratify", true);
    c.binning = j.at("binning").get<BinningParams>();
    c.preselect = j.value("preselect", nlohmann::json::object()).get<PreselectParams>();
    c.criterion = j.value("criterion", std::string("bic"));
    c.scaling = j.at("scaling").get<ScalingParams>();
    c.seed = j.value("seed", std::uint64_t{42});
}

Project Project::create(const fs::path& file, ProjectConfig config) {
    Project p;
    p.file_ = fs::absolute(file).lexically_normal();
    p.config_ = std::move(config);
    return p;
}

Project Project::open(const fs::path& file) {
    if (!fs::exists(file)) throw StageError("project '" + file.string() + "' does not exist; run split first");
    auto j = read_json(file);
    if (j.value("version", 0) != 1) throw ValidationError("unsupported project file version");
    Project p;
    p.file_ = fs::absolute(file).lexically_normal();
    p.config_ = j.at("config").get<ProjectConfig>();
    for (const auto& [name, rec] : j.at("stages").items()) {
        StageRecord r;
        r.artifacts = rec.at("artifacts").get<std::map<std::string, std::string>>();
        r.hash = rec.at("hash").get<std::string>();
        r.inputs = rec.value("inputs", std::map<std::string, std::string>{});
        r.timestamp = rec.value("timestamp", std::string{});
        p.stages_[stage_from_string(name)] = std::move(r);
    }
    return p;
}

const StageRecord& Project::record(Stage s) const {
    auto it = stages_.find(s);
    if (it == stages_.end()) throw StageError("stage '" + std::string(to_string(s)) + "' has not run");
    return it->second;
}

fs::path Project::artifact(Stage s, const std::string& key) const {
    const auto& r = record(s);
    auto it = r.artifacts.find(key);
    if (it == r.artifacts.end())
        throw StageError("stage '" + std::string(to_string(s)) + "' has no artifact '" + key + "'");
    return path_of(it->second);
}

void Project::require(Stage s) const {
    for (auto p : prerequisites(s)) {
        require(p);
        if (!has(p))
            throw StageError("stage '" + std::string(to_string(s)) + "' requires stage '" +
                             std::string(to_string(p)) + "'; run it first");
    }
}

bool Project::commit(Stage s, std::map<std::string, std::string> artifacts) {
    StageRecord r;
    r.artifacts = std::move(artifacts);
    std::vector<fs::path> files;
    for (const auto& [key, name] : r.artifacts) files.push_back(path_of(name));
    r.hash = hash_files(files);
    for (auto p : prerequisites(s))
        if (has(p)) r.inputs[std::string(to_string(p))] = record(p).hash;
    r.timestamp = utc_timestamp();

    auto it = stages_.find(s);
    const bool changed = it == stages_.end() || it->second.hash != r.hash || it->second.inputs != r.inputs;
    if (changed) {
        for (auto d : dependents(s)) stages_.erase(d);
        stages_[s] = std::move(r);
    } else {
        it->second.timestamp = r.timestamp;
    }
    return changed;
}

void Project::invalidate(Stage s) {
    stages_.erase(s);
    for (auto d : dependents(s)) stages_.erase(d);
}

nlohmann::json Project::to_json() const {
    auto stages = nlohmann::json::object();
    for (const auto& [s, r] : stages_)
        stages[std::string(to_string(s))] = {
            {"artifacts", r.artifacts}, {"hash", r.hash}, {"inputs", r.inputs}, {"timestamp", r.timestamp}};
    return {{"version", 1}, {"config", config_}, {"stages", std::move(stages)}};
}

void Project::save() const { write_json(file_, to_json()); }

ProjectLock::ProjectLock(const fs::path& project_file) {
    path_ = fs::absolute(project_file);
    path_ += ".lock";
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
        throw Error("project is locked by another process (remove '" + path_.string() + "' if it is stale)");
    auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

ProjectLock::~ProjectLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

} // namespace forge
