#pragma once

#include "forge/binning.hpp"
#include "forge/dataset.hpp"
#include "forge/scorecard.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge {

enum class Stage { split, bins, woe, preselect, fit, scale, evaluate, stability, reject_infer, report };

std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);
std::vector<Stage> all_stages();
// Direct prerequisites of a stage.
std::vector<Stage> prerequisites(Stage s);
// Every stage that (transitively) depends on s.
std::vector<Stage> dependents(Stage s);

struct PreselectParams {
    double max_missing = 0.95;
    double min_iv = 0.02;
    double max_psi = 0.25;
    double max_cramers_v = 0.7;
    double max_correlation = 0.7;
};

struct ProjectConfig {
    std::filesystem::path data;
    std::filesystem::path schema;  // optional
    TargetSpec target;
    SplitSpec split;
    BinningParams binning;
    PreselectParams preselect;
    std::string criterion = "bic";
    ScalingParams scaling;
    std::uint64_t seed = 42;  // bootstrap and parcelling
};

struct StageRecord {
    std::map<std::string, std::string> artifacts;  // key -> file name in the project dir
    std::string hash;
    std::map<std::string, std::string> inputs;  // prerequisite stage -> its hash when this ran
    std::string timestamp;
};

// FNV-1a 64-bit digest as 16 hex digits.
std::string fnv1a64(std::string_view bytes);
std::string hash_files(const std::vector<std::filesystem::path>& files);

std::string utc_timestamp();

// Project state: one JSON file whose stage artifacts live next to it.
class Project {
public:
    static Project create(const std::filesystem::path& file, ProjectConfig config);
    static Project open(const std::filesystem::path& file);

    const std::filesystem::path& file() const { return file_; }
    std::filesystem::path dir() const { return file_.parent_path(); }
    std::filesystem::path path_of(const std::string& artifact) const { return dir() / artifact; }

    ProjectConfig& config() { return config_; }
    const ProjectConfig& config() const { return config_; }

    bool has(Stage s) const { return stages_.count(s) != 0; }
    const StageRecord& record(Stage s) const;
    std::filesystem::path artifact(Stage s, const std::string& key) const;
    // Throws StageError naming the first missing prerequisite.
    void require(Stage s) const;

    // Store a stage result. When its hash changed, every dependent stage
    // is dropped. Returns whether the hash changed.
    bool commit(Stage s, std::map<std::string, std::string> artifacts);
    void invalidate(Stage s);

    void save() const;
    nlohmann::json to_json() const;

private:
    std::filesystem::path file_;
    ProjectConfig config_;
    std::map<Stage, StageRecord> stages_;
};

// Exclusive lock file beside the project; released on destruction.
class ProjectLock {
public:
    explicit ProjectLock(const std::filesystem::path& project_file);
    ~ProjectLock();
    ProjectLock(const ProjectLock&) = delete;
    ProjectLock& operator=(const ProjectLock&) = delete;

private:
    std::filesystem::path path_;
};

void to_json(nlohmann::json& j, const ProjectConfig& c);
void from_json(const nlohmann::json& j, ProjectConfig& c);

std::string read_file(const std::filesystem::path& p);
// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& p, std::string_view content);
nlohmann::json read_json(const std::filesystem::path& p);
void write_json(const std::filesystem::path& p, const nlohmann::json& j);

} // namespace forge
