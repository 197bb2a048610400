#pragma once

#include "forge/binning.hpp"
#include "forge/logit.hpp"
#include "forge/performance.hpp"
#include "forge/preselect.hpp"
#include "forge/project.hpp"
#include "forge/reject_inference.hpp"
#include "forge/scorecard.hpp"
#include "forge/woe.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace forge {

struct FitArtifact {
    std::string criterion;
    double k = 0.0;
    LogitModel model;
    nlohmann::json stepwise;  // trace and warnings as written by stepwise()
    nlohmann::json vif;       // null with fewer than two features
};

enum class RejectMethod { augmentation, parcelling };
RejectMethod reject_method_from_string(std::string_view s);

// Runs pipeline stages on a project, reading and writing its artifacts.
// Loaded artifacts are cached until the stage that owns them reruns.
class Pipeline {
public:
    explicit Pipeline(Project project);

    Project& project() { return project_; }
    const Project& project() const { return project_; }

    void run_split();
    void run_bin();
    // Returns whether any variable's bins changed.
    bool run_adjust_bins(const std::map<std::string, Breaks>& breaks);
    void set_variable_breaks(const std::string& variable, const Breaks& breaks);
    void run_woe();
    void run_preselect();
    void run_fit();
    void run_scale();
    void run_evaluate();
    void run_stability(const std::optional<std::filesystem::path>& data);
    void run_reject_infer(const std::filesystem::path& rejects, RejectMethod method, const ParcellingSpec& spec);
    // Writes the report next to the project (or into out_dir); returns the HTML path.
    std::filesystem::path run_report(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

    // Score raw data with the current scorecard.
    Dataset score_dataset(const Dataset& raw);

    Dataset load_input(const std::filesystem::path& csv, bool with_target) const;

    const Dataset& train();
    const Dataset& valid();
    const BinningModel& bins();
    const WoeMap& woe();
    const FilterReport& preselection();
    const FitArtifact& fit();
    const Scorecard& scorecard();
    const nlohmann::json& performance();
    nlohmann::json stage_json(Stage s, const std::string& key = "main") const;

    // Training-vs-validation PSI per binned variable.
    std::map<std::string, double> variable_psi();

private:
    void save();
    void drop_cache();

    Project project_;
    std::optional<Dataset> train_, valid_;
    std::optional<BinningModel> bins_;
    std::optional<WoeMap> woe_;
    std::optional<FilterReport> preselect_;
    std::optional<FitArtifact> fit_;
    std::optional<Scorecard> scorecard_;
    std::optional<nlohmann::json> performance_;
};

nlohmann::json to_json(const FitArtifact& f);
FitArtifact fit_artifact_from_json(const nlohmann::json& j);

} // namespace forge
