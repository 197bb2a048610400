#include "forge/error.hpp"
#include "forge/pipeline.hpp"
#include "forge/service.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace forge;

namespace {

struct Options {
    std::string project = "project.json";
    std::string data;
    std::string schema;
    std::string target;
    std::string bad_level;
    std::string good_level;
    std::optional<std::uint64_t> seed;
    std::optional<double> ratio;
    bool no_stratify = false;

    std::string method;
    std::optional<std::size_t> max_bins;
    std::optional<double> min_bin_fraction;
    std::string monotone;
    std::string missing_policy;

    std::optional<double> min_iv, max_psi, max_correlation;
    std::string criterion;
    std::optional<double> pdo, points0, odds0;

    std::string out;
    std::string breaks;
    std::string rejects;
    std::string reject_method = "augmentation";
    std::vector<double> probs;
    std::vector<double> alpha;

    std::string host = "127.0.0.1";
    int port = 8372;
    std::string ui;
};

std::optional<std::uint64_t> effective_seed(const Options& o) {
    if (const char* env = std::getenv("SCORECARD_FORGE_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            auto v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument(env);
            return v;
        } catch (const std::exception&) {
            throw ValidationError(std::string("SCORECARD_FORGE_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    return o.seed;
}

void apply_overrides(ProjectConfig& c, const Options& o) {
    if (!o.data.empty()) c.data = fs::absolute(o.data);
    if (!o.schema.empty()) c.schema = fs::absolute(o.schema);
    if (!o.target.empty()) c.target.column = o.target;
    if (!o.bad_level.empty()) c.target.bad_level = o.bad_level;
    if (!o.good_level.empty()) c.target.good_level = o.good_level;
    if (auto s = effective_seed(o)) {
        c.seed = *s;
        c.split.seed = *s;
    }
    if (o.ratio) c.split.ratio = *o.ratio;
    if (o.no_stratify) c.split.stratify = false;
    if (!o.method.empty()) c.binning.method = binning_method_from_string(o.method);
    if (o.max_bins) c.binning.max_bins = *o.max_bins;
    if (o.min_bin_fraction) c.binning.min_bin_fraction = *o.min_bin_fraction;
    if (!o.monotone.empty()) c.binning.monotone = monotone_from_string(o.monotone);
    if (!o.missing_policy.empty()) c.binning.missing_policy = missing_policy_from_string(o.missing_policy);
    c.binning.validate();
    if (o.min_iv) c.preselect.min_iv = *o.min_iv;
    if (o.max_psi) c.preselect.max_psi = *o.max_psi;
    if (o.max_correlation) c.preselect.max_correlation = *o.max_correlation;
    if (!o.criterion.empty()) c.criterion = o.criterion;
    if (o.pdo) c.scaling.pdo = *o.pdo;
    if (o.points0) c.scaling.points0 = *o.points0;
    if (o.odds0) c.scaling.odds0 = *o.odds0;
    c.scaling.validate();
}

Pipeline open_pipeline(const Options& o, bool create) {
    const fs::path file = o.project;
    if (create && !fs::exists(file)) {
        ProjectConfig c;
        apply_overrides(c, o);
        if (c.data.empty()) throw ValidationError("--data is required to create a project");
        if (c.target.column.empty() || c.target.bad_level.empty())
            throw ValidationError("--target and --bad-level are required to create a project");
        return Pipeline(Project::create(file, std::move(c)));
    }
    auto project = Project::open(file);
    apply_overrides(project.config(), o);
    return Pipeline(std::move(project));
}

void run_through_report(Pipeline& p) {
    p.run_split();
    p.run_bin();
    p.run_woe();
    p.run_preselect();
    p.run_fit();
    p.run_scale();
    p.run_evaluate();
    std::cout << p.run_report().string() << '\n';
}

Service* active_service = nullptr;

extern "C" void handle_signal(int) {
    if (active_service) active_service->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Credit scorecard development toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--project", o.project, "Project file")->capture_default_str();

    auto data_opts = [&](CLI::App* c) {
        c->add_option("--data", o.data, "Input CSV");
        c->add_option("--schema", o.schema, "Column schema JSON");
        c->add_option("--target", o.target, "Target column");
        c->add_option("--bad-level", o.bad_level, "Target value meaning bad");
        c->add_option("--good-level", o.good_level, "Target value meaning good (default: the other level)");
        c->add_option("--seed", o.seed, "Random seed (SCORECARD_FORGE_SEED overrides)");
        c->add_option("--ratio", o.ratio, "Training share")->check(CLI::Range(0.0, 1.0));
        c->add_flag("--no-stratify", o.no_stratify, "Plain random split");
    };
    auto bin_opts = [&](CLI::App* c) {
        c->add_option("--method", o.method, "tree, chimerge, equal_width, equal_freq or woe_merge");
        c->add_option("--max-bins", o.max_bins);
        c->add_option("--min-bin-fraction", o.min_bin_fraction);
        c->add_option("--monotone", o.monotone, "none, increasing, decreasing or auto");
        c->add_option("--missing-policy", o.missing_policy, "own_bin or merge_nearest");
    };
    auto model_opts = [&](CLI::App* c) {
        c->add_option("--min-iv", o.min_iv);
        c->add_option("--max-psi", o.max_psi);
        c->add_option("--max-correlation", o.max_correlation);
        c->add_option("--criterion", o.criterion)->check(CLI::IsMember({"aic", "bic"}));
        c->add_option("--pdo", o.pdo);
        c->add_option("--points0", o.points0);
        c->add_option("--odds0", o.odds0, "Bad odds at points0");
    };

    auto* split = app.add_subcommand("split", "Create or update the project and split the data");
    data_opts(split);
    bin_opts(split);
    model_opts(split);
    auto* bin = app.add_subcommand("bin", "Automatic binning of every predictor");
    bin_opts(bin);
    auto* adjust = app.add_subcommand("adjust-bins", "Apply a breaks file");
    adjust->add_option("--breaks", o.breaks, "Breaks JSON")->required();
    app.add_subcommand("woe", "Fit WoE values on the training sample");
    auto* pre = app.add_subcommand("preselect", "Filter variables");
    model_opts(pre);
    auto* fit = app.add_subcommand("fit", "Stepwise logistic regression");
    model_opts(fit);
    auto* scale = app.add_subcommand("scale", "Scale the model into a points table");
    model_opts(scale);
    auto* score_cmd = app.add_subcommand("score", "Score a CSV with the scorecard");
    score_cmd->add_option("--data", o.data, "Input CSV")->required();
    score_cmd->add_option("--out", o.out, "Output CSV (default: stdout)");
    app.add_subcommand("evaluate", "Performance and calibration on both samples");
    auto* stab = app.add_subcommand("stability", "PSI of the training sample against another sample");
    stab->add_option("--data", o.data, "Comparison CSV (default: validation sample)");
    auto* reject = app.add_subcommand("reject-infer", "Reject inference on a rejected-applicant CSV");
    reject->add_option("--rejects", o.rejects, "Rejected applicants CSV")->required();
    reject->add_option("--method", o.reject_method)->check(CLI::IsMember({"augmentation", "parcelling"}));
    reject->add_option("--probs", o.probs, "Parcelling band quantiles");
    reject->add_option("--alpha", o.alpha, "Parcelling band multipliers");
    auto* report = app.add_subcommand("report", "Write the HTML and Markdown report");
    report->add_option("--out", o.out, "Output directory (default: project directory)");
    auto* run = app.add_subcommand("run", "Every stage from split to report");
    data_opts(run);
    bin_opts(run);
    model_opts(run);
    auto* serve = app.add_subcommand("serve", "Serve the JSON API for interactive binning");
    serve->add_option("--port", o.port)->capture_default_str();
    serve->add_option("--host", o.host)->capture_default_str();
    serve->add_option("--ui", o.ui, "Directory of static UI assets");

    CLI11_PARSE(app, argc, argv);

    try {
        auto* cmd = app.get_subcommands().front();
        const std::string name = cmd->get_name();
        const bool create = name == "split" || name == "run";
        if (!create && !fs::exists(o.project))
            throw StageError("project '" + o.project + "' does not exist; run split first");
        if (create && fs::path(o.project).has_parent_path()) fs::create_directories(fs::path(o.project).parent_path());

        ProjectLock lock(o.project);
        auto p = open_pipeline(o, create);

        if (name == "split") {
            p.run_split();
        } else if (name == "bin") {
            p.run_bin();
        } else if (name == "adjust-bins") {
            auto changed = p.run_adjust_bins(parse_breaks_document(read_json(o.breaks)));
            std::cout << (changed ? "bins changed" : "bins unchanged") << '\n';
        } else if (name == "woe") {
            p.run_woe();
        } else if (name == "preselect") {
            p.run_preselect();
        } else if (name == "fit") {
            p.run_fit();
        } else if (name == "scale") {
            p.run_scale();
        } else if (name == "score") {
            auto scored = p.score_dataset(p.load_input(o.data, false));
            if (o.out.empty()) write_csv(std::cout, scored);
            else save_csv(o.out, scored);
        } else if (name == "evaluate") {
            p.run_evaluate();
        } else if (name == "stability") {
            p.run_stability(o.data.empty() ? std::nullopt : std::optional<fs::path>(o.data));
        } else if (name == "reject-infer") {
            ParcellingSpec spec;
            if (!o.probs.empty()) spec.probs = o.probs;
            spec.alpha = o.alpha;
            spec.seed = p.project().config().seed;
            p.run_reject_infer(o.rejects, reject_method_from_string(o.reject_method), spec);
        } else if (name == "report") {
            auto path = p.run_report(o.out.empty() ? std::nullopt : std::optional<fs::path>(o.out));
            std::cout << path.string() << '\n';
        } else if (name == "run") {
            run_through_report(p);
        } else if (name == "serve") {
            ServiceOptions so;
            so.host = o.host;
            so.port = o.port;
            if (!o.ui.empty()) so.ui_dir = o.ui;
            Service service(std::move(p), so);
            int port = service.bind();
            std::cout << "listening on http://" << o.host << ':' << port << std::endl;
            active_service = &service;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            service.listen();
            active_service = nullptr;
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (auto& c : msg)
            if (c == '\n') c = ' ';
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
