#include "forge/pipeline.hpp"

#include "forge/error.hpp"
#include "forge/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace forge {

namespace fs = std::filesystem;

namespace {

const std::string kMain = "main";

// Rating grades merge while IV drops by less than 1%.
constexpr double kMasterScaleStopLimit = 0.01;
constexpr std::size_t kMasterScaleMaxGrades = 10;

std::string csv_text(const Dataset& ds) {
    std::ostringstream os;
    write_csv(os, ds);
    return os.str();
}

// Canonical target levels after encoding.
TargetSpec encoded_target(const ProjectConfig& c) {
    return {c.target.column, std::string(kBad), std::string(kGood)};
}

} // namespace

RejectMethod reject_method_from_string(std::string_view s) {
    if (s == "augmentation") return RejectMethod::augmentation;
    if (s == "parcelling") return RejectMethod::parcelling;
    throw ValidationError("unknown reject-inference method '" + std::string(s) + "'");
}

nlohmann::json to_json(const FitArtifact& f) {
    return {{"criterion", f.criterion}, {"k", f.k}, {"model", f.model}, {"stepwise", f.stepwise}, {"vif", f.vif}};
}

FitArtifact fit_artifact_from_json(const nlohmann::json& j) {
    FitArtifact f;
    f.criterion = j.at("criterion").get<std::string>();
    f.k = j.at("k").get<double>();
    f.model = j.at("model").get<LogitModel>();
    f.stepwise = j.at("stepwise");
    f.vif = j.at("vif");
    return f;
}

Pipeline::Pipeline(Project project) : project_(std::move(project)) {}

void Pipeline::save() { project_.save(); }

void Pipeline::drop_cache() {
    if (!project_.has(Stage::split)) train_.reset(), valid_.reset();
    if (!project_.has(Stage::bins)) bins_.reset();
    if (!project_.has(Stage::woe)) woe_.reset();
    if (!project_.has(Stage::preselect)) preselect_.reset();
    if (!project_.has(Stage::fit)) fit_.reset();
    if (!project_.has(Stage::scale)) scorecard_.reset();
    if (!project_.has(Stage::evaluate)) performance_.reset();
}

Dataset Pipeline::load_input(const fs::path& csv, bool with_target) const {
    const auto& c = project_.config();
    Schema schema;
    if (!c.schema.empty()) schema = load_schema(c.schema);
    if (with_target) return load_csv(csv, c.target, schema);
    auto ds = load_csv(csv, std::nullopt, schema);
    if (ds.has_column(c.target.column)) ds = ds.without_column(c.target.column);
    return ds;
}

void Pipeline::run_split() {
    const auto& c = project_.config();
    if (c.data.empty()) throw ValidationError("no input data configured; pass --data");
    auto ds = load_input(c.data, true);
    auto parts = split(ds, c.split);
    write_file(project_.path_of("train.csv"), csv_text(parts.train));
    write_file(project_.path_of("valid.csv"), csv_text(parts.valid));
    project_.commit(Stage::split, {{"train", "train.csv"}, {"valid", "valid.csv"}});
    train_.reset();
    valid_.reset();
    drop_cache();
    save();
}

const Dataset& Pipeline::train() {
    if (!train_) {
        Schema schema;
        if (!project_.config().schema.empty()) schema = load_schema(project_.config().schema);
        train_ = load_csv(project_.artifact(Stage::split, "train"), encoded_target(project_.config()), schema);
    }
    return *train_;
}

const Dataset& Pipeline::valid() {
    if (!valid_) {
        Schema schema;
        if (!project_.config().schema.empty()) schema = load_schema(project_.config().schema);
        valid_ = load_csv(project_.artifact(Stage::split, "valid"), encoded_target(project_.config()), schema);
    }
    return *valid_;
}

void Pipeline::run_bin() {
    project_.require(Stage::bins);
    auto model = auto_bin(train(), project_.config().binning);
    write_json(project_.path_of("bins.json"), model);
    project_.commit(Stage::bins, {{kMain, "bins.json"}});
    bins_ = std::move(model);
    drop_cache();
    save();
}

const BinningModel& Pipeline::bins() {
    if (!bins_) bins_ = read_json(project_.artifact(Stage::bins, kMain)).get<BinningModel>();
    return *bins_;
}

bool Pipeline::run_adjust_bins(const std::map<std::string, Breaks>& breaks) {
    project_.require(Stage::woe);
    BinningModel model = bins();
    for (const auto& [name, b] : breaks) model = set_breaks(model, name, b);
    write_json(project_.path_of("bins.json"), model);
    bool changed = project_.commit(Stage::bins, {{kMain, "bins.json"}});
    bins_ = std::move(model);
    drop_cache();
    save();
    return changed;
}

void Pipeline::set_variable_breaks(const std::string& variable, const Breaks& breaks) {
    run_adjust_bins({{variable, breaks}});
}

void Pipeline::run_woe() {
    project_.require(Stage::woe);
    auto binned = apply_bins(bins(), train(), BinTarget::bin);
    auto map = fit_woe(binned, std::nullopt, bins().params.zero_adj);
    write_json(project_.path_of("woe.json"), map);
    project_.commit(Stage::woe, {{kMain, "woe.json"}});
    woe_ = std::move(map);
    drop_cache();
    save();
}

const WoeMap& Pipeline::woe() {
    if (!woe_) woe_ = read_json(project_.artifact(Stage::woe, kMain)).get<WoeMap>();
    return *woe_;
}

std::map<std::string, double> Pipeline::variable_psi() {
    BinningModel lenient = bins();
    lenient.params.unseen = UnseenPolicy::neutral;
    auto report = stability(apply_bins(lenient, train(), BinTarget::bin), apply_bins(lenient, valid(), BinTarget::bin),
                            lenient.params.zero_adj);
    std::map<std::string, double> out;
    for (const auto& v : report.variables) out[v.variable] = v.result.psi;
    return out;
}

void Pipeline::run_preselect() {
    project_.require(Stage::preselect);
    const auto& p = project_.config().preselect;
    std::vector<FilterReport> reports;

    std::vector<std::string> raw_names = bins().names();
    reports.push_back(missing_filter(train().select(raw_names), p.max_missing));
    auto alive = [&]() {
        return combine(reports).kept();
    };

    VariableValues ivs;
    for (const auto& v : woe().variables)
        if (std::find(raw_names.begin(), raw_names.end(), v.variable) != raw_names.end()) ivs[v.variable] = v.iv;
    {
        VariableValues subset;
        for (const auto& n : alive()) subset[n] = ivs.at(n);
        reports.push_back(iv_filter(subset, p.min_iv));
    }
    {
        auto psis = variable_psi();
        VariableValues subset;
        for (const auto& n : alive()) subset[n] = psis.at(n);
        reports.push_back(psi_filter(subset, p.max_psi));
    }
    auto binned = apply_bins(bins(), train(), BinTarget::bin);
    {
        VariableValues subset;
        for (const auto& n : alive()) subset[n] = ivs.at(n);
        reports.push_back(cv_filter(binned, subset, p.max_cramers_v));
    }
    {
        std::vector<std::string> cols;
        for (const auto& n : alive()) cols.push_back(woe_column_name(n));
        auto woe_data = apply_woe(woe(), binned).select(cols);
        reports.push_back(correlation_filter(woe_data, p.max_correlation));
    }
    auto report = combine(reports);
    // Fill IV for every variable so the report is complete.
    for (auto& v : report.variables)
        if (!v.iv && ivs.count(v.variable)) v.iv = ivs.at(v.variable);
    write_json(project_.path_of("preselect.json"), report);
    project_.commit(Stage::preselect, {{kMain, "preselect.json"}});
    preselect_ = std::move(report);
    drop_cache();
    save();
}

const FilterReport& Pipeline::preselection() {
    if (!preselect_) preselect_ = read_json(project_.artifact(Stage::preselect, kMain)).get<FilterReport>();
    return *preselect_;
}

void Pipeline::run_fit() {
    project_.require(Stage::fit);
    const auto& cfg = project_.config();
    auto data = apply_woe(woe(), apply_bins(bins(), train(), BinTarget::bin));
    StepwiseSpec spec;
    if (cfg.criterion == "aic") spec.k = 2.0;
    else if (cfg.criterion == "bic") spec.k = std::log(static_cast<double>(data.n_rows()));
    else throw ValidationError("criterion must be aic or bic");
    for (const auto& n : preselection().kept()) spec.scope.push_back(woe_column_name(n));
    auto result = stepwise(data, spec);

    FitArtifact art;
    art.criterion = cfg.criterion;
    art.k = spec.k;
    art.model = result.model;
    art.stepwise = result;
    art.vif = nullptr;
    if (result.model.features.size() >= 2) art.vif = vif(data, result.model.features);
    write_json(project_.path_of("fit.json"), to_json(art));
    project_.commit(Stage::fit, {{kMain, "fit.json"}});
    fit_ = std::move(art);
    drop_cache();
    save();
}

const FitArtifact& Pipeline::fit() {
    if (!fit_) fit_ = fit_artifact_from_json(read_json(project_.artifact(Stage::fit, kMain)));
    return *fit_;
}

void Pipeline::run_scale() {
    project_.require(Stage::scale);
    auto card = build_scorecard(fit().model, bins(), woe(), project_.config().scaling);
    write_json(project_.path_of("scorecard.json"), card);
    write_file(project_.path_of("scorecard.csv"), scorecard_csv(card));
    project_.commit(Stage::scale, {{kMain, "scorecard.json"}, {"csv", "scorecard.csv"}});
    scorecard_ = std::move(card);
    drop_cache();
    save();
}

const Scorecard& Pipeline::scorecard() {
    if (!scorecard_) scorecard_ = read_json(project_.artifact(Stage::scale, kMain)).get<Scorecard>();
    return *scorecard_;
}

Dataset Pipeline::score_dataset(const Dataset& raw) {
    project_.require(Stage::evaluate);
    if (!project_.has(Stage::scale)) throw StageError("scoring requires stage 'scale'; run it first");
    const auto& card = scorecard();
    auto res = score(card, raw, true);
    Dataset out = raw;
    for (std::size_t v = 0; v < res.variables.size(); ++v) {
        std::vector<double> pts(res.points[v].begin(), res.points[v].end());
        out = out.with_column(Column::numeric(res.variables[v] + "_points", std::move(pts)));
    }
    out = out.with_column(Column::numeric("score", res.total));
    std::vector<double> pd;
    for (double s : res.total) pd.push_back(score_to_pd(s, card.scaling));
    return out.with_column(Column::numeric("pd", std::move(pd)));
}

namespace {

nlohmann::json density_series(std::span<const double> scores, std::span<const int> bad, std::size_t nbins = 20) {
    double lo = *std::min_element(scores.begin(), scores.end());
    double hi = *std::max_element(scores.begin(), scores.end());
    if (hi <= lo) hi = lo + 1.0;
    const double width = (hi - lo) / static_cast<double>(nbins);
    std::vector<double> edges, good(nbins, 0.0), badc(nbins, 0.0);
    for (std::size_t i = 0; i <= nbins; ++i) edges.push_back(lo + width * static_cast<double>(i));
    double ng = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        auto k = std::min(nbins - 1, static_cast<std::size_t>((scores[i] - lo) / width));
        (bad[i] ? badc[k] : good[k]) += 1.0;
        (bad[i] ? nb : ng) += 1.0;
    }
    for (auto& g : good) g /= ng * width;
    for (auto& b : badc) b /= nb * width;
    return {{"edges", edges}, {"good", good}, {"bad", badc}};
}

} // namespace

void Pipeline::run_evaluate() {
    project_.require(Stage::evaluate);
    const auto& card = scorecard();
    EvaluateOptions opts;
    opts.seed = project_.config().seed;

    auto train_scores = score(card, train()).total;
    auto valid_scores = score(card, valid()).total;
    auto ty = train().bad_flags();
    auto vy = valid().bad_flags();

    nlohmann::json j;
    j["direction"] = to_string(opts.direction);
    j["train"] = evaluate(train_scores, ty, opts);
    j["valid"] = evaluate(valid_scores, vy, opts);
    j["gains"] = gains_table(valid_scores, vy, 10);

    std::vector<double> pd;
    for (double s : valid_scores) pd.push_back(score_to_pd(s, card.scaling));
    BinningParams scale_params = project_.config().binning;
    scale_params.stop_limit = kMasterScaleStopLimit;
    scale_params.max_bins = kMasterScaleMaxGrades;
    auto grades = calibration_tests(master_scale(pd, vy, scale_params));
    j["grades"] = grades;
    j["curves"] = {{"roc", roc_curve(valid_scores, vy, opts.direction)},
                   {"ecdf_good", ecdf(valid_scores, vy, 0)},
                   {"ecdf_bad", ecdf(valid_scores, vy, 1)},
                   {"density", density_series(valid_scores, vy)}};
    write_json(project_.path_of("performance.json"), j);
    project_.commit(Stage::evaluate, {{kMain, "performance.json"}});
    performance_ = std::move(j);
    drop_cache();
    save();
}

const nlohmann::json& Pipeline::performance() {
    if (!performance_) performance_ = read_json(project_.artifact(Stage::evaluate, kMain));
    return *performance_;
}

nlohmann::json Pipeline::stage_json(Stage s, const std::string& key) const {
    return read_json(project_.artifact(s, key));
}

void Pipeline::run_stability(const std::optional<fs::path>& data) {
    project_.require(Stage::stability);
    BinningModel lenient = bins();
    lenient.params.unseen = UnseenPolicy::neutral;
    Dataset actual = data ? load_input(*data, false) : valid().without_column(valid().target_name());
    auto expected = train().without_column(train().target_name());
    std::vector<std::string> vars;
    for (const auto& n : lenient.names())
        if (actual.has_column(n)) vars.push_back(n);
    auto report = stability(apply_bins(lenient, expected, BinTarget::bin, vars),
                            apply_bins(lenient, actual, BinTarget::bin, vars), lenient.params.zero_adj);
    nlohmann::json j = {{"sample", data ? data->string() : std::string("validation split")}, {"variables", report}};
    if (project_.has(Stage::scale)) {
        const auto& card = scorecard();
        bool all = true;
        for (const auto& v : card.variables) all = all && actual.has_column(v.name);
        if (all) {
            auto e = score(card, expected).total;
            auto a = score(card, actual).total;
            // Score deciles of the training sample.
            std::vector<double> lower{-std::numeric_limits<double>::infinity()};
            for (int d = 1; d < 10; ++d) {
                double q = quantile7(e, d / 10.0);
                if (q > lower.back()) lower.push_back(q);
            }
            std::vector<double> ec(lower.size(), 0.0), ac(lower.size(), 0.0);
            auto band = [&](double s) {
                std::size_t b = 0;
                while (b + 1 < lower.size() && s >= lower[b + 1]) ++b;
                return b;
            };
            for (double s : e) ec[band(s)] += 1.0;
            for (double s : a) ac[band(s)] += 1.0;
            auto r = psi(ec, ac, lenient.params.zero_adj);
            j["score_psi"] = {{"psi", r.psi}, {"label", std::string(to_string(r.label))}};
        }
    }
    write_json(project_.path_of("stability.json"), j);
    project_.commit(Stage::stability, {{kMain, "stability.json"}});
    save();
}

void Pipeline::run_reject_infer(const fs::path& rejects, RejectMethod method, const ParcellingSpec& spec) {
    project_.require(Stage::reject_infer);
    const auto& features = fit().model.features;
    if (features.empty()) throw StageError("the fitted model has no variables; reject inference needs at least one");
    BinningModel lenient = bins();
    lenient.params.unseen = UnseenPolicy::neutral;
    auto to_woe = [&](const Dataset& raw) {
        auto binned = apply_bins(lenient, raw, BinTarget::bin);
        return apply_woe(woe(), binned);
    };
    auto accepted = to_woe(train());
    auto rejected = to_woe(load_input(rejects, false));

    nlohmann::json j;
    if (method == RejectMethod::augmentation) {
        auto r = augmentation(accepted, rejected, features);
        j = r;
        auto combined = accepted.select(features)
                            .with_column(Column::categorical("source", std::vector<std::string>(accepted.n_rows(), "accepted")))
                            .with_column(Column::numeric("weight", r.weights));
        write_file(project_.path_of("combined.csv"), csv_text(combined));
    } else {
        auto r = parcelling(accepted, rejected, features, spec);
        j = r;
        write_file(project_.path_of("combined.csv"), csv_text(r.combined));
    }
    write_json(project_.path_of("reject_inference.json"), j);
    project_.commit(Stage::reject_infer, {{kMain, "reject_inference.json"}, {"combined", "combined.csv"}});
    save();
}

fs::path Pipeline::run_report(const std::optional<fs::path>& out_dir) {
    project_.require(Stage::report);
    auto doc = render_report(*this, utc_timestamp());
    const fs::path dir = out_dir ? *out_dir : project_.dir();
    const fs::path html = dir / "report.html";
    write_file(html, doc.html);
    write_file(dir / "report.md", doc.markdown);
    if (!out_dir) {
        project_.commit(Stage::report, {{"html", "report.html"}, {"markdown", "report.md"}});
        save();
    }
    return html;
}

} // namespace forge
