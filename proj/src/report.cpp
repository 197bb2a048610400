#include "forge/report.hpp"

#include "forge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace forge {

namespace {

using nlohmann::json;

std::string fixed(double v, int digits = 4) {
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string cell(const json& v, int digits = 4) {
    if (v.is_null()) return "";
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fixed(v.get<double>(), digits);
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::string escape_html(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string escape_md(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

using Row = std::vector<std::string>;

// Builds the HTML and Markdown documents side by side.
class Doc {
public:
    void heading(int level, const std::string& text) {
        html_ << "<h" << level << ">" << escape_html(text) << "</h" << level << ">\n";
        md_ << std::string(static_cast<std::size_t>(level), '#') << ' ' << text << "\n\n";
    }
    void para(const std::string& text) {
        html_ << "<p>" << escape_html(text) << "</p>\n";
        md_ << text << "\n\n";
    }
    void table(const Row& header, const std::vector<Row>& rows) {
        html_ << "<table>\n<tr>";
        for (const auto& h : header) html_ << "<th>" << escape_html(h) << "</th>";
        html_ << "</tr>\n";
        for (const auto& r : rows) {
            html_ << "<tr>";
            for (const auto& c : r) html_ << "<td>" << escape_html(c) << "</td>";
            html_ << "</tr>\n";
        }
        html_ << "</table>\n";
        md_ << '|';
        for (const auto& h : header) md_ << ' ' << escape_md(h) << " |";
        md_ << "\n|";
        for (std::size_t i = 0; i < header.size(); ++i) md_ << "---|";
        md_ << '\n';
        for (const auto& r : rows) {
            md_ << '|';
            for (const auto& c : r) md_ << ' ' << escape_md(c) << " |";
            md_ << '\n';
        }
        md_ << '\n';
    }
    void figure(const std::string& svg) { html_ << "<figure>" << svg << "</figure>\n"; }
    void list(const std::vector<std::string>& items) {
        if (items.empty()) return;
        html_ << "<ul>";
        for (const auto& i : items) html_ << "<li>" << escape_html(i) << "</li>";
        html_ << "</ul>\n";
        for (const auto& i : items) md_ << "- " << i << '\n';
        md_ << '\n';
    }

    std::string html() const { return html_.str(); }
    std::string markdown() const { return md_.str(); }

private:
    std::ostringstream html_;
    std::ostringstream md_;
};

constexpr double kW = 420, kH = 300, kPad = 40;

struct Series {
    std::string name;
    std::string colour;
    std::vector<std::pair<double, double>> points;
};

std::string svg_open(const std::string& title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << "<text x=\"" << kW / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" << escape_html(title)
       << "</text>"
       << "<rect x=\"" << kPad << "\" y=\"" << kPad - 10 << "\" width=\"" << kW - 2 * kPad + 10 << "\" height=\""
       << kH - 2 * kPad + 10 << "\" fill=\"none\" stroke=\"#999\"/>";
    return os.str();
}

std::string line_chart(const std::string& title, const std::vector<Series>& series, bool diagonal = false) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : series)
        for (auto [x, y] : s.points) {
            x0 = std::min(x0, x), x1 = std::max(x1, x);
            y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    auto px = [&](double x) { return kPad + (x - x0) / (x1 - x0) * (kW - 2 * kPad); };
    auto py = [&](double y) { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 2 * kPad); };

    std::ostringstream os;
    os << svg_open(title);
    if (diagonal)
        os << "<line x1=\"" << px(x0) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x1) << "\" y2=\"" << py(y1)
           << "\" stroke=\"#ccc\" stroke-dasharray=\"4\"/>";
    int legend = 0;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.colour << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : s.points) os << fixed(px(x), 1) << ',' << fixed(py(y), 1) << ' ';
        os << "\"/>";
        os << "<text x=\"" << kPad + 6 << "\" y=\"" << kPad + 6 + 14 * legend++ << "\" fill=\"" << s.colour
           << "\">" << escape_html(s.name) << "</text>";
    }
    os << "<text x=\"" << kPad << "\" y=\"" << kH - kPad + 16 << "\">" << fixed(x0, 2) << "</text>"
       << "<text x=\"" << kW - kPad << "\" y=\"" << kH - kPad + 16 << "\" text-anchor=\"end\">" << fixed(x1, 2)
       << "</text>"
       << "<text x=\"" << kPad - 4 << "\" y=\"" << kH - kPad << "\" text-anchor=\"end\">" << fixed(y0, 2) << "</text>"
       << "<text x=\"" << kPad - 4 << "\" y=\"" << kPad << "\" text-anchor=\"end\">" << fixed(y1, 2) << "</text>";
    os << "</svg>";
    return os.str();
}

// Bars on the left axis with an optional line on a separate 0..max scale.
std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                      const std::vector<double>& bars, const std::vector<double>& line = {}) {
    const std::size_t n = labels.size();
    double bmax = 0, lmax = 0;
    for (double b : bars) bmax = std::max(bmax, b);
    for (double l : line) lmax = std::max(lmax, l);
    if (bmax <= 0) bmax = 1;
    if (lmax <= 0) lmax = 1;
    const double slot = (kW - 2 * kPad) / static_cast<double>(std::max<std::size_t>(n, 1));
    const double base = kH - kPad;
    const double span = kH - 2 * kPad;

    std::ostringstream os;
    os << svg_open(title);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = bars[i] / bmax * span;
        os << "<rect x=\"" << fixed(kPad + slot * i + slot * 0.1, 1) << "\" y=\"" << fixed(base - h, 1)
           << "\" width=\"" << fixed(slot * 0.8, 1) << "\" height=\"" << fixed(h, 1) << "\" fill=\"#7ea6d8\"/>";
        os << "<text x=\"" << fixed(kPad + slot * (i + 0.5), 1) << "\" y=\"" << base + 14
           << "\" text-anchor=\"middle\" font-size=\"8\">" << escape_html(labels[i].substr(0, 14)) << "</text>";
    }
    if (!line.empty()) {
        os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < line.size(); ++i)
            os << fixed(kPad + slot * (i + 0.5), 1) << ',' << fixed(base - line[i] / lmax * span, 1) << ' ';
        os << "\"/>";
        os << "<text x=\"" << kW - kPad << "\" y=\"" << kPad << "\" text-anchor=\"end\" fill=\"#c0392b\">max "
           << fixed(lmax, 3) << "</text>";
    }
    os << "</svg>";
    return os.str();
}

Series curve(const std::string& name, const std::string& colour, const json& pts) {
    Series s{name, colour, {}};
    for (const auto& p : pts) s.points.emplace_back(p[0].get<double>(), p[1].get<double>());
    return s;
}

void data_section(Doc& doc, Pipeline& p) {
    doc.heading(2, "Data");
    const auto& cfg = p.project().config();
    std::vector<Row> rows;
    for (auto [name, ds] : {std::pair{"train", &p.train()}, std::pair{"validation", &p.valid()}}) {
        const double n = static_cast<double>(ds->n_rows());
        rows.push_back({name, std::to_string(ds->n_rows()), std::to_string(ds->bad_count()),
                        fixed(static_cast<double>(ds->bad_count()) / n)});
    }
    doc.para("Target '" + cfg.target.column + "' with bad level '" + cfg.target.bad_level + "'. Split ratio " +
             fixed(cfg.split.ratio, 2) + ", seed " + std::to_string(cfg.split.seed) +
             (cfg.split.stratify ? ", stratified." : "."));
    doc.table({"sample", "rows", "bad", "bad rate"}, rows);
    doc.para(std::to_string(p.train().predictors().size()) + " candidate predictors; binning method " +
             std::string(to_string(p.bins().params.method)) + ".");
}

void binning_section(Doc& doc, Pipeline& p) {
    doc.heading(2, "Binning");
    for (const auto& feature : p.fit().model.features) {
        const auto name = base_variable_name(feature);
        const auto& vb = p.bins().at(name);
        doc.heading(3, name);
        std::vector<Row> rows;
        std::vector<std::string> labels;
        std::vector<double> distr, badprob;
        for (const auto& b : vb.bins) {
            rows.push_back({b.label, fixed(b.count, 0), fixed(b.count_distr), fixed(b.good, 0), fixed(b.bad, 0),
                            fixed(b.badprob), fixed(b.woe), fixed(b.bin_iv)});
            labels.push_back(b.label);
            distr.push_back(b.count_distr);
            badprob.push_back(b.badprob);
        }
        doc.table({"bin", "count", "share", "good", "bad", "bad rate", "woe", "iv"}, rows);
        doc.para("Total IV " + fixed(vb.total_iv) + ".");
        doc.figure(bar_chart(name + ": share (bars) and bad rate (line)", labels, distr, badprob));
    }
}

void preselect_section(Doc& doc, Pipeline& p) {
    doc.heading(2, "Preselection");
    std::vector<Row> rows;
    json j = p.preselection();
    for (const auto& v : j["variables"])
        rows.push_back({v["name"].get<std::string>(), cell(v["iv"]), cell(v["psi"]), cell(v["missing_ratio"]),
                        v["kept"].get<bool>() ? "kept" : "dropped", v.value("reason", std::string())});
    doc.table({"variable", "iv", "psi", "missing", "status", "reason"}, rows);
    std::vector<std::string> w = j["warnings"].get<std::vector<std::string>>();
    doc.list(w);
}

void stepwise_section(Doc& doc, Pipeline& p) {
    const auto& fit = p.fit();
    doc.heading(2, "Variable selection");
    doc.para("Stepwise selection by " + fit.criterion + " (penalty " + fixed(fit.k) + " per parameter).");
    std::vector<Row> rows;
    for (const auto& step : fit.stepwise["trace"]) {
        std::string chosen = step["chosen"].is_null()
                                 ? "stop"
                                 : step["chosen"]["action"].get<std::string>() + " " +
                                       step["chosen"]["variable"].get<std::string>();
        for (const auto& c : step["candidates"]) {
            rows.push_back({std::to_string(step["step"].get<int>()), c["action"].get<std::string>(),
                            c["variable"].get<std::string>(), cell(c["criterion"]), cell(step["incumbent"]),
                            chosen});
        }
    }
    doc.table({"step", "action", "variable", "criterion", "incumbent", "chosen"}, rows);

    const auto& m = fit.model;
    std::vector<Row> coef{{"(Intercept)", fixed(m.intercept, 6), m.std_errors.empty() ? "" : fixed(m.std_errors[0], 6)}};
    for (std::size_t i = 0; i < m.features.size(); ++i)
        coef.push_back({m.features[i], fixed(m.coefficients[i], 6),
                        i + 1 < m.std_errors.size() ? fixed(m.std_errors[i + 1], 6) : ""});
    doc.table({"term", "estimate", "std. error"}, coef);
    doc.para("Deviance " + fixed(m.deviance) + ", iterations " + std::to_string(m.iterations) +
             (m.converged ? ", converged." : ", not converged."));
    if (!fit.vif.is_null()) {
        std::vector<Row> vrows;
        for (const auto& v : fit.vif) vrows.push_back({v["variable"].get<std::string>(), cell(v["vif"], 3)});
        doc.table({"variable", "vif"}, vrows);
    }
    doc.list(m.warnings);
}

void scorecard_section(Doc& doc, Pipeline& p) {
    const auto& card = p.scorecard();
    doc.heading(2, "Scorecard");
    doc.para("pdo " + fixed(card.scaling.pdo, 2) + ", " + fixed(card.scaling.points0, 2) + " points at bad odds " +
             fixed(card.scaling.odds0, 6) + ". Base points " + std::to_string(card.basepoints) + ".");
    std::vector<Row> rows{{"basepoints", "", "", std::to_string(card.basepoints)}};
    for (const auto& v : card.variables)
        for (const auto& b : v.bins) rows.push_back({v.name, b.label, fixed(b.woe), std::to_string(b.points)});
    doc.table({"variable", "bin", "woe", "points"}, rows);
    doc.list(card.warnings);
}

void performance_section(Doc& doc, Pipeline& p) {
    const auto& perf = p.performance();
    doc.heading(2, "Performance");
    std::vector<Row> rows;
    for (const char* s : {"train", "valid"}) {
        const auto& r = perf[s];
        std::string ci;
        if (!r["ci"].is_null())
            ci = "[" + fixed(r["ci"]["lower"].get<double>()) + ", " + fixed(r["ci"]["upper"].get<double>()) + "]";
        rows.push_back({s, cell(r["n"]), cell(r["n_bad"]), cell(r["auc"]), ci, cell(r["gini"]), cell(r["ks"])});
    }
    doc.table({"sample", "rows", "bad", "auc", "auc interval", "gini", "ks"}, rows);
    if (!perf["valid"]["ci"].is_null())
        doc.para("AUC intervals are stratified bootstrap percentiles (" +
                 cell(perf["valid"]["ci"]["replicates"]) + " replicates, level " +
                 cell(perf["valid"]["ci"]["level"], 2) + ").");

    const auto& c = perf["curves"];
    doc.figure(line_chart("ROC (validation)", {curve("ROC", "#2c6fbb", c["roc"])}, true));
    doc.figure(line_chart("ECDF of score (validation)",
                          {curve("good", "#27ae60", c["ecdf_good"]), curve("bad", "#c0392b", c["ecdf_bad"])}));
    {
        const auto& d = c["density"];
        auto edges = d["edges"].get<std::vector<double>>();
        Series good{"good", "#27ae60", {}}, bad{"bad", "#c0392b", {}};
        for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
            const double mid = (edges[i] + edges[i + 1]) / 2;
            good.points.emplace_back(mid, d["good"][i].get<double>());
            bad.points.emplace_back(mid, d["bad"][i].get<double>());
        }
        doc.figure(line_chart("Score density by class (validation)", {good, bad}));
    }

    doc.heading(3, "Gains (validation)");
    std::vector<Row> grows;
    std::vector<std::string> labels;
    std::vector<double> counts, badprob;
    for (const auto& r : perf["gains"]["rows"]) {
        grows.push_back({r["bin"].get<std::string>(), cell(r["count"], 0), cell(r["bad"], 0), cell(r["badprob"]),
                         cell(r["cum_badprob"]), cell(r["approval_rate"])});
        labels.push_back(r["bin"].get<std::string>());
        counts.push_back(r["count"].get<double>());
        badprob.push_back(r["badprob"].get<double>());
    }
    doc.table({"score band", "count", "bad", "bad rate", "cum. bad rate", "approval rate"}, grows);
    doc.figure(bar_chart("Gains: count (bars) and bad rate (line)", labels, counts, badprob));
}

void grades_section(Doc& doc, Pipeline& p) {
    const auto& g = p.performance()["grades"];
    doc.heading(2, "Rating grades");
    doc.para("Binomial tests are exact and two-sided, summing outcomes no more likely than the observed one, at level " +
             cell(g["test_level"], 2) + "; the central tendency check allows a relative deviation of " +
             cell(g["ct_tolerance"], 2) + ".");
    std::vector<Row> rows;
    for (const auto& x : g["grades"])
        rows.push_back({x["grade"].get<std::string>(), cell(x["count"], 0), cell(x["bad"], 0), cell(x["pd"]),
                        cell(x["observed"]), cell(x["p_value"]), cell(x["pass"])});
    doc.table({"grade", "count", "bad", "mean pd", "observed", "p-value", "pass"}, rows);
    std::vector<std::string> facts{"HHI " + cell(g["hhi"]),
                                   "mean pd " + cell(g["mean_pd"]) + ", observed bad rate " + cell(g["observed_rate"]) +
                                       ", central tendency " + (g["ct_pass"].is_null() ? "n/a" : cell(g["ct_pass"]))};
    if (!g["hosmer_lemeshow"].is_null()) {
        const auto& hl = g["hosmer_lemeshow"];
        facts.push_back("Hosmer-Lemeshow " + cell(hl["statistic"]) + " on " + cell(hl["df"]) + " df, p " +
                        cell(hl["p_value"]));
    }
    doc.list(facts);
    doc.list(g["warnings"].get<std::vector<std::string>>());
}

void stability_section(Doc& doc, Pipeline& p) {
    if (!p.project().has(Stage::stability)) return;
    auto j = p.stage_json(Stage::stability);
    doc.heading(2, "Stability");
    doc.para("Compared sample: " + j["sample"].get<std::string>() + ".");
    if (j.contains("score_psi"))
        doc.para("Score PSI " + cell(j["score_psi"]["psi"]) + " (" + j["score_psi"]["label"].get<std::string>() + ").");
    std::vector<Row> rows;
    for (const auto& v : j["variables"])
        rows.push_back({v["variable"].get<std::string>(), cell(v["psi"]), v["label"].get<std::string>()});
    doc.table({"variable", "psi", "status"}, rows);
}

void reject_section(Doc& doc, Pipeline& p) {
    if (!p.project().has(Stage::reject_infer)) return;
    auto j = p.stage_json(Stage::reject_infer);
    doc.heading(2, "Reject inference");
    doc.para("Method: " + j["method"].get<std::string>() + ".");
    std::vector<Row> rows;
    if (j["method"] == "augmentation") {
        for (const auto& b : j["bands"])
            rows.push_back({cell(b["band"], 1), cell(b["n_accepted"]), cell(b["n_rejected"]), cell(b["weight"])});
        doc.table({"band", "accepted", "rejected", "weight"}, rows);
    } else {
        for (const auto& b : j["bands"])
            rows.push_back({cell(b["band"]), cell(b["lower"]), cell(b["upper"]), cell(b["pd"]), cell(b["alpha"]),
                            cell(b["n_rejected"]), cell(b["n_inferred_bad"])});
        doc.table({"band", "lower", "upper", "pd", "alpha", "rejected", "inferred bad"}, rows);
    }
    std::vector<Row> coef;
    const auto& fm = j["final_model"];
    coef.push_back({"(Intercept)", cell(fm["intercept"], 6)});
    for (auto it = fm["coefficients"].begin(); it != fm["coefficients"].end(); ++it)
        coef.push_back({it.key(), cell(it.value(), 6)});
    doc.table({"term", "refit estimate"}, coef);
    doc.list(j["warnings"].get<std::vector<std::string>>());
}

constexpr const char* kStyle =
    "body{font-family:sans-serif;max-width:960px;margin:2em auto;color:#222}"
    "table{border-collapse:collapse;margin:0.5em 0 1em}"
    "td,th{border:1px solid #ccc;padding:2px 8px;text-align:right}"
    "td:first-child,th:first-child{text-align:left}"
    "figure{margin:0.5em 0}";

} // namespace

ReportDocument render_report(Pipeline& p, const std::string& generated) {
    p.project().require(Stage::report);
    Doc doc;
    doc.heading(1, "Scorecard report");
    doc.para("Generated: " + generated);
    data_section(doc, p);
    binning_section(doc, p);
    preselect_section(doc, p);
    stepwise_section(doc, p);
    scorecard_section(doc, p);
    performance_section(doc, p);
    grades_section(doc, p);
    stability_section(doc, p);
    reject_section(doc, p);

    ReportDocument out;
    out.html = std::string("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Scorecard report</title><style>") +
               kStyle + "</style></head><body>\n" + doc.html() + "</body></html>\n";
    out.markdown = doc.markdown();
    return out;
}

} // namespace forge
