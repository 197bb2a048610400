#include "forge/reject_inference.hpp"

#include "forge/error.hpp"
#include "forge/performance.hpp"
#include "forge/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace forge {

int augmentation_band(double pd) { return static_cast<int>(std::lround(pd * 10.0)); }

std::vector<AugmentationBand> augmentation_bands(std::span<const int> accepted_band,
                                                 std::span<const int> rejected_band) {
    std::map<int, AugmentationBand> bands;
    for (int b : accepted_band) {
        auto& band = bands[b];
        band.band = b;
        ++band.n_accepted;
    }
    for (int b : rejected_band) {
        auto& band = bands[b];
        band.band = b;
        ++band.n_rejected;
    }
    std::vector<AugmentationBand> out;
    for (auto& [b, band] : bands) {
        band.covered = band.n_accepted > 0;
        if (band.covered) {
            band.weight_num = band.n_accepted + band.n_rejected;
            band.weight_den = band.n_accepted;
            band.weight = static_cast<double>(band.weight_num) / static_cast<double>(band.weight_den);
        }
        out.push_back(band);
    }
    return out;
}

namespace {

void check_features(const Dataset& accepted, const Dataset& rejected, std::span<const std::string> features) {
    if (!accepted.has_target()) throw ValidationError("accepted sample needs an encoded target");
    for (const auto& f : features) {
        if (!accepted.has_column(f)) throw ValidationError("accepted sample lacks feature '" + f + "'");
        if (!rejected.has_column(f)) throw ValidationError("rejected sample lacks feature '" + f + "'");
    }
    const auto bad = accepted.bad_count();
    if (bad == 0 || bad == accepted.n_rows()) throw ValidationError("accepted sample needs both classes");
}

std::string band_text(std::size_t j, double lo, double hi) {
    return "band " + std::to_string(j + 1) + " [" + format_number(lo) + "," + format_number(hi) + ")";
}

} // namespace

AugmentationResult augmentation(const Dataset& accepted, const Dataset& rejected,
                                std::span<const std::string> features, const LogitOptions& opts) {
    check_features(accepted, rejected, features);
    AugmentationResult r;
    r.initial = fit_logit(accepted, features, std::nullopt, opts);
    const auto p_acc = predict_logit(r.initial, accepted);
    const auto p_rej = predict_logit(r.initial, rejected);
    std::vector<int> acc_band(accepted.n_rows()), rej_band(rejected.n_rows());
    for (std::size_t i = 0; i < acc_band.size(); ++i) acc_band[i] = augmentation_band(p_acc[static_cast<Eigen::Index>(i)]);
    for (std::size_t i = 0; i < rej_band.size(); ++i) rej_band[i] = augmentation_band(p_rej[static_cast<Eigen::Index>(i)]);
    r.bands = augmentation_bands(acc_band, rej_band);

    std::map<int, double> weight;
    for (const auto& b : r.bands) {
        if (b.covered) {
            weight[b.band] = b.weight;
        } else {
            r.uncovered_rejected += b.n_rejected;
            r.warnings.push_back("band " + format_number(b.band / 10.0) + " holds " + std::to_string(b.n_rejected) +
                                 " rejected rows but no accepted rows; they carry no weight");
        }
    }
    r.weights.resize(accepted.n_rows());
    for (std::size_t i = 0; i < acc_band.size(); ++i) r.weights[i] = weight.at(acc_band[i]);
    r.final_model = fit_logit(accepted, features, std::span<const double>(r.weights), opts);
    return r;
}

void ParcellingSpec::validate() const {
    if (probs.size() < 2) throw ValidationError("probs needs at least two entries");
    if (probs.front() != 0.0 || probs.back() != 1.0) throw ValidationError("probs must start at 0 and end at 1");
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (!(probs[i - 1] < probs[i])) throw ValidationError("probs must be strictly ascending");
    if (!alpha.empty() && alpha.size() != probs.size() - 1)
        throw ValidationError("alpha needs one entry per band (" + std::to_string(probs.size() - 1) + ")");
    for (double a : alpha)
        if (!(a >= 0.0) || !std::isfinite(a)) throw ValidationError("alpha entries must be nonnegative");
}

std::size_t parcel_band(std::span<const double> edges, double pd) {
    const std::size_t nbands = edges.size() - 1;
    auto inner = edges.subspan(1, nbands - 1);
    return static_cast<std::size_t>(std::upper_bound(inner.begin(), inner.end(), pd) - inner.begin());
}

std::vector<int> draw_parcel_labels(std::span<const std::size_t> band_of_row, std::span<const double> probability,
                                    std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> out(band_of_row.size(), 0);
    for (std::size_t j = 0; j < probability.size(); ++j)
        for (std::size_t i = 0; i < band_of_row.size(); ++i)
            if (band_of_row[i] == j) out[i] = rng.uniform() < probability[j] ? 1 : 0;
    return out;
}

ParcellingResult parcelling(const Dataset& accepted, const Dataset& rejected, std::span<const std::string> features,
                            const ParcellingSpec& spec, const LogitOptions& opts) {
    spec.validate();
    check_features(accepted, rejected, features);
    ParcellingResult r;
    r.initial = fit_logit(accepted, features, std::nullopt, opts);
    const auto p_acc = predict_logit(r.initial, accepted);
    const auto p_rej = predict_logit(r.initial, rejected);

    std::vector<double> acc(p_acc.data(), p_acc.data() + p_acc.size());
    std::vector<double> edges;
    for (double q : spec.probs) edges.push_back(quantile7(acc, q));
    const std::size_t nbands = edges.size() - 1;

    r.bands.resize(nbands);
    for (std::size_t j = 0; j < nbands; ++j) {
        r.bands[j].index = j;
        r.bands[j].lower = edges[j];
        r.bands[j].upper = edges[j + 1];
        r.bands[j].alpha = spec.alpha.empty() ? 1.0 : spec.alpha[j];
    }
    const auto y = accepted.bad_flags();
    for (std::size_t i = 0; i < acc.size(); ++i) {
        auto& b = r.bands[parcel_band(edges, acc[i])];
        ++b.n_accepted;
        b.n_accepted_bad += static_cast<std::size_t>(y[i]);
    }
    std::vector<double> prob(nbands);
    for (auto& b : r.bands) {
        if (b.n_accepted == 0)
            throw ValidationError(band_text(b.index, b.lower, b.upper) + " has no accepted rows; its PD is undefined");
        b.pd = static_cast<double>(b.n_accepted_bad) / static_cast<double>(b.n_accepted);
        double p = b.pd * b.alpha;
        if (p > 1.0) {
            p = 1.0;
            b.clamped = true;
            r.warnings.push_back(band_text(b.index, b.lower, b.upper) + ": pd * alpha exceeds 1, clamped");
        }
        b.draw_probability = p;
        prob[b.index] = p;
    }
    std::vector<std::size_t> band_of_row(rejected.n_rows());
    for (std::size_t i = 0; i < band_of_row.size(); ++i) {
        band_of_row[i] = parcel_band(edges, p_rej[static_cast<Eigen::Index>(i)]);
        ++r.bands[band_of_row[i]].n_rejected;
    }
    r.inferred_bad = draw_parcel_labels(band_of_row, prob, spec.seed);
    for (std::size_t i = 0; i < band_of_row.size(); ++i)
        r.bands[band_of_row[i]].n_inferred_bad += static_cast<std::size_t>(r.inferred_bad[i]);

    // Combined sample: accepted rows first, then rejected rows.
    const std::size_t na = accepted.n_rows(), nr = rejected.n_rows();
    std::vector<Column> cols;
    for (const auto& f : features) {
        const auto& a = accepted.column(f);
        const auto& b = rejected.column(f);
        if (!a.is_numeric() || !b.is_numeric()) throw ValidationError("feature '" + f + "' must be numeric");
        std::vector<double> v(a.numbers().begin(), a.numbers().end());
        v.insert(v.end(), b.numbers().begin(), b.numbers().end());
        std::vector<std::uint8_t> m(a.missing().begin(), a.missing().end());
        m.insert(m.end(), b.missing().begin(), b.missing().end());
        cols.push_back(Column::numeric(f, std::move(v), std::move(m)));
    }
    std::vector<std::string> target, source;
    for (std::size_t i = 0; i < na; ++i) {
        target.emplace_back(y[i] ? kBad : kGood);
        source.emplace_back("accepted");
    }
    for (std::size_t i = 0; i < nr; ++i) {
        target.emplace_back(r.inferred_bad[i] ? kBad : kGood);
        source.emplace_back("rejected");
    }
    const auto& tname = accepted.target_name();
    cols.push_back(Column::categorical(tname, std::move(target), {}, {std::string(kGood), std::string(kBad)}));
    cols.push_back(Column::categorical("source", std::move(source), {}, {"accepted", "rejected"}));
    cols.push_back(Column::numeric("weight", std::vector<double>(na + nr, 1.0)));
    r.combined = Dataset(std::move(cols), TargetSpec{tname, std::string(kBad), std::string(kGood)});
    r.final_model = fit_logit(r.combined, features, std::nullopt, opts);
    return r;
}

void to_json(nlohmann::json& j, const AugmentationResult& r) {
    auto bands = nlohmann::json::array();
    for (const auto& b : r.bands)
        bands.push_back({{"band", b.band / 10.0},
                         {"n_accepted", b.n_accepted},
                         {"n_rejected", b.n_rejected},
                         {"covered", b.covered},
                         {"weight", b.covered ? nlohmann::json(b.weight) : nlohmann::json()}});
    j = {{"method", "augmentation"},
         {"band_rule", "pd rounded to one decimal"},
         {"bands", std::move(bands)},
         {"uncovered_rejected", r.uncovered_rejected},
         {"initial_model", r.initial},
         {"final_model", r.final_model},
         {"warnings", r.warnings}};
}

void to_json(nlohmann::json& j, const ParcellingResult& r) {
    auto bands = nlohmann::json::array();
    for (const auto& b : r.bands)
        bands.push_back({{"band", b.index + 1},
                         {"lower", b.lower},
                         {"upper", b.upper},
                         {"n_accepted", b.n_accepted},
                         {"pd", b.pd},
                         {"alpha", b.alpha},
                         {"draw_probability", b.draw_probability},
                         {"clamped", b.clamped},
                         {"n_rejected", b.n_rejected},
                         {"n_inferred_bad", b.n_inferred_bad}});
    j = {{"method", "parcelling"},
         {"bands", std::move(bands)},
         {"initial_model", r.initial},
         {"final_model", r.final_model},
         {"warnings", r.warnings}};
}

} // namespace forge
