#pragma once

#include "forge/dataset.hpp"
#include "forge/logit.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace forge {

// Score band of the augmentation: posterior pd rounded to one decimal.
int augmentation_band(double pd);

struct AugmentationBand {
    int band = 0;  // pd rounded to band/10
    std::size_t n_accepted = 0;
    std::size_t n_rejected = 0;
    // weight = 1 + n_rejected / n_accepted = weight_num / weight_den exactly
    std::size_t weight_num = 0;
    std::size_t weight_den = 0;
    double weight = 1.0;
    bool covered = true;  // false when the band holds no accepted rows
};

struct AugmentationResult {
    std::vector<AugmentationBand> bands;  // ascending band order
    std::vector<double> weights;          // one per accepted row
    std::size_t uncovered_rejected = 0;
    LogitModel initial;
    LogitModel final_model;
    std::vector<std::string> warnings;
};

AugmentationResult augmentation(const Dataset& accepted, const Dataset& rejected,
                                std::span<const std::string> features, const LogitOptions& opts = {});

// Weights from band counts; separated out so the identity can be checked
// on arbitrary band configurations.
std::vector<AugmentationBand> augmentation_bands(std::span<const int> accepted_band,
                                                 std::span<const int> rejected_band);

struct ParcellingSpec {
    std::vector<double> probs{0.0, 0.25, 0.5, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> alpha;  // empty means 1 for every band
    std::uint64_t seed = 42;

    void validate() const;
};

struct ParcelBand {
    std::size_t index = 0;
    double lower = 0.0;
    double upper = 0.0;
    std::size_t n_accepted = 0;
    std::size_t n_accepted_bad = 0;
    double pd = 0.0;  // observed bad rate of accepted rows in the band
    double alpha = 1.0;
    double draw_probability = 0.0;  // clamp(pd * alpha, 0, 1)
    bool clamped = false;
    std::size_t n_rejected = 0;
    std::size_t n_inferred_bad = 0;
};

struct ParcellingResult {
    std::vector<ParcelBand> bands;
    std::vector<int> inferred_bad;  // per rejected row, input order
    Dataset combined;               // features, target, source, weight
    LogitModel initial;
    LogitModel final_model;
    std::vector<std::string> warnings;
};

// Band index of pd given edges e0..eJ: e_j <= pd < e_{j+1}, clamped to the end bands.
std::size_t parcel_band(std::span<const double> edges, double pd);

ParcellingResult parcelling(const Dataset& accepted, const Dataset& rejected, std::span<const std::string> features,
                            const ParcellingSpec& spec, const LogitOptions& opts = {});

// Draw labels band by band (bands ascending, rows in input order).
std::vector<int> draw_parcel_labels(std::span<const std::size_t> band_of_row, std::span<const double> probability,
                                    std::uint64_t seed);

void to_json(nlohmann::json& j, const AugmentationResult& r);
void to_json(nlohmann::json& j, const ParcellingResult& r);

} // namespace forge
