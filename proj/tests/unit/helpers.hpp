#pragma once

#include "forge/dataset.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path data_dir() { return FORGE_DATA_DIR; }

inline forge::Dataset german_credit() {
    return forge::load_csv(data_dir() / "germancredit.csv", forge::TargetSpec{"creditability", "bad", "good"},
                           forge::load_schema(data_dir() / "germancredit.schema.json"));
}

inline std::vector<std::string> class_labels(const std::vector<int>& bad) {
    std::vector<std::string> out;
    for (int b : bad) out.emplace_back(b ? "bad" : "good");
    return out;
}

// Dataset with an encoded target from numeric columns and 0/1 labels.
inline forge::Dataset make_numeric(const std::vector<std::pair<std::string, std::vector<double>>>& cols,
                                   const std::vector<int>& bad) {
    std::vector<forge::Column> columns;
    for (const auto& [name, v] : cols) columns.push_back(forge::Column::numeric(name, v));
    columns.push_back(forge::Column::categorical("y", class_labels(bad)));
    return forge::Dataset(std::move(columns), forge::TargetSpec{"y", "bad", "good"});
}

// Temporary directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("forge-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace testing
