#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>

#include "aslice/corpus.hpp"

namespace test {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("aslice-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline aslice::Dataset tiny_dataset(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<float> normal;
    std::vector<float> values(n * d);
    for (auto& v : values) v = normal(gen);
    std::vector<aslice::ExampleRecord> recs(n);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < k; ++j) names.push_back("s" + std::to_string(j));
    for (std::size_t i = 0; i < n; ++i) {
        recs[i].id = "r" + std::to_string(i);
        recs[i].y = static_cast<std::int64_t>(gen() % 2);
        aslice::SliceVector s(k);
        for (auto& b : s) b = static_cast<std::uint8_t>(gen() % 2);
        recs[i].s = s;
    }
    return aslice::Dataset(aslice::FeatureMatrix::dense(n, d, std::move(values)), std::move(recs), names, "tiny");
}

}  // namespace test
