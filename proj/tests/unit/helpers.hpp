#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ultr/corpus_io.hpp"

namespace test {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        m_path = std::filesystem::temp_directory_path() / ("ultr-" + tag + "-" + std::to_string(rd()));
        std::filesystem::remove_all(m_path);
        std::filesystem::create_directories(m_path);
    }
    ~TempDir() { std::filesystem::remove_all(m_path); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

  private:
    std::filesystem::path m_path;
};

inline ultr::FeatureVector random_features(std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    ultr::FeatureVector f{};
    for (auto& v: f) {
        v = n(rng);
    }
    return f;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0)
{
    std::normal_distribution<double> d(0.0, scale);
    std::vector<double> v(n);
    for (auto& x: v) {
        x = d(rng);
    }
    return v;
}

}  // namespace test
