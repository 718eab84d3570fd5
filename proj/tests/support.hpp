#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fedgate/dataset.hpp"
#include "fedgate/rng.hpp"

namespace testsupport {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("fedgate_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

    std::filesystem::path write(const std::string& name, const std::string& text) const {
        const auto p = path_ / name;
        std::ofstream(p, std::ios::binary) << text;
        return p;
    }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline fedgate::ClientDataset make_client(int id, const std::vector<double>& x, const std::vector<double>& y) {
    fedgate::ClientDataset c;
    c.client_id = id;
    c.dim = 1;
    c.features = x;
    c.targets = y;
    return c;
}

// y = slope*x + intercept + noise on x ~ U(-1, 1).
inline fedgate::ClientDataset linear_client(int id, std::size_t n, double slope, double intercept, double noise,
                                            std::uint64_t seed) {
    fedgate::Rng rng(seed);
    fedgate::ClientDataset c;
    c.client_id = id;
    c.dim = 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = -1.0 + 2.0 * rng.uniform();
        c.features.push_back(x);
        c.targets.push_back(slope * x + intercept + rng.normal(0.0, noise));
    }
    return c;
}

inline fedgate::Dataset table(const std::vector<std::string>& cols, const std::vector<std::vector<double>>& rows) {
    fedgate::Dataset d("t", cols);
    for (const auto& r : rows) d.append_row(r);
    return d;
}

}  // namespace testsupport
