#pragma once

#include <unistd.h>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "colearn/numerics.hpp"

namespace testing {

inline colearn::Matrix random_matrix(colearn::Rng& rng, std::size_t rows, std::size_t cols,
                                     double lo = -1.0, double hi = 1.0) {
    colearn::Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

// Rows drawn from a Dirichlet(1,...,1) via normalized exponentials.
inline colearn::Matrix random_stochastic(colearn::Rng& rng, std::size_t rows, std::size_t cols) {
    colearn::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < cols; ++c) {
            m(r, c) = -std::log(1.0 - rng.uniform());
            s += m(r, c);
        }
        for (std::size_t c = 0; c < cols; ++c) m(r, c) /= s;
    }
    return m;
}

inline colearn::Matrix one_hot(const std::vector<std::size_t>& labels, std::size_t classes) {
    colearn::Matrix m(labels.size(), classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) m(i, labels[i]) = 1.0;
    return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("colearn-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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

}  // namespace testing
