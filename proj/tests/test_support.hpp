#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "flameiv/dataset.hpp"

// Shared helpers for the test suites. The least-squares oracle here is a
// plain Gauss-Jordan solve of the normal equations so it shares no code
// with the library's regression path.
namespace testsup {

inline std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                        std::vector<double> b) {
    const std::size_t n = a.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        }
        if (std::fabs(a[pivot][col]) < 1e-12) throw std::runtime_error("singular system");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
    return x;
}

// Ridge least squares via normal equations; returns the residual sum of
// squares. rows[i] is a design row, intercept not included here.
inline double ridge_rss_oracle(const std::vector<std::vector<double>>& rows,
                               const std::vector<double>& y, double ridge) {
    const std::size_t n = rows.size();
    const std::size_t k = rows[0].size() + 1;  // + intercept
    std::vector<std::vector<double>> gram(k, std::vector<double>(k, 0.0));
    std::vector<double> xty(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> full(k, 1.0);
        for (std::size_t j = 0; j < rows[i].size(); ++j) full[j + 1] = rows[i][j];
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) gram[a][b] += full[a] * full[b];
            xty[a] += full[a] * y[i];
        }
    }
    for (std::size_t a = 1; a < k; ++a) gram[a][a] += ridge;
    const auto beta = solve_linear(gram, xty);
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double fit = beta[0];
        for (std::size_t j = 0; j < rows[i].size(); ++j) fit += beta[j + 1] * rows[i][j];
        rss += (y[i] - fit) * (y[i] - fit);
    }
    return rss;
}

// Random categorical dataset for property tests.
inline flameiv::Dataset random_dataset(std::mt19937_64& gen, int n, int p, int max_cardinality,
                                       double z_share = 0.5) {
    flameiv::CovariateSchema schema;
    std::vector<int> cards(p);
    for (int j = 0; j < p; ++j) {
        schema.names.push_back("x" + std::to_string(j + 1));
        cards[j] = 2 + static_cast<int>(gen() % (max_cardinality - 1));
    }
    schema.cardinalities = cards;

    std::vector<std::int32_t> x(static_cast<std::size_t>(n) * p);
    std::vector<std::uint8_t> z(n);
    std::vector<double> t(n), y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            x[static_cast<std::size_t>(i) * p + j] = static_cast<std::int32_t>(gen() % cards[j]);
        }
        z[i] = (gen() % 1000) < z_share * 1000 ? 1 : 0;
        t[i] = static_cast<double>(gen() % 4);
        y[i] = static_cast<double>(gen() % 2000) / 100.0 - 10.0;
    }
    return flameiv::Dataset(std::move(schema), std::move(x), std::move(z), std::move(t),
                            std::move(y));
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("flameiv_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

inline void write_file(const std::string& path, const std::string& content) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fwrite(content.data(), 1, content.size(), f);
    std::fclose(f);
}

}  // namespace testsup
