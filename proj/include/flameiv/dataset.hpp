#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace flameiv {

enum class ColumnRole { Covariate, Instrument, Treatment, Outcome };

struct CovariateSchema {
    std::vector<std::string> names;        // length p
    std::vector<int> cardinalities;        // k_j >= 2 for every covariate

    int p() const { return static_cast<int>(names.size()); }
    bool operator==(const CovariateSchema&) const = default;
};

// One unit's view; x spans the p covariate codes.
struct Unit {
    int id;
    const std::int32_t* x;
    int p;
    int z;
    double t;
    double y;
};

// Immutable after construction; column-major storage so the matching kernel
// can stream covariates without touching outcomes.
class Dataset {
public:
    Dataset() = default;
    Dataset(CovariateSchema schema, std::vector<std::int32_t> x, std::vector<std::uint8_t> z,
            std::vector<double> t, std::vector<double> y, std::vector<int> ids = {});

    int n() const { return n_; }
    int p() const { return schema_.p(); }
    const CovariateSchema& schema() const { return schema_; }

    std::int32_t x(int i, int j) const { return x_[static_cast<std::size_t>(i) * p() + j]; }
    const std::int32_t* row(int i) const { return x_.data() + static_cast<std::size_t>(i) * p(); }
    int z(int i) const { return z_[i]; }
    double t(int i) const { return t_[i]; }
    double y(int i) const { return y_[i]; }
    int id(int i) const { return ids_[i]; }
    const std::vector<int>& ids() const { return ids_; }

    Unit unit(int i) const { return Unit{ids_[i], row(i), p(), z(i), t_[i], y_[i]}; }

    // Position of a unit id, or -1. Built lazily on first use.
    int index_of(int id) const;

    Dataset subset(const std::vector<int>& positions) const;

    bool operator==(const Dataset& other) const;

private:
    CovariateSchema schema_;
    std::vector<std::int32_t> x_;  // n*p row-major
    std::vector<std::uint8_t> z_;
    std::vector<double> t_;
    std::vector<double> y_;
    std::vector<int> ids_;
    int n_ = 0;
    mutable std::vector<int> id_index_;  // lazily filled
};

struct CoarseningSpec {
    std::string column;
    int bins = 5;  // 10 for high-priority columns
};

struct CoarsenResult {
    std::vector<std::int32_t> codes;
    std::vector<double> edges;  // bin i covers (edges[i-1], edges[i]]
    int actual_bins = 0;        // < requested when too few distinct values
};

// Equal-frequency (quantile) binning; monotone in the input value.
CoarsenResult coarsen(const std::vector<double>& values, const CoarseningSpec& spec);

struct LoadResult {
    Dataset dataset;
    std::map<std::string, CoarsenResult> coarsened;  // by column name
};

// CSV ingestion. Role map must name exactly one instrument, treatment and
// outcome column; every unmapped column is a covariate. Covariate columns
// holding non-integer values require a CoarseningSpec. Cardinalities are
// inferred as max(code)+1 (floor 2) unless an override schema is given.
LoadResult load_dataset(const std::string& path,
                        const std::map<std::string, ColumnRole>& column_roles,
                        const std::vector<CoarseningSpec>& coarsen_specs = {},
                        const std::optional<CovariateSchema>& schema_override = std::nullopt);

void save_dataset(const Dataset& d, const std::string& path);

struct SplitResult {
    Dataset training;
    Dataset holdout;
};

// Disjoint exhaustive partition; holdout gets round(fraction*n) units chosen
// by a seeded shuffle. Row order within each part follows the input.
SplitResult split_holdout(const Dataset& d, double fraction, std::uint64_t seed);

}  // namespace flameiv
