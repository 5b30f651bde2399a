#include "flameiv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>

#include "flameiv/csv.hpp"
#include "flameiv/errors.hpp"
#include "flameiv/rng.hpp"

namespace flameiv {

Dataset::Dataset(CovariateSchema schema, std::vector<std::int32_t> x, std::vector<std::uint8_t> z,
                 std::vector<double> t, std::vector<double> y, std::vector<int> ids)
    : schema_(std::move(schema)),
      x_(std::move(x)),
      z_(std::move(z)),
      t_(std::move(t)),
      y_(std::move(y)),
      ids_(std::move(ids)) {
    // n = 0 is tolerated as a boundary value (e.g. an empty holdout split);
    // ingestion rejects empty inputs before construction.
    n_ = static_cast<int>(z_.size());
    const auto p = static_cast<std::size_t>(schema_.p());
    if (x_.size() != p * n_ || t_.size() != static_cast<std::size_t>(n_) ||
        y_.size() != static_cast<std::size_t>(n_)) {
        throw ConfigError("dataset column lengths disagree");
    }
    if (ids_.empty()) {
        ids_.resize(n_);
        std::iota(ids_.begin(), ids_.end(), 0);
    } else if (ids_.size() != static_cast<std::size_t>(n_)) {
        throw ConfigError("id column length disagrees");
    }
    for (int j = 0; j < schema_.p(); ++j) {
        if (schema_.cardinalities[j] < 2) {
            throw ConfigError("covariate '" + schema_.names[j] + "' has cardinality < 2");
        }
    }
    for (int i = 0; i < n_; ++i) {
        if (z_[i] > 1) throw ValidationError("z out of {0,1} at row " + std::to_string(i + 1), i + 1);
        if (!std::isfinite(t_[i])) throw ValidationError("non-finite t at row " + std::to_string(i + 1), i + 1);
        if (!std::isfinite(y_[i])) throw ValidationError("non-finite y at row " + std::to_string(i + 1), i + 1);
        for (int j = 0; j < schema_.p(); ++j) {
            const auto v = this->x(i, j);
            if (v < 0 || v >= schema_.cardinalities[j]) {
                throw ValidationError("covariate '" + schema_.names[j] + "' code " +
                                          std::to_string(v) + " out of range at row " +
                                          std::to_string(i + 1),
                                      i + 1);
            }
        }
    }
}

int Dataset::index_of(int id) const {
    if (n_ == 0) return -1;
    if (id_index_.empty()) {
        int max_id = 0;
        for (int v : ids_) max_id = std::max(max_id, v);
        id_index_.assign(static_cast<std::size_t>(max_id) + 1, -1);
        for (int i = 0; i < n_; ++i) id_index_[ids_[i]] = i;
    }
    if (id < 0 || id >= static_cast<int>(id_index_.size())) return -1;
    return id_index_[id];
}

Dataset Dataset::subset(const std::vector<int>& positions) const {
    const int p = schema_.p();
    std::vector<std::int32_t> x;
    x.reserve(positions.size() * p);
    std::vector<std::uint8_t> z;
    std::vector<double> t, y;
    std::vector<int> ids;
    for (int i : positions) {
        const auto* r = row(i);
        x.insert(x.end(), r, r + p);
        z.push_back(z_[i]);
        t.push_back(t_[i]);
        y.push_back(y_[i]);
        ids.push_back(ids_[i]);
    }
    return Dataset(schema_, std::move(x), std::move(z), std::move(t), std::move(y), std::move(ids));
}

bool Dataset::operator==(const Dataset& other) const {
    return schema_ == other.schema_ && x_ == other.x_ && z_ == other.z_ && t_ == other.t_ &&
           y_ == other.y_ && ids_ == other.ids_;
}

CoarsenResult coarsen(const std::vector<double>& values, const CoarseningSpec& spec) {
    if (spec.bins < 2) throw ConfigError("coarsening needs at least 2 bins");
    if (values.empty()) throw EmptyInputError("coarsening on empty column");
    for (double v : values) {
        if (!std::isfinite(v)) throw ValidationError("non-finite value in column '" + spec.column + "'");
    }

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    for (double v : sorted) {
        if (distinct.empty() || v != distinct.back()) distinct.push_back(v);
    }

    CoarsenResult out;
    if (static_cast<int>(distinct.size()) <= spec.bins) {
        // Too few distinct values: one bin per value.
        out.edges.assign(distinct.begin(), distinct.end() - 1);
    } else {
        // Interior edges at quantiles i/bins with linear interpolation.
        const auto n = sorted.size();
        for (int i = 1; i < spec.bins; ++i) {
            const double pos = static_cast<double>(i) / spec.bins * (n - 1);
            const auto lo = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(lo);
            const double q = lo + 1 < n ? sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                                        : sorted[lo];
            if (out.edges.empty() || q > out.edges.back()) out.edges.push_back(q);
        }
    }
    out.actual_bins = static_cast<int>(out.edges.size()) + 1;
    out.codes.reserve(values.size());
    for (double v : values) {
        const auto code = std::lower_bound(out.edges.begin(), out.edges.end(), v) -
                          out.edges.begin();  // count of edges < v
        out.codes.push_back(static_cast<std::int32_t>(code));
    }
    return out;
}

namespace {

double parse_number(const std::string& s, const std::string& col, long row) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
        throw ValidationError("column '" + col + "' has non-numeric value '" + s + "' at row " +
                                  std::to_string(row),
                              row);
    }
    return v;
}

bool is_integral_code(double v) { return v >= 0.0 && v == std::floor(v) && v <= 1e9; }

}  // namespace

LoadResult load_dataset(const std::string& path,
                        const std::map<std::string, ColumnRole>& column_roles,
                        const std::vector<CoarseningSpec>& coarsen_specs,
                        const std::optional<CovariateSchema>& schema_override) {
    const CsvTable table = read_csv(path);
    if (table.rows.empty()) throw EmptyInputError("no data rows in " + path);

    long z_col = -1, t_col = -1, y_col = -1;
    std::vector<long> cov_cols;
    std::vector<std::string> cov_names;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const auto& name = table.header[j];
        auto it = column_roles.find(name);
        const ColumnRole role = it == column_roles.end() ? ColumnRole::Covariate : it->second;
        switch (role) {
            case ColumnRole::Instrument:
                if (z_col >= 0) throw ConfigError("duplicate instrument column");
                z_col = static_cast<long>(j);
                break;
            case ColumnRole::Treatment:
                if (t_col >= 0) throw ConfigError("duplicate treatment column");
                t_col = static_cast<long>(j);
                break;
            case ColumnRole::Outcome:
                if (y_col >= 0) throw ConfigError("duplicate outcome column");
                y_col = static_cast<long>(j);
                break;
            case ColumnRole::Covariate:
                cov_cols.push_back(static_cast<long>(j));
                cov_names.push_back(name);
                break;
        }
    }
    for (const auto& [name, role] : column_roles) {
        if (table.column(name) < 0) throw ConfigError("configured column '" + name + "' not in header");
    }
    if (z_col < 0) throw ConfigError("no instrument column configured");
    if (t_col < 0) throw ConfigError("no treatment column configured");
    if (y_col < 0) throw ConfigError("no outcome column configured");

    const int n = static_cast<int>(table.rows.size());
    const int p = static_cast<int>(cov_cols.size());

    // Raw covariate values (possibly real, pending coarsening).
    std::vector<std::vector<double>> raw(p);
    for (int j = 0; j < p; ++j) {
        raw[j].reserve(n);
        for (int i = 0; i < n; ++i) {
            raw[j].push_back(parse_number(table.rows[i][cov_cols[j]], cov_names[j], i + 1));
        }
    }

    LoadResult result;
    std::vector<std::int32_t> x(static_cast<std::size_t>(n) * p);
    for (int j = 0; j < p; ++j) {
        const CoarseningSpec* spec = nullptr;
        for (const auto& s : coarsen_specs) {
            if (s.column == cov_names[j]) spec = &s;
        }
        std::vector<std::int32_t> codes;
        if (spec != nullptr) {
            auto c = coarsen(raw[j], *spec);
            codes = c.codes;
            result.coarsened.emplace(cov_names[j], std::move(c));
        } else {
            codes.reserve(n);
            for (int i = 0; i < n; ++i) {
                if (!is_integral_code(raw[j][i])) {
                    throw ValidationError("covariate '" + cov_names[j] +
                                              "' has non-integer value at row " +
                                              std::to_string(i + 1) +
                                              " and no coarsening spec",
                                          i + 1);
                }
                codes.push_back(static_cast<std::int32_t>(raw[j][i]));
            }
        }
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i) * p + j] = codes[i];
    }

    std::vector<std::uint8_t> z(n);
    std::vector<double> t(n), y(n);
    for (int i = 0; i < n; ++i) {
        const double zv = parse_number(table.rows[i][z_col], table.header[z_col], i + 1);
        if (zv != 0.0 && zv != 1.0) {
            throw ValidationError("instrument must be 0 or 1, got '" + table.rows[i][z_col] +
                                      "' at row " + std::to_string(i + 1),
                                  i + 1);
        }
        z[i] = static_cast<std::uint8_t>(zv);
        t[i] = parse_number(table.rows[i][t_col], table.header[t_col], i + 1);
        y[i] = parse_number(table.rows[i][y_col], table.header[y_col], i + 1);
    }

    CovariateSchema schema;
    if (schema_override) {
        schema = *schema_override;
        if (schema.p() != p) throw ConfigError("schema override has wrong covariate count");
    } else {
        schema.names = cov_names;
        schema.cardinalities.resize(p, 2);
        for (int j = 0; j < p; ++j) {
            std::int32_t max_code = 1;
            for (int i = 0; i < n; ++i) {
                max_code = std::max(max_code, x[static_cast<std::size_t>(i) * p + j]);
            }
            schema.cardinalities[j] = max_code + 1;
        }
    }

    result.dataset = Dataset(std::move(schema), std::move(x), std::move(z), std::move(t),
                             std::move(y));
    return result;
}

void save_dataset(const Dataset& d, const std::string& path) {
    CsvTable table;
    table.header = d.schema().names;
    table.header.emplace_back("z");
    table.header.emplace_back("t");
    table.header.emplace_back("y");
    table.rows.reserve(d.n());
    for (int i = 0; i < d.n(); ++i) {
        std::vector<std::string> row;
        row.reserve(d.p() + 3);
        for (int j = 0; j < d.p(); ++j) row.push_back(std::to_string(d.x(i, j)));
        row.push_back(std::to_string(d.z(i)));
        row.push_back(format_double(d.t(i)));
        row.push_back(format_double(d.y(i)));
        table.rows.push_back(std::move(row));
    }
    write_csv(path, table);
}

SplitResult split_holdout(const Dataset& d, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw ConfigError("holdout fraction must be in [0,1)");
    }
    const int n = d.n();
    const int h = static_cast<int>(std::llround(fraction * n));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, 0x501D));
    rng.shuffle(order);

    std::vector<int> holdout(order.begin(), order.begin() + h);
    std::vector<int> training(order.begin() + h, order.end());
    std::sort(holdout.begin(), holdout.end());
    std::sort(training.begin(), training.end());

    if (training.empty()) throw ConfigError("holdout fraction leaves no training units");
    return SplitResult{d.subset(training), d.subset(holdout)};
}

}  // namespace flameiv
