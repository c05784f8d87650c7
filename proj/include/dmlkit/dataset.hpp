#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmlkit/stats.hpp"

namespace dmlkit {

enum class ColumnKind { binary, continuous, count };
enum class ColumnRole { outcome, treatment, confounder, heterogeneity, cluster, ignore };

std::string to_string(ColumnKind k);
std::string to_string(ColumnRole r);
ColumnKind parse_column_kind(const std::string& s);
ColumnRole parse_column_role(const std::string& s);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::continuous;
    ColumnRole role = ColumnRole::confounder;
};

/// Ordered column declarations. A heterogeneity column is a confounder that is
/// additionally exposed to the effect-heterogeneity analyses.
struct Schema {
    std::vector<ColumnSpec> columns;

    /// Parse a flat key-value spec file: one `name = role, kind` line per
    /// column, `#` comments allowed.
    static Schema from_file(const std::string& path);
    static Schema from_string(const std::string& text);
    std::string to_string() const;

    const ColumnSpec* find(const std::string& name) const;
    std::string outcome_name() const;
    std::string treatment_name() const;
};

/// One match-side row.
struct ObservationRecord {
    double y = 0.0;
    int d = 0;
    std::vector<double> x;
    std::int64_t cluster_id = 0;
    double weight = 1.0;
};

struct DropLog {
    std::size_t source_rows = 0;
    std::size_t kept = 0;
    std::map<std::string, std::size_t> reasons;

    std::size_t dropped() const;
    std::string summary() const;
};

struct Provenance {
    std::string source;
    DropLog drops;
    std::vector<std::string> notes;
};

class Dataset {
public:
    Dataset(Schema schema, std::vector<ObservationRecord> records, Provenance provenance);

    std::size_t n() const { return y_.size(); }
    std::size_t n_features() const { return x_.cols; }

    const Schema& schema() const { return schema_; }
    const Provenance& provenance() const { return provenance_; }

    std::span<const double> y() const { return y_; }
    std::span<const int> d() const { return d_; }
    std::span<const std::int64_t> cluster_id() const { return cluster_; }
    std::span<const double> weight() const { return weight_; }
    const Matrix& x() const { return x_; }

    /// Names of the x columns, in x-column order.
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    /// Heterogeneity columns as (name, x-column index).
    const std::vector<std::pair<std::string, std::size_t>>& z_index() const { return z_index_; }

    std::size_t feature_index(const std::string& name) const;  // throws on unknown name
    std::vector<double> feature_column(const std::string& name) const;
    ObservationRecord record(std::size_t i) const;

    std::size_t n_treated() const { return n_treated_; }
    std::size_t n_control() const { return n() - n_treated_; }

private:
    Schema schema_;
    Provenance provenance_;
    std::vector<std::string> feature_names_;
    std::vector<std::pair<std::string, std::size_t>> z_index_;
    Matrix x_;
    std::vector<double> y_;
    std::vector<int> d_;
    std::vector<std::int64_t> cluster_;
    std::vector<double> weight_;
    std::size_t n_treated_ = 0;
};

/// Load a CSV against a column spec. Rows with a missing required field are
/// dropped and counted by reason; structural defects (wrong field count,
/// unparsable numbers, out-of-domain binary values) abort with the row index.
Dataset load_csv(const std::string& path, const Schema& schema);

/// Min-max standardization of prize money over all (tournament, year) cells.
std::map<std::pair<std::string, int>, double> standardize_prize_money(
    const std::map<std::pair<std::string, int>, double>& values);

/// 1 iff distance_km <= radius_km. Boundary counts as home.
int derive_home(double distance_km, double radius_km);

/// 100 * |mean1 - mean0| / sqrt((var1 + var0) / 2), sample variances.
double standardized_difference(std::span<const double> values, std::span<const int> d);

struct DescriptivesRow {
    std::string variable;
    ColumnKind kind = ColumnKind::continuous;
    ColumnRole role = ColumnRole::confounder;
    double mean = 0.0;
    double sd = 0.0;
    double mean_treated = 0.0;
    double mean_control = 0.0;
    /// Raw arm difference for outcomes, standardized difference otherwise;
    /// absent for constant columns.
    std::optional<double> diff;
};

struct DescriptivesTable {
    std::vector<DescriptivesRow> rows;
    std::size_t n = 0;

    std::string to_csv() const;
};

DescriptivesTable descriptives(const Dataset& data);

}  // namespace dmlkit
