#include "dmlkit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dmlkit/csv.hpp"
#include "dmlkit/errors.hpp"

namespace dmlkit {

std::string to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::binary: return "binary";
        case ColumnKind::continuous: return "continuous";
        case ColumnKind::count: return "count";
    }
    return "?";
}

std::string to_string(ColumnRole r) {
    switch (r) {
        case ColumnRole::outcome: return "outcome";
        case ColumnRole::treatment: return "treatment";
        case ColumnRole::confounder: return "confounder";
        case ColumnRole::heterogeneity: return "heterogeneity";
        case ColumnRole::cluster: return "cluster";
        case ColumnRole::ignore: return "ignore";
    }
    return "?";
}

ColumnKind parse_column_kind(const std::string& s) {
    if (s == "binary") return ColumnKind::binary;
    if (s == "continuous") return ColumnKind::continuous;
    if (s == "count") return ColumnKind::count;
    throw ConfigError("unknown column kind: " + s);
}

ColumnRole parse_column_role(const std::string& s) {
    if (s == "outcome") return ColumnRole::outcome;
    if (s == "treatment") return ColumnRole::treatment;
    if (s == "confounder") return ColumnRole::confounder;
    if (s == "heterogeneity") return ColumnRole::heterogeneity;
    if (s == "cluster") return ColumnRole::cluster;
    if (s == "ignore") return ColumnRole::ignore;
    throw ConfigError("unknown column role: " + s);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_int64(const std::string& s, std::int64_t& out) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

}  // namespace

Schema Schema::from_string(const std::string& text) {
    Schema schema;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("column spec line " + std::to_string(line_no) +
                              ": expected `name = role, kind`");
        const std::string name = trim(stripped.substr(0, eq));
        const std::string rest = trim(stripped.substr(eq + 1));
        const std::size_t comma = rest.find(',');
        if (name.empty() || comma == std::string::npos)
            throw ConfigError("column spec line " + std::to_string(line_no) +
                              ": expected `name = role, kind`");
        ColumnSpec col;
        col.name = name;
        col.role = parse_column_role(trim(rest.substr(0, comma)));
        col.kind = parse_column_kind(trim(rest.substr(comma + 1)));
        if (schema.find(col.name) != nullptr)
            throw ConfigError("column spec: duplicate column " + col.name);
        schema.columns.push_back(std::move(col));
    }
    int outcomes = 0, treatments = 0, clusters = 0;
    for (const auto& c : schema.columns) {
        outcomes += c.role == ColumnRole::outcome;
        treatments += c.role == ColumnRole::treatment;
        clusters += c.role == ColumnRole::cluster;
    }
    if (outcomes != 1) throw ConfigError("column spec: exactly one outcome column required");
    if (treatments != 1) throw ConfigError("column spec: exactly one treatment column required");
    if (clusters > 1) throw ConfigError("column spec: at most one cluster column");
    return schema;
}

Schema Schema::from_file(const std::string& path) {
    return from_string(read_text_file(path));
}

std::string Schema::to_string() const {
    std::ostringstream out;
    for (const auto& c : columns)
        out << c.name << " = " << dmlkit::to_string(c.role) << ", " << dmlkit::to_string(c.kind)
            << "\n";
    return out.str();
}

const ColumnSpec* Schema::find(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

std::string Schema::outcome_name() const {
    for (const auto& c : columns)
        if (c.role == ColumnRole::outcome) return c.name;
    throw ConfigError("schema has no outcome column");
}

std::string Schema::treatment_name() const {
    for (const auto& c : columns)
        if (c.role == ColumnRole::treatment) return c.name;
    throw ConfigError("schema has no treatment column");
}

std::size_t DropLog::dropped() const {
    std::size_t s = 0;
    for (const auto& [reason, count] : reasons) s += count;
    return s;
}

std::string DropLog::summary() const {
    std::ostringstream out;
    bool first = true;
    for (const auto& [reason, count] : reasons) {
        if (!first) out << "; ";
        out << reason << ": " << count;
        first = false;
    }
    return out.str();
}

Dataset::Dataset(Schema schema, std::vector<ObservationRecord> records, Provenance provenance)
    : schema_(std::move(schema)), provenance_(std::move(provenance)) {
    for (const auto& c : schema_.columns) {
        if (c.role == ColumnRole::confounder || c.role == ColumnRole::heterogeneity)
            feature_names_.push_back(c.name);
        if (c.role == ColumnRole::heterogeneity)
            z_index_.emplace_back(c.name, feature_names_.size() - 1);
    }
    const std::size_t n = records.size();
    const std::size_t p = feature_names_.size();
    if (n < 2) throw DataError("dataset: need at least 2 observations");
    x_ = Matrix(n, p);
    y_.resize(n);
    d_.resize(n);
    cluster_.resize(n);
    weight_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = records[i];
        if (r.x.size() != p) throw DataError("dataset: record width does not match schema");
        if (r.y != 0.0 && r.y != 1.0) throw DataError("dataset: outcome not in {0,1}");
        if (r.d != 0 && r.d != 1) throw DataError("dataset: treatment not in {0,1}");
        if (r.cluster_id < 0) throw DataError("dataset: negative cluster id");
        if (!(r.weight >= 0.0)) throw DataError("dataset: negative weight");
        std::copy(r.x.begin(), r.x.end(), x_.data.begin() + i * p);
        y_[i] = r.y;
        d_[i] = r.d;
        cluster_[i] = r.cluster_id;
        weight_[i] = r.weight;
        n_treated_ += static_cast<std::size_t>(r.d);
    }
    if (n_treated_ == 0 || n_treated_ == n)
        throw DataError("dataset: both treatment arms must be non-empty");
}

std::size_t Dataset::feature_index(const std::string& name) const {
    for (std::size_t j = 0; j < feature_names_.size(); ++j)
        if (feature_names_[j] == name) return j;
    throw ConfigError("unknown feature column: " + name);
}

std::vector<double> Dataset::feature_column(const std::string& name) const {
    const std::size_t j = feature_index(name);
    std::vector<double> col(n());
    for (std::size_t i = 0; i < n(); ++i) col[i] = x_(i, j);
    return col;
}

ObservationRecord Dataset::record(std::size_t i) const {
    ObservationRecord r;
    r.y = y_[i];
    r.d = d_[i];
    r.cluster_id = cluster_[i];
    r.weight = weight_[i];
    r.x.assign(x_.row(i).begin(), x_.row(i).end());
    return r;
}

Dataset load_csv(const std::string& path, const Schema& schema) {
    const CsvTable table = read_csv(path);

    // Every schema column (ignore included) must be present; extra CSV columns
    // that the schema does not mention are an error too.
    std::vector<int> csv_col(schema.columns.size(), -1);
    for (std::size_t j = 0; j < schema.columns.size(); ++j) {
        csv_col[j] = table.column_index(schema.columns[j].name);
        if (csv_col[j] < 0)
            throw DataError("column declared in spec but missing from CSV: " +
                            schema.columns[j].name);
    }
    for (const auto& h : table.header)
        if (schema.find(h) == nullptr)
            throw DataError("unknown column in CSV (not in spec): " + h);

    DropLog drops;
    drops.source_rows = table.rows.size();
    std::vector<ObservationRecord> records;
    records.reserve(table.rows.size());

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string row_label = "row " + std::to_string(i + 1);
        if (row.size() != table.header.size())
            throw DataError("malformed " + row_label + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(row.size()));
        ObservationRecord rec;
        bool drop = false;
        for (std::size_t j = 0; j < schema.columns.size() && !drop; ++j) {
            const auto& col = schema.columns[j];
            if (col.role == ColumnRole::ignore) continue;
            const std::string& cell = row[static_cast<std::size_t>(csv_col[j])];
            if (trim(cell).empty()) {
                ++drops.reasons["missing " + dmlkit::to_string(col.role) + " (" + col.name + ")"];
                drop = true;
                break;
            }
            if (col.role == ColumnRole::cluster) {
                std::int64_t id = 0;
                if (!parse_int64(trim(cell), id) || id < 0)
                    throw DataError("malformed " + row_label + ": cluster id `" + cell + "`");
                rec.cluster_id = id;
                continue;
            }
            double value = 0.0;
            if (!parse_double(trim(cell), value))
                throw DataError("malformed " + row_label + ": value `" + cell + "` in column " +
                                col.name);
            if (col.kind == ColumnKind::binary && value != 0.0 && value != 1.0)
                throw DataError(row_label + ": non-binary value " + trim(cell) +
                                " in binary column " + col.name);
            switch (col.role) {
                case ColumnRole::outcome: rec.y = value; break;
                case ColumnRole::treatment: rec.d = static_cast<int>(value); break;
                case ColumnRole::confounder:
                case ColumnRole::heterogeneity: rec.x.push_back(value); break;
                default: break;
            }
        }
        if (!drop) records.push_back(std::move(rec));
    }
    drops.kept = records.size();

    Provenance prov;
    prov.source = path;
    prov.drops = drops;
    if (drops.dropped() > 0)
        prov.notes.push_back("dropped rows — " + drops.summary());
    return Dataset(schema, std::move(records), std::move(prov));
}

std::map<std::pair<std::string, int>, double> standardize_prize_money(
    const std::map<std::pair<std::string, int>, double>& values) {
    if (values.empty()) throw DataError("standardize_prize_money: empty input");
    double lo = values.begin()->second, hi = lo;
    for (const auto& [key, v] : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw NumericError("degenerate prize range: all values equal");
    std::map<std::pair<std::string, int>, double> out;
    for (const auto& [key, v] : values) out[key] = (v - lo) / (hi - lo);
    return out;
}

int derive_home(double distance_km, double radius_km) {
    if (!(distance_km >= 0.0)) throw DataError("derive_home: negative or non-finite distance");
    if (!(radius_km > 0.0)) throw ConfigError("derive_home: radius must be positive");
    return distance_km <= radius_km ? 1 : 0;
}

double standardized_difference(std::span<const double> values, std::span<const int> d) {
    if (values.size() != d.size()) throw NumericError("standardized_difference: size mismatch");
    std::vector<double> arm1, arm0;
    for (std::size_t i = 0; i < values.size(); ++i)
        (d[i] ? arm1 : arm0).push_back(values[i]);
    if (arm1.size() < 2 || arm0.size() < 2)
        throw NumericError("standardized_difference: each arm needs at least 2 observations");
    const double v1 = sample_variance(arm1);
    const double v0 = sample_variance(arm0);
    const double pooled = (v1 + v0) / 2.0;
    if (!(pooled > 0.0)) throw NumericError("constant variable: zero pooled variance");
    return 100.0 * std::fabs(mean(arm1) - mean(arm0)) / std::sqrt(pooled);
}

DescriptivesTable descriptives(const Dataset& data) {
    DescriptivesTable table;
    table.n = data.n();

    const auto d = data.d();
    auto arm_means = [&](std::span<const double> v) {
        double s1 = 0.0, s0 = 0.0;
        std::size_t n1 = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (d[i]) {
                s1 += v[i];
                ++n1;
            } else {
                s0 += v[i];
            }
        }
        const std::size_t n0 = v.size() - n1;
        return std::pair<double, double>{n1 ? s1 / static_cast<double>(n1) : 0.0,
                                         n0 ? s0 / static_cast<double>(n0) : 0.0};
    };

    auto push = [&](const std::string& name, ColumnKind kind, ColumnRole role,
                    std::span<const double> v) {
        DescriptivesRow row;
        row.variable = name;
        row.kind = kind;
        row.role = role;
        row.mean = mean(v);
        const double var = v.size() >= 2 ? sample_variance(v) : 0.0;
        row.sd = std::sqrt(var);
        auto [m1, m0] = arm_means(v);
        row.mean_treated = m1;
        row.mean_control = m0;
        if (role == ColumnRole::outcome || role == ColumnRole::treatment) {
            row.diff = m1 - m0;
        } else if (var > 0.0) {
            row.diff = standardized_difference(v, d);
        }
        table.rows.push_back(std::move(row));
    };

    std::vector<double> dv(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) dv[i] = d[i];

    for (const auto& col : data.schema().columns) {
        switch (col.role) {
            case ColumnRole::outcome: push(col.name, col.kind, col.role, data.y()); break;
            case ColumnRole::treatment: push(col.name, col.kind, col.role, dv); break;
            case ColumnRole::confounder:
            case ColumnRole::heterogeneity: {
                const auto v = data.feature_column(col.name);
                push(col.name, col.kind, col.role, v);
                break;
            }
            default: break;
        }
    }
    return table;
}

std::string DescriptivesTable::to_csv() const {
    CsvWriter w({"variable", "kind", "role", "mean", "sd", "mean_treated", "mean_control",
                 "diff_or_stddiff"});
    for (const auto& r : rows) {
        w.add_row({r.variable, to_string(r.kind), to_string(r.role), format_short(r.mean),
                   format_short(r.sd), format_short(r.mean_treated), format_short(r.mean_control),
                   r.diff ? format_short(*r.diff) : std::string()});
    }
    return w.str();
}

}  // namespace dmlkit
