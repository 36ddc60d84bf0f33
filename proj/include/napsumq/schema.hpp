#ifndef NAPSUMQ_SCHEMA_HPP
#define NAPSUMQ_SCHEMA_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "napsumq/errors.hpp"
#include "napsumq/rng.hpp"

namespace napsumq {

struct Variable {
  std::string name;
  std::vector<std::string> levels;  // declaration order defines category codes

  int cardinality() const { return static_cast<int>(levels.size()); }
};

// Discrete tabular domain. Immutable after construction.
class Schema {
 public:
  Schema() = default;

  explicit Schema(std::vector<Variable> variables) : variables_(std::move(variables)) {
    std::unordered_map<std::string, int> seen;
    for (const auto& v : variables_) {
      if (v.cardinality() < 2)
        throw ConfigError("schema variable '" + v.name + "' needs cardinality >= 2");
      if (!seen.emplace(v.name, 1).second)
        throw ConfigError("duplicate schema variable name '" + v.name + "'");
      std::unordered_map<std::string, int> level_seen;
      for (const auto& l : v.levels)
        if (!level_seen.emplace(l, 1).second)
          throw ConfigError("duplicate level '" + l + "' in variable '" + v.name + "'");
    }
  }

  // Unnamed levels "0", "1", ... for generated data.
  static Schema with_cardinalities(const std::vector<std::pair<std::string, int>>& spec) {
    std::vector<Variable> vars;
    vars.reserve(spec.size());
    for (const auto& [name, card] : spec) {
      Variable v;
      v.name = name;
      for (int c = 0; c < card; ++c) v.levels.push_back(std::to_string(c));
      vars.push_back(std::move(v));
    }
    return Schema(std::move(vars));
  }

  int num_variables() const { return static_cast<int>(variables_.size()); }
  const Variable& variable(int j) const { return variables_.at(j); }
  const std::vector<Variable>& variables() const { return variables_; }
  int cardinality(int j) const { return variables_.at(j).cardinality(); }

  int index_of(const std::string& name) const {
    for (int j = 0; j < num_variables(); ++j)
      if (variables_[j].name == name) return j;
    throw ConfigError("unknown variable '" + name + "'");
  }

  // Product of cardinalities; empty optional when it exceeds 2^63 - 1.
  std::optional<std::uint64_t> domain_size() const {
    std::uint64_t size = 1;
    for (const auto& v : variables_) {
      const auto card = static_cast<std::uint64_t>(v.cardinality());
      if (size > std::numeric_limits<std::int64_t>::max() / card) return std::nullopt;
      size *= card;
    }
    return size;
  }

  double log_domain_size() const {
    double s = 0;
    for (const auto& v : variables_) s += std::log(static_cast<double>(v.cardinality()));
    return s;
  }

  bool operator==(const Schema& other) const {
    if (num_variables() != other.num_variables()) return false;
    for (int j = 0; j < num_variables(); ++j)
      if (variables_[j].name != other.variables_[j].name ||
          variables_[j].levels != other.variables_[j].levels)
        return false;
    return true;
  }

  std::uint64_t digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
      h ^= 0xff;
      h *= 0x100000001b3ULL;
    };
    for (const auto& v : variables_) {
      mix(v.name);
      for (const auto& l : v.levels) mix(l);
    }
    return h;
  }

 private:
  std::vector<Variable> variables_;
};

// Encoded rows over a Schema. Immutable; row order carries no meaning.
// The access counter exists so integration tests can audit that nothing
// touches the private data after the noising stage.
class Dataset {
 public:
  Dataset(Schema schema, Eigen::MatrixXi codes)
      : schema_(std::move(schema)), codes_(std::move(codes)) {
    if (codes_.rows() < 1) throw ConfigError("dataset needs at least one row");
    if (codes_.cols() != schema_.num_variables())
      throw ConfigError("dataset column count does not match schema");
    for (Eigen::Index i = 0; i < codes_.rows(); ++i)
      for (Eigen::Index j = 0; j < codes_.cols(); ++j)
        if (codes_(i, j) < 0 || codes_(i, j) >= schema_.cardinality(static_cast<int>(j)))
          throw ConfigError("code out of range at row " + std::to_string(i) +
                            ", variable '" + schema_.variable(static_cast<int>(j)).name + "'");
  }

  static Dataset empty(Schema schema) {
    Dataset d;
    d.schema_ = std::move(schema);
    d.codes_.resize(0, d.schema_.num_variables());
    return d;
  }

  const Schema& schema() const { return schema_; }
  Eigen::Index num_rows() const { return codes_.rows(); }

  const Eigen::MatrixXi& codes() const {
    if (access_counter_) access_counter_->fetch_add(1, std::memory_order_relaxed);
    return codes_;
  }

  void set_access_counter(std::shared_ptr<std::atomic<std::uint64_t>> counter) const {
    access_counter_ = std::move(counter);
  }

  std::vector<std::string> decode_row(Eigen::Index i) const {
    std::vector<std::string> out;
    const auto& m = codes();
    out.reserve(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out.push_back(schema_.variable(static_cast<int>(j)).levels.at(m(i, j)));
    return out;
  }

 private:
  Dataset() = default;
  Schema schema_;
  Eigen::MatrixXi codes_;
  mutable std::shared_ptr<std::atomic<std::uint64_t>> access_counter_;
};

// Schema file: JSON list of {"name": ..., "levels": [...]} entries.
inline Schema schema_from_json(const nlohmann::json& j) {
  const nlohmann::json& list = j.is_object() && j.contains("variables") ? j["variables"] : j;
  if (!list.is_array()) throw ConfigError("schema JSON must be a list of variables");
  std::vector<Variable> vars;
  for (const auto& entry : list) {
    Variable v;
    v.name = entry.at("name").get<std::string>();
    for (const auto& l : entry.at("levels")) v.levels.push_back(l.get<std::string>());
    vars.push_back(std::move(v));
  }
  return Schema(std::move(vars));
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file: " + path);
  nlohmann::json j;
  in >> j;
  return schema_from_json(j);
}

inline nlohmann::json schema_to_json(const Schema& schema) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& v : schema.variables())
    list.push_back({{"name", v.name}, {"levels", v.levels}});
  return list;
}

enum class MissingPolicy { drop_rows, error };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

// Reads a header-full CSV, reorders columns to schema order, and maps
// labels to codes using the schema's declared level order.
inline Dataset load_csv(const std::string& path, const Schema& schema,
                        MissingPolicy missing_policy) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);

  const int d = schema.num_variables();
  std::vector<int> column_of(d, -1);  // schema variable -> CSV column
  for (int j = 0; j < d; ++j) {
    const std::string& name = schema.variable(j).name;
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) column_of[j] = static_cast<int>(c);
    if (column_of[j] < 0)
      throw ConfigError("CSV is missing schema column '" + name + "'");
  }

  std::vector<std::unordered_map<std::string, int>> code_of(d);
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < schema.cardinality(j); ++c)
      code_of[j][schema.variable(j).levels[c]] = c;

  std::vector<std::vector<int>> rows;
  long row_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++row_index;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw ConfigError("row " + std::to_string(row_index) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    std::vector<int> row(d);
    bool missing = false;
    for (int j = 0; j < d && !missing; ++j) {
      const std::string& label = fields[column_of[j]];
      if (label.empty()) {
        if (missing_policy == MissingPolicy::error)
          throw ConfigError("missing value at row " + std::to_string(row_index) +
                            ", column '" + schema.variable(j).name + "'");
        missing = true;
        continue;
      }
      auto it = code_of[j].find(label);
      if (it == code_of[j].end())
        throw ConfigError("unknown category label '" + label + "' in column '" +
                          schema.variable(j).name + "'");
      row[j] = it->second;
    }
    if (!missing) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("no usable rows in " + path);

  Eigen::MatrixXi codes(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < d; ++j) codes(static_cast<Eigen::Index>(i), j) = rows[i][j];
  return Dataset(schema, std::move(codes));
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  const Schema& schema = ds.schema();
  for (int j = 0; j < schema.num_variables(); ++j)
    out << (j ? "," : "") << schema.variable(j).name;
  out << "\n";
  const auto& m = ds.codes();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < schema.num_variables(); ++j)
      out << (j ? "," : "") << schema.variable(j).levels[m(i, j)];
    out << "\n";
  }
}

inline Schema toy_schema() {
  return Schema::with_cardinalities({{"x1", 2}, {"x2", 2}, {"x3", 2}});
}

// Three binary variables: x1, x2 fair coins, x3 logistic in (x1, x2) with
// coefficients (1, 0) and no intercept.
inline Dataset sample_toy_data(long n, std::uint64_t rng_seed) {
  if (n < 1) throw ConfigError("sample_toy_data needs n >= 1");
  auto rng = make_rng(rng_seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXi codes(n, 3);
  for (long i = 0; i < n; ++i) {
    const int x1 = unif(rng) < 0.5 ? 1 : 0;
    const int x2 = unif(rng) < 0.5 ? 1 : 0;
    const double logit = 1.0 * x1 + 0.0 * x2;
    const double p = 1.0 / (1.0 + std::exp(-logit));
    const int x3 = unif(rng) < p ? 1 : 0;
    codes(i, 0) = x1;
    codes(i, 1) = x2;
    codes(i, 2) = x3;
  }
  return Dataset(toy_schema(), std::move(codes));
}

}  // namespace napsumq

#endif  // NAPSUMQ_SCHEMA_HPP
