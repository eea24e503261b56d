#include "pmuek/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "pmuek/errors.hpp"
#include "pmuek/rng.hpp"

namespace pmuek {

PerPmuFeatures per_pmu_features(std::span<const double> values, BaselineMode mode) {
  if (values.size() < 2) {
    throw ContractError("per_pmu_features: window needs at least 2 samples");
  }
  std::size_t baseline_n = values.size();
  if (mode == BaselineMode::PreEvent20) {
    baseline_n = std::max<std::size_t>(1, values.size() / 5);
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < baseline_n; ++i) mean += values[i];
  mean /= static_cast<double>(baseline_n);

  PerPmuFeatures out;
  double run_min = values[0];
  double run_max = values[0];
  for (double x : values) {
    const double dev = x - mean;
    out.f[0] = std::max(out.f[0], dev);          // amplitude above
    out.f[1] = std::max(out.f[1], -dev);         // amplitude below
    out.f[2] = std::max(out.f[2], x - run_min);  // best rise so far
    out.f[3] = std::max(out.f[3], run_max - x);  // best drop so far
    run_min = std::min(run_min, x);
    run_max = std::max(run_max, x);
    if (dev > 0.0) out.f[4] += dev;              // area above
    else if (dev < 0.0) out.f[5] -= dev;         // area below
  }
  return out;
}

PerPmuFeatures per_pmu_features(const SignalWindow& window, BaselineMode mode) {
  if (window.has_missing()) {
    throw ContractError("per_pmu_features: window has missing samples");
  }
  return per_pmu_features(std::span<const double>(window.values), mode);
}

std::array<double, 18> aggregate(const std::vector<PerPmuFeatures>& per_pmu) {
  if (per_pmu.empty()) throw ContractError("aggregate: need at least one PMU");
  std::array<double, 18> out{};
  for (int j = 0; j < 6; ++j) {
    double mx = per_pmu[0].f[j], mn = per_pmu[0].f[j], sum = 0.0;
    for (const auto& p : per_pmu) {
      mx = std::max(mx, p.f[j]);
      mn = std::min(mn, p.f[j]);
      sum += p.f[j];
    }
    out[3 * j + 0] = mx;
    out[3 * j + 1] = mn;
    out[3 * j + 2] = sum / static_cast<double>(per_pmu.size());
  }
  return out;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    v.reserve(kFeatureCount);
    for (SignalKind s : kAllSignals) {
      for (int j = 1; j <= 6; ++j) {
        for (const char* stat : {"max", "min", "mean"}) {
          v.push_back(std::string(signal_to_string(s)) + "_f" + std::to_string(j) + "_" + stat);
        }
      }
    }
    v.push_back("rocof_r1");
    v.push_back("rocof_r2");
    v.push_back("rocof_r3");
    return v;
  }();
  return names;
}

std::uint64_t feature_schema_hash() {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& name : feature_names()) {
    h = mix64(h, hash_str(name));
  }
  return h;
}

FeatureVector build_feature_vector(const EventWindows& windows, std::optional<EventType> label,
                                   BaselineMode mode) {
  if (windows.pmu_ids.empty()) throw ContractError("build_feature_vector: no PMUs");
  FeatureVector out;
  out.label = label;
  std::array<double, 6> rocof_mean{};
  int pos = 0;
  for (SignalKind s : kAllSignals) {
    const auto& mat = windows.values[static_cast<int>(s)];
    if (mat.rows() < 2 || mat.cols() != static_cast<Eigen::Index>(windows.pmu_ids.size())) {
      throw ContractError(std::string("build_feature_vector: missing or malformed windows for ") +
                          signal_to_string(s));
    }
    std::vector<PerPmuFeatures> per_pmu;
    per_pmu.reserve(static_cast<std::size_t>(mat.cols()));
    for (Eigen::Index c = 0; c < mat.cols(); ++c) {
      // MatrixXd is column-major, so a column is contiguous.
      std::span<const double> col(mat.col(c).data(), static_cast<std::size_t>(mat.rows()));
      per_pmu.push_back(per_pmu_features(col, mode));
    }
    auto agg = aggregate(per_pmu);
    for (double v : agg) out.values[pos++] = v;
    if (s == SignalKind::Rocof) {
      for (int j = 0; j < 6; ++j) rocof_mean[j] = agg[3 * j + 2];
    }
  }
  // Auxiliary ROCOF ratios; epsilon keeps all-zero windows at ratio 0.
  out.values[54] = rocof_mean[0] / (rocof_mean[1] + kRatioEpsilon);
  out.values[55] = rocof_mean[4] / (rocof_mean[5] + kRatioEpsilon);
  out.values[56] = rocof_mean[4] / (rocof_mean[4] + rocof_mean[5] + kRatioEpsilon);
  return out;
}

// ----- feature table -----------------------------------------------------------

void FeatureTable::push_row(std::vector<double> row, std::string label) {
  if (row.size() != names.size()) {
    throw ContractError("feature table: row width does not match the schema");
  }
  rows.push_back(std::move(row));
  labels.push_back(std::move(label));
}

void FeatureTable::validate() const {
  if (labels.size() != rows.size()) throw ContractError("feature table: labels out of sync");
  for (const auto& r : rows) {
    if (r.size() != names.size()) throw ContractError("feature table: ragged rows");
    for (double v : r) {
      if (std::isnan(v)) throw ContractError("feature table: NaN feature value");
    }
  }
}

FeatureTable feature_table_from_vectors(const std::vector<FeatureVector>& vectors) {
  FeatureTable t;
  t.names = feature_names();
  for (const auto& fv : vectors) {
    std::vector<double> row(fv.values.begin(), fv.values.end());
    t.push_row(std::move(row), fv.label ? event_type_to_string(*fv.label) : "");
  }
  return t;
}

void write_feature_table(const std::string& path, const FeatureTable& table) {
  table.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot create feature file '" + path + "'");
  std::string line;
  for (const auto& n : table.names) {
    line += n;
    line += ',';
  }
  line += "label";
  out << line << '\n';
  char buf[32];
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    line.clear();
    for (double v : table.rows[r]) {
      auto res = std::to_chars(buf, buf + sizeof(buf), v);
      line.append(buf, res.ptr);
      line += ',';
    }
    line += table.labels[r];
    out << line << '\n';
  }
}

FeatureTable read_feature_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty feature file '" + path + "'");
  FeatureTable t;
  {
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        t.names.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (t.names.empty() || t.names.back() != "label") {
      throw IoError("feature file header must end with 'label'");
    }
    t.names.pop_back();
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.names.size());
    std::size_t start = 0;
    std::size_t field = 0;
    std::string label;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        std::string_view sv(line.data() + start, i - start);
        if (field < t.names.size()) {
          double v = 0.0;
          auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
          if (res.ec != std::errc() || res.ptr != sv.data() + sv.size()) {
            throw IoError("feature file: malformed numeric value in column '" +
                          t.names[field] + "'");
          }
          row.push_back(v);
        } else {
          label = std::string(sv);
        }
        ++field;
        start = i + 1;
      }
    }
    if (field != t.names.size() + 1) {
      throw IoError("feature file: wrong column count in a data row");
    }
    t.push_row(std::move(row), std::move(label));
  }
  return t;
}

}  // namespace pmuek
