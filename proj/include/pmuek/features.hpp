#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pmuek/dataset.hpp"
#include "pmuek/detect.hpp"
#include "pmuek/frame.hpp"

namespace pmuek {

// Six shape features of one PMU's signal over the event window:
//   f1  amplitude above the window average
//   f2  amplitude below the window average
//   f3  largest rise between an earlier and a later sample
//   f4  largest drop between an earlier and a later sample
//   f5  area above the average
//   f6  area below the average
// f3/f4 use running min/max scans that implicitly admit the empty pair, so
// both are >= 0 even on monotone windows.
struct PerPmuFeatures {
  std::array<double, 6> f = {0, 0, 0, 0, 0, 0};
};

// Window average used as the deviation baseline. FullWindow is the
// literal definition; PreEvent20 averages only the first 20% of the window,
// which breaks the built-in f5 == f6 symmetry (see README).
enum class BaselineMode { FullWindow, PreEvent20 };

PerPmuFeatures per_pmu_features(std::span<const double> values,
                                BaselineMode mode = BaselineMode::FullWindow);
PerPmuFeatures per_pmu_features(const SignalWindow& window,
                                BaselineMode mode = BaselineMode::FullWindow);

// max/min/mean of each feature across PMUs, ordered
// (f1 max, f1 min, f1 mean, f2 max, ...).
std::array<double, 18> aggregate(const std::vector<PerPmuFeatures>& per_pmu);

inline constexpr int kFeatureCount = 57;
inline constexpr double kRatioEpsilon = 1e-12;

// Canonical feature names, fixed order: vm_pos, im_pos, rocof blocks of 18,
// then rocof_r1, rocof_r2, rocof_r3.
const std::vector<std::string>& feature_names();
std::uint64_t feature_schema_hash();

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  std::optional<EventType> label;
};

FeatureVector build_feature_vector(const EventWindows& windows,
                                   std::optional<EventType> label = std::nullopt,
                                   BaselineMode mode = BaselineMode::FullWindow);

// Labeled feature rows with an explicit column schema; the classifier
// interface type. Rows may carry any column set (tests use small synthetic
// schemas), the pipeline always uses the canonical 57.
struct FeatureTable {
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;  // empty string = unlabeled

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return names.size(); }
  void push_row(std::vector<double> row, std::string label);
  void validate() const;
};

FeatureTable feature_table_from_vectors(const std::vector<FeatureVector>& vectors);

// Line-delimited CSV: header = names + "label"; empty label field allowed.
void write_feature_table(const std::string& path, const FeatureTable& table);
FeatureTable read_feature_table(const std::string& path);

}  // namespace pmuek
