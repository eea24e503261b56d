#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pmuek/dataset.hpp"
#include "pmuek/frame.hpp"

namespace pmuek {

// Data-quality assessment: status check, physical-bound check, and the
// windowed 3-sigma rule. Bad samples are marked missing, never altered.
struct QualityOptions {
  double angle_min = 0.0;    // reject angle < angle_min
  double angle_max = 180.0;  // reject angle > angle_max
  double sigma_k = 3.0;
  // Statistics window of the 3-sigma rule (0 = whole input as one window).
  // Short windows keep genuine excursions inside their own statistics, so
  // events are clipped less.
  double sigma_window_s = 5.0;
  // One removal pass by default. The fixed-point variant re-applies the rule
  // until the mask stabilizes, which makes the filter exactly idempotent but
  // also eats genuine event excursions; see README.
  bool iterate_to_fixed_point = false;
};

struct QualityReport {
  std::int64_t status_flag = 0;
  std::int64_t out_of_bound = 0;
  std::int64_t three_sigma = 0;
  std::map<std::string, double> missing_fraction;  // per PMU, after filtering

  std::int64_t total_invalidated() const { return status_flag + out_of_bound + three_sigma; }
  std::string to_json() const;
  static QualityReport from_json(const std::string& text);
};

// Frame-level filter (checks every present numeric field). The 3-sigma rule
// is iterated to a fixed point within each processing window, which makes
// the filter idempotent: a second application removes nothing.
struct QualityFilterResult {
  std::vector<PmuFrame> frames;
  QualityReport report;
};
QualityFilterResult quality_filter(const std::vector<PmuFrame>& frames,
                                   const QualityOptions& opts = {});

// Columnar variant used by the pipeline; filters the modeled channels of the
// dataset in place.
QualityReport quality_filter_dataset(Dataset& dataset, const QualityOptions& opts = {});

// ----- imputation ------------------------------------------------------------

struct ImputeOptions {
  int rank = 3;
  double tol = 1e-6;   // relative Frobenius change of the filled entries
  int max_iter = 100;  // per annealing stage
  // Long streams are completed in chunks of this many seconds (0 = whole
  // input at once). Short chunks keep the rank-r fit locally faithful: a
  // filled sample blends into its neighbourhood, and a disturbance inside
  // one chunk cannot distort fills further away than the chunk length.
  double chunk_s = 4.0;
};

struct ImputeStats {
  int iterations = 0;
  bool converged = false;
};

// Iterative truncated-SVD (hard-impute style) completion. Missing entries are
// initialized with column means and refined by repeated rank-r projection;
// observed entries pass through bit-exact. A column with no observed entry is
// an error naming the PMU.
ImputeStats impute(Eigen::MatrixXd& values,
                   const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& missing,
                   const ImputeOptions& opts = {},
                   const std::vector<std::string>* pmu_ids = nullptr);

// Grid wrapper: fills the grid and clears its missing mask.
ImputeStats impute_grid(SignalGrid& grid, const ImputeOptions& opts = {});

// Imputes all three signal grids of a dataset.
void impute_dataset(Dataset& dataset, const ImputeOptions& opts = {});

// Settings the detection/classification pipeline uses: a higher projection
// rank so short chunks can carry baseline structure plus one event.
inline ImputeOptions pipeline_impute_options() {
  ImputeOptions opts;
  opts.rank = 7;
  return opts;
}

// ----- coarse event-window extraction ----------------------------------------

struct CoarseWindow {
  std::vector<PmuFrame> frames;  // sorted by (pmu_id, timestamp)
  bool truncated_left = false;
  bool truncated_right = false;
};

// All frames with timestamp in [logged_start - H, logged_start + H], sorted
// per PMU. Windows reaching past the data are truncated with a flag.
CoarseWindow extract_coarse_window(const std::vector<PmuFrame>& frames,
                                   std::int64_t logged_start_ms, double half_window_s);

}  // namespace pmuek
