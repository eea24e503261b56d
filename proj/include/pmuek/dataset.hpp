#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "pmuek/frame.hpp"

namespace pmuek {

// Ordered samples of one signal for one PMU. dt is carried as fps so the
// grid stays rational; timestamps are derived (see timeutil.hpp).
struct SignalWindow {
  std::string pmu_id;
  SignalKind kind = SignalKind::VmPos;
  std::int64_t t0_ms = 0;
  int fps = 30;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;  // parallel to values, 1 = missing

  bool has_missing() const {
    for (auto m : missing)
      if (m) return true;
    return false;
  }
};

// w x n matrix of one signal across n PMUs over w timestamps, oldest row
// first. No missing entries by contract: imputation happens upstream.
struct MeasurementMatrix {
  SignalKind kind = SignalKind::VmPos;
  std::int64_t t_ms = 0;  // timestamp of the last (newest) row
  Eigen::MatrixXd data;   // w x n

  Eigen::Index w() const { return data.rows(); }
  Eigen::Index n() const { return data.cols(); }
};

// One signal across all PMUs on the shared sample grid, with an explicit
// missing mask. Columns are ordered lexicographically by pmu_id.
struct SignalGrid {
  SignalKind kind = SignalKind::VmPos;
  std::int64_t t0_ms = 0;
  int fps = 30;
  std::vector<std::string> pmu_ids;
  Eigen::MatrixXd values;                                   // samples x pmus
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> missing;

  Eigen::Index n_samples() const { return values.rows(); }
  Eigen::Index n_pmus() const { return values.cols(); }
  bool any_missing() const;
};

// Columnar view of a frame stream: the three extracted signals plus the
// auxiliary fields needed by the quality rules. Sample index is the
// authoritative clock.
class Dataset {
 public:
  Dataset() = default;

  // Builds the grid from frames (any order). Frames are routed to sample
  // index round((ts - t0) * fps / 1000); a duplicate (pmu, index) keeps the
  // last frame seen.
  static Dataset from_frames(const std::vector<PmuFrame>& frames, int fps);

  int fps() const { return fps_; }
  std::int64_t t0_ms() const { return t0_ms_; }
  std::int64_t n_samples() const { return n_samples_; }
  const std::vector<std::string>& pmu_ids() const { return pmu_ids_; }

  std::int64_t index_of_ms(std::int64_t ms) const;
  std::int64_t ms_of_index(std::int64_t index) const;

  SignalGrid& grid(SignalKind kind) { return grids_[static_cast<int>(kind)]; }
  const SignalGrid& grid(SignalKind kind) const { return grids_[static_cast<int>(kind)]; }

  // Auxiliary per-sample channels (same layout as the grids).
  Eigen::MatrixXd& aux(const std::string& name);
  const Eigen::MatrixXd& aux(const std::string& name) const;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& aux_missing(const std::string& name);
  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& aux_missing(
      const std::string& name) const;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& status_grid() { return status_; }
  const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& status_grid() const {
    return status_;
  }
  bool present(const std::string& pmu, std::int64_t index) const;

  // Reconstructs frames for the modeled fields (per-phase channels are not
  // materialized in the columnar form and are omitted).
  std::vector<PmuFrame> to_frames() const;

 private:
  int fps_ = 30;
  std::int64_t t0_ms_ = 0;
  std::int64_t n_samples_ = 0;
  std::vector<std::string> pmu_ids_;
  std::array<SignalGrid, 3> grids_;                        // vm_pos, im_pos, rocof
  std::vector<std::string> aux_names_;                     // va_pos, ia_pos, freq
  std::vector<Eigen::MatrixXd> aux_values_;
  std::vector<Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>> aux_missing_;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> status_;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present_;  // frame existed
};

// Past-w window of one signal ending at timestamp t across all PMUs.
// Requires w consecutive non-missing samples for every PMU; missing entries
// are a contract violation (impute first), too little history a range error.
MeasurementMatrix slice_matrix(const Dataset& dataset, SignalKind kind, std::int64_t t_ms,
                               int w);
MeasurementMatrix slice_matrix(const SignalGrid& grid, std::int64_t t_ms, int w);

}  // namespace pmuek
