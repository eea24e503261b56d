#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pmuek/dataset.hpp"

namespace pmuek {

// Model-free event detection from the change in low-rank structure of the
// windowed measurement matrices: eta = sigma2/sigma1 per signal, and the
// averaged relative change
//
//   xi_s^w(t) = (eta_t - eta_{t-w}) / (eta_{t-w} * w)
//
// with a threshold-based OR rule across signals.
struct DetectorParams {
  int w = 120;
  std::array<double, 3> thresholds = {1e-2, 1e-2, 1e-2};  // per SignalKind
  int stride = 1;
  double refractory_s = 30.0;  // suppression window after each detection
  // Default rule compares |xi| > theta (events can move eta either way);
  // signed_threshold restores the one-sided xi > theta comparison.
  bool signed_threshold = false;

  double threshold(SignalKind s) const { return thresholds[static_cast<int>(s)]; }
  void validate() const;
};

// Flat key=value <-> DetectorParams (the `detect` / `tune` file format).
DetectorParams parse_detector_params(const std::string& text);
DetectorParams read_detector_params(const std::string& path);
std::string detector_params_to_text(const DetectorParams& p);

struct Detection {
  std::int64_t t_detect_ms = 0;
  std::vector<SignalKind> triggering_signals;
  std::array<double, 3> xi_values = {0.0, 0.0, 0.0};
  std::array<bool, 3> xi_valid = {false, false, false};
};

std::string detections_to_json(const std::vector<Detection>& detections);
std::vector<Detection> detections_from_json(const std::string& text);

// sigma2/sigma1 from the SVD of M. Throws on a zero matrix.
double singular_ratio(const MeasurementMatrix& m);
double singular_ratio(const Eigen::MatrixXd& m);

// Eq.-style averaged relative change. Throws ContractError when
// eta_prev <= 1e-12 (the caller skips that timestamp).
double xi_statistic(double eta_t, double eta_prev, int w);

inline constexpr double kEtaFloor = 1e-12;

// eta at window [end_idx - w + 1, end_idx] computed through the Gram matrix
// M^T M (n x n symmetric eigenproblem). Mathematically identical to
// singular_ratio and far cheaper for the scan loop; agreement is covered by
// tests. Returns nullopt for a zero window.
std::optional<double> eta_gram(const SignalGrid& grid, std::int64_t end_idx, int w);

// xi series for one signal at the given stride. Entries with an undefined
// ratio (eta_prev below the floor) are flagged invalid.
struct XiSeries {
  std::vector<std::int64_t> index;  // sample index of the window's right edge
  std::vector<double> xi;
  std::vector<std::uint8_t> valid;
};
XiSeries compute_xi_series(const SignalGrid& grid, int w, int stride,
                           std::int64_t begin_idx = -1, std::int64_t end_idx = -1);

// Scans all three signals and applies the OR rule with a refractory period.
// The dataset must be imputed over the scanned range.
std::vector<Detection> detect_events(const Dataset& dataset, const DetectorParams& params);

// Per-PMU, per-signal windows of round(W*fps) samples centered at t_detect.
struct EventWindows {
  std::vector<std::string> pmu_ids;
  std::int64_t t0_ms = 0;
  std::int64_t start_idx = 0;
  int fps = 30;
  std::array<Eigen::MatrixXd, 3> values;  // samples x pmus, per SignalKind

  SignalWindow window(const std::string& pmu, SignalKind kind) const;
};
EventWindows extract_event_window(const Dataset& dataset, std::int64_t t_detect_ms,
                                  double window_s);

}  // namespace pmuek
