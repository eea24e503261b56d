#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "pmuek/dataset.hpp"
#include "pmuek/detect.hpp"
#include "pmuek/frame.hpp"

namespace pmuek {

// Search space for the detector parameters: one log-scaled threshold per
// extracted signal plus the integer window size w.
struct SearchSpace {
  std::array<double, 3> theta_min = {1e-5, 1e-5, 1e-5};
  std::array<double, 3> theta_max = {1.0, 1.0, 1.0};
  int w_min = 30;
  int w_max = 300;

  void validate() const;
};

// A point in the search space: thresholds in natural units plus w.
struct TunePoint {
  std::array<double, 3> thetas = {0, 0, 0};
  int w = 120;
};

// Zero-mean Gaussian process with a squared-exponential kernel and
// per-dimension length scales on [0,1]-normalized inputs. Targets are
// centered on their sample mean before fitting.
class GaussianProcess {
 public:
  struct Hyper {
    std::array<double, 4> length_scale = {0.3, 0.3, 0.3, 0.3};
    double signal_var = 1.0;
    double noise_var = 1e-6;
  };

  void fit(const std::vector<std::array<double, 4>>& x, const std::vector<double>& y,
           const Hyper& hyper);
  // Maximum likelihood over a small per-dimension length-scale grid.
  static Hyper select_hyper(const std::vector<std::array<double, 4>>& x,
                            const std::vector<double>& y, double noise_var = 1e-6);

  struct Posterior {
    double mean = 0.0;
    double var = 0.0;
  };
  Posterior posterior(const std::array<double, 4>& x) const;

  const Hyper& hyper() const { return hyper_; }
  double log_marginal() const { return log_marginal_; }

 private:
  std::vector<std::array<double, 4>> x_;
  std::vector<double> alpha_;           // K^-1 (y - mean)
  std::vector<std::vector<double>> l_;  // Cholesky factor of K
  double y_mean_ = 0.0;
  Hyper hyper_;
  double log_marginal_ = 0.0;
};

// Closed-form expected improvement E[(best_e - X)^+] for X ~ N(mu, sigma^2).
double expected_improvement(double mu, double sigma, double best_e);

struct BoSample {
  TunePoint point;
  double error = 0.0;
};

struct BoState {
  std::vector<BoSample> samples;
  BoSample best;
  GaussianProcess::Hyper gp_hyper;
};

struct BoOptions {
  int initial_design = 8;     // quasi-random (Halton) points
  int candidates = 1024;      // random candidates scored by EI per iteration
  int refit_every = 5;        // hyperparameter refits
  double noise_var = 1e-6;
  // Optional caller-chosen points evaluated before the Halton design (they
  // count toward the budget). bo_search seeds a coarse log-grid here.
  std::vector<TunePoint> seed_points;
};

using Objective = std::function<double(const TunePoint&)>;

// Bayesian-optimization loop: quasi-random initialization, then one
// EI-maximizing candidate evaluated per iteration. `budget` counts total
// objective evaluations including the initial design.
BoState bo_minimize(const SearchSpace& space, int budget, std::uint64_t seed,
                    const Objective& objective, const BoOptions& opts = {});

// Detection error e = 1 - F1 against labeled events: a truth event is
// matched when some detection lies within +-match_tol_s of its start;
// unmatched detections count as false positives.
struct DetectionErrorOptions {
  double match_tol_s = 5.0;
  int eval_stride = 1;  // stride used while scanning during tuning
};

struct DetectionErrorBreakdown {
  double error = 1.0;
  double precision = 0.0;
  double recall = 0.0;
  int matched_events = 0;
  int false_positives = 0;
  int detections = 0;
};

DetectionErrorBreakdown detection_error_breakdown(const std::vector<Detection>& detections,
                                                  const std::vector<EventRecord>& truth,
                                                  double match_tol_s);

double detection_error(const DetectorParams& params, const std::vector<EventRecord>& labeled,
                       const Dataset& dataset, const DetectionErrorOptions& opts = {});

// Full parameter search over (thresholds, w). The returned params carry the
// caller's stride/refractory/signed settings from `base`.
DetectorParams bo_search(const SearchSpace& space, int budget, std::uint64_t seed,
                         const std::vector<EventRecord>& labeled, const Dataset& dataset,
                         const DetectorParams& base = {},
                         const DetectionErrorOptions& err_opts = {}, BoState* state_out = nullptr);

}  // namespace pmuek
