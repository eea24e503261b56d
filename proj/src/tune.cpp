#include "pmuek/tune.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pmuek/errors.hpp"
#include "pmuek/rng.hpp"

namespace pmuek {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599344;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440084436210485); }

// Halton sequence in 4 dimensions, the initial design of the search.
double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  int i = index;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}

}  // namespace

void SearchSpace::validate() const {
  for (int s = 0; s < 3; ++s) {
    if (!(theta_min[s] > 0.0) || !(theta_max[s] > theta_min[s]) ||
        !std::isfinite(theta_max[s])) {
      throw ContractError("search space: theta bounds must be finite, positive, min < max");
    }
  }
  if (w_min < 2 || w_max <= w_min) throw ContractError("search space: invalid w range");
}

// ----- GP ---------------------------------------------------------------------

namespace {

double se_kernel(const std::array<double, 4>& a, const std::array<double, 4>& b,
                 const GaussianProcess::Hyper& h) {
  double q = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double dist = (a[d] - b[d]) / h.length_scale[d];
    q += dist * dist;
  }
  return h.signal_var * std::exp(-0.5 * q);
}

// Cholesky with escalating jitter. Returns false if even the largest jitter
// fails.
bool cholesky(std::vector<std::vector<double>>& k, double base_noise) {
  const std::size_t n = k.size();
  for (double jitter = base_noise; jitter <= 1e-2 + 1e-15; jitter *= 10.0) {
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double sum = k[i][j] + (i == j ? jitter - base_noise : 0.0);
        for (std::size_t p = 0; p < j; ++p) sum -= l[i][p] * l[j][p];
        if (i == j) {
          if (sum <= 0.0) {
            ok = false;
            break;
          }
          l[i][i] = std::sqrt(sum);
        } else {
          l[i][j] = sum / l[j][j];
        }
      }
    }
    if (ok) {
      k = std::move(l);
      return true;
    }
  }
  return false;
}

}  // namespace

void GaussianProcess::fit(const std::vector<std::array<double, 4>>& x,
                          const std::vector<double>& y, const Hyper& hyper) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ContractError("gp: need at least 2 samples");
  }
  x_ = x;
  hyper_ = hyper;
  const std::size_t n = x.size();
  y_mean_ = 0.0;
  for (double v : y) y_mean_ += v;
  y_mean_ /= static_cast<double>(n);

  std::vector<std::vector<double>> k(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double v = se_kernel(x[i], x[j], hyper_);
      if (i == j) v += hyper_.noise_var;
      k[i][j] = v;
      k[j][i] = v;
    }
  }
  if (!cholesky(k, hyper_.noise_var)) {
    throw ContractError("gp: kernel matrix is not positive definite even with jitter");
  }
  l_ = std::move(k);

  // alpha = K^-1 (y - mean) by forward/back substitution.
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = y[i] - y_mean_;
    for (std::size_t p = 0; p < i; ++p) sum -= l_[i][p] * z[p];
    z[i] = sum / l_[i][i];
  }
  alpha_.assign(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double sum = z[i];
    for (std::size_t p = i + 1; p < n; ++p) sum -= l_[p][i] * alpha_[p];
    alpha_[i] = sum / l_[i][i];
  }

  double log_det = 0.0;
  for (std::size_t i = 0; i < n; ++i) log_det += std::log(l_[i][i]);
  double fit_term = 0.0;
  for (std::size_t i = 0; i < n; ++i) fit_term += (y[i] - y_mean_) * alpha_[i];
  log_marginal_ = -0.5 * fit_term - log_det -
                  0.5 * static_cast<double>(n) * std::log(6.283185307179586);
}

GaussianProcess::Posterior GaussianProcess::posterior(const std::array<double, 4>& x) const {
  const std::size_t n = x_.size();
  std::vector<double> kstar(n);
  for (std::size_t i = 0; i < n; ++i) kstar[i] = se_kernel(x, x_[i], hyper_);
  double mean = y_mean_;
  for (std::size_t i = 0; i < n; ++i) mean += kstar[i] * alpha_[i];
  // v = L^-1 k*
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = kstar[i];
    for (std::size_t p = 0; p < i; ++p) sum -= l_[i][p] * v[p];
    v[i] = sum / l_[i][i];
  }
  double var = hyper_.signal_var;
  for (std::size_t i = 0; i < n; ++i) var -= v[i] * v[i];
  return {mean, std::max(var, 0.0)};
}

GaussianProcess::Hyper GaussianProcess::select_hyper(
    const std::vector<std::array<double, 4>>& x, const std::vector<double>& y, double noise_var) {
  double var = 0.0, mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  if (var <= 0.0) var = 1e-8;

  static const std::array<double, 5> kGrid = {0.08, 0.15, 0.3, 0.6, 1.2};
  Hyper best;
  best.signal_var = var;
  best.noise_var = noise_var;
  double best_ml = -std::numeric_limits<double>::infinity();
  GaussianProcess gp;
  // Greedy per-dimension search keeps the grid small: start isotropic, then
  // refine one dimension at a time.
  for (double iso : kGrid) {
    Hyper h;
    h.length_scale = {iso, iso, iso, iso};
    h.signal_var = var;
    h.noise_var = noise_var;
    try {
      gp.fit(x, y, h);
    } catch (const ContractError&) {
      continue;
    }
    if (gp.log_marginal() > best_ml) {
      best_ml = gp.log_marginal();
      best = h;
    }
  }
  for (int d = 0; d < 4; ++d) {
    for (double ls : kGrid) {
      Hyper h = best;
      h.length_scale[d] = ls;
      try {
        gp.fit(x, y, h);
      } catch (const ContractError&) {
        continue;
      }
      if (gp.log_marginal() > best_ml) {
        best_ml = gp.log_marginal();
        best = h;
      }
    }
  }
  return best;
}

double expected_improvement(double mu, double sigma, double best_e) {
  if (sigma <= 0.0) return std::max(0.0, best_e - mu);
  const double z = (best_e - mu) / sigma;
  return (best_e - mu) * normal_cdf(z) + sigma * normal_pdf(z);
}

// ----- BO loop ------------------------------------------------------------------

namespace {

std::array<double, 4> normalize(const SearchSpace& space, const TunePoint& p) {
  std::array<double, 4> u;
  for (int s = 0; s < 3; ++s) {
    u[s] = (std::log(p.thetas[s]) - std::log(space.theta_min[s])) /
           (std::log(space.theta_max[s]) - std::log(space.theta_min[s]));
  }
  u[3] = static_cast<double>(p.w - space.w_min) / static_cast<double>(space.w_max - space.w_min);
  return u;
}

TunePoint denormalize(const SearchSpace& space, const std::array<double, 4>& u) {
  TunePoint p;
  for (int s = 0; s < 3; ++s) {
    p.thetas[s] = std::exp(std::log(space.theta_min[s]) +
                           u[s] * (std::log(space.theta_max[s]) - std::log(space.theta_min[s])));
  }
  p.w = space.w_min +
        static_cast<int>(std::lround(u[3] * static_cast<double>(space.w_max - space.w_min)));
  p.w = std::clamp(p.w, space.w_min, space.w_max);
  return p;
}

}  // namespace

BoState bo_minimize(const SearchSpace& space, int budget, std::uint64_t seed,
                    const Objective& objective, const BoOptions& opts) {
  space.validate();
  const int n_init = std::min(opts.initial_design, budget);
  if (budget < opts.initial_design) {
    throw ContractError("bo_minimize: budget must cover the initial design");
  }

  BoState state;
  state.best.error = std::numeric_limits<double>::infinity();
  std::vector<std::array<double, 4>> xs;
  std::vector<double> ys;

  auto record = [&](const TunePoint& p, double e) {
    state.samples.push_back({p, e});
    xs.push_back(normalize(space, p));
    ys.push_back(e);
    if (e < state.best.error) state.best = {p, e};
  };

  int used = 0;
  for (const auto& seed_point : opts.seed_points) {
    if (used >= budget) break;
    TunePoint p = seed_point;
    for (int s = 0; s < 3; ++s) {
      p.thetas[s] = std::clamp(p.thetas[s], space.theta_min[s], space.theta_max[s]);
    }
    p.w = std::clamp(p.w, space.w_min, space.w_max);
    record(p, objective(p));
    ++used;
  }
  static const int kHaltonBases[4] = {2, 3, 5, 7};
  for (int i = 0; used < n_init && i < n_init; ++i, ++used) {
    std::array<double, 4> u;
    for (int d = 0; d < 4; ++d) u[d] = halton(i + 1, kHaltonBases[d]);
    TunePoint p = denormalize(space, u);
    record(p, objective(p));
  }

  Rng rng = Rng(seed).derive("bo");
  GaussianProcess gp;
  for (int it = static_cast<int>(state.samples.size()); it < budget; ++it) {
    if ((it - n_init) % opts.refit_every == 0 || state.samples.size() < 2) {
      state.gp_hyper = GaussianProcess::select_hyper(xs, ys, opts.noise_var);
    }
    gp.fit(xs, ys, state.gp_hyper);

    double best_ei = -1.0;
    std::array<double, 4> best_u{};
    for (int c = 0; c < opts.candidates; ++c) {
      std::array<double, 4> u;
      for (int d = 0; d < 4; ++d) u[d] = rng.uniform();
      auto post = gp.posterior(u);
      const double ei = expected_improvement(post.mean, std::sqrt(post.var), state.best.error);
      if (ei > best_ei) {
        best_ei = ei;
        best_u = u;
      }
    }
    TunePoint p = denormalize(space, best_u);
    record(p, objective(p));
  }
  return state;
}

// ----- detection error ------------------------------------------------------------

DetectionErrorBreakdown detection_error_breakdown(const std::vector<Detection>& detections,
                                                  const std::vector<EventRecord>& truth,
                                                  double match_tol_s) {
  DetectionErrorBreakdown out;
  out.detections = static_cast<int>(detections.size());
  const std::int64_t tol_ms = static_cast<std::int64_t>(std::llround(match_tol_s * 1000.0));

  std::vector<std::int64_t> starts;
  starts.reserve(truth.size());
  for (const auto& e : truth) starts.push_back(e.start_ms);
  std::sort(starts.begin(), starts.end());

  auto matches_truth = [&](std::int64_t t) {
    auto it = std::lower_bound(starts.begin(), starts.end(), t);
    if (it != starts.end() && *it - t <= tol_ms) return true;
    if (it != starts.begin() && t - *(it - 1) <= tol_ms) return true;
    return false;
  };

  int true_positive_dets = 0;
  for (const auto& d : detections) {
    if (matches_truth(d.t_detect_ms)) ++true_positive_dets;
    else ++out.false_positives;
  }
  for (const auto& e : truth) {
    for (const auto& d : detections) {
      if (std::llabs(d.t_detect_ms - e.start_ms) <= tol_ms) {
        ++out.matched_events;
        break;
      }
    }
  }
  const double recall =
      truth.empty() ? 1.0
                    : static_cast<double>(out.matched_events) / static_cast<double>(truth.size());
  const double precision =
      detections.empty() ? 0.0
                         : static_cast<double>(true_positive_dets) /
                               static_cast<double>(detections.size());
  out.recall = recall;
  out.precision = precision;
  const double denom = precision + recall;
  out.error = denom > 0.0 ? 1.0 - 2.0 * precision * recall / denom : 1.0;
  return out;
}

double detection_error(const DetectorParams& params, const std::vector<EventRecord>& labeled,
                       const Dataset& dataset, const DetectionErrorOptions& opts) {
  DetectorParams p = params;
  p.stride = opts.eval_stride;
  auto detections = detect_events(dataset, p);
  return detection_error_breakdown(detections, labeled, opts.match_tol_s).error;
}

DetectorParams bo_search(const SearchSpace& space, int budget, std::uint64_t seed,
                         const std::vector<EventRecord>& labeled, const Dataset& dataset,
                         const DetectorParams& base, const DetectionErrorOptions& err_opts,
                         BoState* state_out) {
  // xi series only depend on w, so cache detection scans per w and sweep
  // thresholds over the cached series.
  std::map<int, std::array<XiSeries, 3>> series_cache;
  auto objective = [&](const TunePoint& point) {
    auto it = series_cache.find(point.w);
    if (it == series_cache.end()) {
      std::array<XiSeries, 3> series;
      for (SignalKind s : kAllSignals) {
        series[static_cast<int>(s)] =
            compute_xi_series(dataset.grid(s), point.w, err_opts.eval_stride);
      }
      it = series_cache.emplace(point.w, std::move(series)).first;
    }
    const auto& series = it->second;
    // Replay the OR rule + refractory on the cached series (must mirror
    // detect_events exactly).
    const std::int64_t refractory =
        static_cast<std::int64_t>(std::llround(base.refractory_s * dataset.fps()));
    std::vector<Detection> detections;
    std::int64_t suppressed_until = std::numeric_limits<std::int64_t>::min();
    for (std::size_t k = 0; k < series[0].index.size(); ++k) {
      const std::int64_t idx = series[0].index[k];
      if (idx < suppressed_until) continue;
      bool fired = false;
      for (int s = 0; s < 3; ++s) {
        if (!series[s].valid[k]) continue;
        const double score =
            base.signed_threshold ? series[s].xi[k] : std::abs(series[s].xi[k]);
        if (score > point.thetas[s]) {
          fired = true;
          break;
        }
      }
      if (fired) {
        Detection d;
        d.t_detect_ms = dataset.ms_of_index(idx);
        detections.push_back(std::move(d));
        suppressed_until = idx + refractory;
      }
    }
    return detection_error_breakdown(detections, labeled, err_opts.match_tol_s).error;
  };

  // Coarse diagonal log-grid over the thresholds crossed with a few window
  // sizes: lands the search inside the operating decade before EI refines.
  BoOptions opts;
  for (int wi : {space.w_min + (space.w_max - space.w_min) / 9, 120, 240}) {
    if (wi < space.w_min || wi > space.w_max) continue;
    for (double frac : {0.35, 0.5, 0.6, 0.7, 0.85}) {
      TunePoint p;
      for (int s = 0; s < 3; ++s) {
        p.thetas[s] = std::exp(std::log(space.theta_min[s]) +
                               frac * (std::log(space.theta_max[s]) -
                                       std::log(space.theta_min[s])));
      }
      p.w = wi;
      opts.seed_points.push_back(p);
    }
  }
  BoState state = bo_minimize(space, budget, seed, objective, opts);
  if (state_out) *state_out = state;

  DetectorParams tuned = base;
  tuned.w = state.best.point.w;
  tuned.thresholds = state.best.point.thetas;
  // The thresholds were calibrated on this evaluation lattice.
  tuned.stride = err_opts.eval_stride;
  return tuned;
}

}  // namespace pmuek
