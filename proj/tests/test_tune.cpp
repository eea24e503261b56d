#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pmuek/errors.hpp"
#include "pmuek/preprocess.hpp"
#include "pmuek/rng.hpp"
#include "pmuek/synth.hpp"
#include "pmuek/tune.hpp"

using namespace pmuek;

namespace {

// Smooth single-minimum test surface over the normalized search space.
double bowl(const SearchSpace& space, const TunePoint& p) {
  const std::array<double, 4> center = {0.3, 0.62, 0.45, 0.7};
  const std::array<double, 4> weight = {4.0, 6.0, 5.0, 3.0};
  std::array<double, 4> u;
  for (int s = 0; s < 3; ++s) {
    u[s] = (std::log(p.thetas[s]) - std::log(space.theta_min[s])) /
           (std::log(space.theta_max[s]) - std::log(space.theta_min[s]));
  }
  u[3] = static_cast<double>(p.w - space.w_min) / static_cast<double>(space.w_max - space.w_min);
  double q = 0.0;
  for (int d = 0; d < 4; ++d) q += weight[d] * (u[d] - center[d]) * (u[d] - center[d]);
  return 1.0 - 0.95 * std::exp(-q);
}

}  // namespace

TEST_SUITE_BEGIN("tune");

TEST_CASE("expected improvement closed-form values") {
  // sigma = 0 and mu >= best: an already-sampled candidate cannot improve.
  CHECK(expected_improvement(0.4, 0.0, 0.3) == 0.0);
  CHECK(expected_improvement(0.3, 0.0, 0.3) == 0.0);
  CHECK(expected_improvement(0.1, 0.0, 0.3) == doctest::Approx(0.2).epsilon(1e-15));
  // mu == best, sigma = 1: phi(0) = 1/sqrt(2 pi).
  CHECK(expected_improvement(0.5, 1.0, 0.5) ==
        doctest::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("expected improvement matches Monte Carlo within 3 standard errors") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    const double mu = rng.uniform(-1.0, 1.0);
    const double sigma = rng.uniform(0.05, 2.0);
    const double best = rng.uniform(-1.0, 1.0);
    const int n = 400000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = mu + sigma * rng.normal();
      const double gain = std::max(0.0, best - x);
      sum += gain;
      sum2 += gain * gain;
    }
    const double mc = sum / n;
    const double se = std::sqrt((sum2 / n - mc * mc) / n);
    const double closed = expected_improvement(mu, sigma, best);
    CAPTURE(trial);
    CHECK(std::abs(closed - mc) <= 3.0 * se + 1e-12);
    CHECK(closed >= 0.0);
  }
}

TEST_CASE("ei is non-negative over random states") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(expected_improvement(rng.uniform(-2, 2), rng.uniform(0, 3), rng.uniform(-2, 2)) >= 0.0);
  }
}

TEST_CASE("gp posterior interpolates its observations") {
  Rng rng(11);
  std::vector<std::array<double, 4>> x;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    std::array<double, 4> u;
    for (auto& v : u) v = rng.uniform();
    x.push_back(u);
    y.push_back(0.3 + 0.2 * std::sin(6.0 * u[0]) + 0.1 * u[1] * u[2]);
  }
  GaussianProcess gp;
  GaussianProcess::Hyper hyper = GaussianProcess::select_hyper(x, y, 1e-6);
  gp.fit(x, y, hyper);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto post = gp.posterior(x[i]);
    CHECK(std::abs(post.mean - y[i]) < 1e-4);
    CHECK(post.var >= 0.0);
  }
}

TEST_CASE("detection error follows the matched-F1 definition") {
  std::vector<EventRecord> truth;
  for (int i = 0; i < 10; ++i) {
    EventRecord e;
    e.start_ms = 1000000 + i * 100000;
    e.end_ms = e.start_ms + 1000;
    truth.push_back(e);
  }
  auto det_at = [](std::int64_t ms) {
    Detection d;
    d.t_detect_ms = ms;
    return d;
  };

  // One detection within 5 s of each truth start: perfect.
  std::vector<Detection> perfect;
  for (const auto& e : truth) perfect.push_back(det_at(e.start_ms + 1500));
  CHECK(detection_error_breakdown(perfect, truth, 5.0).error == doctest::Approx(0.0));

  // Nothing fires: error 1.
  CHECK(detection_error_breakdown({}, truth, 5.0).error == doctest::Approx(1.0));

  // 8 matched, 2 spurious: precision 0.8, recall 0.8 -> e = 0.2.
  std::vector<Detection> mixed;
  for (int i = 0; i < 8; ++i) mixed.push_back(det_at(truth[i].start_ms - 2000));
  mixed.push_back(det_at(truth.back().start_ms + 50000));
  mixed.push_back(det_at(500000));
  auto breakdown = detection_error_breakdown(mixed, truth, 5.0);
  CHECK(breakdown.matched_events == 8);
  CHECK(breakdown.false_positives == 2);
  CHECK(breakdown.error == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("budget equal to the initial design returns the best initial point") {
  SearchSpace space;
  int evals = 0;
  auto objective = [&](const TunePoint& p) {
    ++evals;
    return bowl(space, p);
  };
  BoState state = bo_minimize(space, 8, 1, objective);
  CHECK(evals == 8);
  CHECK(state.samples.size() == 8);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : state.samples) best = std::min(best, s.error);
  CHECK(state.best.error == best);

  CHECK_THROWS_AS(bo_minimize(space, 4, 1, objective), ContractError);
}

TEST_CASE("best-so-far error is monotone across iterations") {
  SearchSpace space;
  std::vector<double> errs;
  auto objective = [&](const TunePoint& p) {
    const double e = bowl(space, p);
    errs.push_back(e);
    return e;
  };
  BoState state = bo_minimize(space, 40, 3, objective);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < errs.size(); ++i) {
    best = std::min(best, errs[i]);
  }
  CHECK(state.best.error == doctest::Approx(best));
  CHECK(state.best.error < 0.2);  // the bowl floor is 0.05
}

TEST_CASE("bo_minimize is deterministic under a fixed seed") {
  SearchSpace space;
  auto objective = [&](const TunePoint& p) { return bowl(space, p); };
  BoState a = bo_minimize(space, 30, 17, objective);
  BoState b = bo_minimize(space, 30, 17, objective);
  CHECK(a.best.point.w == b.best.point.w);
  CHECK(a.best.point.thetas == b.best.point.thetas);
  CHECK(a.best.error == b.best.error);
}

TEST_CASE("bo search tunes a working detector on a desk-scale stream") {
  GeneratorConfig cfg;
  cfg.n_pmus = 8;
  cfg.fps = 30;
  cfg.duration_s = 1500.0;
  cfg.n_events = 10;
  cfg.seed = 21;
  cfg.min_gap_s = 120.0;
  GeneratedStream stream = generate(cfg);
  ImperfectionConfig icfg;
  icfg.snr_db = 45.0;
  DegradeResult degraded = degrade(stream.frames, stream.truth, icfg, 4);

  Dataset ds = Dataset::from_frames(degraded.frames, 30);
  quality_filter_dataset(ds);
  impute_dataset(ds, pipeline_impute_options());

  SearchSpace space;
  DetectionErrorOptions err;
  err.eval_stride = 3;
  BoState state;
  DetectorParams tuned =
      bo_search(space, 30, 7, stream.truth, ds, DetectorParams{}, err, &state);

  CHECK(state.best.error <= 0.1);
  // The tuned window size sits strictly inside the search range.
  CHECK(tuned.w > space.w_min);
  CHECK(tuned.w < space.w_max);

  DetectorParams strided = tuned;
  strided.stride = err.eval_stride;
  const double err_tuned = detection_error(strided, stream.truth, ds, err);
  CHECK(err_tuned == doctest::Approx(state.best.error).epsilon(1e-12));
}

TEST_SUITE_END();
