// Acceptance suite: one PASS/FAIL line per criterion, exit code 0 only if
// every requested criterion passes. Large shared fixtures (the standard
// synthetic benchmarks) are generated once into the work directory and
// reused; all content is a pure function of fixed seeds.
//
//   acceptance [--criterion N] [--cli <pmu-eventkit binary>] [--workdir <dir>]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pmuek/classify.hpp"
#include "pmuek/detect.hpp"
#include "pmuek/errors.hpp"
#include "pmuek/features.hpp"
#include "pmuek/pipeline.hpp"
#include "pmuek/preprocess.hpp"
#include "pmuek/rng.hpp"
#include "pmuek/synth.hpp"
#include "pmuek/timeutil.hpp"
#include "pmuek/tune.hpp"

namespace fs = std::filesystem;
using namespace pmuek;
using Clock = std::chrono::steady_clock;

namespace {

struct Context {
  fs::path workdir;
  std::string cli;
  int failures = 0;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(Context& ctx, int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++ctx.failures;
}

// ----- shared benchmark fixtures -----------------------------------------------

// Detection benchmark: seed 42, 10 PMUs, 30 fps, 2 simulated hours, 60
// events, 45 dB SNR plus the default dropout/bad-data/flag rates.
ImperfectionConfig default_degradation(double jitter_s) {
  ImperfectionConfig icfg;
  icfg.snr_db = 45.0;
  icfg.missing_rate = 0.02;
  icfg.bad_rate = 0.005;
  icfg.flag_anomaly_rate = 0.002;
  icfg.log_jitter_max_s = jitter_s;
  return icfg;
}

GeneratorConfig detection_benchmark_config() {
  GeneratorConfig cfg;
  cfg.n_pmus = 10;
  cfg.fps = 30;
  cfg.duration_s = 7200.0;
  cfg.n_events = 60;
  cfg.seed = 42;
  cfg.min_gap_s = 100.0;
  return cfg;
}

// Classification benchmark: same generator family, 500 events.
GeneratorConfig classification_benchmark_config() {
  GeneratorConfig cfg;
  cfg.n_pmus = 10;
  cfg.fps = 30;
  cfg.n_events = 500;
  cfg.min_gap_s = 80.0;  // = 2 x the coarse half window used below
  cfg.duration_s = 500.0 * 84.0 + 160.0;
  cfg.seed = 42;
  return cfg;
}

constexpr double kClassifyHalfWindowS = 40.0;
constexpr double kClassifyJitterS = 20.0;

struct ClassifyFixture {
  fs::path frames;
  fs::path truth;
  fs::path log;
};

ClassifyFixture classification_fixture(Context& ctx) {
  ClassifyFixture f;
  f.frames = ctx.workdir / "bench500_frames.csv";
  f.truth = ctx.workdir / "bench500_truth.json";
  f.log = ctx.workdir / "bench500_log.json";
  if (fs::exists(f.frames) && fs::exists(f.truth) && fs::exists(f.log)) return f;

  GeneratorConfig cfg = classification_benchmark_config();
  fs::path clean = ctx.workdir / "bench500_clean.tmp";
  std::vector<EventRecord> truth;
  {
    FrameWriter writer(clean.string());
    generate_stream(cfg, [&](const PmuFrame& fr) { writer.write(fr); }, &truth);
  }
  write_event_log(f.truth.string(), truth);
  auto log = degrade_file(clean.string(), f.frames.string(), truth,
                          default_degradation(kClassifyJitterS), mix64(cfg.seed, 500));
  fs::remove(clean);
  write_event_log(f.log.string(), log);
  return f;
}

// Tuned parameters for the benchmark family, cached on disk.
DetectorParams benchmark_params(Context& ctx, Dataset* reuse_dataset = nullptr,
                                std::vector<EventRecord>* reuse_truth = nullptr) {
  fs::path cache = ctx.workdir / "bench_params.txt";
  if (fs::exists(cache) && !reuse_dataset) return read_detector_params(cache.string());

  GeneratorConfig cfg = detection_benchmark_config();
  GeneratedStream stream = generate(cfg);
  DegradeResult degraded =
      degrade(stream.frames, stream.truth, default_degradation(20.0), mix64(cfg.seed, 100));
  Dataset ds = Dataset::from_frames(degraded.frames, cfg.fps);
  degraded.frames = {};
  quality_filter_dataset(ds);
  impute_dataset(ds, pipeline_impute_options());

  SearchSpace space;
  DetectionErrorOptions err;
  err.eval_stride = 4;
  DetectorParams tuned = bo_search(space, 40, 7, stream.truth, ds, DetectorParams{}, err);
  std::ofstream(cache.string()) << detector_params_to_text(tuned);
  if (reuse_dataset) *reuse_dataset = std::move(ds);
  if (reuse_truth) *reuse_truth = stream.truth;
  return tuned;
}

// Cyclic Jacobi eigenvalues: the independent oracle for criterion 1.
std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) < 1e-15 * scale) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t =
            (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

// ----- criteria ------------------------------------------------------------------

void criterion_1(Context& ctx) {
  const auto t0 = Clock::now();
  Rng rng(4242);
  int checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int rows = 2 + static_cast<int>(rng.uniform_int(299));
    const int cols = 2 + static_cast<int>(rng.uniform_int(
                             static_cast<std::uint64_t>(std::min(rows, 50) - 1)));
    Eigen::MatrixXd m(rows, cols);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 5.0));
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    const double eta = singular_ratio(m);
    auto eig = jacobi_eigenvalues(m.transpose() * m);
    const double oracle = std::sqrt(std::max(eig[1], 0.0) / eig[0]);
    worst = std::max(worst, std::abs(eta - oracle));
    ++checked;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = checked == 1000 && worst <= 1e-9 && elapsed < 30.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "SVD ratio vs MtM eigen-oracle on 1000 matrices: max |diff| %.2e, %.1f s", worst,
                elapsed);
  report(ctx, 1, pass, buf);
}

void criterion_2(Context& ctx) {
  bool pass = true;
  std::string why;
  auto expect = [&](bool ok, const char* what) {
    if (!ok) {
      pass = false;
      why += std::string(why.empty() ? "" : "; ") + what;
    }
  };
  // Eq.-1 hand values.
  expect(xi_statistic(0.2, 0.1, 10) == 0.1, "xi(0.2,0.1,10)");
  expect(xi_statistic(0.1, 0.2, 120) == -1.0 / 240.0, "xi(0.1,0.2,120)");
  expect(xi_statistic(0.7, 0.7, 33) == 0.0, "xi zero numerator");
  // Shape-feature hand values on [0,1,3,2].
  std::vector<double> w = {0.0, 1.0, 3.0, 2.0};
  PerPmuFeatures f = per_pmu_features(w);
  expect(f.f[0] == 1.5 && f.f[1] == 1.5, "f1/f2 hand value");
  expect(f.f[2] == 3.0 && f.f[3] == 1.0, "f3/f4 hand value");
  expect(f.f[4] == 2.0 && f.f[5] == 2.0, "f5/f6 hand value");
  // O(W) vs O(W^2) ramps on 200 random windows.
  Rng rng(515);
  for (int trial = 0; trial < 200 && pass; ++trial) {
    const std::size_t len = 10 + rng.uniform_int(291);
    std::vector<double> x(len);
    double level = rng.uniform(-5, 5);
    for (auto& v : x) {
      level += 0.2 * rng.normal();
      v = level + rng.normal();
    }
    PerPmuFeatures ff = per_pmu_features(x);
    double rise = 0.0, drop = 0.0;
    for (std::size_t t2 = 0; t2 < len; ++t2) {
      for (std::size_t t1 = t2; t1 < len; ++t1) {
        rise = std::max(rise, x[t1] - x[t2]);
        drop = std::max(drop, x[t2] - x[t1]);
      }
    }
    expect(ff.f[2] == rise && ff.f[3] == drop, "O(W) ramp != brute force");
  }
  report(ctx, 2, pass,
         pass ? "Eq.-1 and shape-feature hand values exact; ramp scans match brute force"
              : "hand-value mismatch: " + why);
}

void criterion_3(Context& ctx) {
  Rng rng(99);
  bool pass = true;
  int trials = 0;
  for (int trial = 0; trial < 1000 && pass; ++trial, ++trials) {
    const std::size_t len = 20 + rng.uniform_int(281);
    const int n_pmus = 2 + static_cast<int>(rng.uniform_int(6));
    Eigen::MatrixXd m(len, n_pmus);
    for (std::size_t r = 0; r < len; ++r)
      for (int c = 0; c < n_pmus; ++c) m(r, c) = rng.normal() * 3.0 + c;
    EventWindows wins;
    for (int c = 0; c < n_pmus; ++c) wins.pmu_ids.push_back("P" + std::to_string(c));
    wins.values = {m, m, m};
    FeatureVector base = build_feature_vector(wins);
    if (base.values.size() != 57) pass = false;

    const double shift = rng.uniform(-50, 50);
    const double scale = rng.uniform(0.1, 20.0);
    EventWindows shifted = wins;
    EventWindows scaled = wins;
    EventWindows reversed = wins;
    for (auto& v : shifted.values) v.array() += shift;
    for (auto& v : scaled.values) v *= scale;
    for (auto& v : reversed.values) v = v.colwise().reverse().eval();
    FeatureVector fs = build_feature_vector(shifted);
    FeatureVector fc = build_feature_vector(scaled);
    FeatureVector fr = build_feature_vector(reversed);
    auto close = [](double a, double b) {
      return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
    };
    for (int block = 0; block < 3 && pass; ++block) {
      for (int j = 0; j < 6 && pass; ++j) {
        for (int stat = 0; stat < 3 && pass; ++stat) {
          const int i = block * 18 + 3 * j + stat;
          if (!close(fs.values[i], base.values[i])) pass = false;          // shift
          if (!close(fc.values[i], scale * base.values[i])) pass = false;  // scaling
        }
        const int i = block * 18 + 3 * j;
        // min <= mean <= max.
        if (base.values[i + 1] > base.values[i + 2] + 1e-12) pass = false;
        if (base.values[i + 2] > base.values[i + 0] + 1e-12) pass = false;
        // Time reversal swaps f3 and f4 and fixes the rest.
        const int jr = j == 2 ? 3 : (j == 3 ? 2 : j);
        const int ir = block * 18 + 3 * jr;
        for (int stat = 0; stat < 3 && pass; ++stat) {
          if (!close(fr.values[ir + stat], base.values[i + stat])) pass = false;
        }
      }
    }
  }
  report(ctx, 3, pass,
         "feature invariants (shift, scaling, reversal, schema, min<=mean<=max) over " +
             std::to_string(trials) + " random windows at 1e-9");
}

void criterion_4(Context& ctx) {
  const auto t0 = Clock::now();
  GeneratorConfig cfg = detection_benchmark_config();
  GeneratedStream stream = generate(cfg);
  DegradeResult degraded =
      degrade(stream.frames, stream.truth, default_degradation(20.0), mix64(cfg.seed, 100));
  stream.frames = {};
  Dataset ds = Dataset::from_frames(degraded.frames, cfg.fps);
  degraded.frames = {};
  quality_filter_dataset(ds);
  impute_dataset(ds, pipeline_impute_options());

  SearchSpace space;
  DetectionErrorOptions err;
  err.eval_stride = 4;
  DetectorParams tuned = bo_search(space, 40, 7, stream.truth, ds, DetectorParams{}, err);
  std::ofstream((ctx.workdir / "bench_params.txt").string()) << detector_params_to_text(tuned);

  DetectorParams final_params = tuned;
  final_params.stride = 1;
  auto detections = detect_events(ds, final_params);
  auto breakdown = detection_error_breakdown(detections, stream.truth, 5.0);

  std::vector<double> loc_errors;
  for (const auto& e : stream.truth) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& d : detections) {
      best = std::min(best, std::abs(static_cast<double>(d.t_detect_ms - e.start_ms)));
    }
    if (best <= 5000.0) loc_errors.push_back(best / 1000.0);
  }
  std::sort(loc_errors.begin(), loc_errors.end());
  const double median_loc = loc_errors.empty() ? 1e9 : loc_errors[loc_errors.size() / 2];
  const double elapsed = seconds_since(t0);
  const double fa_per_hour = breakdown.false_positives / 2.0;

  const bool pass = breakdown.recall >= 0.95 && fa_per_hour <= 1.0 && median_loc <= 1.0 &&
                    elapsed < 300.0 && tuned.w > space.w_min && tuned.w < space.w_max;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "tuned detection on the 2 h benchmark: recall %.3f (>=0.95), %.1f false "
                "alarms/h (<=1), median localization %.3f s (<=1), w=%d, %.0f s (<300)",
                breakdown.recall, fa_per_hour, median_loc, tuned.w, elapsed);
  report(ctx, 4, pass, buf);
}

void criterion_5(Context& ctx) {
  const auto t0 = Clock::now();
  SearchSpace space;
  const std::array<double, 4> center = {0.3, 0.62, 0.45, 0.7};
  const std::array<double, 4> weight = {4.0, 6.0, 5.0, 3.0};
  auto surface = [&](const TunePoint& p) {
    std::array<double, 4> u;
    for (int s = 0; s < 3; ++s) {
      u[s] = (std::log(p.thetas[s]) - std::log(space.theta_min[s])) /
             (std::log(space.theta_max[s]) - std::log(space.theta_min[s]));
    }
    u[3] = static_cast<double>(p.w - space.w_min) / static_cast<double>(space.w_max - space.w_min);
    double q = 0.0;
    for (int d = 0; d < 4; ++d) q += weight[d] * (u[d] - center[d]) * (u[d] - center[d]);
    return 1.0 - 0.95 * std::exp(-q);
  };

  // Dense 10^4-point grid: 10 points per dimension.
  std::vector<double> grid_values;
  grid_values.reserve(10000);
  for (int a = 0; a < 10; ++a)
    for (int b = 0; b < 10; ++b)
      for (int c = 0; c < 10; ++c)
        for (int d = 0; d < 10; ++d) {
          std::array<double, 4> u = {a / 9.0, b / 9.0, c / 9.0, d / 9.0};
          TunePoint p;
          for (int s = 0; s < 3; ++s) {
            p.thetas[s] = std::exp(std::log(space.theta_min[s]) +
                                   u[s] * (std::log(space.theta_max[s]) -
                                           std::log(space.theta_min[s])));
          }
          p.w = space.w_min +
                static_cast<int>(std::lround(u[3] * (space.w_max - space.w_min)));
          grid_values.push_back(surface(p));
        }
  std::sort(grid_values.begin(), grid_values.end());
  const double best5pct = grid_values[static_cast<std::size_t>(0.05 * grid_values.size())];

  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    BoState state = bo_minimize(space, 50, seed, surface);
    if (state.best.error <= best5pct) ++hits;
  }

  // Closed-form EI vs Monte Carlo for 5 random posteriors.
  Rng rng(777);
  bool ei_ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    const double mu = rng.uniform(-1.0, 1.0);
    const double sigma = rng.uniform(0.05, 2.0);
    const double best = rng.uniform(-1.0, 1.0);
    const int n = 500000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double gain = std::max(0.0, best - (mu + sigma * rng.normal()));
      sum += gain;
      sum2 += gain * gain;
    }
    const double mc = sum / n;
    const double se = std::sqrt(std::max(sum2 / n - mc * mc, 0.0) / n);
    if (std::abs(expected_improvement(mu, sigma, best) - mc) > 3.0 * se + 1e-12) ei_ok = false;
  }
  const double elapsed = seconds_since(t0);
  const bool pass = hits >= 18 && ei_ok && elapsed < 120.0;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "BO reaches the best 5%% of a 10^4 grid in %d/20 seeds (>=18); EI matches "
                "Monte Carlo: %s; %.0f s (<120)",
                hits, ei_ok ? "yes" : "no", elapsed);
  report(ctx, 5, pass, buf);
}

PipelineConfig classify_pipeline_config(const ClassifyFixture& f, const DetectorParams&) {
  PipelineConfig cfg;
  cfg.frames_path = f.frames.string();
  cfg.fps = 30;
  cfg.coarse_half_window_s = kClassifyHalfWindowS;
  cfg.fine_window_s = 10.0;
  cfg.seed = 7;
  cfg.model_spec.kind = ModelKind::RandomForest;
  cfg.model_spec.seed = 7;
  return cfg;
}

void criterion_6(Context& ctx) {
  ClassifyFixture fixture = classification_fixture(ctx);
  DetectorParams params = benchmark_params(ctx);
  PipelineConfig cfg = classify_pipeline_config(fixture, params);
  std::vector<EventRecord> log = read_event_log(fixture.log.string());

  TrainPipelineResult result = run_train_pipeline(cfg, params, log);
  result.features.validate();
  write_feature_table((ctx.workdir / "bench500_features.csv").string(), result.features);
  {
    std::ofstream out((ctx.workdir / "bench500_test_rows.txt").string());
    for (auto r : result.test_rows) out << r << "\n";
  }
  result.model->save((ctx.workdir / "bench500_model.json").string());

  const double acc = result.report.evaluation.metrics.acc;
  const double f1 = result.report.evaluation.metrics.f1;
  const double train_seconds = result.report.train_seconds;

  // RF vs DT mean accuracy over 10 reseeded splits of the same features.
  double rf_mean = 0.0, dt_mean = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(900 + seed);
    std::vector<std::size_t> order(result.features.n_rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t j = order.size(); j > 1; --j) {
      std::swap(order[j - 1], order[rng.uniform_int(j)]);
    }
    FeatureTable train_set, test_set;
    train_set.names = result.features.names;
    test_set.names = result.features.names;
    const std::size_t n_train = order.size() * 4 / 5;
    for (std::size_t j = 0; j < order.size(); ++j) {
      auto& dst = j < n_train ? train_set : test_set;
      dst.push_row(result.features.rows[order[j]], result.features.labels[order[j]]);
    }
    ModelSpec rf;
    rf.kind = ModelKind::RandomForest;
    rf.seed = seed;
    ModelSpec dt;
    dt.kind = ModelKind::DecisionTree;
    dt.seed = seed;
    rf_mean += evaluate(*train(rf, train_set), test_set).metrics.acc;
    dt_mean += evaluate(*train(dt, train_set), test_set).metrics.acc;
  }
  rf_mean /= 10.0;
  dt_mean /= 10.0;

  const bool pass = acc >= 0.90 && f1 >= 0.85 && rf_mean >= dt_mean && train_seconds < 10.0;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "RF on the 500-event benchmark: acc %.3f (>=0.90), macro-F1 %.3f (>=0.85), "
                "RF %.3f >= DT %.3f over 10 seeds, training %.2f s (<10); %d/%d localized",
                acc, f1, rf_mean, dt_mean, train_seconds, result.report.n_localized,
                result.report.n_events);
  report(ctx, 6, pass, buf);
}

void criterion_7(Context& ctx) {
  ClassifyFixture fixture = classification_fixture(ctx);
  DetectorParams params = benchmark_params(ctx);
  PipelineConfig cfg = classify_pipeline_config(fixture, params);
  std::vector<EventRecord> log = read_event_log(fixture.log.string());

  fs::path model_path = ctx.workdir / "bench500_model.json";
  fs::path rows_path = ctx.workdir / "bench500_test_rows.txt";
  std::unique_ptr<Model> model;
  std::vector<EventRecord> test_events;
  if (fs::exists(model_path) && fs::exists(rows_path)) {
    model = Model::load(model_path.string());
    auto extractions = extract_event_features_file(cfg, params, log);
    std::vector<EventRecord> localized;
    for (const auto& ex : extractions) {
      if (ex.localized) localized.push_back(ex.log_event);
    }
    std::ifstream rows(rows_path.string());
    std::size_t idx;
    while (rows >> idx) {
      if (idx < localized.size()) test_events.push_back(localized[idx]);
    }
  } else {
    TrainPipelineResult result = run_train_pipeline(cfg, params, log);
    result.model->save(model_path.string());
    auto extractions = extract_event_features_file(cfg, params, log);
    std::vector<EventRecord> localized;
    for (const auto& ex : extractions) {
      if (ex.localized) localized.push_back(ex.log_event);
    }
    for (auto r : result.test_rows) test_events.push_back(localized[r]);
    model = std::move(result.model);
  }

  RobustnessTable table =
      run_robustness(cfg, params, *model, test_events, {0.1, 0.2, 0.3, 0.4, 0.5});
  std::ofstream((ctx.workdir / "bench500_robustness.json").string()) << table.to_json();
  const double acc10 = table.rows.front().metrics.acc;
  const double acc50 = table.rows.back().metrics.acc;
  const bool pass = acc50 >= acc10 - 0.10;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "robustness sweep: acc %.3f at 10%% missing vs %.3f at 50%% (drop %.3f <= 0.10)",
                acc10, acc50, acc10 - acc50);
  report(ctx, 7, pass, buf);
}

void criterion_8(Context& ctx) {
  Rng rng(2323);
  bool preserved = true;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 300, n = 8;
    Eigen::MatrixXd a(w, 2), b(2, n);
    for (int i = 0; i < w; ++i) {
      a(i, 0) = rng.normal();
      a(i, 1) = rng.normal();
    }
    for (int j = 0; j < n; ++j) {
      b(0, j) = rng.normal();
      b(1, j) = rng.normal();
    }
    Eigen::MatrixXd truth = a * b;
    Eigen::MatrixXd x = truth;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(w, n);
    double hidden2 = 0.0;
    for (int r = 0; r < w; ++r) {
      for (int c = 0; c < n; ++c) {
        if (rng.bernoulli(0.3)) {
          mask(r, c) = 1;
          x(r, c) = 0.0;
          hidden2 += truth(r, c) * truth(r, c);
        }
      }
    }
    ImputeOptions opts;  // default rank/tolerance
    opts.chunk_s = 0.0;
    impute(x, mask, opts);
    double err2 = 0.0;
    for (int r = 0; r < w; ++r) {
      for (int c = 0; c < n; ++c) {
        if (mask(r, c)) {
          const double d = x(r, c) - truth(r, c);
          err2 += d * d;
        } else if (x(r, c) != truth(r, c)) {
          preserved = false;
        }
      }
    }
    worst = std::max(worst, std::sqrt(err2 / hidden2));
  }
  const bool pass = worst <= 0.05 && preserved;
  char buf[180];
  std::snprintf(buf, sizeof(buf),
                "rank-2 completion at 30%% missing over 20 matrices: worst relative error "
                "%.4f (<=0.05), observed entries bit-preserved: %s",
                worst, preserved ? "yes" : "no");
  report(ctx, 8, pass, buf);
}

void criterion_9(Context& ctx) {
  ConfusionMatrix cm;
  cm.labels = {"FrequencyEvent", "LineOutage", "TransformerOutage"};
  cm.counts = {{50, 5, 0}, {3, 30, 2}, {0, 1, 9}};
  Metrics m = metrics_from_confusion(cm);
  const double pre = (50.0 / 55.0 + 30.0 / 35.0 + 9.0 / 10.0) / 3.0;
  const double rec = (50.0 / 53.0 + 30.0 / 36.0 + 9.0 / 11.0) / 3.0;
  auto f1_of = [](double p, double r) { return 2.0 * p * r / (p + r); };
  const double f1 = (f1_of(50.0 / 55.0, 50.0 / 53.0) + f1_of(30.0 / 35.0, 30.0 / 36.0) +
                     f1_of(9.0 / 10.0, 9.0 / 11.0)) /
                    3.0;
  bool pass = cm.total() == 100 && m.acc == 0.89 && m.pre == pre && m.rec == rec && m.f1 == f1;

  // Confusion totals stay consistent on randomized evaluations.
  Rng rng(31);
  FeatureTable table;
  table.names = {"x", "y"};
  const char* labels[] = {"A", "B", "C"};
  for (int i = 0; i < 120; ++i) {
    table.push_row({rng.normal() + 3.0 * (i % 3), rng.normal()}, labels[i % 3]);
  }
  ModelSpec spec;
  spec.kind = ModelKind::Knn;
  spec.knn.k = 3;
  auto model = train(spec, table);
  Evaluation ev = evaluate(*model, table);
  if (ev.confusion.total() != static_cast<std::int64_t>(table.n_rows())) pass = false;
  std::int64_t col_sum = 0;
  for (std::size_t i = 0; i < ev.confusion.labels.size(); ++i) {
    for (std::size_t j = 0; j < ev.confusion.labels.size(); ++j) {
      col_sum += ev.confusion.counts[j][i];
    }
  }
  if (col_sum != static_cast<std::int64_t>(table.n_rows())) pass = false;

  report(ctx, 9, pass,
         "hand-computed ACC/PRE/REC/F1 reproduced exactly; confusion totals consistent");
}

// Criterion 10 helpers: run a CLI command, capture exit code.
int run_cli(const std::string& cli, const std::string& args) {
  const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str();
}

void criterion_10(Context& ctx) {
  bool pass = true;
  std::string detail;
  if (ctx.cli.empty()) {
    report(ctx, 10, false, "no --cli path given");
    return;
  }

  fs::path base = ctx.workdir / "determinism";
  fs::create_directories(base);
  const std::string config_path = (base / "gen.cfg").string();
  {
    SynthConfig cfg;
    cfg.gen.n_pmus = 8;
    cfg.gen.fps = 30;
    cfg.gen.duration_s = 1420.0;
    cfg.gen.n_events = 10;
    cfg.gen.class_mix = {0.5, 0.3, 0.2};
    cfg.gen.seed = 77;
    cfg.gen.min_gap_s = 120.0;
    cfg.imp = default_degradation(15.0);
    std::ofstream(config_path) << synth_config_to_text(cfg);
  }

  for (int run = 1; run <= 2 && pass; ++run) {
    fs::path dir = base / ("run" + std::to_string(run));
    fs::create_directories(dir);
    auto p = [&](const char* name) { return (dir / name).string(); };
    std::vector<std::pair<std::string, std::string>> commands = {
        {"generate", "generate --config " + config_path + " --out-frames " + p("frames.csv") +
                         " --out-truth " + p("truth.json") + " --out-log " + p("log.json")},
        {"preprocess", "preprocess --in " + p("frames.csv") + " --out " + p("clean.csv") +
                           " --report " + p("quality.json")},
        {"tune", "tune --frames " + p("clean.csv") + " --truth " + p("truth.json") +
                     " --budget 18 --seed 7 --eval-stride 4 --out " + p("params.txt")},
        {"detect", "detect --in " + p("clean.csv") + " --params " + p("params.txt") + " --out " +
                       p("detections.json")},
        {"train", "train --frames " + p("frames.csv") + " --log " + p("log.json") + " --params " +
                      p("params.txt") +
                      " --coarse-half-s 45 --fps 30 --seed 5 --model-out " + p("model.json") +
                      " --features-out " + p("features.csv") + " --report " + p("report.json")},
        {"evaluate", "evaluate --model " + p("model.json") + " --features " + p("features.csv") +
                         " --report " + p("eval.json")},
        {"predict", "predict --model " + p("model.json") + " --features " + p("features.csv") +
                        " --out " + p("predictions.json")},
        {"stream", "stream --in " + p("frames.csv") + " --params " + p("params.txt") +
                       " --model " + p("model.json") + " --out " + p("emissions.jsonl")},
        {"robustness", "robustness --frames " + p("frames.csv") + " --log " + p("log.json") +
                           " --params " + p("params.txt") + " --model " + p("model.json") +
                           " --coarse-half-s 45 --fps 30 --seed 5 --rates 0.1 0.3 --out " +
                           p("robustness.json")},
    };
    for (const auto& [name, args] : commands) {
      if (run_cli(ctx.cli, args) != 0) {
        pass = false;
        detail = "CLI command failed: " + name;
        break;
      }
    }
  }
  if (pass) {
    const char* artifacts[] = {"frames.csv",     "truth.json",  "log.json",
                               "clean.csv",      "quality.json", "params.txt",
                               "detections.json", "model.json",  "features.csv",
                               "report.json",    "eval.json",   "predictions.json",
                               "emissions.jsonl", "robustness.json"};
    for (const char* name : artifacts) {
      if (!same_bytes(base / "run1" / name, base / "run2" / name)) {
        pass = false;
        detail = std::string("artifact differs between runs: ") + name;
        break;
      }
    }
  }

  // Stream/offline feature equivalence at 1e-9 (filter pass-through, stride 1).
  if (pass) {
    GeneratorConfig cfg;
    cfg.n_pmus = 8;
    cfg.fps = 30;
    cfg.duration_s = 1160.0;
    cfg.n_events = 8;
    cfg.class_mix = {0.5, 0.3, 0.2};
    cfg.seed = 4242;
    cfg.min_gap_s = 120.0;
    GeneratedStream stream = generate(cfg);
    fs::path frames_path = base / "equiv_frames.csv";
    write_frames(frames_path.string(), stream.frames);

    Dataset tune_ds = Dataset::from_frames(stream.frames, 30);
    quality_filter_dataset(tune_ds);
    impute_dataset(tune_ds, pipeline_impute_options());
    SearchSpace space;
    DetectionErrorOptions err;
    err.eval_stride = 4;
    DetectorParams params =
        bo_search(space, 26, 7, stream.truth, tune_ds, DetectorParams{}, err);
    params.stride = 1;

    PipelineConfig pcfg;
    pcfg.fps = 30;
    pcfg.coarse_half_window_s = 45.0;
    pcfg.fine_window_s = 10.0;
    pcfg.quality.sigma_k = std::numeric_limits<double>::infinity();
    auto offline = extract_event_features(stream.frames, stream.truth, params, pcfg);
    std::vector<const EventExtraction*> localized;
    for (const auto& ex : offline) {
      if (ex.localized) localized.push_back(&ex);
    }

    std::vector<FeatureVector> vecs;
    for (const auto* ex : localized) vecs.push_back(ex->features);
    FeatureTable t = feature_table_from_vectors(vecs);
    for (std::size_t i = 0; i < t.labels.size(); ++i) t.labels[i] = i % 2 ? "A" : "B";
    ModelSpec mspec;
    mspec.kind = ModelKind::Knn;
    mspec.knn.k = 1;
    auto model = train(mspec, t);

    StreamConfig scfg;
    scfg.frames_path = frames_path.string();
    scfg.fps = 30;
    scfg.quality.sigma_k = std::numeric_limits<double>::infinity();
    std::vector<StreamEmission> emissions;
    run_stream(scfg, params, *model,
               [&](const StreamEmission& e) { emissions.push_back(e); });
    if (emissions.size() != localized.size()) {
      pass = false;
      detail = "stream/offline event counts differ";
    } else {
      for (std::size_t i = 0; i < emissions.size() && pass; ++i) {
        for (int k = 0; k < kFeatureCount; ++k) {
          const double a = emissions[i].features.values[k];
          const double b = localized[i]->features.values[k];
          if (std::abs(a - b) > 1e-9 * std::max({1.0, std::abs(a), std::abs(b)})) {
            pass = false;
            detail = "stream/offline feature mismatch";
            break;
          }
        }
      }
    }
  }
  report(ctx, 10, pass,
         pass ? "all CLI artifacts byte-identical across two seeded runs; stream/offline "
                "features equivalent at 1e-9"
              : detail);
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.workdir = fs::temp_directory_path() / "pmuek_acceptance";
  int criterion = 0;
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) criterion = std::atoi(argv[++i]);
    else if (arg == "--cli" && i + 1 < argc) ctx.cli = argv[++i];
    else if (arg == "--workdir" && i + 1 < argc) ctx.workdir = argv[++i];
  }
  fs::create_directories(ctx.workdir);

  using Fn = void (*)(Context&);
  const Fn criteria[] = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                         criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  try {
    if (criterion >= 1 && criterion <= 10) {
      criteria[criterion - 1](ctx);
    } else {
      for (auto fn : criteria) fn(ctx);
    }
  } catch (const std::exception& e) {
    std::printf("[FAIL] unexpected exception: %s\n", e.what());
    return 1;
  }
  return ctx.failures == 0 ? 0 : 1;
}
