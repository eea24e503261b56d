#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pmuek/detect.hpp"
#include "pmuek/errors.hpp"
#include "pmuek/preprocess.hpp"
#include "pmuek/rng.hpp"
#include "pmuek/synth.hpp"

#include "calibration.hpp"

using namespace pmuek;

namespace {

// Cyclic Jacobi eigenvalue iteration for symmetric matrices: the
// independent oracle for the SVD route (eta = sqrt(lambda2/lambda1) of M^T M).
std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a) {
  const int n = static_cast<int>(a.rows());
  REQUIRE(a.cols() == n);
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
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
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

double eta_oracle(const Eigen::MatrixXd& m) {
  auto eig = jacobi_eigenvalues(m.transpose() * m);
  return std::sqrt(std::max(eig[1], 0.0) / eig[0]);
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

GeneratorConfig clean_freq_config(std::uint64_t seed, double duration_s = 600.0) {
  GeneratorConfig cfg;
  cfg.n_pmus = 10;
  cfg.fps = 30;
  cfg.duration_s = duration_s;
  cfg.n_events = 1;
  cfg.class_mix = {0.0, 0.0, 1.0};
  cfg.seed = seed;
  return cfg;
}

Dataset clean_freq_dataset(std::uint64_t seed, double duration_s = 600.0) {
  return Dataset::from_frames(generate(clean_freq_config(seed, duration_s)).frames, 30);
}

}  // namespace

TEST_SUITE_BEGIN("detect");

TEST_CASE("eta of a rank-1 matrix is numerically zero") {
  Rng rng(1);
  Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(50, [&](Eigen::Index) { return rng.normal(); });
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(6, [&](Eigen::Index) { return rng.normal(); });
  Eigen::MatrixXd m = u * v.transpose();
  CHECK(singular_ratio(m) < 1e-12);
}

TEST_CASE("eta of diag(3,1) is exactly one third") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 1.0;
  CHECK(singular_ratio(m) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("eta matches the MtM Jacobi eigen-oracle within 1e-9") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int rows = 20 + static_cast<int>(rng.uniform_int(280));
    const int cols = 2 + static_cast<int>(rng.uniform_int(std::min(rows, 50) - 1));
    Eigen::MatrixXd m = random_matrix(rng, rows, cols, rng.uniform(0.1, 1e5));
    CAPTURE(trial);
    CHECK(singular_ratio(m) == doctest::Approx(eta_oracle(m)).epsilon(1e-9));
  }
}

TEST_CASE("zero matrix is a degenerate input") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(10, 4);
  CHECK_THROWS_AS(singular_ratio(zero), ContractError);
}

TEST_CASE("eta is invariant under nonzero scaling and bounded by one") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::MatrixXd m = random_matrix(rng, 30, 5);
    const double eta = singular_ratio(m);
    CHECK(eta <= 1.0);
    const double c = rng.uniform(-100.0, 100.0);
    if (std::abs(c) < 1e-6) continue;
    CHECK(std::abs(singular_ratio(c * m) - eta) < 1e-12);
  }
}

TEST_CASE("a column-consistent step on a near-rank-1 matrix raises eta") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd u = Eigen::VectorXd::Constant(120, 1.0);
    Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(8, [&](Eigen::Index) { return 1.0 + 0.1 * rng.uniform(); });
    Eigen::MatrixXd m = u * v.transpose() + 1e-6 * random_matrix(rng, 120, 8);
    const double before = singular_ratio(m);
    Eigen::MatrixXd stepped = m;
    const int col = static_cast<int>(rng.uniform_int(8));
    for (int r = 90; r < 120; ++r) stepped(r, col) -= 0.2;
    const double after = singular_ratio(stepped);
    CAPTURE(trial);
    CHECK(after > before);
  }
}

TEST_CASE("xi hand values") {
  CHECK(xi_statistic(0.5, 0.5, 42) == 0.0);
  CHECK(xi_statistic(0.2, 0.1, 10) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(xi_statistic(0.1, 0.2, 120) == doctest::Approx(-1.0 / 240.0).epsilon(1e-15));
  CHECK_THROWS_AS(xi_statistic(0.1, 0.0, 10), ContractError);
  CHECK_THROWS_AS(xi_statistic(0.1, 1e-13, 10), ContractError);
}

TEST_CASE("gram-route eta agrees with the SVD route on generic matrices") {
  Rng rng(13);
  SignalGrid grid;
  grid.kind = SignalKind::VmPos;
  grid.t0_ms = 0;
  grid.fps = 30;
  for (int p = 0; p < 6; ++p) grid.pmu_ids.push_back("P" + std::to_string(p));
  grid.values = random_matrix(rng, 400, 6, 1e4);
  grid.values.array() += 5e5;  // dominant nominal, like vm data
  grid.missing.setZero(400, 6);
  for (int end = 120; end < 400; end += 37) {
    auto eta = eta_gram(grid, end, 120);
    REQUIRE(eta.has_value());
    Eigen::MatrixXd m = grid.values.middleRows(end - 119, 120);
    CHECK(*eta == doctest::Approx(singular_ratio(m)).epsilon(1e-9));
  }
}

TEST_CASE("clean frequency event: one detection, near the start, via rocof") {
  GeneratorConfig cfg = clean_freq_config(42);
  GeneratedStream stream = generate(cfg);
  Dataset ds = Dataset::from_frames(stream.frames, 30);
  const EventRecord& truth = stream.truth[0];

  DetectorParams params = testsupport::tuned_params(stream.frames, stream.truth, 30, 26, 7, false);
  auto detections = detect_events(ds, params);
  REQUIRE(detections.size() == 1);
  CHECK(std::llabs(detections[0].t_detect_ms - truth.start_ms) <= 1000);
  bool rocof_triggered =
      std::find(detections[0].triggering_signals.begin(), detections[0].triggering_signals.end(),
                SignalKind::Rocof) != detections[0].triggering_signals.end();
  CHECK(rocof_triggered);
}

TEST_CASE("infinite thresholds never fire") {
  Dataset ds = clean_freq_dataset(42, 300.0);
  DetectorParams params;
  const double inf = std::numeric_limits<double>::infinity();
  params.thresholds = {inf, inf, inf};
  CHECK(detect_events(ds, params).empty());
}

TEST_CASE("stride-k detections agree with stride-1 up to k samples") {
  GeneratedStream stream = generate(clean_freq_config(7, 500.0));
  Dataset ds = Dataset::from_frames(stream.frames, 30);
  DetectorParams params = testsupport::tuned_params(stream.frames, stream.truth, 30, 26, 3, false);
  // Move the thresholds off the tuned boundary so the crossing is a
  // sustained run rather than a one-sample spike.
  for (auto& th : params.thresholds) th *= 0.85;
  params.stride = 1;
  auto base = detect_events(ds, params);
  REQUIRE_FALSE(base.empty());
  for (int k = 2; k <= 5; ++k) {
    params.stride = k;
    auto strided = detect_events(ds, params);
    CAPTURE(k);
    REQUIRE(strided.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::llabs(strided[i].t_detect_ms - base[i].t_detect_ms) <=
            k * 1000 / ds.fps() + 1);
    }
  }
}

TEST_CASE("refractory period suppresses duplicate detections") {
  GeneratedStream stream = generate(clean_freq_config(42));
  Dataset ds = Dataset::from_frames(stream.frames, 30);
  DetectorParams params = testsupport::tuned_params(stream.frames, stream.truth, 30, 26, 7, false);
  params.refractory_s = 0.0;
  auto unsuppressed = detect_events(ds, params);
  params.refractory_s = 30.0;
  auto suppressed = detect_events(ds, params);
  CHECK(unsuppressed.size() > suppressed.size());
  CHECK(suppressed.size() == 1);
}

TEST_CASE("event windows have round(W*fps) samples and match direct slices") {
  Dataset ds = clean_freq_dataset(11, 300.0);
  const std::int64_t center_ms = ds.ms_of_index(ds.n_samples() / 2);
  EventWindows w30 = extract_event_window(ds, center_ms, 10.0);
  CHECK(w30.values[0].rows() == 300);

  // Window contents equal the grid slice (independent indexing oracle).
  const std::int64_t center = ds.index_of_ms(center_ms);
  for (SignalKind s : kAllSignals) {
    const auto& grid = ds.grid(s);
    for (int c = 0; c < 10; ++c) {
      for (int r = 0; r < 300; ++r) {
        REQUIRE(w30.values[static_cast<int>(s)](r, c) == grid.values(center - 150 + r, c));
      }
    }
  }
  SignalWindow sw = w30.window(ds.pmu_ids()[3], SignalKind::Rocof);
  CHECK(sw.values.size() == 300);
  CHECK(sw.values[7] == ds.grid(SignalKind::Rocof).values(center - 150 + 7, 3));

  CHECK_THROWS_AS(extract_event_window(ds, ds.ms_of_index(10), 10.0), ContractError);
}

TEST_CASE("a 60 fps dataset yields 600-sample windows") {
  GeneratorConfig cfg;
  cfg.n_pmus = 3;
  cfg.fps = 60;
  cfg.duration_s = 60.0;
  cfg.n_events = 0;
  cfg.seed = 2;
  Dataset ds = Dataset::from_frames(generate(cfg).frames, 60);
  EventWindows w = extract_event_window(ds, ds.ms_of_index(ds.n_samples() / 2), 10.0);
  CHECK(w.values[0].rows() == 600);
}

TEST_CASE("detections serialize to json and back") {
  Detection d;
  d.t_detect_ms = 1451606400000 + 12345;
  d.triggering_signals = {SignalKind::Rocof};
  d.xi_values = {0.001, 0.0, 0.05};
  d.xi_valid = {true, false, true};
  auto text = detections_to_json({d});
  auto back = detections_from_json(text);
  REQUIRE(back.size() == 1);
  CHECK(back[0].t_detect_ms == d.t_detect_ms);
  CHECK(back[0].triggering_signals == d.triggering_signals);
  CHECK(back[0].xi_values[2] == d.xi_values[2]);
  CHECK_FALSE(back[0].xi_valid[1]);
}

TEST_CASE("detector params file round-trips") {
  DetectorParams p;
  p.w = 150;
  p.thresholds = {0.011, 0.022, 0.033};
  p.stride = 2;
  p.refractory_s = 12.5;
  p.signed_threshold = true;
  DetectorParams back = parse_detector_params(detector_params_to_text(p));
  CHECK(back.w == p.w);
  CHECK(back.thresholds == p.thresholds);
  CHECK(back.stride == p.stride);
  CHECK(back.refractory_s == p.refractory_s);
  CHECK(back.signed_threshold == p.signed_threshold);
}

TEST_SUITE_END();
