#include "pmuek/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "pmuek/errors.hpp"
#include "pmuek/timeutil.hpp"

namespace pmuek {

void DetectorParams::validate() const {
  if (w < 2) throw ContractError("detector: w must be >= 2");
  if (stride < 1) throw ContractError("detector: stride must be >= 1");
  if (refractory_s < 0) throw ContractError("detector: refractory_s must be >= 0");
  for (double th : thresholds) {
    if (!(th > 0.0)) throw ContractError("detector: thresholds must be positive");
  }
}

DetectorParams parse_detector_params(const std::string& text) {
  DetectorParams p;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError("params line " + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key == "w") p.w = std::stoi(val);
    else if (key == "theta_vm_pos") p.thresholds[0] = std::stod(val);
    else if (key == "theta_im_pos") p.thresholds[1] = std::stod(val);
    else if (key == "theta_rocof") p.thresholds[2] = std::stod(val);
    else if (key == "stride") p.stride = std::stoi(val);
    else if (key == "refractory_s") p.refractory_s = std::stod(val);
    else if (key == "signed_threshold") p.signed_threshold = (val == "true" || val == "1");
    else throw IoError("params: unknown key '" + key + "'");
  }
  p.validate();
  return p;
}

DetectorParams read_detector_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open params file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_detector_params(ss.str());
}

std::string detector_params_to_text(const DetectorParams& p) {
  std::ostringstream out;
  out.precision(17);
  out << "w = " << p.w << "\n"
      << "theta_vm_pos = " << p.thresholds[0] << "\n"
      << "theta_im_pos = " << p.thresholds[1] << "\n"
      << "theta_rocof = " << p.thresholds[2] << "\n"
      << "stride = " << p.stride << "\n"
      << "refractory_s = " << p.refractory_s << "\n"
      << "signed_threshold = " << (p.signed_threshold ? "true" : "false") << "\n";
  return out.str();
}

std::string detections_to_json(const std::vector<Detection>& detections) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : detections) {
    nlohmann::json xi;
    for (SignalKind s : kAllSignals) {
      const int i = static_cast<int>(s);
      if (d.xi_valid[i]) xi[signal_to_string(s)] = d.xi_values[i];
      else xi[signal_to_string(s)] = nullptr;
    }
    nlohmann::json trig = nlohmann::json::array();
    for (SignalKind s : d.triggering_signals) trig.push_back(signal_to_string(s));
    arr.push_back({{"t_detect", ms_to_iso8601(d.t_detect_ms)},
                   {"t_detect_ms", d.t_detect_ms},
                   {"triggering_signals", trig},
                   {"xi", xi}});
  }
  return arr.dump(2) + "\n";
}

std::vector<Detection> detections_from_json(const std::string& text) {
  nlohmann::json arr = nlohmann::json::parse(text);
  std::vector<Detection> out;
  for (const auto& item : arr) {
    Detection d;
    d.t_detect_ms = item.at("t_detect_ms").get<std::int64_t>();
    for (const auto& s : item.at("triggering_signals")) {
      d.triggering_signals.push_back(signal_from_string(s.get<std::string>()));
    }
    for (SignalKind s : kAllSignals) {
      const int i = static_cast<int>(s);
      const auto& v = item.at("xi").at(signal_to_string(s));
      if (!v.is_null()) {
        d.xi_values[i] = v.get<double>();
        d.xi_valid[i] = true;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

// ----- eta -------------------------------------------------------------------

double singular_ratio(const Eigen::MatrixXd& m) {
  if (m.rows() < 2 || m.cols() < 2) {
    throw ContractError("singular_ratio: matrix must be at least 2x2");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0)) throw ContractError("singular_ratio: zero matrix is degenerate");
  return sv(1) / sv(0);
}

double singular_ratio(const MeasurementMatrix& m) { return singular_ratio(m.data); }

double xi_statistic(double eta_t, double eta_prev, int w) {
  if (w < 1) throw ContractError("xi: w must be >= 1");
  if (!(eta_prev > kEtaFloor)) {
    throw ContractError("xi: eta_prev is too small, ratio undefined");
  }
  return (eta_t - eta_prev) / (eta_prev * static_cast<double>(w));
}

std::optional<double> eta_gram(const SignalGrid& grid, std::int64_t end_idx, int w) {
  const Eigen::Index n = grid.n_pmus();
  if (n < 2) throw ContractError("eta_gram: need at least 2 PMUs");
  if (end_idx - w + 1 < 0 || end_idx >= grid.n_samples()) {
    throw ContractError("eta_gram: window out of range");
  }
  const auto block = grid.values.middleRows(end_idx - w + 1, w);
  Eigen::MatrixXd g = block.transpose() * block;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();  // ascending
  const double l1 = ev(n - 1);
  if (!(l1 > 0.0)) return std::nullopt;
  const double l2 = std::max(ev(n - 2), 0.0);
  return std::sqrt(l2 / l1);
}

XiSeries compute_xi_series(const SignalGrid& grid, int w, int stride, std::int64_t begin_idx,
                           std::int64_t end_idx) {
  if (grid.any_missing()) {
    throw ContractError("compute_xi_series: grid has missing samples (impute first)");
  }
  if (grid.n_pmus() < 2) throw ContractError("compute_xi_series: need at least 2 PMUs");
  if (begin_idx < 0) begin_idx = 0;
  if (end_idx < 0) end_idx = grid.n_samples() - 1;
  // xi at t needs eta over [t-w+1, t] and over [t-2w+1, t-w].
  const std::int64_t first = std::max<std::int64_t>(begin_idx, 2 * w - 1);
  XiSeries series;
  if (first > end_idx) {
    throw ContractError("compute_xi_series: scan range shorter than 2w samples");
  }
  series.index.reserve(static_cast<std::size_t>((end_idx - first) / stride + 1));
  for (std::int64_t t = first; t <= end_idx; t += stride) {
    auto eta_now = eta_gram(grid, t, w);
    auto eta_prev = eta_gram(grid, t - w, w);
    series.index.push_back(t);
    if (eta_now && eta_prev && *eta_prev > kEtaFloor) {
      series.xi.push_back((*eta_now - *eta_prev) / (*eta_prev * static_cast<double>(w)));
      series.valid.push_back(1);
    } else {
      series.xi.push_back(0.0);
      series.valid.push_back(0);
    }
  }
  return series;
}

std::vector<Detection> detect_events(const Dataset& dataset, const DetectorParams& params) {
  params.validate();
  if (dataset.n_samples() < 2 * params.w) {
    throw ContractError("detect_events: dataset shorter than 2w samples");
  }
  std::array<XiSeries, 3> series;
  for (SignalKind s : kAllSignals) {
    series[static_cast<int>(s)] = compute_xi_series(dataset.grid(s), params.w, params.stride);
  }

  const std::int64_t refractory_samples =
      static_cast<std::int64_t>(std::llround(params.refractory_s * dataset.fps()));
  std::vector<Detection> detections;
  std::int64_t suppressed_until = std::numeric_limits<std::int64_t>::min();
  const std::size_t n_points = series[0].index.size();
  for (std::size_t k = 0; k < n_points; ++k) {
    const std::int64_t idx = series[0].index[k];
    if (idx < suppressed_until) continue;
    Detection d;
    for (SignalKind s : kAllSignals) {
      const int i = static_cast<int>(s);
      if (!series[i].valid[k]) continue;
      const double xi = series[i].xi[k];
      d.xi_values[i] = xi;
      d.xi_valid[i] = true;
      const double score = params.signed_threshold ? xi : std::abs(xi);
      if (score > params.thresholds[i]) d.triggering_signals.push_back(s);
    }
    if (!d.triggering_signals.empty()) {
      d.t_detect_ms = dataset.ms_of_index(idx);
      detections.push_back(std::move(d));
      suppressed_until = idx + refractory_samples;
    }
  }
  return detections;
}

// ----- event windows -----------------------------------------------------------

SignalWindow EventWindows::window(const std::string& pmu, SignalKind kind) const {
  auto it = std::lower_bound(pmu_ids.begin(), pmu_ids.end(), pmu);
  if (it == pmu_ids.end() || *it != pmu) {
    throw ContractError("EventWindows: unknown PMU '" + pmu + "'");
  }
  const Eigen::Index c = it - pmu_ids.begin();
  const auto& mat = values[static_cast<int>(kind)];
  SignalWindow win;
  win.pmu_id = pmu;
  win.kind = kind;
  win.fps = fps;
  win.t0_ms = t0_ms;
  win.values.resize(static_cast<std::size_t>(mat.rows()));
  win.missing.assign(static_cast<std::size_t>(mat.rows()), 0);
  for (Eigen::Index r = 0; r < mat.rows(); ++r) win.values[static_cast<std::size_t>(r)] = mat(r, c);
  return win;
}

EventWindows extract_event_window(const Dataset& dataset, std::int64_t t_detect_ms,
                                  double window_s) {
  const int samples = static_cast<int>(std::llround(window_s * dataset.fps()));
  if (samples < 2) throw ContractError("extract_event_window: window too short");
  const std::int64_t center = dataset.index_of_ms(t_detect_ms);
  const std::int64_t begin = center - samples / 2;
  const std::int64_t end = begin + samples - 1;
  if (begin < 0 || end >= dataset.n_samples()) {
    throw ContractError("extract_event_window: dataset does not cover the requested window");
  }
  EventWindows out;
  out.pmu_ids = dataset.pmu_ids();
  out.fps = dataset.fps();
  out.start_idx = begin;
  out.t0_ms = dataset.ms_of_index(begin);
  for (SignalKind s : kAllSignals) {
    const auto& grid = dataset.grid(s);
    for (Eigen::Index c = 0; c < grid.n_pmus(); ++c) {
      for (std::int64_t r = begin; r <= end; ++r) {
        if (grid.missing(r, c)) {
          throw ContractError("extract_event_window: missing sample for PMU '" +
                              grid.pmu_ids[static_cast<std::size_t>(c)] + "' (impute first)");
        }
      }
    }
    out.values[static_cast<int>(s)] = grid.values.middleRows(begin, samples);
  }
  return out;
}

}  // namespace pmuek
