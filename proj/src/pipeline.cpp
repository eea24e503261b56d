#include "pmuek/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "pmuek/errors.hpp"
#include "pmuek/rng.hpp"
#include "pmuek/timeutil.hpp"

namespace pmuek {

namespace {

// Quality options for one coarse window; statistics chunks stay at their
// configured length (default 10 s) inside the window.
QualityOptions window_quality(const QualityOptions& base) { return base; }

EventExtraction process_event_window(std::vector<PmuFrame>& window_frames,
                                     const EventRecord& log_event, const DetectorParams& params,
                                     const PipelineConfig& cfg) {
  EventExtraction out;
  out.log_event = log_event;
  if (window_frames.empty()) return out;

  Dataset ds = Dataset::from_frames(window_frames, cfg.fps);
  quality_filter_dataset(ds, window_quality(cfg.quality));
  impute_dataset(ds, cfg.impute);

  std::vector<Detection> detections;
  try {
    detections = detect_events(ds, params);
  } catch (const ContractError&) {
    return out;  // window too short for 2w samples
  }
  if (detections.empty()) return out;

  // Log timestamps are inaccurate; take the detection closest to them.
  const Detection* chosen = &detections.front();
  for (const auto& d : detections) {
    if (std::llabs(d.t_detect_ms - log_event.start_ms) <
        std::llabs(chosen->t_detect_ms - log_event.start_ms)) {
      chosen = &d;
    }
  }

  try {
    EventWindows windows = extract_event_window(ds, chosen->t_detect_ms, cfg.fine_window_s);
    out.features = build_feature_vector(windows, log_event.event_type, cfg.baseline);
  } catch (const ContractError&) {
    return out;  // fine window ran past the coarse window edge
  }
  out.localized = true;
  out.t_detect_ms = chosen->t_detect_ms;
  return out;
}

}  // namespace

std::vector<EventExtraction> extract_event_features(const std::vector<PmuFrame>& frames,
                                                    const std::vector<EventRecord>& events,
                                                    const DetectorParams& params,
                                                    const PipelineConfig& cfg) {
  std::vector<EventExtraction> out;
  out.reserve(events.size());
  for (const auto& ev : events) {
    CoarseWindow window = extract_coarse_window(frames, ev.start_ms, cfg.coarse_half_window_s);
    out.push_back(process_event_window(window.frames, ev, params, cfg));
  }
  return out;
}

void for_each_event_window(const std::string& frames_path,
                           const std::vector<EventRecord>& events, double half_window_s,
                           const std::function<void(std::size_t, std::vector<PmuFrame>&)>& fn) {
  const std::int64_t h_ms = static_cast<std::int64_t>(std::llround(half_window_s * 1000.0));
  struct Bucket {
    std::int64_t lo, hi;
    std::size_t event_idx;
    std::vector<PmuFrame> frames;
    bool done = false;
  };
  std::vector<Bucket> buckets;
  buckets.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    buckets.push_back({events[i].start_ms - h_ms, events[i].start_ms + h_ms, i, {}, false});
  }
  std::sort(buckets.begin(), buckets.end(),
            [](const Bucket& a, const Bucket& b) { return a.lo < b.lo; });

  FrameReader reader(frames_path);
  PmuFrame f;
  std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();
  std::size_t first_open = 0;
  while (reader.next(f)) {
    if (f.ts_ms < prev_ts) {
      throw IoError("frame file '" + frames_path + "' is not sorted by timestamp");
    }
    prev_ts = f.ts_ms;
    // Flush buckets that ended before this timestamp.
    while (first_open < buckets.size() && buckets[first_open].hi < f.ts_ms) {
      fn(buckets[first_open].event_idx, buckets[first_open].frames);
      buckets[first_open].frames.clear();
      buckets[first_open].done = true;
      ++first_open;
    }
    for (std::size_t b = first_open; b < buckets.size() && buckets[b].lo <= f.ts_ms; ++b) {
      if (f.ts_ms <= buckets[b].hi) buckets[b].frames.push_back(f);
    }
  }
  for (std::size_t b = first_open; b < buckets.size(); ++b) {
    if (!buckets[b].done) fn(buckets[b].event_idx, buckets[b].frames);
  }
}

std::vector<EventExtraction> extract_event_features_file(const PipelineConfig& cfg,
                                                         const DetectorParams& params,
                                                         const std::vector<EventRecord>& events) {
  std::vector<EventExtraction> out(events.size());
  for_each_event_window(cfg.frames_path, events, cfg.coarse_half_window_s,
                        [&](std::size_t idx, std::vector<PmuFrame>& frames) {
                          std::stable_sort(frames.begin(), frames.end(),
                                           [](const PmuFrame& a, const PmuFrame& b) {
                                             if (a.pmu_id != b.pmu_id) return a.pmu_id < b.pmu_id;
                                             return a.ts_ms < b.ts_ms;
                                           });
                          out[idx] = process_event_window(frames, events[idx], params, cfg);
                        });
  return out;
}

// ----- training pipeline ----------------------------------------------------------

namespace {

nlohmann::json evaluation_to_json(const Evaluation& ev) {
  nlohmann::json j;
  j["labels"] = ev.confusion.labels;
  j["counts"] = ev.confusion.counts;
  j["metrics"] = {{"acc", ev.metrics.acc},
                  {"pre", ev.metrics.pre},
                  {"rec", ev.metrics.rec},
                  {"f1", ev.metrics.f1}};
  return j;
}

}  // namespace

std::string TrainPipelineReport::to_json() const {
  nlohmann::json j;
  j["events"] = {{"logged", n_events},
                 {"localized", n_localized},
                 {"dropped", n_dropped},
                 {"train", n_train},
                 {"test", n_test}};
  j["evaluation"] = evaluation_to_json(evaluation);
  return j.dump(2) + "\n";
}

std::string TrainPipelineReport::render() const {
  std::ostringstream out;
  out << "events: logged=" << n_events << " localized=" << n_localized
      << " dropped=" << n_dropped << " train=" << n_train << " test=" << n_test << "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "metrics: acc=%.4f pre=%.4f rec=%.4f f1=%.4f\n",
                evaluation.metrics.acc, evaluation.metrics.pre, evaluation.metrics.rec,
                evaluation.metrics.f1);
  out << buf;
  std::snprintf(buf, sizeof(buf), "training time: %.3f s\n", train_seconds);
  out << buf;
  out << "confusion (rows = estimated, columns = true):\n" << evaluation.confusion.render();
  return out.str();
}

TrainPipelineResult run_train_pipeline(const PipelineConfig& cfg, const DetectorParams& params,
                                       const std::vector<EventRecord>& events) {
  TrainPipelineResult result;
  result.report.n_events = static_cast<int>(events.size());

  std::vector<EventExtraction> extractions = extract_event_features_file(cfg, params, events);

  std::vector<FeatureVector> vectors;
  std::vector<std::int64_t> starts;
  for (const auto& ex : extractions) {
    if (!ex.localized) continue;
    vectors.push_back(ex.features);
    starts.push_back(ex.log_event.start_ms);
  }
  result.report.n_localized = static_cast<int>(vectors.size());
  result.report.n_dropped = result.report.n_events - result.report.n_localized;
  if (vectors.empty()) {
    throw ContractError("pipeline: no event could be localized, nothing to train on");
  }
  result.features = feature_table_from_vectors(vectors);

  // 80/20 split inside each calendar-month bucket.
  std::map<std::string, std::vector<std::size_t>> months;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    months[ms_to_iso8601(starts[i]).substr(0, 7)].push_back(i);
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (auto& [month, idxs] : months) {
    Rng rng = Rng(cfg.seed).derive("split").derive(month);
    for (std::size_t j = idxs.size(); j > 1; --j) {
      std::swap(idxs[j - 1], idxs[rng.uniform_int(j)]);
    }
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(idxs.size())));
    for (std::size_t j = 0; j < idxs.size(); ++j) {
      (j < n_train ? train_rows : test_rows).push_back(idxs[j]);
    }
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  if (train_rows.empty() || test_rows.empty()) {
    throw ContractError("pipeline: split produced an empty train or test set");
  }

  FeatureTable train_set, test_set;
  train_set.names = result.features.names;
  test_set.names = result.features.names;
  for (auto i : train_rows) train_set.push_row(result.features.rows[i], result.features.labels[i]);
  for (auto i : test_rows) test_set.push_row(result.features.rows[i], result.features.labels[i]);
  result.report.n_train = static_cast<int>(train_set.n_rows());
  result.report.n_test = static_cast<int>(test_set.n_rows());
  result.test_rows = test_rows;

  const auto t0 = std::chrono::steady_clock::now();
  result.model = train(cfg.model_spec, train_set);
  result.report.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.report.evaluation = evaluate(*result.model, test_set);
  return result;
}

// ----- robustness sweep -------------------------------------------------------------

std::string RobustnessTable::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"missing_rate", r.missing_rate},
                   {"events", r.n_events},
                   {"dropped", r.n_dropped},
                   {"acc", r.metrics.acc},
                   {"pre", r.metrics.pre},
                   {"rec", r.metrics.rec},
                   {"f1", r.metrics.f1}});
  }
  return nlohmann::json{{"rows", arr}}.dump(2) + "\n";
}

std::string RobustnessTable::render() const {
  std::ostringstream out;
  out << "rate      acc      pre      rec      f1       dropped\n";
  char buf[120];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-8.2f  %-7.4f  %-7.4f  %-7.4f  %-7.4f  %d\n",
                  r.missing_rate, r.metrics.acc, r.metrics.pre, r.metrics.rec, r.metrics.f1,
                  r.n_dropped);
    out << buf;
  }
  return out.str();
}

namespace {

// Independent per-sample dropout keyed on (seed, pmu, field, timestamp).
void drop_samples(std::vector<PmuFrame>& frames, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return;
  std::optional<double> PmuFrame::* const fields[] = {
      &PmuFrame::vm_pos, &PmuFrame::va_pos, &PmuFrame::im_pos, &PmuFrame::ia_pos,
      &PmuFrame::vm_a,   &PmuFrame::va_a,   &PmuFrame::vm_b,   &PmuFrame::va_b,
      &PmuFrame::vm_c,   &PmuFrame::va_c,   &PmuFrame::im_a,   &PmuFrame::ia_a,
      &PmuFrame::im_b,   &PmuFrame::ia_b,   &PmuFrame::im_c,   &PmuFrame::ia_c,
      &PmuFrame::freq,   &PmuFrame::rocof};
  for (auto& f : frames) {
    const std::uint64_t pmu_h = hash_str(f.pmu_id);
    for (std::size_t i = 0; i < std::size(fields); ++i) {
      auto& v = f.*(fields[i]);
      if (!v.has_value()) continue;
      std::uint64_t s = mix64(mix64(mix64(seed, pmu_h), i), static_cast<std::uint64_t>(f.ts_ms));
      if (static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53 < rate) v.reset();
    }
  }
}

}  // namespace

RobustnessTable run_robustness(const PipelineConfig& cfg, const DetectorParams& params,
                               const Model& model, const std::vector<EventRecord>& events,
                               const std::vector<double>& missing_rates) {
  // Collect each event's coarse window once, then replay per rate.
  std::vector<std::vector<PmuFrame>> windows(events.size());
  for_each_event_window(cfg.frames_path, events, cfg.coarse_half_window_s,
                        [&](std::size_t idx, std::vector<PmuFrame>& frames) {
                          std::stable_sort(frames.begin(), frames.end(),
                                           [](const PmuFrame& a, const PmuFrame& b) {
                                             if (a.pmu_id != b.pmu_id) return a.pmu_id < b.pmu_id;
                                             return a.ts_ms < b.ts_ms;
                                           });
                          windows[idx] = std::move(frames);
                        });

  RobustnessTable table;
  for (std::size_t r = 0; r < missing_rates.size(); ++r) {
    const double rate = missing_rates[r];
    RobustnessRow row;
    row.missing_rate = rate;
    row.n_events = static_cast<int>(events.size());

    FeatureTable test;
    test.names = feature_names();
    std::vector<std::string> predictions;
    for (std::size_t i = 0; i < events.size(); ++i) {
      std::vector<PmuFrame> frames = windows[i];
      drop_samples(frames, rate, mix64(cfg.seed, hash_str("robustness")));
      EventExtraction ex = process_event_window(frames, events[i], params, cfg);
      if (!ex.localized) {
        ++row.n_dropped;
        continue;
      }
      std::vector<double> frow(ex.features.values.begin(), ex.features.values.end());
      test.push_row(std::move(frow), event_type_to_string(events[i].event_type));
    }
    if (test.n_rows() > 0) {
      row.metrics = evaluate(model, test).metrics;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ----- streaming workflow ------------------------------------------------------------

std::string stream_emission_to_json(const StreamEmission& e, bool include_features) {
  nlohmann::json j;
  j["t_detect"] = ms_to_iso8601(e.t_detect_ms);
  j["t_detect_ms"] = e.t_detect_ms;
  j["t_emit_ms"] = e.t_emit_ms;
  j["predicted_type"] = e.predicted_type;
  nlohmann::json xi;
  for (SignalKind s : kAllSignals) {
    const int i = static_cast<int>(s);
    if (e.xi_valid[i]) xi[signal_to_string(s)] = e.xi_values[i];
    else xi[signal_to_string(s)] = nullptr;
  }
  j["xi"] = std::move(xi);
  if (include_features) {
    nlohmann::json feats;
    const auto& names = feature_names();
    for (int i = 0; i < kFeatureCount; ++i) feats[names[i]] = e.features.values[i];
    j["features"] = std::move(feats);
  }
  return j.dump();
}

namespace {

// Fixed-capacity ring of recent samples for one (pmu, channel).
class SampleRing {
 public:
  void init(std::size_t capacity) {
    values_.assign(capacity, 0.0);
    missing_.assign(capacity, 1);
  }
  void push(double v, bool missing) {
    values_[head_] = v;
    missing_[head_] = missing ? 1 : 0;
    head_ = (head_ + 1) % values_.size();
    if (size_ < values_.size()) ++size_;
  }
  // offset 0 = newest sample.
  double value(std::size_t offset) const { return values_[(head_ + values_.size() - 1 - offset) % values_.size()]; }
  bool is_missing(std::size_t offset) const {
    return missing_[(head_ + values_.size() - 1 - offset) % values_.size()] != 0;
  }
  void set_value(std::size_t offset, double v, bool missing) {
    std::size_t at = (head_ + values_.size() - 1 - offset) % values_.size();
    values_[at] = v;
    missing_[at] = missing ? 1 : 0;
  }
  std::size_t size() const { return size_; }

 private:
  std::vector<double> values_;
  std::vector<std::uint8_t> missing_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

struct PendingDetection {
  std::int64_t detect_tick = 0;
  std::int64_t ready_tick = 0;
  std::array<double, 3> xi_values;
  std::array<bool, 3> xi_valid;
};

}  // namespace

void run_stream(const StreamConfig& cfg, const DetectorParams& params, const Model& model,
                const std::function<void(const StreamEmission&)>& sink) {
  params.validate();
  if (model.feature_schema() != feature_names()) {
    throw ContractError("stream: model feature schema does not match this build");
  }

  // First pass over the file start to discover the PMU set and grid origin.
  std::vector<std::string> pmu_ids;
  std::int64_t t0_ms = 0;
  {
    FrameReader reader(cfg.frames_path);
    PmuFrame f;
    bool first = true;
    std::int64_t first_ts = 0;
    std::set<std::string> ids;
    while (reader.next(f)) {
      if (first) {
        first_ts = f.ts_ms;
        t0_ms = f.ts_ms;
        first = false;
      }
      if (f.ts_ms > first_ts + 2000) break;  // two seconds is enough to see every PMU
      ids.insert(f.pmu_id);
    }
    if (ids.size() < 2) throw ContractError("stream: need at least 2 PMUs");
    pmu_ids.assign(ids.begin(), ids.end());
  }
  const int n = static_cast<int>(pmu_ids.size());
  const int fine_samples = static_cast<int>(std::llround(cfg.fine_window_s * cfg.fps));
  const int trailing = std::max(2, static_cast<int>(std::llround(cfg.quality_trailing_s * cfg.fps)));
  const std::size_t capacity = static_cast<std::size_t>(
      std::max({2 * params.w + 2, fine_samples + 4, trailing + 2}) + 64);

  // rings[channel][pmu]; channels 0..2 are the signals, 3..5 = va, ia, freq.
  // stat_rings hold the raw status/bound-surviving values: the trailing
  // 3-sigma statistics must keep seeing a persistent level shift, otherwise
  // the filter would reject a cliff forever.
  std::array<std::vector<SampleRing>, 6> rings;
  std::array<std::vector<SampleRing>, 6> stat_rings;
  for (auto& chan : rings) {
    chan.resize(n);
    for (auto& r : chan) r.init(capacity);
  }
  for (auto& chan : stat_rings) {
    chan.resize(n);
    for (auto& r : chan) r.init(capacity);
  }
  std::array<std::deque<double>, 3> eta_hist;  // per signal, newest at back

  auto col_of = [&](const std::string& id) {
    auto it = std::lower_bound(pmu_ids.begin(), pmu_ids.end(), id);
    if (it == pmu_ids.end() || *it != id) return -1;
    return static_cast<int>(it - pmu_ids.begin());
  };

  const std::int64_t refractory =
      static_cast<std::int64_t>(std::llround(params.refractory_s * cfg.fps));
  std::int64_t suppressed_until = std::numeric_limits<std::int64_t>::min();
  std::vector<PendingDetection> pending;

  Eigen::MatrixXd win(params.w, n);
  Eigen::MatrixXd fine(fine_samples, n);

  FrameReader reader(cfg.frames_path);
  PmuFrame f;
  std::int64_t current_tick = -1;
  std::vector<std::optional<PmuFrame>> tick_frames(n);
  std::int64_t prev_ts = std::numeric_limits<std::int64_t>::min();

  // Returns (value, missing, stat_value, stat_valid).
  auto quality_pass = [&](int chan, int pmu, std::optional<double> raw, Status status,
                          bool is_magnitude,
                          bool is_angle) -> std::tuple<double, bool, double, bool> {
    if (!raw.has_value() || status != Status::Ok) return {0.0, true, 0.0, false};
    double v = *raw;
    if (is_magnitude && v < 0.0) return {0.0, true, 0.0, false};
    if (is_angle && (v > cfg.quality.angle_max || v < cfg.quality.angle_min)) {
      return {0.0, true, 0.0, false};
    }
    // Rolling 3-sigma against the trailing raw statistics (single pass).
    const auto& ring = stat_rings[chan][pmu];
    const std::size_t depth = std::min<std::size_t>(ring.size(), trailing);
    if (depth >= 30) {
      double sum = 0.0, sum2 = 0.0;
      std::size_t cnt = 0;
      for (std::size_t o = 0; o < depth; ++o) {
        if (ring.is_missing(o)) continue;
        const double x = ring.value(o);
        sum += x;
        sum2 += x * x;
        ++cnt;
      }
      if (cnt >= 30) {
        const double mean = sum / static_cast<double>(cnt);
        const double var = std::max(sum2 / static_cast<double>(cnt) - mean * mean, 0.0);
        if (std::abs(v - mean) > cfg.quality.sigma_k * std::sqrt(var)) {
          return {0.0, true, v, true};
        }
      }
    }
    return {v, false, v, true};
  };

  auto finish_tick = [&](std::int64_t tick) {
    // Quality + push into rings.
    for (int p = 0; p < n; ++p) {
      const auto& frame = tick_frames[p];
      const Status st = frame ? frame->status : Status::Unknown;
      struct Chan {
        int idx;
        std::optional<double> value;
        bool mag, ang;
      };
      std::array<Chan, 6> chans = {{{0, frame ? frame->vm_pos : std::nullopt, true, false},
                                    {1, frame ? frame->im_pos : std::nullopt, true, false},
                                    {2, frame ? frame->rocof : std::nullopt, false, false},
                                    {3, frame ? frame->va_pos : std::nullopt, false, true},
                                    {4, frame ? frame->ia_pos : std::nullopt, false, true},
                                    {5, frame ? frame->freq : std::nullopt, false, false}}};
      for (const auto& c : chans) {
        auto [v, miss, stat_v, stat_ok] = quality_pass(c.idx, p, c.value, st, c.mag, c.ang);
        rings[c.idx][p].push(v, miss);
        stat_rings[c.idx][p].push(stat_v, !stat_ok);
      }
    }

    // Rolling imputation of the newest row, per signal.
    for (int s = 0; s < 3; ++s) {
      bool any_missing = false;
      for (int p = 0; p < n; ++p) any_missing |= rings[s][p].is_missing(0);
      if (!any_missing) continue;
      const std::size_t depth =
          std::min<std::size_t>(rings[s][0].size(), static_cast<std::size_t>(trailing));
      Eigen::MatrixXd m(depth, n);
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask(depth, n);
      mask.setZero();
      for (int p = 0; p < n; ++p) {
        for (std::size_t o = 0; o < depth; ++o) {
          const std::size_t row = depth - 1 - o;  // oldest first
          m(row, p) = rings[s][p].value(o);
          mask(row, p) = rings[s][p].is_missing(o) ? 1 : 0;
        }
      }
      // Older rows were already filled when their tick was processed; only
      // the newest row still carries holes unless history is short.
      try {
        impute(m, mask, cfg.impute);
      } catch (const ContractError&) {
        // A PMU with no history yet: fall back to the row mean of observed.
        double sum = 0.0;
        int cnt = 0;
        for (int p = 0; p < n; ++p) {
          if (!mask(depth - 1, p)) {
            sum += m(depth - 1, p);
            ++cnt;
          }
        }
        const double fill = cnt > 0 ? sum / cnt : 0.0;
        for (int p = 0; p < n; ++p)
          if (mask(depth - 1, p)) m(depth - 1, p) = fill;
      }
      for (int p = 0; p < n; ++p) {
        if (rings[s][p].is_missing(0)) rings[s][p].set_value(0, m(depth - 1, p), false);
      }
    }

    // Detector update on the stride lattice.
    std::array<double, 3> xi{};
    std::array<bool, 3> xi_ok{false, false, false};
    const bool on_lattice =
        tick < 2 * params.w - 1 || (tick - (2 * params.w - 1)) % params.stride == 0;
    if (on_lattice && static_cast<std::int64_t>(rings[0][0].size()) >= params.w) {
      for (int s = 0; s < 3; ++s) {
        for (int p = 0; p < n; ++p) {
          for (int r = 0; r < params.w; ++r) {
            win(params.w - 1 - r, p) = rings[s][p].value(static_cast<std::size_t>(r));
          }
        }
        Eigen::MatrixXd g = win.transpose() * win;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
        const double l1 = eig.eigenvalues()(n - 1);
        const double l2 = std::max(eig.eigenvalues()(n - 2), 0.0);
        const double eta = l1 > 0.0 ? std::sqrt(l2 / l1) : 0.0;
        auto& hist = eta_hist[s];
        hist.push_back(eta);
        if (static_cast<int>(hist.size()) > params.w + 1) hist.pop_front();
        if (static_cast<int>(hist.size()) == params.w + 1) {
          const double eta_prev = hist.front();
          if (eta_prev > kEtaFloor && l1 > 0.0) {
            xi[s] = (eta - eta_prev) / (eta_prev * params.w);
            xi_ok[s] = true;
          }
        }
      }
      bool fired = false;
      for (int s = 0; s < 3; ++s) {
        if (!xi_ok[s]) continue;
        const double score = params.signed_threshold ? xi[s] : std::abs(xi[s]);
        if (score > params.thresholds[s]) fired = true;
      }
      if (fired && tick >= suppressed_until) {
        PendingDetection pd;
        pd.detect_tick = tick;
        pd.ready_tick = tick + fine_samples / 2;
        pd.xi_values = xi;
        pd.xi_valid = xi_ok;
        pending.push_back(pd);
        suppressed_until = tick + refractory;
      }
    }

    // Emit any detection whose fine window is now complete.
    for (auto it = pending.begin(); it != pending.end();) {
      if (tick < it->ready_tick) {
        ++it;
        continue;
      }
      const std::int64_t offset_new = tick - it->detect_tick;  // >= W/2
      // Newest needed sample is detect + W/2 - 1; the window covers
      // [detect - W/2, detect + W/2 - 1], matching extract_event_window.
      const std::int64_t begin_off = offset_new + fine_samples / 2;
      bool have_history = static_cast<std::int64_t>(rings[0][0].size()) > begin_off;
      if (have_history) {
        EventWindows windows;
        windows.pmu_ids = pmu_ids;
        windows.fps = cfg.fps;
        windows.t0_ms = index_to_ms(t0_ms, it->detect_tick - fine_samples / 2, cfg.fps);
        for (int s = 0; s < 3; ++s) {
          for (int p = 0; p < n; ++p) {
            for (int r = 0; r < fine_samples; ++r) {
              fine(r, p) = rings[s][p].value(static_cast<std::size_t>(begin_off - r));
            }
          }
          windows.values[s] = fine;
        }
        StreamEmission e;
        e.t_detect_ms = index_to_ms(t0_ms, it->detect_tick, cfg.fps);
        e.t_emit_ms = index_to_ms(t0_ms, tick, cfg.fps);
        e.xi_values = it->xi_values;
        e.xi_valid = it->xi_valid;
        e.features = build_feature_vector(windows, std::nullopt, cfg.baseline);
        std::vector<double> row(e.features.values.begin(), e.features.values.end());
        e.predicted_type = model.predict(row);
        sink(e);
      }
      it = pending.erase(it);
    }
  };

  while (reader.next(f)) {
    if (f.ts_ms < prev_ts) {
      throw IoError("stream: frame file is not sorted by timestamp");
    }
    prev_ts = f.ts_ms;
    const std::int64_t tick = ms_to_index(t0_ms, f.ts_ms, cfg.fps);
    if (tick < current_tick) continue;  // stale frame for an already-closed tick
    if (tick != current_tick) {
      if (current_tick >= 0) finish_tick(current_tick);
      // Account for wholly silent ticks so the clock stays on the grid.
      for (std::int64_t missed = current_tick + 1; missed < tick; ++missed) {
        std::fill(tick_frames.begin(), tick_frames.end(), std::nullopt);
        finish_tick(missed);
      }
      std::fill(tick_frames.begin(), tick_frames.end(), std::nullopt);
      current_tick = tick;
    }
    const int col = col_of(f.pmu_id);
    if (col >= 0) tick_frames[col] = f;
  }
  if (current_tick >= 0) finish_tick(current_tick);
}

}  // namespace pmuek
