#include "pmuek/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "pmuek/errors.hpp"
#include "pmuek/rng.hpp"
#include "pmuek/timeutil.hpp"

namespace pmuek {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Spark pulse (exp(-tau/0.25) - exp(-tau/0.06)) normalized to unit peak.
constexpr double kSparkFall = 0.25;
constexpr double kSparkRise = 0.06;
const double kSparkNorm = [] {
  double tp = std::log(kSparkFall / kSparkRise) * (kSparkFall * kSparkRise) /
              (kSparkFall - kSparkRise);
  return 1.0 / (std::exp(-tp / kSparkFall) - std::exp(-tp / kSparkRise));
}();

double smoothstep01(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

struct NumericField {
  const char* name;
  std::optional<double> PmuFrame::* member;
  enum Kind { Magnitude, Angle, Other } kind;
};

const std::array<NumericField, 18> kNumericFields = {{
    {"vm_pos", &PmuFrame::vm_pos, NumericField::Magnitude},
    {"va_pos", &PmuFrame::va_pos, NumericField::Angle},
    {"im_pos", &PmuFrame::im_pos, NumericField::Magnitude},
    {"ia_pos", &PmuFrame::ia_pos, NumericField::Angle},
    {"vm_a", &PmuFrame::vm_a, NumericField::Magnitude},
    {"va_a", &PmuFrame::va_a, NumericField::Angle},
    {"vm_b", &PmuFrame::vm_b, NumericField::Magnitude},
    {"va_b", &PmuFrame::va_b, NumericField::Angle},
    {"vm_c", &PmuFrame::vm_c, NumericField::Magnitude},
    {"va_c", &PmuFrame::va_c, NumericField::Angle},
    {"im_a", &PmuFrame::im_a, NumericField::Magnitude},
    {"ia_a", &PmuFrame::ia_a, NumericField::Angle},
    {"im_b", &PmuFrame::im_b, NumericField::Magnitude},
    {"ia_b", &PmuFrame::ia_b, NumericField::Angle},
    {"im_c", &PmuFrame::im_c, NumericField::Magnitude},
    {"ia_c", &PmuFrame::ia_c, NumericField::Angle},
    {"freq", &PmuFrame::freq, NumericField::Other},
    {"rocof", &PmuFrame::rocof, NumericField::Other},
}};

}  // namespace

void GeneratorConfig::validate() const {
  if (n_pmus < 1) throw ContractError("generator: n_pmus must be >= 1");
  if (fps != 30 && fps != 60) throw ContractError("generator: fps must be 30 or 60");
  if (duration_s <= 0) throw ContractError("generator: duration_s must be positive");
  if (n_events < 0) throw ContractError("generator: n_events must be >= 0");
  double mix_sum = class_mix[0] + class_mix[1] + class_mix[2];
  if (std::abs(mix_sum - 1.0) > 1e-12) throw ContractError("generator: class_mix must sum to 1");
  for (double p : class_mix)
    if (p < 0) throw ContractError("generator: class_mix entries must be >= 0");
  if (base_vm <= 0 || base_im <= 0) throw ContractError("generator: base magnitudes must be > 0");
  if (n_events > 0) {
    if (min_gap_s < 42.0) {
      throw ContractError("generator: min_gap_s must be >= 42 s so event waveforms fit between "
                          "events");
    }
    if (static_cast<double>(n_events) * min_gap_s >= duration_s) {
      throw ContractError("generator: n_events * min_gap_s must be < duration_s");
    }
  }
}

void ImperfectionConfig::validate() const {
  auto rate = [](double r, const char* name) {
    if (r < 0.0 || r > 1.0) throw ContractError(std::string("imperfection: ") + name +
                                                " must lie in [0, 1]");
  };
  rate(missing_rate, "missing_rate");
  rate(bad_rate, "bad_rate");
  rate(flag_anomaly_rate, "flag_anomaly_rate");
  if (std::isnan(snr_db)) throw ContractError("imperfection: snr_db must not be NaN");
  if (log_jitter_max_s < 0) throw ContractError("imperfection: log_jitter_max_s must be >= 0");
}

// ----- config file -----------------------------------------------------------

SynthConfig parse_synth_config(const std::string& text) {
  SynthConfig cfg;
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
      throw IoError("config line " + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    auto as_double = [&](const std::string& v) {
      if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
      return std::stod(v);
    };
    if (key == "n_pmus") cfg.gen.n_pmus = std::stoi(val);
    else if (key == "fps") cfg.gen.fps = std::stoi(val);
    else if (key == "duration_s") cfg.gen.duration_s = as_double(val);
    else if (key == "n_events") cfg.gen.n_events = std::stoi(val);
    else if (key == "class_mix") {
      std::istringstream mix(val);
      std::string part;
      int i = 0;
      while (std::getline(mix, part, ',')) {
        if (i >= 3) throw IoError("config: class_mix needs exactly 3 entries");
        cfg.gen.class_mix[i++] = std::stod(part);
      }
      if (i != 3) throw IoError("config: class_mix needs exactly 3 entries");
    } else if (key == "base_vm") cfg.gen.base_vm = as_double(val);
    else if (key == "base_im") cfg.gen.base_im = as_double(val);
    else if (key == "min_gap_s") cfg.gen.min_gap_s = as_double(val);
    else if (key == "seed") cfg.gen.seed = std::stoull(val);
    else if (key == "snr_db") cfg.imp.snr_db = as_double(val);
    else if (key == "missing_rate") cfg.imp.missing_rate = as_double(val);
    else if (key == "bad_rate") cfg.imp.bad_rate = as_double(val);
    else if (key == "log_jitter_max_s") cfg.imp.log_jitter_max_s = as_double(val);
    else if (key == "flag_anomaly_rate") cfg.imp.flag_anomaly_rate = as_double(val);
    else throw IoError("config: unknown key '" + key + "'");
  }
  cfg.gen.validate();
  cfg.imp.validate();
  return cfg;
}

SynthConfig read_synth_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_config(ss.str());
}

std::string synth_config_to_text(const SynthConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "n_pmus = " << cfg.gen.n_pmus << "\n"
      << "fps = " << cfg.gen.fps << "\n"
      << "duration_s = " << cfg.gen.duration_s << "\n"
      << "n_events = " << cfg.gen.n_events << "\n"
      << "class_mix = " << cfg.gen.class_mix[0] << "," << cfg.gen.class_mix[1] << ","
      << cfg.gen.class_mix[2] << "\n"
      << "base_vm = " << cfg.gen.base_vm << "\n"
      << "base_im = " << cfg.gen.base_im << "\n"
      << "min_gap_s = " << cfg.gen.min_gap_s << "\n"
      << "seed = " << cfg.gen.seed << "\n"
      << "snr_db = " << cfg.imp.snr_db << "\n"
      << "missing_rate = " << cfg.imp.missing_rate << "\n"
      << "bad_rate = " << cfg.imp.bad_rate << "\n"
      << "log_jitter_max_s = " << cfg.imp.log_jitter_max_s << "\n"
      << "flag_anomaly_rate = " << cfg.imp.flag_anomaly_rate << "\n";
  return out.str();
}

// ----- synthesizer -----------------------------------------------------------

Synthesizer::Synthesizer(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  n_ticks_ = static_cast<std::int64_t>(std::llround(cfg_.duration_s * cfg_.fps));

  pmu_ids_.reserve(cfg_.n_pmus);
  for (int p = 0; p < cfg_.n_pmus; ++p) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "PMU%03d", p);
    pmu_ids_.emplace_back(buf);
  }

  Rng root(cfg_.seed);
  Rng pmu_rng = root.derive("pmus");
  pmu_phase_.resize(cfg_.n_pmus);
  pmu_period_.resize(cfg_.n_pmus);
  pmu_ripple_phase_.resize(cfg_.n_pmus);
  pmu_ripple_period_.resize(cfg_.n_pmus);
  pmu_vm_offset_.resize(cfg_.n_pmus);
  pmu_im_offset_.resize(cfg_.n_pmus);
  for (int p = 0; p < cfg_.n_pmus; ++p) {
    for (auto& phi : pmu_phase_[p]) phi = pmu_rng.uniform(0.0, kTwoPi);
    for (auto& period : pmu_period_[p]) {
      period = kDriftPeriodsS[pmu_rng.uniform_int(kDriftPeriodsS.size())];
    }
    for (auto& phi : pmu_ripple_phase_[p]) phi = pmu_rng.uniform(0.0, kTwoPi);
    for (auto& period : pmu_ripple_period_[p]) {
      period = kRipplePeriodsS[pmu_rng.uniform_int(kRipplePeriodsS.size())];
    }
    pmu_vm_offset_[p] = pmu_rng.uniform(-0.01, 0.01);
    pmu_im_offset_[p] = pmu_rng.uniform(-0.01, 0.01);
  }

  if (cfg_.n_events == 0) return;

  // Start times: min_gap-separated, uniformly jittered, margin at both ends.
  Rng place_rng = root.derive("placement");
  const double margin = cfg_.min_gap_s / 2.0;
  const double free_span =
      cfg_.duration_s - 2.0 * margin - (cfg_.n_events - 1) * cfg_.min_gap_s;
  if (free_span <= 0) {
    throw ContractError("generator: duration too short for the requested events and gap");
  }
  std::vector<double> u(cfg_.n_events);
  for (auto& x : u) x = place_rng.uniform(0.0, free_span);
  std::sort(u.begin(), u.end());

  events_.reserve(cfg_.n_events);
  truth_.reserve(cfg_.n_events);
  for (int i = 0; i < cfg_.n_events; ++i) {
    Rng ev_rng = root.derive("event").derive(static_cast<std::uint64_t>(i));
    Event ev;
    double roll = ev_rng.uniform();
    if (roll < cfg_.class_mix[0]) ev.type = EventType::LineOutage;
    else if (roll < cfg_.class_mix[0] + cfg_.class_mix[1]) ev.type = EventType::TransformerOutage;
    else ev.type = EventType::FrequencyEvent;

    double start_s = margin + i * cfg_.min_gap_s + u[i];
    // Snap the start to the sample grid so truth timestamps are exact.
    std::int64_t start_tick = static_cast<std::int64_t>(std::llround(start_s * cfg_.fps));
    ev.start_s = static_cast<double>(start_tick) / cfg_.fps;

    switch (ev.type) {
      case EventType::FrequencyEvent:
        // Capped at 20 s so the dip, its recovery swing, and the detector
        // lag all stay inside the default 30 s refractory window.
        ev.duration_s = ev_rng.uniform(12.0, std::min(20.0, cfg_.min_gap_s / 2.5));
        break;
      case EventType::LineOutage:
        ev.duration_s = ev_rng.uniform(0.25, 1.0);
        break;
      case EventType::TransformerOutage:
        ev.duration_s = ev_rng.uniform(5.0, std::min(20.0, cfg_.min_gap_s / 3.0));
        break;
    }
    ev.amp_factor = ev.type == EventType::LineOutage
                        ? ev_rng.uniform(kSparkAmpMin, kEventAmpMax)
                        : ev_rng.uniform(kEventAmpMin, kEventAmpMax);
    ev.rocof_sign = ev_rng.bernoulli(0.5) ? 1.0 : -1.0;

    if (ev.type == EventType::FrequencyEvent) {
      ev.pmus.resize(cfg_.n_pmus);
      for (int p = 0; p < cfg_.n_pmus; ++p) ev.pmus[p] = p;
      ev.pmu_scale.resize(cfg_.n_pmus);
      for (auto& s : ev.pmu_scale) s = ev_rng.uniform(0.85, 1.15);
    } else {
      int k = 1 + static_cast<int>(ev_rng.uniform_int(3));
      k = std::min(k, cfg_.n_pmus);
      std::vector<int> all(cfg_.n_pmus);
      for (int p = 0; p < cfg_.n_pmus; ++p) all[p] = p;
      for (int j = 0; j < k; ++j) {
        int pick = j + static_cast<int>(ev_rng.uniform_int(cfg_.n_pmus - j));
        std::swap(all[j], all[pick]);
      }
      ev.pmus.assign(all.begin(), all.begin() + k);
      std::sort(ev.pmus.begin(), ev.pmus.end());
      ev.pmu_scale.resize(k);
      for (auto& s : ev.pmu_scale) s = ev_rng.uniform(0.7, 1.3);
    }

    EventRecord rec;
    rec.start_ms = index_to_ms(kEpochMs, start_tick, cfg_.fps);
    rec.end_ms = index_to_ms(
        kEpochMs, start_tick + static_cast<std::int64_t>(std::llround(ev.duration_s * cfg_.fps)),
        cfg_.fps);
    rec.event_type = ev.type;
    rec.cause = "synthetic";
    rec.source = EventSource::GroundTruth;
    truth_.push_back(rec);
    events_.push_back(std::move(ev));
  }
}

double Synthesizer::event_shape(const Event& e, double t_s) const {
  double tau = (t_s - e.start_s) / e.duration_s;
  if (tau < 0.0 || tau > 1.0) return 0.0;
  switch (e.type) {
    case EventType::FrequencyEvent: {
      // Fast raised-cosine attack (inertial response), slow raised-cosine
      // recovery. Full width at half depth stays ~duration/2.
      const double attack = std::min(0.5, e.duration_s / 10.0);
      const double t_rel = t_s - e.start_s;
      if (t_rel < attack) return 0.5 * (1.0 - std::cos(3.14159265358979323846 * t_rel / attack));
      return 0.5 *
             (1.0 + std::cos(3.14159265358979323846 * (t_rel - attack) / (e.duration_s - attack)));
    }
    case EventType::LineOutage:
      return kSparkNorm * (std::exp(-tau / kSparkFall) - std::exp(-tau / kSparkRise));
    case EventType::TransformerOutage: {
      double ramp_s = std::min(0.3, e.duration_s / 10.0);
      double t_rel = t_s - e.start_s;
      if (t_rel < ramp_s) return smoothstep01(t_rel / ramp_s);
      if (t_rel > e.duration_s - ramp_s) return smoothstep01((e.duration_s - t_rel) / ramp_s);
      return 1.0;
    }
  }
  return 0.0;
}

double Synthesizer::nominal(int pmu, SignalKind kind) const {
  switch (kind) {
    case SignalKind::VmPos: return cfg_.base_vm * (1.0 + pmu_vm_offset_[pmu]);
    case SignalKind::ImPos: return cfg_.base_im * (1.0 + pmu_im_offset_[pmu]);
    case SignalKind::Rocof: return 0.0;
  }
  return 0.0;
}

double Synthesizer::drift_amplitude(SignalKind kind) const {
  switch (kind) {
    case SignalKind::VmPos: return kDriftFracVm * cfg_.base_vm;
    case SignalKind::ImPos: return kDriftFracIm * cfg_.base_im;
    case SignalKind::Rocof: return kDriftAmpRocof;
  }
  return 0.0;
}

const Synthesizer::Event* Synthesizer::active_event(double t_s) const {
  // Events never overlap (min_gap exceeds every duration), so at most the
  // one starting at or before t_s can be active.
  auto it = std::upper_bound(events_.begin(), events_.end(), t_s,
                             [](double t, const Event& e) { return t < e.start_s; });
  if (it == events_.begin()) return nullptr;
  const Event& e = *(it - 1);
  return t_s <= e.start_s + e.duration_s ? &e : nullptr;
}

double Synthesizer::clean_value(int pmu, SignalKind kind, std::int64_t tick) const {
  const double t_s = static_cast<double>(tick) / cfg_.fps;
  const int chan = static_cast<int>(kind);
  const double amp = drift_amplitude(kind);
  double v = nominal(pmu, kind) +
             amp * std::sin(kTwoPi * t_s / pmu_period_[pmu][chan] + pmu_phase_[pmu][chan]) +
             kRippleFrac * amp *
                 std::sin(kTwoPi * t_s / pmu_ripple_period_[pmu][chan] +
                          pmu_ripple_phase_[pmu][chan]);
  if (const Event* active = active_event(t_s)) {
    const auto& e = *active;
    auto it = std::lower_bound(e.pmus.begin(), e.pmus.end(), pmu);
    if (it == e.pmus.end() || *it != pmu) return v;
    const double scale = e.pmu_scale[static_cast<std::size_t>(it - e.pmus.begin())];
    const double shape = event_shape(e, t_s);
    switch (e.type) {
      case EventType::FrequencyEvent:
        if (kind == SignalKind::Rocof) v -= e.amp_factor * kDriftAmpRocof * scale * shape;
        break;
      case EventType::LineOutage:
        if (kind == SignalKind::VmPos) v -= e.amp_factor * kDriftFracVm * cfg_.base_vm * scale * shape;
        else if (kind == SignalKind::ImPos)
          v += e.amp_factor * kDriftFracIm * cfg_.base_im * scale * shape;
        else v += e.rocof_sign * e.amp_factor * kDriftAmpRocof * scale * shape;
        break;
      case EventType::TransformerOutage:
        if (kind == SignalKind::VmPos) v -= e.amp_factor * kDriftFracVm * cfg_.base_vm * scale * shape;
        break;
    }
  }
  return v;
}

double Synthesizer::clean_aux(int pmu, const std::string& name, std::int64_t tick) const {
  const double t_s = static_cast<double>(tick) / cfg_.fps;
  auto baseline = [&](double nominal_value, double amp, int chan) {
    return nominal_value +
           amp * std::sin(kTwoPi * t_s / pmu_period_[pmu][chan] + pmu_phase_[pmu][chan]) +
           kRippleFrac * amp *
               std::sin(kTwoPi * t_s / pmu_ripple_period_[pmu][chan] +
                        pmu_ripple_phase_[pmu][chan]);
  };
  if (name == "va_pos") return baseline(30.0, kDriftAmpAngle, 3);
  if (name == "ia_pos") return baseline(25.0, kDriftAmpAngle, 4);
  if (name == "freq") {
    double v = baseline(60.0, kDriftAmpFreq, 5);
    if (const Event* e = active_event(t_s); e && e->type == EventType::FrequencyEvent) {
      v -= e->amp_factor * kDriftAmpFreq * e->pmu_scale[static_cast<std::size_t>(pmu)] *
           event_shape(*e, t_s);
    }
    return v;
  }
  throw ContractError("unknown auxiliary channel '" + name + "'");
}

PmuFrame Synthesizer::frame_at(int pmu, std::int64_t tick) const {
  PmuFrame f;
  f.ts_ms = index_to_ms(kEpochMs, tick, cfg_.fps);
  f.pmu_id = pmu_ids_[pmu];
  f.vm_pos = clean_value(pmu, SignalKind::VmPos, tick);
  f.im_pos = clean_value(pmu, SignalKind::ImPos, tick);
  f.rocof = clean_value(pmu, SignalKind::Rocof, tick);
  f.va_pos = clean_aux(pmu, "va_pos", tick);
  f.ia_pos = clean_aux(pmu, "ia_pos", tick);
  f.freq = clean_aux(pmu, "freq", tick);
  f.status = Status::Ok;
  return f;
}

void generate_stream(const GeneratorConfig& cfg, const std::function<void(const PmuFrame&)>& sink,
                     std::vector<EventRecord>* truth_out) {
  Synthesizer synth(cfg);
  for (std::int64_t tick = 0; tick < synth.n_ticks(); ++tick) {
    for (int p = 0; p < cfg.n_pmus; ++p) sink(synth.frame_at(p, tick));
  }
  if (truth_out) *truth_out = synth.truth();
}

GeneratedStream generate(const GeneratorConfig& cfg) {
  GeneratedStream out;
  out.frames.reserve(static_cast<std::size_t>(cfg.duration_s * cfg.fps) * cfg.n_pmus);
  generate_stream(cfg, [&](const PmuFrame& f) { out.frames.push_back(f); }, &out.truth);
  return out;
}

// ----- degradation -----------------------------------------------------------

namespace {

struct Welford {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++n;
    double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  double variance() const { return n > 0 ? m2 / n : 0.0; }
};

struct FieldStats {
  std::array<Welford, 18> fields;
};

// Counter-based uniform in [0, 1), independent of draw order.
double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t s = mix64(mix64(mix64(seed, a), b), c);
  return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  double u1 = counter_uniform(seed, a, b, c);
  double u2 = counter_uniform(seed, a, b, c + 0x9e37);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

class Degrader {
 public:
  Degrader(const ImperfectionConfig& icfg, std::uint64_t seed,
           std::map<std::string, FieldStats> stats)
      : icfg_(icfg), seed_(seed), stats_(std::move(stats)) {
    noise_scale_ = std::isinf(icfg.snr_db) ? 0.0 : std::pow(10.0, -icfg.snr_db / 20.0);
  }

  void apply(PmuFrame& f) const {
    const auto& st = stats_.at(f.pmu_id);
    const std::uint64_t pmu_h = hash_str(f.pmu_id);
    const std::uint64_t ts = static_cast<std::uint64_t>(f.ts_ms);
    for (std::size_t i = 0; i < kNumericFields.size(); ++i) {
      auto& field = f.*(kNumericFields[i].member);
      if (!field.has_value()) continue;
      const std::uint64_t fh = mix64(pmu_h, i + 1);
      if (icfg_.missing_rate > 0.0 &&
          counter_uniform(seed_, fh, ts, 1) < icfg_.missing_rate) {
        field.reset();
        continue;
      }
      const double sigma_dev = std::sqrt(st.fields[i].variance());
      if (icfg_.bad_rate > 0.0 && counter_uniform(seed_, fh, ts, 2) < icfg_.bad_rate) {
        field = bad_value(*field, st.fields[i].mean, sigma_dev, kNumericFields[i].kind,
                          counter_uniform(seed_, fh, ts, 3),
                          counter_uniform(seed_, fh, ts, 4));
        continue;
      }
      if (noise_scale_ > 0.0 && sigma_dev > 0.0) {
        field = *field + sigma_dev * noise_scale_ * counter_normal(seed_, fh, ts, 5);
      }
    }
    if (icfg_.flag_anomaly_rate > 0.0 &&
        counter_uniform(seed_, pmu_h, ts, 6) < icfg_.flag_anomaly_rate) {
      f.status = counter_uniform(seed_, pmu_h, ts, 7) < 0.5 ? Status::Test : Status::Malfunction;
    }
  }

  std::vector<EventRecord> jitter_log(const std::vector<EventRecord>& truth) const {
    std::vector<EventRecord> log;
    log.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      EventRecord e = truth[i];
      double delta_s = (2.0 * counter_uniform(seed_, hash_str("jitter"), i, 0) - 1.0) *
                       icfg_.log_jitter_max_s;
      // Both timestamps shift together: log entries are late or early as a
      // whole, and start <= end stays true.
      std::int64_t delta_ms = static_cast<std::int64_t>(std::llround(delta_s * 1000.0));
      e.start_ms += delta_ms;
      e.end_ms += delta_ms;
      e.source = EventSource::DegradedLog;
      log.push_back(e);
    }
    return log;
  }

 private:
  static double bad_value(double x, double mean, double sigma_dev, NumericField::Kind kind,
                          double u1, double u2) {
    switch (kind) {
      case NumericField::Magnitude:
        if (u1 < 0.5) return -(1.0 + u2) * std::abs(mean);        // out of physical bound
        return x + (u2 < 0.5 ? 1.0 : -1.0) * (8.0 + 8.0 * u1) * std::max(sigma_dev, 1e-12);
      case NumericField::Angle:
        return u1 < 0.5 ? 181.0 + 170.0 * u2 : -(1.0 + 170.0 * u2);
      case NumericField::Other:
        return x + (u2 < 0.5 ? 1.0 : -1.0) * (8.0 + 8.0 * u1) * std::max(sigma_dev, 1e-12);
    }
    return x;
  }

  ImperfectionConfig icfg_;
  std::uint64_t seed_;
  std::map<std::string, FieldStats> stats_;
  double noise_scale_;
};

void accumulate_stats(std::map<std::string, FieldStats>& stats, const PmuFrame& f) {
  auto& st = stats[f.pmu_id];
  for (std::size_t i = 0; i < kNumericFields.size(); ++i) {
    const auto& field = f.*(kNumericFields[i].member);
    if (field.has_value()) st.fields[i].add(*field);
  }
}

}  // namespace

DegradeResult degrade(const std::vector<PmuFrame>& frames, const std::vector<EventRecord>& truth,
                      const ImperfectionConfig& icfg, std::uint64_t seed) {
  icfg.validate();
  std::map<std::string, FieldStats> stats;
  for (const auto& f : frames) accumulate_stats(stats, f);
  Degrader degrader(icfg, seed, std::move(stats));
  DegradeResult out;
  out.frames = frames;
  for (auto& f : out.frames) degrader.apply(f);
  out.degraded_log = degrader.jitter_log(truth);
  return out;
}

std::vector<EventRecord> degrade_file(const std::string& frames_in, const std::string& frames_out,
                                      const std::vector<EventRecord>& truth,
                                      const ImperfectionConfig& icfg, std::uint64_t seed) {
  icfg.validate();
  std::map<std::string, FieldStats> stats;
  {
    FrameReader reader(frames_in);
    PmuFrame f;
    while (reader.next(f)) accumulate_stats(stats, f);
  }
  Degrader degrader(icfg, seed, std::move(stats));
  {
    FrameReader reader(frames_in);
    FrameWriter writer(frames_out);
    PmuFrame f;
    while (reader.next(f)) {
      degrader.apply(f);
      writer.write(f);
    }
  }
  return degrader.jitter_log(truth);
}

}  // namespace pmuek
