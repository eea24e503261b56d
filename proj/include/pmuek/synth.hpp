#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pmuek/frame.hpp"

namespace pmuek {

// Labeled synthetic stream generation: sinusoidal baseline drift per PMU
// plus three event signatures (wide frequency/ROCOF dip on all PMUs, narrow
// spark on a few PMUs, cliff-like voltage drop on a few PMUs).
struct GeneratorConfig {
  int n_pmus = 10;
  int fps = 30;
  double duration_s = 600.0;
  int n_events = 0;
  std::array<double, 3> class_mix = {0.77, 0.13, 0.10};  // line, transformer, frequency
  double base_vm = 525000.0;  // volts
  double base_im = 600.0;     // amperes
  double min_gap_s = 120.0;   // >= 2x the coarse half-window used downstream
  std::uint64_t seed = 1;

  void validate() const;  // throws ContractError
};

struct ImperfectionConfig {
  double snr_db = 45.0;  // +inf disables noise
  double missing_rate = 0.0;
  double bad_rate = 0.0;
  double log_jitter_max_s = 120.0;
  double flag_anomaly_rate = 0.0;

  void validate() const;
};

// Flat key=value config file mirroring the two structs (class_mix is a
// comma-separated triple). Unknown keys are an error.
struct SynthConfig {
  GeneratorConfig gen;
  ImperfectionConfig imp;
};
SynthConfig parse_synth_config(const std::string& text);
SynthConfig read_synth_config(const std::string& path);
std::string synth_config_to_text(const SynthConfig& cfg);

// Deviation amplitudes of the clean baseline, per signal. Event amplitudes
// are drawn in [kEventAmpMin, kEventAmpMax] times the drift amplitude, so
// every event exceeds kEventAmpMin x the pre-noise drift by construction.
inline constexpr double kDriftFracVm = 0.002;    // of base_vm
inline constexpr double kDriftFracIm = 0.002;    // of base_im
inline constexpr double kDriftAmpRocof = 5e-4;   // Hz/s
inline constexpr double kDriftAmpFreq = 0.003;   // Hz
inline constexpr double kDriftAmpAngle = 2.0;    // degrees
// Per-(PMU, channel) drift and ripple periods come from these sets; every
// entry divides 60 s into half-periods, so power measurements over 60 s
// windows are exact. The fast ripple is the ambient fluctuation that keeps
// the baseline measurement matrices away from rank collapse.
inline constexpr std::array<double, 4> kDriftPeriodsS = {20.0, 24.0, 30.0, 40.0};
inline constexpr std::array<double, 2> kRipplePeriodsS = {2.0, 3.0};
inline constexpr double kRippleFrac = 0.3;  // of the drift amplitude
inline constexpr double kEventAmpMin = 12.0;
inline constexpr double kEventAmpMax = 25.0;
inline constexpr double kSparkAmpMin = 15.0;  // line-outage sparks draw higher

// Precomputed deterministic model of one synthetic stream. generate() and
// the tests evaluate the same closed-form waveforms.
class Synthesizer {
 public:
  explicit Synthesizer(const GeneratorConfig& cfg);

  std::int64_t n_ticks() const { return n_ticks_; }
  std::int64_t t0_ms() const { return kEpochMs; }
  const std::vector<EventRecord>& truth() const { return truth_; }
  const std::vector<std::string>& pmu_ids() const { return pmu_ids_; }

  // Clean (pre-noise) value of one signal at one tick.
  double clean_value(int pmu, SignalKind kind, std::int64_t tick) const;
  double clean_aux(int pmu, const std::string& name, std::int64_t tick) const;
  double nominal(int pmu, SignalKind kind) const;
  double drift_amplitude(SignalKind kind) const;

  PmuFrame frame_at(int pmu, std::int64_t tick) const;

  static constexpr std::int64_t kEpochMs = 1451606400000;  // 2016-01-01T00:00:00Z

 private:
  struct Event {
    EventType type;
    double start_s;
    double duration_s;
    std::vector<int> pmus;          // affected PMU indices (all for frequency events)
    std::vector<double> pmu_scale;  // parallel to pmus
    double amp_factor;              // x drift amplitude of the target signal
    double rocof_sign;
  };

  double event_shape(const Event& e, double t_s) const;  // 0..1 envelope
  const Event* active_event(double t_s) const;
  GeneratorConfig cfg_;
  std::int64_t n_ticks_ = 0;
  std::vector<std::string> pmu_ids_;
  std::vector<std::array<double, 8>> pmu_phase_;   // per pmu: phases per channel
  std::vector<std::array<double, 8>> pmu_period_;  // per pmu: drift period per channel
  std::vector<std::array<double, 8>> pmu_ripple_phase_;
  std::vector<std::array<double, 8>> pmu_ripple_period_;
  std::vector<double> pmu_vm_offset_, pmu_im_offset_;
  std::vector<Event> events_;
  std::vector<EventRecord> truth_;
};

// Generates the full stream in memory. Suitable for desk-scale sizes.
struct GeneratedStream {
  std::vector<PmuFrame> frames;
  std::vector<EventRecord> truth;
};
GeneratedStream generate(const GeneratorConfig& cfg);

// Streaming variant: frames are handed to the sink tick by tick.
void generate_stream(const GeneratorConfig& cfg, const std::function<void(const PmuFrame&)>& sink,
                     std::vector<EventRecord>* truth_out);

// Applies noise, dropouts, bad data and flag anomalies, and jitters the log
// timestamps. The noise level per (PMU, field) is snr_db below the power of
// the field's deviation from its per-stream mean. Draws are counter-based on
// (seed, pmu, field, tick), so results do not depend on processing order.
struct DegradeResult {
  std::vector<PmuFrame> frames;
  std::vector<EventRecord> degraded_log;
};
DegradeResult degrade(const std::vector<PmuFrame>& frames, const std::vector<EventRecord>& truth,
                      const ImperfectionConfig& icfg, std::uint64_t seed);

// Streaming/file variant (two passes over the input file).
std::vector<EventRecord> degrade_file(const std::string& frames_in, const std::string& frames_out,
                                      const std::vector<EventRecord>& truth,
                                      const ImperfectionConfig& icfg, std::uint64_t seed);

}  // namespace pmuek
