#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pmuek/classify.hpp"
#include "pmuek/detect.hpp"
#include "pmuek/features.hpp"
#include "pmuek/preprocess.hpp"
#include "pmuek/tune.hpp"

namespace pmuek {

// Offline training pipeline: per logged event, coarse window -> quality
// filter -> imputation -> detection (re-localizing the start) -> fine window
// -> 57 features labeled from the log.
struct PipelineConfig {
  std::string frames_path;
  std::string log_path;
  std::string params_path;
  std::string model_path;

  int fps = 30;
  double coarse_half_window_s = 300.0;  // paper-scale default; desk runs use less
  double fine_window_s = 10.0;
  QualityOptions quality;
  ImputeOptions impute = pipeline_impute_options();
  ModelSpec model_spec;
  double train_fraction = 0.8;
  BaselineMode baseline = BaselineMode::FullWindow;
  std::uint64_t seed = 7;
};

struct EventExtraction {
  EventRecord log_event;
  bool localized = false;
  std::int64_t t_detect_ms = 0;
  FeatureVector features;  // valid only when localized
};

// Runs the per-event part of the pipeline for a list of logged events over
// an in-memory frame set.
std::vector<EventExtraction> extract_event_features(const std::vector<PmuFrame>& frames,
                                                    const std::vector<EventRecord>& events,
                                                    const DetectorParams& params,
                                                    const PipelineConfig& cfg);

// Single streaming pass over a frame file sorted by timestamp; hands each
// event's coarse-window frames to the callback. Throws if the file is not
// time-sorted.
void for_each_event_window(const std::string& frames_path,
                           const std::vector<EventRecord>& events, double half_window_s,
                           const std::function<void(std::size_t, std::vector<PmuFrame>&)>& fn);

// Variant of extract_event_features that streams from cfg.frames_path.
std::vector<EventExtraction> extract_event_features_file(const PipelineConfig& cfg,
                                                         const DetectorParams& params,
                                                         const std::vector<EventRecord>& events);

struct TrainPipelineReport {
  int n_events = 0;
  int n_localized = 0;
  int n_dropped = 0;
  int n_train = 0;
  int n_test = 0;
  Evaluation evaluation;
  double train_seconds = 0.0;  // reported on the console, not serialized
  std::string to_json() const;  // deterministic: no wall-clock content
  std::string render() const;
};

struct TrainPipelineResult {
  TrainPipelineReport report;
  std::unique_ptr<Model> model;
  FeatureTable features;               // all localized events
  std::vector<std::size_t> test_rows;  // indices into features
};

TrainPipelineResult run_train_pipeline(const PipelineConfig& cfg, const DetectorParams& params,
                                       const std::vector<EventRecord>& events);

// ----- robustness sweep ---------------------------------------------------------

struct RobustnessRow {
  double missing_rate = 0.0;
  int n_events = 0;
  int n_dropped = 0;
  Metrics metrics;
};

struct RobustnessTable {
  std::vector<RobustnessRow> rows;
  std::string to_json() const;
  std::string render() const;
};

// Re-runs quality -> impute -> detect -> features -> predict on the given
// events after dropping each sample independently with every requested rate.
RobustnessTable run_robustness(const PipelineConfig& cfg, const DetectorParams& params,
                               const Model& model, const std::vector<EventRecord>& events,
                               const std::vector<double>& missing_rates);

// ----- streaming workflow ---------------------------------------------------------

struct StreamConfig {
  std::string frames_path;
  int fps = 30;
  double fine_window_s = 10.0;
  double quality_trailing_s = 10.0;
  QualityOptions quality;
  ImputeOptions impute = pipeline_impute_options();
  BaselineMode baseline = BaselineMode::FullWindow;
  bool emit_features = false;
};

struct StreamEmission {
  std::int64_t t_detect_ms = 0;
  std::int64_t t_emit_ms = 0;  // >= t_detect + W/2 by construction
  std::array<double, 3> xi_values = {0, 0, 0};
  std::array<bool, 3> xi_valid = {false, false, false};
  std::string predicted_type;
  FeatureVector features;
};

std::string stream_emission_to_json(const StreamEmission& e, bool include_features);

// Replays the frame file in timestamp order through rolling quality
// filtering, rolling imputation, the detector, and the classifier. Decisions
// at time t use only frames with timestamp <= t.
void run_stream(const StreamConfig& cfg, const DetectorParams& params, const Model& model,
                const std::function<void(const StreamEmission&)>& sink);

}  // namespace pmuek
