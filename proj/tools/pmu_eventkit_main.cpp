// pmu-eventkit: synthetic PMU streams, preprocessing, SVD-ratio event
// detection with Bayesian-optimized parameters, pattern features, and
// lightweight classifiers. See README.md for the workflows.

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

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

namespace {

using namespace pmuek;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create '" + path + "'");
  out << text;
}

int infer_fps_from_file(const std::string& path) {
  FrameReader reader(path);
  PmuFrame f;
  std::map<std::string, std::vector<std::int64_t>> ts;
  int rows = 0;
  while (rows < 600 && reader.next(f)) {
    ts[f.pmu_id].push_back(f.ts_ms);
    ++rows;
  }
  for (const auto& [pmu, t] : ts) {
    for (std::size_t i = 1; i < t.size(); ++i) {
      const std::int64_t dt = t[i] - t[i - 1];
      if (dt >= 15 && dt <= 18) return 60;
      if (dt >= 32 && dt <= 35) return 30;
    }
  }
  throw IoError("cannot infer the sampling rate from '" + path + "'");
}

int cmd_generate(const std::string& config_path, const std::string& out_frames,
                 const std::string& out_truth, const std::string& out_log,
                 std::uint64_t* seed_override) {
  SynthConfig cfg = read_synth_config(config_path);
  if (seed_override) cfg.gen.seed = *seed_override;

  std::vector<EventRecord> truth;
  {
    FrameWriter writer(out_frames + ".clean.tmp");
    generate_stream(cfg.gen, [&](const PmuFrame& f) { writer.write(f); }, &truth);
  }
  write_event_log(out_truth, truth);
  const std::uint64_t degrade_seed = mix64(cfg.gen.seed, hash_str("degrade"));
  std::vector<EventRecord> log =
      degrade_file(out_frames + ".clean.tmp", out_frames, truth, cfg.imp, degrade_seed);
  std::remove((out_frames + ".clean.tmp").c_str());
  write_event_log(out_log, log);
  std::cerr << "generated " << truth.size() << " events over " << cfg.gen.duration_s
            << " s for " << cfg.gen.n_pmus << " PMUs\n";
  return 0;
}

int cmd_preprocess(const std::string& in_frames, const std::string& log_path,
                   const std::string& out_frames, const std::string& report_path,
                   double coarse_half_s, double sigma_window_s) {
  const int fps = infer_fps_from_file(in_frames);
  QualityOptions quality;
  quality.sigma_window_s = sigma_window_s;

  std::vector<PmuFrame> frames = read_frames(in_frames);
  QualityReport report;
  std::vector<PmuFrame> cleaned;

  if (!log_path.empty()) {
    // Coarse windows around each logged event only.
    std::vector<EventRecord> events = read_event_log(log_path);
    QualityOptions per_window = quality;
    per_window.sigma_window_s = 0.0;
    for (const auto& ev : events) {
      CoarseWindow window = extract_coarse_window(frames, ev.start_ms, coarse_half_s);
      if (window.truncated_left || window.truncated_right) {
        std::cerr << "warning: coarse window at " << ms_to_iso8601(ev.start_ms)
                  << " truncated at the dataset boundary\n";
      }
      Dataset ds = Dataset::from_frames(window.frames, fps);
      QualityReport r = quality_filter_dataset(ds, per_window);
      report.status_flag += r.status_flag;
      report.out_of_bound += r.out_of_bound;
      report.three_sigma += r.three_sigma;
      for (const auto& [pmu, frac] : r.missing_fraction) report.missing_fraction[pmu] = frac;
      impute_dataset(ds, pipeline_impute_options());
      auto out = ds.to_frames();
      cleaned.insert(cleaned.end(), out.begin(), out.end());
    }
  } else {
    Dataset ds = Dataset::from_frames(frames, fps);
    report = quality_filter_dataset(ds, quality);
    impute_dataset(ds, pipeline_impute_options());
    cleaned = ds.to_frames();
  }
  write_frames(out_frames, cleaned);
  write_text(report_path, report.to_json());
  std::cerr << "removed: status=" << report.status_flag << " bound=" << report.out_of_bound
            << " 3sigma=" << report.three_sigma << "\n";
  return 0;
}

int cmd_detect(const std::string& in_frames, const std::string& params_path,
               const std::string& out_path, const std::string& trace_path, bool preprocess) {
  const int fps = infer_fps_from_file(in_frames);
  DetectorParams params = read_detector_params(params_path);
  Dataset ds = Dataset::from_frames(read_frames(in_frames), fps);
  if (preprocess) {
    quality_filter_dataset(ds);
    impute_dataset(ds, pipeline_impute_options());
  }
  auto detections = detect_events(ds, params);
  write_text(out_path, detections_to_json(detections));
  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw IoError("cannot create '" + trace_path + "'");
    trace << "index,ts_ms,xi_vm_pos,xi_im_pos,xi_rocof\n";
    std::array<XiSeries, 3> series;
    for (SignalKind s : kAllSignals) {
      series[static_cast<int>(s)] = compute_xi_series(ds.grid(s), params.w, params.stride);
    }
    trace.precision(12);
    for (std::size_t k = 0; k < series[0].index.size(); ++k) {
      trace << series[0].index[k] << ',' << ds.ms_of_index(series[0].index[k]);
      for (int s = 0; s < 3; ++s) {
        trace << ',';
        if (series[s].valid[k]) trace << series[s].xi[k];
      }
      trace << '\n';
    }
  }
  std::cerr << detections.size() << " detections\n";
  return 0;
}

int cmd_tune(const std::string& frames_path, const std::string& truth_path, int budget,
             std::uint64_t seed, const std::string& out_path, int eval_stride, bool preprocess) {
  const int fps = infer_fps_from_file(frames_path);
  Dataset ds = Dataset::from_frames(read_frames(frames_path), fps);
  if (preprocess) {
    quality_filter_dataset(ds);
    impute_dataset(ds, pipeline_impute_options());
  }
  std::vector<EventRecord> truth = read_event_log(truth_path);
  SearchSpace space;
  DetectionErrorOptions err;
  err.eval_stride = eval_stride;
  BoState state;
  DetectorParams tuned = bo_search(space, budget, seed, truth, ds, DetectorParams{}, err, &state);
  write_text(out_path, detector_params_to_text(tuned));
  std::cerr << "best detection error " << state.best.error << " at w=" << tuned.w << "\n";
  return 0;
}

ModelSpec spec_from_flags(const std::string& model_kind, int n_trees, int max_depth, int knn_k,
                          std::uint64_t seed) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(model_kind);
  spec.rf.n_trees = n_trees;
  spec.dt.max_depth = max_depth;
  spec.knn.k = knn_k;
  spec.seed = seed;
  return spec;
}

int cmd_train(const PipelineConfig& cfg, const std::string& features_out,
              const std::string& report_path) {
  DetectorParams params = read_detector_params(cfg.params_path);
  std::vector<EventRecord> events = read_event_log(cfg.log_path);
  TrainPipelineResult result = run_train_pipeline(cfg, params, events);
  result.model->save(cfg.model_path);
  if (!features_out.empty()) write_feature_table(features_out, result.features);
  if (!report_path.empty()) write_text(report_path, result.report.to_json());
  std::cout << result.report.render();
  return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& features_path,
                 const std::string& report_path) {
  auto model = Model::load(model_path);
  FeatureTable table = read_feature_table(features_path);
  Evaluation ev = evaluate(*model, table);
  nlohmann::json j;
  j["labels"] = ev.confusion.labels;
  j["counts"] = ev.confusion.counts;
  j["metrics"] = {{"acc", ev.metrics.acc},
                  {"pre", ev.metrics.pre},
                  {"rec", ev.metrics.rec},
                  {"f1", ev.metrics.f1}};
  if (!report_path.empty()) write_text(report_path, j.dump(2) + "\n");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "acc=%.4f pre=%.4f rec=%.4f f1=%.4f\n", ev.metrics.acc,
                ev.metrics.pre, ev.metrics.rec, ev.metrics.f1);
  std::cout << buf << ev.confusion.render();
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& features_path,
                const std::string& out_path) {
  auto model = Model::load(model_path);
  FeatureTable table = read_feature_table(features_path);
  if (table.names != model->feature_schema()) {
    throw ContractError("predict: feature schema does not match the trained model");
  }
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    arr.push_back({{"row", i}, {"predicted_type", model->predict(table.rows[i])}});
  }
  write_text(out_path, arr.dump(2) + "\n");
  std::cerr << table.n_rows() << " predictions\n";
  return 0;
}

int cmd_stream(const StreamConfig& cfg, const std::string& params_path,
               const std::string& model_path, const std::string& out_path) {
  DetectorParams params = read_detector_params(params_path);
  auto model = Model::load(model_path);
  std::ofstream out(out_path);
  if (!out) throw IoError("cannot create '" + out_path + "'");
  int count = 0;
  run_stream(cfg, params, *model, [&](const StreamEmission& e) {
    out << stream_emission_to_json(e, cfg.emit_features) << "\n";
    ++count;
  });
  std::cerr << count << " events emitted\n";
  return 0;
}

int cmd_robustness(const PipelineConfig& cfg, const std::vector<double>& rates,
                   const std::string& out_path) {
  DetectorParams params = read_detector_params(cfg.params_path);
  auto model = Model::load(cfg.model_path);
  std::vector<EventRecord> events = read_event_log(cfg.log_path);
  RobustnessTable table = run_robustness(cfg, params, *model, events, rates);
  if (!out_path.empty()) write_text(out_path, table.to_json());
  std::cout << table.render();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pmu-eventkit: robust PMU event detection and classification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 7;
  app.add_option("--seed", seed, "Seed for every random choice in the command");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a labeled synthetic PMU stream");
  std::string gen_config, gen_frames, gen_truth, gen_log;
  bool gen_seed_set = false;
  gen->add_option("--config", gen_config, "key=value generator config")->required();
  gen->add_option("--out-frames", gen_frames)->required();
  gen->add_option("--out-truth", gen_truth)->required();
  gen->add_option("--out-log", gen_log)->required();
  gen->add_flag("--use-seed-flag", gen_seed_set,
                "Override the config seed with the global --seed value");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Quality-filter and impute a frame file");
  std::string pre_in, pre_log, pre_out, pre_report;
  double pre_half = 300.0, pre_sigma_window = 10.0;
  pre->add_option("--in", pre_in)->required();
  pre->add_option("--log", pre_log, "Optional event log: restrict to coarse windows");
  pre->add_option("--out", pre_out)->required();
  pre->add_option("--report", pre_report)->required();
  pre->add_option("--coarse-half-s", pre_half, "Half window around logged events");
  pre->add_option("--sigma-window-s", pre_sigma_window, "3-sigma statistics window");

  // detect
  auto* det = app.add_subcommand("detect", "Run the SVD-ratio detector over a frame file");
  std::string det_in, det_params, det_out, det_trace;
  bool det_prep = false;
  det->add_option("--in", det_in)->required();
  det->add_option("--params", det_params)->required();
  det->add_option("--out", det_out)->required();
  det->add_option("--trace", det_trace, "Dump per-signal xi traces as CSV");
  det->add_flag("--preprocess", det_prep, "Quality-filter and impute before detecting");

  // tune
  auto* tun = app.add_subcommand("tune", "Bayesian-optimization search for detector parameters");
  std::string tun_frames, tun_truth, tun_out;
  int tun_budget = 50, tun_stride = 2;
  bool tun_prep = false;
  tun->add_option("--frames", tun_frames)->required();
  tun->add_option("--truth", tun_truth)->required();
  tun->add_option("--budget", tun_budget);
  tun->add_option("--out", tun_out)->required();
  tun->add_option("--eval-stride", tun_stride, "Scan stride during error evaluations");
  tun->add_flag("--preprocess", tun_prep, "Quality-filter and impute before tuning");

  // shared pipeline options
  PipelineConfig pcfg;
  std::string model_kind = "random_forest";
  int rf_trees = 100, dt_depth = 16, knn_k = 5;

  auto add_pipeline_options = [&](CLI::App* cmd) {
    cmd->add_option("--frames", pcfg.frames_path)->required();
    cmd->add_option("--log", pcfg.log_path)->required();
    cmd->add_option("--params", pcfg.params_path)->required();
    cmd->add_option("--coarse-half-s", pcfg.coarse_half_window_s);
    cmd->add_option("--fine-window-s", pcfg.fine_window_s);
    cmd->add_option("--fps", pcfg.fps);
    cmd->add_option("--impute-rank", pcfg.impute.rank);
  };

  // train
  auto* tra = app.add_subcommand("train", "Offline training pipeline (Fig.-6 style workflow)");
  add_pipeline_options(tra);
  std::string tra_features, tra_report;
  tra->add_option("--model-out", pcfg.model_path)->required();
  tra->add_option("--model", model_kind, "decision_tree|random_forest|knn|logistic_regression");
  tra->add_option("--rf-trees", rf_trees);
  tra->add_option("--dt-depth", dt_depth);
  tra->add_option("--knn-k", knn_k);
  tra->add_option("--features-out", tra_features, "Also write the 57-feature CSV");
  tra->add_option("--report", tra_report, "JSON evaluation report");
  std::string tra_baseline = "full";
  tra->add_option("--baseline", tra_baseline, "Feature mean baseline: full|pre-event");

  // evaluate
  auto* eva = app.add_subcommand("evaluate", "Evaluate a model on a labeled feature CSV");
  std::string eva_model, eva_features, eva_report;
  eva->add_option("--model", eva_model)->required();
  eva->add_option("--features", eva_features)->required();
  eva->add_option("--report", eva_report);

  // predict
  auto* prd = app.add_subcommand("predict", "Predict event types for a feature CSV");
  std::string prd_model, prd_features, prd_out;
  prd->add_option("--model", prd_model)->required();
  prd->add_option("--features", prd_features)->required();
  prd->add_option("--out", prd_out)->required();

  // stream
  auto* str = app.add_subcommand("stream", "Replay a frame file through the online workflow");
  StreamConfig scfg;
  std::string str_params, str_model, str_out;
  str->add_option("--in", scfg.frames_path)->required();
  str->add_option("--params", str_params)->required();
  str->add_option("--model", str_model)->required();
  str->add_option("--out", str_out)->required();
  str->add_option("--fps", scfg.fps);
  str->add_option("--fine-window-s", scfg.fine_window_s);
  str->add_flag("--emit-features", scfg.emit_features);

  // robustness
  auto* rob = app.add_subcommand("robustness", "Missing-rate sweep over the test events");
  add_pipeline_options(rob);
  rob->add_option("--model", pcfg.model_path)->required();
  std::vector<double> rob_rates = {0.1, 0.2, 0.3, 0.4, 0.5};
  rob->add_option("--rates", rob_rates, "Missing rates to sweep");
  std::string rob_out;
  rob->add_option("--out", rob_out, "JSON output table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_generate(gen_config, gen_frames, gen_truth, gen_log,
                          gen_seed_set ? &seed : nullptr);
    }
    if (pre->parsed()) {
      return cmd_preprocess(pre_in, pre_log, pre_out, pre_report, pre_half, pre_sigma_window);
    }
    if (det->parsed()) return cmd_detect(det_in, det_params, det_out, det_trace, det_prep);
    if (tun->parsed()) {
      return cmd_tune(tun_frames, tun_truth, tun_budget, seed, tun_out, tun_stride, tun_prep);
    }
    if (tra->parsed()) {
      pcfg.seed = seed;
      pcfg.model_spec = spec_from_flags(model_kind, rf_trees, dt_depth, knn_k, seed);
      if (tra_baseline == "pre-event") pcfg.baseline = BaselineMode::PreEvent20;
      else if (tra_baseline != "full") throw ContractError("unknown --baseline value");
      return cmd_train(pcfg, tra_features, tra_report);
    }
    if (eva->parsed()) return cmd_evaluate(eva_model, eva_features, eva_report);
    if (prd->parsed()) return cmd_predict(prd_model, prd_features, prd_out);
    if (str->parsed()) return cmd_stream(scfg, str_params, str_model, str_out);
    if (rob->parsed()) {
      pcfg.seed = seed;
      return cmd_robustness(pcfg, rob_rates, rob_out);
    }
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
