#pragma once

// Shared test helper: detector parameters tuned the same way the real
// workflow tunes them, at a small budget suitable for unit tests.

#include "pmuek/preprocess.hpp"
#include "pmuek/synth.hpp"
#include "pmuek/tune.hpp"

namespace pmuek::testsupport {

inline DetectorParams tuned_params(const std::vector<PmuFrame>& frames,
                                   const std::vector<EventRecord>& truth, int fps,
                                   int budget = 32, std::uint64_t seed = 7,
                                   bool preprocess = true) {
  Dataset ds = Dataset::from_frames(frames, fps);
  if (preprocess) {
    quality_filter_dataset(ds);
    impute_dataset(ds, pipeline_impute_options());
  }
  SearchSpace space;
  DetectionErrorOptions err;
  err.eval_stride = 4;
  return bo_search(space, budget, seed, truth, ds, DetectorParams{}, err);
}

}  // namespace pmuek::testsupport
