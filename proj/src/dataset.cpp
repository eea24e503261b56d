#include "pmuek/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "pmuek/errors.hpp"
#include "pmuek/timeutil.hpp"

namespace pmuek {

bool SignalGrid::any_missing() const {
  for (Eigen::Index c = 0; c < missing.cols(); ++c)
    for (Eigen::Index r = 0; r < missing.rows(); ++r)
      if (missing(r, c)) return true;
  return false;
}

namespace {
const std::array<const char*, 3> kAuxNames = {"va_pos", "ia_pos", "freq"};
}

Dataset Dataset::from_frames(const std::vector<PmuFrame>& frames, int fps) {
  if (fps != 30 && fps != 60) throw ContractError("fps must be 30 or 60");
  if (frames.empty()) throw ContractError("cannot build a dataset from zero frames");

  Dataset ds;
  ds.fps_ = fps;

  std::int64_t t_min = frames.front().ts_ms;
  std::int64_t t_max = frames.front().ts_ms;
  std::set<std::string> ids;
  for (const auto& f : frames) {
    t_min = std::min(t_min, f.ts_ms);
    t_max = std::max(t_max, f.ts_ms);
    ids.insert(f.pmu_id);
  }
  ds.t0_ms_ = t_min;
  ds.pmu_ids_.assign(ids.begin(), ids.end());  // std::set: already sorted
  ds.n_samples_ = ms_to_index(t_min, t_max, fps) + 1;

  const Eigen::Index rows = ds.n_samples_;
  const Eigen::Index cols = static_cast<Eigen::Index>(ds.pmu_ids_.size());
  for (int s = 0; s < kNumSignals; ++s) {
    auto& g = ds.grids_[s];
    g.kind = static_cast<SignalKind>(s);
    g.t0_ms = ds.t0_ms_;
    g.fps = fps;
    g.pmu_ids = ds.pmu_ids_;
    g.values = Eigen::MatrixXd::Zero(rows, cols);
    g.missing.setConstant(rows, cols, 1);
  }
  ds.aux_names_.assign(kAuxNames.begin(), kAuxNames.end());
  ds.aux_values_.assign(kAuxNames.size(), Eigen::MatrixXd::Zero(rows, cols));
  ds.aux_missing_.assign(kAuxNames.size(), {});
  for (auto& m : ds.aux_missing_) m.setConstant(rows, cols, 1);
  ds.status_.setConstant(rows, cols, static_cast<std::uint8_t>(Status::Unknown));
  ds.present_.setConstant(rows, cols, 0);

  std::map<std::string, Eigen::Index> col_of;
  for (Eigen::Index c = 0; c < cols; ++c) col_of[ds.pmu_ids_[c]] = c;

  for (const auto& f : frames) {
    const Eigen::Index r = ms_to_index(ds.t0_ms_, f.ts_ms, fps);
    const Eigen::Index c = col_of[f.pmu_id];
    ds.present_(r, c) = 1;
    ds.status_(r, c) = static_cast<std::uint8_t>(f.status);
    const std::optional<double>* sig[3] = {&f.vm_pos, &f.im_pos, &f.rocof};
    for (int s = 0; s < kNumSignals; ++s) {
      if (sig[s]->has_value()) {
        ds.grids_[s].values(r, c) = **sig[s];
        ds.grids_[s].missing(r, c) = 0;
      } else {
        ds.grids_[s].missing(r, c) = 1;
      }
    }
    const std::optional<double>* ax[3] = {&f.va_pos, &f.ia_pos, &f.freq};
    for (std::size_t a = 0; a < 3; ++a) {
      if (ax[a]->has_value()) {
        ds.aux_values_[a](r, c) = **ax[a];
        ds.aux_missing_[a](r, c) = 0;
      } else {
        ds.aux_missing_[a](r, c) = 1;
      }
    }
  }
  return ds;
}

std::int64_t Dataset::index_of_ms(std::int64_t ms) const { return ms_to_index(t0_ms_, ms, fps_); }
std::int64_t Dataset::ms_of_index(std::int64_t index) const {
  return index_to_ms(t0_ms_, index, fps_);
}

Eigen::MatrixXd& Dataset::aux(const std::string& name) {
  for (std::size_t i = 0; i < aux_names_.size(); ++i)
    if (aux_names_[i] == name) return aux_values_[i];
  throw ContractError("unknown auxiliary channel '" + name + "'");
}

const Eigen::MatrixXd& Dataset::aux(const std::string& name) const {
  return const_cast<Dataset*>(this)->aux(name);
}

Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& Dataset::aux_missing(
    const std::string& name) {
  for (std::size_t i = 0; i < aux_names_.size(); ++i)
    if (aux_names_[i] == name) return aux_missing_[i];
  throw ContractError("unknown auxiliary channel '" + name + "'");
}

const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& Dataset::aux_missing(
    const std::string& name) const {
  return const_cast<Dataset*>(this)->aux_missing(name);
}

bool Dataset::present(const std::string& pmu, std::int64_t index) const {
  auto it = std::lower_bound(pmu_ids_.begin(), pmu_ids_.end(), pmu);
  if (it == pmu_ids_.end() || *it != pmu) return false;
  const Eigen::Index c = it - pmu_ids_.begin();
  if (index < 0 || index >= n_samples_) return false;
  return present_(index, c) != 0;
}

std::vector<PmuFrame> Dataset::to_frames() const {
  std::vector<PmuFrame> frames;
  frames.reserve(static_cast<std::size_t>(n_samples_) * pmu_ids_.size());
  for (std::int64_t r = 0; r < n_samples_; ++r) {
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(pmu_ids_.size()); ++c) {
      if (!present_(r, c)) continue;
      PmuFrame f;
      f.ts_ms = ms_of_index(r);
      f.pmu_id = pmu_ids_[c];
      f.status = static_cast<Status>(status_(r, c));
      const SignalGrid* sig[3] = {&grids_[0], &grids_[1], &grids_[2]};
      std::optional<double> vals[3];
      for (int s = 0; s < kNumSignals; ++s) {
        if (!sig[s]->missing(r, c)) vals[s] = sig[s]->values(r, c);
      }
      f.vm_pos = vals[0];
      f.im_pos = vals[1];
      f.rocof = vals[2];
      for (std::size_t a = 0; a < aux_names_.size(); ++a) {
        std::optional<double> v;
        if (!aux_missing_[a](r, c)) v = aux_values_[a](r, c);
        if (aux_names_[a] == "va_pos") f.va_pos = v;
        else if (aux_names_[a] == "ia_pos") f.ia_pos = v;
        else if (aux_names_[a] == "freq") f.freq = v;
      }
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

MeasurementMatrix slice_matrix(const SignalGrid& grid, std::int64_t t_ms, int w) {
  if (w < 2) throw ContractError("slice_matrix: window must have w >= 2 samples");
  if (grid.n_pmus() < 2) throw ContractError("slice_matrix: need at least 2 PMUs");
  const std::int64_t end = ms_to_index(grid.t0_ms, t_ms, grid.fps);
  const std::int64_t expect_ms = index_to_ms(grid.t0_ms, end, grid.fps);
  const std::int64_t half = 1000 / (2 * grid.fps) + 1;
  if (std::llabs(expect_ms - t_ms) > half) {
    throw ContractError("slice_matrix: timestamp does not lie on the sample grid");
  }
  const std::int64_t begin = end - w + 1;
  if (begin < 0 || end >= grid.n_samples()) {
    throw ContractError("slice_matrix: insufficient history for the requested window");
  }
  MeasurementMatrix m;
  m.kind = grid.kind;
  m.t_ms = expect_ms;
  m.data.resize(w, grid.n_pmus());
  for (Eigen::Index c = 0; c < grid.n_pmus(); ++c) {
    for (int r = 0; r < w; ++r) {
      if (grid.missing(begin + r, c)) {
        throw ContractError("slice_matrix: missing sample for PMU '" +
                            grid.pmu_ids[static_cast<std::size_t>(c)] +
                            "' inside the requested window (impute first)");
      }
      m.data(r, c) = grid.values(begin + r, c);
    }
  }
  return m;
}

MeasurementMatrix slice_matrix(const Dataset& dataset, SignalKind kind, std::int64_t t_ms,
                               int w) {
  return slice_matrix(dataset.grid(kind), t_ms, w);
}

}  // namespace pmuek
