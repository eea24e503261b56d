#include "pmuek/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "pmuek/errors.hpp"

namespace pmuek {

namespace {

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

// Removes |x - mean| > k*std values from one (PMU, channel, window) slice.
// Statistics use the population surviving the status/bound checks; with
// fixed_point the rule re-applies on its own survivors until stable.
void three_sigma_pass(const std::vector<double>& values, std::vector<std::size_t>& alive,
                      double k, bool fixed_point, std::vector<std::size_t>& removed) {
  for (;;) {
    if (alive.size() < 2) return;
    double mean = 0.0;
    for (auto i : alive) mean += values[i];
    mean /= static_cast<double>(alive.size());
    double var = 0.0;
    for (auto i : alive) {
      double d = values[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(alive.size());
    const double bound = k * std::sqrt(var);
    std::vector<std::size_t> keep;
    keep.reserve(alive.size());
    bool changed = false;
    for (auto i : alive) {
      if (std::abs(values[i] - mean) > bound) {
        removed.push_back(i);
        changed = true;
      } else {
        keep.push_back(i);
      }
    }
    if (!changed || !fixed_point) return;
    alive.swap(keep);
  }
}

}  // namespace

std::string QualityReport::to_json() const {
  nlohmann::json j;
  j["removed"]["status_flag"] = status_flag;
  j["removed"]["out_of_bound"] = out_of_bound;
  j["removed"]["three_sigma"] = three_sigma;
  j["removed"]["total"] = total_invalidated();
  j["missing_fraction"] = missing_fraction;
  return j.dump(2) + "\n";
}

QualityReport QualityReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  QualityReport r;
  r.status_flag = j.at("removed").at("status_flag").get<std::int64_t>();
  r.out_of_bound = j.at("removed").at("out_of_bound").get<std::int64_t>();
  r.three_sigma = j.at("removed").at("three_sigma").get<std::int64_t>();
  r.missing_fraction =
      j.at("missing_fraction").get<std::map<std::string, double>>();
  return r;
}

QualityFilterResult quality_filter(const std::vector<PmuFrame>& frames,
                                   const QualityOptions& opts) {
  QualityFilterResult out;
  out.frames = frames;

  // Track which channels each PMU reports at all, for the missing fraction.
  std::map<std::string, std::array<bool, 18>> reported;
  std::int64_t t_min = frames.empty() ? 0 : frames.front().ts_ms;
  for (const auto& f : frames) {
    t_min = std::min(t_min, f.ts_ms);
    auto& rep = reported[f.pmu_id];
    for (std::size_t i = 0; i < kNumericFields.size(); ++i) {
      if ((f.*(kNumericFields[i].member)).has_value()) rep[i] = true;
    }
  }

  // Status and bound checks.
  for (auto& f : out.frames) {
    if (f.status != Status::Ok) {
      for (const auto& field : kNumericFields) {
        auto& v = f.*(field.member);
        if (v.has_value()) {
          v.reset();
          ++out.report.status_flag;
        }
      }
      continue;
    }
    for (const auto& field : kNumericFields) {
      auto& v = f.*(field.member);
      if (!v.has_value()) continue;
      bool bad = false;
      if (field.kind == NumericField::Magnitude) {
        bad = *v < 0.0;
      } else if (field.kind == NumericField::Angle) {
        bad = *v > opts.angle_max || *v < opts.angle_min;
      }
      if (bad) {
        v.reset();
        ++out.report.out_of_bound;
      }
    }
  }

  // 3-sigma per (PMU, channel, processing window).
  const std::int64_t window_ms =
      opts.sigma_window_s > 0 ? static_cast<std::int64_t>(opts.sigma_window_s * 1000.0) : 0;
  std::map<std::pair<std::string, std::int64_t>, std::vector<std::size_t>> buckets;
  for (std::size_t idx = 0; idx < out.frames.size(); ++idx) {
    const auto& f = out.frames[idx];
    std::int64_t chunk = window_ms > 0 ? (f.ts_ms - t_min) / window_ms : 0;
    buckets[{f.pmu_id, chunk}].push_back(idx);
  }
  for (auto& [key, idxs] : buckets) {
    for (std::size_t ch = 0; ch < kNumericFields.size(); ++ch) {
      std::vector<double> values;
      std::vector<std::size_t> frame_of;
      values.reserve(idxs.size());
      for (auto idx : idxs) {
        const auto& v = out.frames[idx].*(kNumericFields[ch].member);
        if (v.has_value()) {
          values.push_back(*v);
          frame_of.push_back(idx);
        }
      }
      std::vector<std::size_t> alive(values.size());
      std::iota(alive.begin(), alive.end(), std::size_t{0});
      std::vector<std::size_t> removed;
      three_sigma_pass(values, alive, opts.sigma_k, opts.iterate_to_fixed_point, removed);
      for (auto r : removed) {
        (out.frames[frame_of[r]].*(kNumericFields[ch].member)).reset();
        ++out.report.three_sigma;
      }
    }
  }

  // Missing fraction per PMU over the channels it reports.
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> counts;  // missing, total
  for (const auto& f : out.frames) {
    auto& rep = reported[f.pmu_id];
    auto& cnt = counts[f.pmu_id];
    for (std::size_t i = 0; i < kNumericFields.size(); ++i) {
      if (!rep[i]) continue;
      ++cnt.second;
      if (!(f.*(kNumericFields[i].member)).has_value()) ++cnt.first;
    }
  }
  for (const auto& [pmu, cnt] : counts) {
    out.report.missing_fraction[pmu] =
        cnt.second > 0 ? static_cast<double>(cnt.first) / static_cast<double>(cnt.second) : 0.0;
  }
  return out;
}

QualityReport quality_filter_dataset(Dataset& dataset, const QualityOptions& opts) {
  QualityReport report;
  const Eigen::Index rows = dataset.n_samples();
  const Eigen::Index cols = static_cast<Eigen::Index>(dataset.pmu_ids().size());

  struct Channel {
    Eigen::MatrixXd* values;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>* missing;
    NumericField::Kind kind;
  };
  std::vector<Channel> channels = {
      {&dataset.grid(SignalKind::VmPos).values, &dataset.grid(SignalKind::VmPos).missing,
       NumericField::Magnitude},
      {&dataset.grid(SignalKind::ImPos).values, &dataset.grid(SignalKind::ImPos).missing,
       NumericField::Magnitude},
      {&dataset.grid(SignalKind::Rocof).values, &dataset.grid(SignalKind::Rocof).missing,
       NumericField::Other},
      {&dataset.aux("va_pos"), &dataset.aux_missing("va_pos"), NumericField::Angle},
      {&dataset.aux("ia_pos"), &dataset.aux_missing("ia_pos"), NumericField::Angle},
      {&dataset.aux("freq"), &dataset.aux_missing("freq"), NumericField::Other},
  };

  const auto& status = dataset.status_grid();
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Status>(status(r, c)) == Status::Ok) continue;
      if (!dataset.present(dataset.pmu_ids()[static_cast<std::size_t>(c)], r)) continue;
      for (auto& ch : channels) {
        if (!(*ch.missing)(r, c)) {
          (*ch.missing)(r, c) = 1;
          ++report.status_flag;
        }
      }
    }
  }

  for (auto& ch : channels) {
    if (ch.kind == NumericField::Other) continue;
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        if ((*ch.missing)(r, c)) continue;
        const double v = (*ch.values)(r, c);
        bool bad = ch.kind == NumericField::Magnitude
                       ? v < 0.0
                       : (v > opts.angle_max || v < opts.angle_min);
        if (bad) {
          (*ch.missing)(r, c) = 1;
          ++report.out_of_bound;
        }
      }
    }
  }

  const std::int64_t window_samples =
      opts.sigma_window_s > 0
          ? std::max<std::int64_t>(2, static_cast<std::int64_t>(
                                           std::llround(opts.sigma_window_s * dataset.fps())))
          : rows;
  for (auto& ch : channels) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index begin = 0; begin < rows; begin += window_samples) {
        const Eigen::Index end = std::min<Eigen::Index>(begin + window_samples, rows);
        std::vector<double> values;
        std::vector<Eigen::Index> row_of;
        for (Eigen::Index r = begin; r < end; ++r) {
          if (!(*ch.missing)(r, c)) {
            values.push_back((*ch.values)(r, c));
            row_of.push_back(r);
          }
        }
        std::vector<std::size_t> alive(values.size());
        std::iota(alive.begin(), alive.end(), std::size_t{0});
        std::vector<std::size_t> removed;
        three_sigma_pass(values, alive, opts.sigma_k, opts.iterate_to_fixed_point, removed);
        for (auto rm : removed) {
          (*ch.missing)(row_of[rm], c) = 1;
          ++report.three_sigma;
        }
      }
    }
  }

  for (Eigen::Index c = 0; c < cols; ++c) {
    std::int64_t missing = 0;
    for (const auto& ch : channels) {
      for (Eigen::Index r = 0; r < rows; ++r) missing += (*ch.missing)(r, c) ? 1 : 0;
    }
    report.missing_fraction[dataset.pmu_ids()[static_cast<std::size_t>(c)]] =
        static_cast<double>(missing) / static_cast<double>(rows * channels.size());
  }
  return report;
}

// ----- imputation ------------------------------------------------------------

namespace {

// Rank-r projection X_r of X, via the Gram matrix on the smaller side.
Eigen::MatrixXd rank_r_projection(const Eigen::MatrixXd& x, int r) {
  const Eigen::Index w = x.rows(), n = x.cols();
  r = std::min<Eigen::Index>({static_cast<Eigen::Index>(r), w, n});
  if (n <= w) {
    Eigen::MatrixXd g = x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    // Eigenvalues ascending: take the top r right-singular vectors.
    Eigen::MatrixXd v = eig.eigenvectors().rightCols(r);
    return (x * v) * v.transpose();
  }
  Eigen::MatrixXd g = x * x.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  Eigen::MatrixXd u = eig.eigenvectors().rightCols(r);
  return u * (u.transpose() * x);
}

}  // namespace

ImputeStats impute(Eigen::MatrixXd& values,
                   const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& missing,
                   const ImputeOptions& opts, const std::vector<std::string>* pmu_ids) {
  if (values.rows() != missing.rows() || values.cols() != missing.cols()) {
    throw ContractError("impute: values/missing shape mismatch");
  }
  if (opts.rank < 1) throw ContractError("impute: rank must be >= 1");

  const Eigen::Index w = values.rows(), n = values.cols();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> holes;
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index observed = 0;
    double sum = 0.0;
    for (Eigen::Index r = 0; r < w; ++r) {
      if (missing(r, c)) {
        holes.emplace_back(r, c);
      } else {
        ++observed;
        sum += values(r, c);
      }
    }
    if (observed == 0) {
      std::string who = pmu_ids && c < static_cast<Eigen::Index>(pmu_ids->size())
                            ? (*pmu_ids)[static_cast<std::size_t>(c)]
                            : ("column " + std::to_string(c));
      throw ContractError("impute: no observed samples for " + who);
    }
    const double mean = sum / static_cast<double>(observed);
    for (Eigen::Index r = 0; r < w; ++r) {
      if (missing(r, c)) values(r, c) = mean;
    }
  }

  ImputeStats stats;
  if (holes.empty()) {
    stats.converged = true;
    return stats;
  }
  if (static_cast<double>(holes.size()) >= 0.9 * static_cast<double>(w * n)) {
    throw ContractError("impute: more than 90% of entries are missing");
  }

  std::vector<double> prev_fill(holes.size());
  for (std::size_t h = 0; h < holes.size(); ++h) prev_fill[h] = values(holes[h].first, holes[h].second);

  // Rank annealing: converge at rank 1, then warm-start each higher rank up
  // to opts.rank. Jumping straight to the target rank lets the extra
  // components lock in the initial fills (a spurious EM fixed point).
  // Nesterov extrapolation on the fills speeds up the otherwise slow
  // fixed-point iteration.
  const int max_rank = static_cast<int>(std::min<Eigen::Index>(
      {static_cast<Eigen::Index>(opts.rank), values.rows(), values.cols()}));
  std::vector<double> momentum_prev = prev_fill;
  for (int rank = 1; rank <= max_rank; ++rank) {
    bool stage_converged = false;
    momentum_prev = prev_fill;
    for (int it = 0; it < opts.max_iter; ++it) {
      ++stats.iterations;
      const double beta = static_cast<double>(it) / static_cast<double>(it + 3);
      for (std::size_t h = 0; h < holes.size(); ++h) {
        values(holes[h].first, holes[h].second) =
            prev_fill[h] + beta * (prev_fill[h] - momentum_prev[h]);
      }
      Eigen::MatrixXd projected = rank_r_projection(values, rank);
      double delta2 = 0.0, norm2 = 0.0;
      for (std::size_t h = 0; h < holes.size(); ++h) {
        const double fresh = projected(holes[h].first, holes[h].second);
        const double d = fresh - prev_fill[h];
        delta2 += d * d;
        norm2 += prev_fill[h] * prev_fill[h];
        values(holes[h].first, holes[h].second) = fresh;
        momentum_prev[h] = prev_fill[h];
        prev_fill[h] = fresh;
      }
      if (std::sqrt(delta2) <= opts.tol * std::max(std::sqrt(norm2), 1e-300)) {
        stage_converged = true;
        break;
      }
    }
    if (rank == max_rank) stats.converged = stage_converged;
  }
  return stats;
}

ImputeStats impute_grid(SignalGrid& grid, const ImputeOptions& opts) {
  const Eigen::Index base_rows =
      opts.chunk_s > 0 ? static_cast<Eigen::Index>(std::llround(opts.chunk_s * grid.fps))
                       : grid.n_samples();
  ImputeStats total;
  total.converged = true;
  Eigen::Index begin = 0;
  while (begin < grid.n_samples()) {
    // A chunk can lack observations for some PMU entirely (for example a
    // dropout burst); widen it until every column has support.
    Eigen::Index rows = std::min<Eigen::Index>(base_rows, grid.n_samples() - begin);
    for (;;) {
      Eigen::MatrixXd block = grid.values.middleRows(begin, rows);
      Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask =
          grid.missing.middleRows(begin, rows);
      try {
        ImputeStats stats = impute(block, mask, opts, &grid.pmu_ids);
        grid.values.middleRows(begin, rows) = block;
        total.iterations += stats.iterations;
        total.converged = total.converged && stats.converged;
        break;
      } catch (const ContractError&) {
        if (begin + rows >= grid.n_samples() && rows >= grid.n_samples()) throw;
        rows = std::min<Eigen::Index>(rows * 2, grid.n_samples() - begin);
      }
    }
    begin += rows;
  }
  grid.missing.setZero();
  return total;
}

void impute_dataset(Dataset& dataset, const ImputeOptions& opts) {
  for (SignalKind kind : kAllSignals) impute_grid(dataset.grid(kind), opts);
}

// ----- coarse window ----------------------------------------------------------

CoarseWindow extract_coarse_window(const std::vector<PmuFrame>& frames,
                                   std::int64_t logged_start_ms, double half_window_s) {
  if (frames.empty()) throw ContractError("extract_coarse_window: empty dataset");
  const std::int64_t h_ms = static_cast<std::int64_t>(std::llround(half_window_s * 1000.0));
  std::int64_t data_min = frames.front().ts_ms, data_max = frames.front().ts_ms;
  for (const auto& f : frames) {
    data_min = std::min(data_min, f.ts_ms);
    data_max = std::max(data_max, f.ts_ms);
  }
  const std::int64_t lo = logged_start_ms - h_ms;
  const std::int64_t hi = logged_start_ms + h_ms;
  if (hi < data_min || lo > data_max) {
    throw ContractError("extract_coarse_window: requested window lies outside the dataset");
  }
  CoarseWindow out;
  out.truncated_left = lo < data_min;
  out.truncated_right = hi > data_max;
  for (const auto& f : frames) {
    if (f.ts_ms >= lo && f.ts_ms <= hi) out.frames.push_back(f);
  }
  std::stable_sort(out.frames.begin(), out.frames.end(), [](const PmuFrame& a, const PmuFrame& b) {
    if (a.pmu_id != b.pmu_id) return a.pmu_id < b.pmu_id;
    return a.ts_ms < b.ts_ms;
  });
  return out;
}

}  // namespace pmuek
