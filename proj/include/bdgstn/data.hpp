#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bdgstn/tensor.hpp"

namespace bdgstn {

// Feature order in the last axis of series tensors.
inline constexpr std::size_t kSusceptible = 0;
inline constexpr std::size_t kInfected = 1;
inline constexpr std::size_t kRecovered = 2;
inline constexpr std::size_t kNumFeatures = 3;

std::int64_t days_from_civil(int y, unsigned m, unsigned d);
std::string iso_date(std::int64_t days);
std::int64_t parse_iso_date(const std::string& s, const std::string& context);

/// Per-patch daily S/I/R series with populations and optional geography.
struct EpidemicDataset {
  std::vector<std::string> patch_ids;
  std::int64_t first_day = 0;  // days since civil epoch; spacing is daily
  std::size_t n_days = 0;
  Tensor series;  // N x T x 3
  std::vector<double> population;
  std::optional<std::vector<std::array<double, 2>>> coordinates;  // lat, lon
  std::optional<Tensor> geo_adjacency;                            // N x N binary

  std::size_t n_patches() const { return patch_ids.size(); }
  double at(std::size_t patch, std::size_t day, std::size_t feature) const {
    return series[(patch * n_days + day) * kNumFeatures + feature];
  }
};

EpidemicDataset load_dataset(const std::string& series_path, const std::string& meta_path,
                             const std::string& adjacency_path = "");
void save_dataset(const EpidemicDataset& ds, const std::string& dir);

/// Contiguous day index range [begin, end).
struct DayRange {
  std::size_t begin = 0, end = 0;
  std::size_t length() const { return end - begin; }
};

struct SplitRanges {
  DayRange train, val, test;
};

/// Chronological 60/20/20 split by default; every split must fit at
/// least one window of t_in + horizon days.
SplitRanges chrono_split(const EpidemicDataset& ds,
                         std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                         std::size_t t_in = 5, std::size_t horizon = 20);

/// Per-patch per-feature min-max scaler fitted on the training range only.
class Normalizer {
 public:
  static constexpr double kEps = 1e-8;
  Normalizer() = default;
  Normalizer(Tensor min, Tensor max) : min_(std::move(min)), max_(std::move(max)) {}

  double normalize(std::size_t patch, std::size_t feature, double x) const;
  double denormalize(std::size_t patch, std::size_t feature, double x) const;
  const Tensor& min() const { return min_; }
  const Tensor& max() const { return max_; }

 private:
  Tensor min_, max_;  // each N x 3
};

Normalizer fit_normalizer(const EpidemicDataset& ds, DayRange train);

/// Sliding windows cut from one chronological split (stride 1).
struct WindowBatch {
  std::size_t n_windows = 0, n_patches = 0, t_in = 0, horizon = 0;
  std::vector<std::size_t> starts;  // day index of the first input step
  Tensor inputs;       // B x N x T_in x 3, normalized
  Tensor targets;      // B x N x L, normalized infected
  Tensor raw_inputs;   // B x N x T_in x 3, raw counts
  Tensor raw_last;     // B x N x 3, raw S/I/R at the last input day
  Tensor raw_targets;  // B x N x L, raw infected

  Tensor input_window(std::size_t w) const;       // N x T_in x 3
  Tensor raw_last_window(std::size_t w) const;    // N x 3
  Tensor target_window(std::size_t w) const;      // N x L (normalized)
  Tensor raw_target_window(std::size_t w) const;  // N x L
};

WindowBatch make_windows(const EpidemicDataset& ds, const Normalizer& norm, DayRange range,
                         std::size_t t_in, std::size_t horizon);

}  // namespace bdgstn
