#include "bdgstn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace bdgstn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError(context + ": non-numeric field '" + s + "'");
  }
}

std::string loc(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::string iso_date(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u", static_cast<long long>(y + (m <= 2)), m, d);
  return buf;
}

std::int64_t parse_iso_date(const std::string& s, const std::string& context) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
    throw DataError(context + ": malformed ISO date '" + s + "'");
  return days_from_civil(y, m, d);
}

EpidemicDataset load_dataset(const std::string& series_path, const std::string& meta_path,
                             const std::string& adjacency_path) {
  EpidemicDataset ds;

  // Metadata defines the patch order.
  std::ifstream meta(meta_path);
  if (!meta) throw DataError("cannot open metadata file " + meta_path);
  std::string line;
  std::size_t lineno = 0;
  std::getline(meta, line);
  ++lineno;
  if (line != "patch,population,lat,lon")
    throw DataError(loc(meta_path, lineno) + ": expected header 'patch,population,lat,lon'");
  std::unordered_map<std::string, std::size_t> patch_index;
  std::vector<std::array<double, 2>> coords;
  bool have_coords = true;
  while (std::getline(meta, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError(loc(meta_path, lineno) + ": expected 4 fields");
    if (patch_index.count(f[0]))
      throw DataError(loc(meta_path, lineno) + ": duplicate patch '" + f[0] + "'");
    patch_index[f[0]] = ds.patch_ids.size();
    ds.patch_ids.push_back(f[0]);
    double pop = parse_double(f[1], loc(meta_path, lineno));
    if (pop <= 0) throw DataError(loc(meta_path, lineno) + ": population must be positive");
    ds.population.push_back(pop);
    if (f[2].empty() || f[3].empty()) {
      have_coords = false;
      coords.push_back({0.0, 0.0});
    } else {
      coords.push_back(
          {parse_double(f[2], loc(meta_path, lineno)), parse_double(f[3], loc(meta_path, lineno))});
    }
  }
  if (ds.patch_ids.empty()) throw DataError(meta_path + ": no patches");
  if (have_coords) ds.coordinates = std::move(coords);
  const std::size_t n = ds.patch_ids.size();

  // Series rows, keyed by (patch, day).
  std::ifstream ser(series_path);
  if (!ser) throw DataError("cannot open series file " + series_path);
  lineno = 0;
  std::getline(ser, line);
  ++lineno;
  if (line != "date,patch,susceptible,infected,recovered")
    throw DataError(loc(series_path, lineno) +
                    ": expected header 'date,patch,susceptible,infected,recovered'");
  std::map<std::int64_t, std::vector<std::array<double, 3>>> rows;  // day -> per-patch values
  std::map<std::int64_t, std::vector<bool>> seen;
  while (std::getline(ser, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) throw DataError(loc(series_path, lineno) + ": expected 5 fields");
    const std::int64_t day = parse_iso_date(f[0], loc(series_path, lineno));
    auto it = patch_index.find(f[1]);
    if (it == patch_index.end())
      throw DataError(loc(series_path, lineno) + ": unknown patch '" + f[1] + "'");
    std::array<double, 3> v;
    for (int k = 0; k < 3; ++k) {
      v[k] = parse_double(f[2 + k], loc(series_path, lineno));
      if (v[k] < 0) throw DataError(loc(series_path, lineno) + ": negative count");
    }
    auto& dayrow = rows[day];
    auto& dayseen = seen[day];
    if (dayrow.empty()) {
      dayrow.resize(n);
      dayseen.resize(n, false);
    }
    if (dayseen[it->second])
      throw DataError(loc(series_path, lineno) + ": duplicate row for patch '" + f[1] + "' on " +
                      f[0]);
    dayseen[it->second] = true;
    dayrow[it->second] = v;
  }
  if (rows.empty()) throw DataError(series_path + ": no data rows");

  const std::int64_t first = rows.begin()->first;
  const std::int64_t last = rows.rbegin()->first;
  const std::size_t t_len = static_cast<std::size_t>(last - first + 1);
  ds.first_day = first;
  ds.n_days = t_len;
  ds.series = Tensor({n, t_len, kNumFeatures});
  for (std::int64_t day = first; day <= last; ++day) {
    auto it = rows.find(day);
    if (it == rows.end())
      throw DataError(series_path + ": missing date " + iso_date(day));
    const auto& dayseen = seen[day];
    for (std::size_t p = 0; p < n; ++p) {
      if (!dayseen[p])
        throw DataError(series_path + ": missing row for patch '" + ds.patch_ids[p] + "' on " +
                        iso_date(day));
      for (std::size_t k = 0; k < kNumFeatures; ++k)
        ds.series[(p * t_len + static_cast<std::size_t>(day - first)) * kNumFeatures + k] =
            it->second[p][k];
    }
  }

  // Real data drifts: warn, do not reject, when S+I+R exceeds population.
  std::size_t drift = 0;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t t = 0; t < t_len; ++t) {
      const double s = ds.at(p, t, kSusceptible) + ds.at(p, t, kInfected) + ds.at(p, t, kRecovered);
      if (s > ds.population[p] * (1.0 + 1e-9)) ++drift;
    }
  if (drift > 0)
    std::cerr << "warning: " << drift << " patch-days with S+I+R above population in "
              << series_path << "\n";

  if (!adjacency_path.empty()) {
    std::ifstream adj(adjacency_path);
    if (!adj) throw DataError("cannot open adjacency file " + adjacency_path);
    lineno = 0;
    std::getline(adj, line);
    ++lineno;
    if (line != "src,dst")
      throw DataError(loc(adjacency_path, lineno) + ": expected header 'src,dst'");
    Tensor a({n, n});
    while (std::getline(adj, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 2) throw DataError(loc(adjacency_path, lineno) + ": expected 2 fields");
      auto si = patch_index.find(f[0]);
      auto di = patch_index.find(f[1]);
      if (si == patch_index.end() || di == patch_index.end())
        throw DataError(loc(adjacency_path, lineno) + ": unknown patch in edge");
      if (si->second == di->second)
        throw DataError(loc(adjacency_path, lineno) + ": self edge not allowed");
      a[si->second * n + di->second] = 1.0;
      a[di->second * n + si->second] = 1.0;
    }
    ds.geo_adjacency = std::move(a);
  }
  return ds;
}

void save_dataset(const EpidemicDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::size_t n = ds.n_patches(), t_len = ds.n_days;

  std::ofstream ser(fs::path(dir) / "series.csv");
  if (!ser) throw DataError("cannot write series.csv in " + dir);
  ser << "date,patch,susceptible,infected,recovered\n";
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t p = 0; p < n; ++p)
      ser << iso_date(ds.first_day + static_cast<std::int64_t>(t)) << "," << ds.patch_ids[p] << ","
          << fmt(ds.at(p, t, kSusceptible)) << "," << fmt(ds.at(p, t, kInfected)) << ","
          << fmt(ds.at(p, t, kRecovered)) << "\n";

  std::ofstream meta(fs::path(dir) / "meta.csv");
  if (!meta) throw DataError("cannot write meta.csv in " + dir);
  meta << "patch,population,lat,lon\n";
  for (std::size_t p = 0; p < n; ++p) {
    meta << ds.patch_ids[p] << "," << fmt(ds.population[p]) << ",";
    if (ds.coordinates)
      meta << fmt((*ds.coordinates)[p][0]) << "," << fmt((*ds.coordinates)[p][1]);
    else
      meta << ",";
    meta << "\n";
  }

  if (ds.geo_adjacency) {
    std::ofstream adj(fs::path(dir) / "adjacency.csv");
    if (!adj) throw DataError("cannot write adjacency.csv in " + dir);
    adj << "src,dst\n";
    const Tensor& a = *ds.geo_adjacency;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (a[i * n + j] != 0.0) adj << ds.patch_ids[i] << "," << ds.patch_ids[j] << "\n";
  }
}

SplitRanges chrono_split(const EpidemicDataset& ds, std::array<double, 3> ratios,
                         std::size_t t_in, std::size_t horizon) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("chrono_split: ratios must sum to 1, got " + std::to_string(total));
  const std::size_t t_len = ds.n_days;
  const auto part = [t_len](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(t_len) + 1e-9));
  };
  const std::size_t n_train = part(ratios[0]);
  const std::size_t n_val = part(ratios[1]);
  if (n_train + n_val > t_len) throw ConfigError("chrono_split: splits exceed series length");
  const std::size_t n_test = t_len - n_train - n_val;
  SplitRanges s;
  s.train = {0, n_train};
  s.val = {n_train, n_train + n_val};
  s.test = {n_train + n_val, t_len};
  const std::size_t need = t_in + horizon;
  const std::pair<const char*, DayRange> parts[] = {
      {"train", s.train}, {"val", s.val}, {"test", s.test}};
  for (const auto& [name, r] : parts)
    if (r.length() < need)
      throw ConfigError(std::string("chrono_split: ") + name + " split has " +
                        std::to_string(r.length()) + " days, needs at least " +
                        std::to_string(need));
  return s;
}

double Normalizer::normalize(std::size_t patch, std::size_t feature, double x) const {
  const std::size_t i = patch * kNumFeatures + feature;
  return (x - min_[i]) / (max_[i] - min_[i] + kEps);
}

double Normalizer::denormalize(std::size_t patch, std::size_t feature, double x) const {
  const std::size_t i = patch * kNumFeatures + feature;
  return x * (max_[i] - min_[i] + kEps) + min_[i];
}

Normalizer fit_normalizer(const EpidemicDataset& ds, DayRange train) {
  if (train.length() == 0) throw ContractError("fit_normalizer: empty training range");
  const std::size_t n = ds.n_patches();
  Tensor mn({n, kNumFeatures}, std::numeric_limits<double>::infinity());
  Tensor mx({n, kNumFeatures}, -std::numeric_limits<double>::infinity());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t t = train.begin; t < train.end; ++t)
      for (std::size_t k = 0; k < kNumFeatures; ++k) {
        const double v = ds.at(p, t, k);
        mn[p * kNumFeatures + k] = std::min(mn[p * kNumFeatures + k], v);
        mx[p * kNumFeatures + k] = std::max(mx[p * kNumFeatures + k], v);
      }
  return Normalizer(std::move(mn), std::move(mx));
}

WindowBatch make_windows(const EpidemicDataset& ds, const Normalizer& norm, DayRange range,
                         std::size_t t_in, std::size_t horizon) {
  if (range.length() < t_in + horizon)
    throw ConfigError("make_windows: range of " + std::to_string(range.length()) +
                      " days cannot fit t_in + horizon = " + std::to_string(t_in + horizon));
  WindowBatch wb;
  wb.n_patches = ds.n_patches();
  wb.t_in = t_in;
  wb.horizon = horizon;
  wb.n_windows = range.length() - t_in - horizon + 1;
  const std::size_t b = wb.n_windows, n = wb.n_patches;
  wb.inputs = Tensor({b, n, t_in, kNumFeatures});
  wb.raw_inputs = Tensor({b, n, t_in, kNumFeatures});
  wb.targets = Tensor({b, n, horizon});
  wb.raw_targets = Tensor({b, n, horizon});
  wb.raw_last = Tensor({b, n, kNumFeatures});
  for (std::size_t w = 0; w < b; ++w) {
    const std::size_t start = range.begin + w;
    wb.starts.push_back(start);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t t = 0; t < t_in; ++t)
        for (std::size_t k = 0; k < kNumFeatures; ++k) {
          const double raw = ds.at(p, start + t, k);
          const std::size_t idx = ((w * n + p) * t_in + t) * kNumFeatures + k;
          wb.raw_inputs[idx] = raw;
          wb.inputs[idx] = norm.normalize(p, k, raw);
        }
      for (std::size_t k = 0; k < kNumFeatures; ++k)
        wb.raw_last[(w * n + p) * kNumFeatures + k] = ds.at(p, start + t_in - 1, k);
      for (std::size_t l = 0; l < horizon; ++l) {
        const double raw = ds.at(p, start + t_in + l, kInfected);
        wb.raw_targets[(w * n + p) * horizon + l] = raw;
        wb.targets[(w * n + p) * horizon + l] = norm.normalize(p, kInfected, raw);
      }
    }
  }
  return wb;
}

namespace {

Tensor window_slice(const Tensor& t, std::size_t w, Shape shape) {
  const std::size_t sz = numel(shape);
  std::vector<double> v(t.data() + w * sz, t.data() + (w + 1) * sz);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

Tensor WindowBatch::input_window(std::size_t w) const {
  return window_slice(inputs, w, {n_patches, t_in, kNumFeatures});
}
Tensor WindowBatch::raw_last_window(std::size_t w) const {
  return window_slice(raw_last, w, {n_patches, kNumFeatures});
}
Tensor WindowBatch::target_window(std::size_t w) const {
  return window_slice(targets, w, {n_patches, horizon});
}
Tensor WindowBatch::raw_target_window(std::size_t w) const {
  return window_slice(raw_targets, w, {n_patches, horizon});
}

}  // namespace bdgstn
