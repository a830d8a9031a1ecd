#include "uxai/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uxai/checkpoint.hpp"
#include "uxai/error.hpp"

namespace uxai {

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Cifar10Binary: return "cifar10";
    case DatasetKind::TabularCsv: return "tabular";
    case DatasetKind::SyntheticLinear: return "synthetic_linear";
  }
  return "unknown";
}

CifarRecords read_cifar10_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  CifarRecords out;
  out.labels.resize(n);
  out.pixels.resize(n * kCifarPixels);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = bytes.data() + i * kCifarRecordBytes;
    if (rec[0] >= kCifarClasses) {
      throw FormatError(path.string() + ": record " + std::to_string(i) + " has label " + std::to_string(rec[0]));
    }
    out.labels[i] = rec[0];
    std::copy(rec + 1, rec + kCifarRecordBytes, out.pixels.begin() + static_cast<std::ptrdiff_t>(i * kCifarPixels));
  }
  return out;
}

void write_cifar10_file(const std::filesystem::path& path, const CifarRecords& records) {
  if (records.pixels.size() != records.size() * kCifarPixels) throw InvalidArgument("CIFAR records: pixel count mismatch");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (std::size_t i = 0; i < records.size(); ++i) {
    bytes.push_back(records.labels[i]);
    const auto* px = records.pixels.data() + i * kCifarPixels;
    bytes.insert(bytes.end(), px, px + kCifarPixels);
  }
  write_file_atomic(path, bytes);
}

std::vector<std::size_t> stratified_subset(std::span<const std::uint8_t> labels, std::size_t n, std::size_t classes,
                                           Rng& rng) {
  if (classes == 0) throw InvalidArgument("stratified_subset needs at least one class");
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw InvalidArgument("label out of range in stratified_subset");
    by_class[labels[i]].push_back(i);
  }
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t want = n / classes + (c < n % classes ? 1 : 0);
    auto& pool = by_class[c];
    if (pool.size() < want) {
      throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) + " examples, " +
                            std::to_string(want) + " requested");
    }
    rng.shuffle(std::span(pool));
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

CifarRecords concat(std::vector<CifarRecords> parts) {
  CifarRecords out;
  for (auto& p : parts) {
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.pixels.insert(out.pixels.end(), p.pixels.begin(), p.pixels.end());
  }
  return out;
}

Split to_split(const CifarRecords& rec, const std::vector<std::size_t>& idx) {
  Split s;
  s.inputs = Tensor({idx.size(), 3, kCifarSide, kCifarSide});
  s.targets = Tensor({idx.size()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto* px = rec.pixels.data() + idx[r] * kCifarPixels;
    auto row = s.inputs.row(r);
    for (std::size_t j = 0; j < kCifarPixels; ++j) row[j] = static_cast<float>(px[j]) / 255.0f;
    s.targets[r] = static_cast<float>(rec.labels[idx[r]]);
  }
  return s;
}

std::vector<std::size_t> choose(const CifarRecords& rec, std::size_t subset, Rng& rng) {
  if (subset == 0 || subset == rec.size()) {
    std::vector<std::size_t> all(rec.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  return stratified_subset(rec.labels, subset, kCifarClasses, rng);
}

}  // namespace

Dataset load_cifar10(const std::filesystem::path& dir, std::size_t train_subset, std::size_t eval_subset,
                     std::uint64_t seed) {
  std::vector<CifarRecords> train_parts;
  for (int b = 1; b <= 5; ++b) {
    const auto p = dir / ("data_batch_" + std::to_string(b) + ".bin");
    if (std::filesystem::exists(p)) train_parts.push_back(read_cifar10_file(p));
  }
  if (train_parts.empty()) throw FormatError(dir.string() + ": no data_batch_*.bin files");
  const auto test_path = dir / "test_batch.bin";
  if (!std::filesystem::exists(test_path)) throw FormatError(dir.string() + ": missing test_batch.bin");
  const CifarRecords train = concat(std::move(train_parts));
  const CifarRecords test = read_cifar10_file(test_path);

  Rng rng(derive_seed(seed, 0x63696661));
  Dataset ds;
  ds.kind = DatasetKind::Cifar10Binary;
  ds.head = Head::Classification;
  ds.outputs = kCifarClasses;
  ds.train = to_split(train, choose(train, train_subset, rng));
  ds.eval = to_split(test, choose(test, eval_subset, rng));

  const std::size_t plane = kCifarSide * kCifarSide;
  ds.features.mean.assign(3, 0.0f);
  ds.features.stddev.assign(3, 1.0f);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < ds.train.size(); ++r) {
      const auto row = ds.train.inputs.row(r);
      for (std::size_t j = c * plane; j < (c + 1) * plane; ++j) {
        sum += row[j];
        sq += static_cast<double>(row[j]) * row[j];
      }
    }
    const double n = static_cast<double>(ds.train.size() * plane);
    const double mean = sum / n;
    const double sd = std::sqrt(std::max(sq / n - mean * mean, 0.0));
    ds.features.mean[c] = static_cast<float>(mean);
    ds.features.stddev[c] = static_cast<float>(sd > 1e-8 ? sd : 1.0);
  }
  for (Split* s : {&ds.train, &ds.eval})
    for (std::size_t r = 0; r < s->size(); ++r) {
      auto row = s->inputs.row(r);
      for (std::size_t j = 0; j < kCifarPixels; ++j) {
        const std::size_t c = j / plane;
        row[j] = (row[j] - ds.features.mean[c]) / ds.features.stddev[c];
      }
    }
  return ds;
}

namespace {

constexpr std::array<std::array<int, 3>, kCifarClasses> kPalette{{
    {{220, 40, 40}},
    {{40, 200, 60}},
    {{50, 70, 220}},
    {{230, 210, 40}},
    {{200, 60, 200}},
    {{40, 210, 210}},
    {{240, 140, 30}},
    {{245, 245, 245}},
    {{20, 20, 20}},
    {{120, 70, 30}},
}};

bool in_shape(std::size_t cls, double dx, double dy, double s) {
  const double ax = std::abs(dx), ay = std::abs(dy), r = std::hypot(dx, dy);
  switch (cls) {
    case 0: return ax <= s && ay <= s;
    case 1: return r <= s;
    case 2: return ax <= 1.5 * s && ay <= 0.35 * s;
    case 3: return ay <= 1.5 * s && ax <= 0.35 * s;
    case 4: return (ax <= 0.3 * s && ay <= s) || (ay <= 0.3 * s && ax <= s);
    case 5: return dy <= s && dy >= -s && ax <= (dy + s) / 2.0;
    case 6: return r <= s && r >= 0.6 * s;
    case 7: return std::abs(dx - dy) <= 0.45 * s && ax <= s && ay <= s;
    case 8: return (std::abs(dx - dy) <= 0.35 * s || std::abs(dx + dy) <= 0.35 * s) && ax <= s && ay <= s;
    default: return std::hypot(dx - 0.6 * s, dy) <= 0.45 * s || std::hypot(dx + 0.6 * s, dy) <= 0.45 * s;
  }
}

CifarRecords synthetic_images(std::size_t count, Rng& rng) {
  CifarRecords out;
  out.labels.resize(count);
  out.pixels.resize(count * kCifarPixels);
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % kCifarClasses;
    out.labels[i] = static_cast<std::uint8_t>(cls);
    std::array<double, 3> base{}, color{};
    for (std::size_t c = 0; c < 3; ++c) {
      base[c] = rng.uniform(60.0, 170.0);
      color[c] = std::clamp(kPalette[cls][c] + rng.normal(0.0, 20.0), 0.0, 255.0);
    }
    const double gx = rng.normal(0.0, 1.5), gy = rng.normal(0.0, 1.5);
    const double cx = rng.uniform(10.0, 22.0), cy = rng.uniform(10.0, 22.0), s = rng.uniform(5.0, 8.0);
    auto* px = out.pixels.data() + i * kCifarPixels;
    for (std::size_t y = 0; y < kCifarSide; ++y)
      for (std::size_t x = 0; x < kCifarSide; ++x) {
        const bool object = in_shape(cls, static_cast<double>(x) - cx, static_cast<double>(y) - cy, s);
        const double shade = gx * (static_cast<double>(x) - 16.0) + gy * (static_cast<double>(y) - 16.0);
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = (object ? color[c] : base[c] + shade) + rng.normal(0.0, 12.0);
          px[c * plane + y * kCifarSide + x] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
      }
  }
  return out;
}

}  // namespace

void write_synthetic_cifar10(const std::filesystem::path& dir, std::size_t train_count, std::size_t test_count,
                             std::uint64_t seed) {
  if (train_count == 0 || test_count == 0) throw InvalidArgument("synthetic CIFAR needs non-empty splits");
  std::filesystem::create_directories(dir);
  Rng train_rng(derive_seed(seed, 1));
  Rng test_rng(derive_seed(seed, 2));
  write_cifar10_file(dir / "data_batch_1.bin", synthetic_images(train_count, train_rng));
  write_cifar10_file(dir / "test_batch.bin", synthetic_images(test_count, test_rng));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

Dataset split_and_standardize(std::vector<std::vector<float>> features, std::vector<float> targets,
                              double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidArgument("test_fraction must lie in (0, 1)");
  const std::size_t n = targets.size();
  const std::size_t n_eval = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_eval == 0 || n_eval >= n) throw InvalidArgument("too few rows for a train/eval split");
  const std::size_t f = features.front().size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0x73706c74));
  rng.shuffle(std::span(order));
  const std::size_t n_train = n - n_eval;

  Dataset ds;
  ds.head = Head::Regression;
  ds.outputs = 1;
  ds.features.mean.assign(f, 0.0f);
  ds.features.stddev.assign(f, 1.0f);
  for (std::size_t j = 0; j < f; ++j) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < n_train; ++r) {
      const double v = features[order[r]][j];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / static_cast<double>(n_train);
    const double sd = std::sqrt(std::max(sq / static_cast<double>(n_train) - mean * mean, 0.0));
    ds.features.mean[j] = static_cast<float>(mean);
    ds.features.stddev[j] = static_cast<float>(sd > 1e-8 ? sd : 1.0);
  }
  double tsum = 0.0, tsq = 0.0;
  for (std::size_t r = 0; r < n_train; ++r) {
    tsum += targets[order[r]];
    tsq += static_cast<double>(targets[order[r]]) * targets[order[r]];
  }
  const double tmean = tsum / static_cast<double>(n_train);
  const double tsd = std::sqrt(std::max(tsq / static_cast<double>(n_train) - tmean * tmean, 0.0));
  ds.target_mean = static_cast<float>(tmean);
  ds.target_std = static_cast<float>(tsd > 1e-8 ? tsd : 1.0);

  auto fill = [&](Split& s, std::size_t begin, std::size_t end) {
    s.inputs = Tensor({end - begin, f});
    s.targets = Tensor({end - begin, 1});
    for (std::size_t r = begin; r < end; ++r) {
      auto row = s.inputs.row(r - begin);
      for (std::size_t j = 0; j < f; ++j) row[j] = (features[order[r]][j] - ds.features.mean[j]) / ds.features.stddev[j];
      s.targets[r - begin] = (targets[order[r]] - ds.target_mean) / ds.target_std;
    }
  };
  fill(ds.train, 0, n_train);
  fill(ds.eval, n_train, n);
  return ds;
}

}  // namespace

Dataset load_tabular_csv(const std::filesystem::path& path, std::string_view target_column, double test_fraction,
                         std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  const auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) throw FormatError(path.string() + ": missing column '" + std::string(target_column) + "'");
  const auto target_idx = static_cast<std::size_t>(target_it - header.begin());

  std::vector<std::vector<float>> features;
  std::vector<float> targets;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    }
    std::vector<float> row;
    row.reserve(header.size() - 1);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      float v = 0.0f;
      const auto& s = cells[c];
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw FormatError(path.string() + ": row " + std::to_string(line_no) + " column '" + header[c] +
                          "' is not numeric: '" + s + "'");
      }
      if (c == target_idx)
        targets.push_back(v);
      else
        row.push_back(v);
    }
    features.push_back(std::move(row));
  }
  if (targets.empty()) throw FormatError(path.string() + ": no data rows");
  if (header.size() < 2) throw FormatError(path.string() + ": no feature columns");

  Dataset ds = split_and_standardize(std::move(features), std::move(targets), test_fraction, seed);
  ds.kind = DatasetKind::TabularCsv;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_idx) ds.feature_names.push_back(header[c]);
  return ds;
}

void write_synthetic_housing_csv(const std::filesystem::path& path, std::size_t rows, std::uint64_t seed) {
  if (rows == 0) throw InvalidArgument("synthetic housing table needs rows");
  Rng rng(derive_seed(seed, 0x686f7573));
  std::string out = "MedInc,HouseAge,AveRooms,AveBedrms,Population,AveOccup,Latitude,Longitude,MedHouseVal\n";
  char buf[256];
  for (std::size_t i = 0; i < rows; ++i) {
    const double inc = std::clamp(std::exp(rng.normal(1.25, 0.45)), 0.5, 15.0);
    const double age = std::round(rng.uniform(1.0, 52.0));
    // Rare resort / dormitory blocks give the long right tails of the real
    // table's room, bedroom and occupancy averages.
    const bool resort = rng.bernoulli(0.01);
    const bool dorm = rng.bernoulli(0.005);
    double rooms = std::max(1.5, 3.5 + 0.45 * inc + rng.normal(0.0, 0.9));
    if (resort) rooms *= std::exp(rng.normal(1.0, 0.6));
    const double bedrms = std::max(0.5, 0.9 + 0.03 * rooms + rng.normal(0.0, 0.08)) * (resort ? 1.0 + rng.uniform(0.0, 1.5) : 1.0);
    const double pop = std::round(std::exp(rng.normal(7.0, 0.7)) * (dorm ? std::exp(rng.normal(0.8, 0.5)) : 1.0));
    double occup = std::max(1.0, std::exp(rng.normal(1.05, 0.3)));
    if (dorm) occup *= std::exp(rng.normal(1.5, 1.0));
    const bool south = rng.bernoulli(0.6);
    const double lat = south ? rng.normal(34.1, 0.6) : rng.normal(37.8, 0.8);
    const double lon = (south ? -118.3 : -122.1) + rng.normal(0.0, 0.7) - 0.4 * (lat - (south ? 34.1 : 37.8));
    // Distance to a coastline running roughly from (32.5, -117) to (42, -124.3).
    const double coast = (lon + 117.0) + 0.77 * (lat - 32.5);
    const double coastal = std::exp(-std::max(coast + 0.3, 0.0) / 0.6);
    const double value = 0.42 * inc - 0.012 * inc * inc + 0.004 * age + 1.1 * coastal + 0.08 * (rooms - 5.0) -
                         0.55 * std::log(std::min(occup, 10.0)) + rng.normal(0.0, 0.3);
    std::snprintf(buf, sizeof buf, "%.4f,%.0f,%.5f,%.5f,%.0f,%.5f,%.2f,%.2f,%.5f\n", inc, age, rooms, bedrms, pop,
                  occup, lat, lon, std::clamp(value, 0.15, 5.0));
    out += buf;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, out);
}

Dataset make_synthetic_linear(std::size_t rows, std::span<const float> weights, float noise, double test_fraction,
                              std::uint64_t seed) {
  if (weights.empty()) throw InvalidArgument("synthetic linear data needs at least one weight");
  if (rows < 2) throw InvalidArgument("synthetic linear data needs at least two rows");
  Rng rng(derive_seed(seed, 0x6c696e));
  std::vector<std::vector<float>> features(rows, std::vector<float>(weights.size()));
  std::vector<float> targets(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double y = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      features[r][j] = static_cast<float>(rng.normal());
      y += static_cast<double>(weights[j]) * features[r][j];
    }
    targets[r] = static_cast<float>(y + noise * rng.normal());
  }
  Dataset ds = split_and_standardize(std::move(features), std::move(targets), test_fraction, seed);
  ds.kind = DatasetKind::SyntheticLinear;
  for (std::size_t j = 0; j < weights.size(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
  return ds;
}

}  // namespace uxai
