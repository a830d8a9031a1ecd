#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "uxai/checkpoint.hpp"
#include "uxai/config.hpp"
#include "uxai/data.hpp"
#include "uxai/error.hpp"
#include "uxai/experiment.hpp"
#include "uxai/plot.hpp"

using namespace uxai;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void column_moments(const Tensor& t, std::size_t col, double& mean, double& sd) {
  const std::size_t rows = t.shape()[0], cols = t.shape()[1];
  mean = 0;
  for (std::size_t r = 0; r < rows; ++r) mean += t[r * cols + col];
  mean /= static_cast<double>(rows);
  double var = 0;
  for (std::size_t r = 0; r < rows; ++r) var += (t[r * cols + col] - mean) * (t[r * cols + col] - mean);
  sd = std::sqrt(var / static_cast<double>(rows));
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("CIFAR record layout") {
  const auto dir = oracle::scratch_dir("cifar-layout");
  CifarRecords rec;
  rec.labels = {7, 2};
  rec.pixels.resize(2 * kCifarPixels);
  for (std::size_t i = 0; i < rec.pixels.size(); ++i) rec.pixels[i] = static_cast<std::uint8_t>(i % 251);
  write_cifar10_file(dir / "b.bin", rec);
  const auto bytes = read_file(dir / "b.bin");
  REQUIRE(bytes.size() == 2 * 3073);
  CHECK(bytes[0] == 7);
  CHECK(bytes[3073] == 2);
  CHECK(bytes[1] == rec.pixels[0]);
  const auto back = read_cifar10_file(dir / "b.bin");
  CHECK(back.labels == rec.labels);
  CHECK(back.pixels == rec.pixels);
  std::ofstream(dir / "bad.bin", std::ios::binary) << std::string(3000, '\0');
  CHECK_THROWS_AS(read_cifar10_file(dir / "bad.bin"), FormatError);
}

TEST_CASE("stratified subset is balanced") {
  std::vector<std::uint8_t> labels;
  Rng gen(3);
  for (int i = 0; i < 5000; ++i) labels.push_back(static_cast<std::uint8_t>(gen.index(10)));
  Rng rng(1);
  const auto idx = stratified_subset(labels, 1000, 10, rng);
  REQUIRE(idx.size() == 1000);
  CHECK(std::is_sorted(idx.begin(), idx.end()));
  std::vector<int> count(10, 0);
  for (auto i : idx) count[labels[i]]++;
  for (int c : count) CHECK(c == 100);
  Rng small(1);
  CHECK_THROWS(stratified_subset(std::vector<std::uint8_t>{0, 0, 1}, 4, 2, small));
}

TEST_CASE("CIFAR loading standardizes per channel") {
  const auto dir = oracle::scratch_dir("cifar-load");
  write_synthetic_cifar10(dir, 100, 30, 2);
  const Dataset d = load_cifar10(dir, 50, 20, 0);
  CHECK(d.head == Head::Classification);
  CHECK(d.train.inputs.shape() == Shape{50, 3, 32, 32});
  CHECK(d.eval.inputs.shape() == Shape{20, 3, 32, 32});
  CHECK(d.features.mean.size() == 3);
  const auto again = load_cifar10(dir, 50, 20, 0);
  CHECK(again.train.inputs == d.train.inputs);
}

TEST_CASE("tabular CSV split and standardization") {
  const auto dir = oracle::scratch_dir("tabular");
  {
    std::ofstream out(dir / "toy.csv");
    out << "a,b,y\n";
    for (int i = 0; i < 40; ++i) out << i << "," << (i % 7) * 0.5 << "," << 2 * i + 1 << "\n";
  }
  const auto d = load_tabular_csv(dir / "toy.csv", "y", 0.25, 5);
  CHECK(d.train.inputs.shape() == Shape{30, 2});
  CHECK(d.eval.inputs.shape() == Shape{10, 2});
  CHECK(d.feature_names == std::vector<std::string>{"a", "b"});
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sd = 0;
    column_moments(d.train.inputs, c, mean, sd);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
  const auto same = load_tabular_csv(dir / "toy.csv", "y", 0.25, 5);
  CHECK(same.train.inputs == d.train.inputs);
  CHECK(same.eval.targets == d.eval.targets);
  const auto other = load_tabular_csv(dir / "toy.csv", "y", 0.25, 6);
  CHECK_FALSE(other.train.inputs == d.train.inputs);
  CHECK_THROWS_AS(load_tabular_csv(dir / "toy.csv", "missing", 0.25, 5), FormatError);
}

TEST_CASE("synthetic housing has the California schema") {
  const auto dir = oracle::scratch_dir("housing");
  write_synthetic_housing_csv(dir / "h.csv", 200, 1);
  const auto d = load_tabular_csv(dir / "h.csv", "MedHouseVal", 0.2, 0);
  CHECK(d.feature_names.size() == 8);
  CHECK(d.train.inputs.shape() == Shape{160, 8});
  CHECK(d.train.targets.shape() == Shape{160, 1});
  write_synthetic_housing_csv(dir / "h2.csv", 200, 1);
  CHECK(slurp(dir / "h.csv") == slurp(dir / "h2.csv"));
}

TEST_CASE("config parsing and validation") {
  auto cfg = ExperimentConfig::defaults_for("cifar10");
  CHECK(cfg.epochs == 15);
  CHECK(ExperimentConfig::defaults_for("housing").epochs == 100);
  CHECK_THROWS_AS(apply_json(cfg, nlohmann::json{{"epoch", 3}}), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, nlohmann::json{{"epochs", "three"}}), ConfigError);
  cfg.explainer = "lime";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::defaults_for("mnist").validate(), ConfigError);

  const auto a = ExperimentConfig::defaults_for("housing");
  auto b = a;
  CHECK(a.hash() == b.hash());
  b.output_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.explainer = "lime";
  CHECK(a.hash() != b.hash());
  CHECK(a.training_hash() == b.training_hash());
  b.epochs = 7;
  CHECK(a.training_hash() != b.training_hash());
  CHECK(config_from_json(to_json(b)).hash() == b.hash());
}

TEST_CASE("plot descriptions") {
  const std::string header = "test,uq,explainer,dataset,stage_fraction,metric_name,metric_value,seed\n";
  std::string weight = "# config_hash=x\n" + header;
  for (const char* st : {"0", "0.2", "0.4", "0.6", "0.8", "1"}) {
    weight += std::string("weight,dropout,gbp,cifar10,") + st + ",ssim_mean,0.5,0\n";
    weight += std::string("weight,dropout,gbp,cifar10,") + st + ",ssim_std,0.4,0\n";
  }
  weight += "weight,dropout,gbp,cifar10,all,verdict,pass,0\n";
  const auto rows = parse_report_csv(weight, "w.csv");
  const auto d = plot_description(rows);
  CHECK(d["chart"] == "line");
  REQUIRE(d["series"].size() == 2);
  CHECK(d["series"][0]["name"] == "ssim_mean");
  CHECK(d["series"][0]["x"].size() == 6);
  CHECK(render_svg(d).rfind("<svg", 0) == 0);

  const std::string data = header + "data,ensemble,lime,housing,true_labels,aggregate_sigma,0.1,0\n" +
                           "data,ensemble,lime,housing,random_labels,aggregate_sigma,0.2,0\n";
  const auto bars = plot_description(parse_report_csv(data, "d.csv"));
  CHECK(bars["chart"] == "bar");
  REQUIRE(bars["groups"].size() == 1);
  CHECK(bars["groups"][0]["bars"].size() == 2);

  CHECK_THROWS_AS(parse_report_csv(header, "empty.csv"), FormatError);
  CHECK_THROWS_AS(parse_report_csv("a,b\n1,2\n", "bad.csv"), FormatError);
}

TEST_CASE("experiment reruns hit the checkpoint cache") {
  const auto dir = oracle::scratch_dir("experiment");
  auto cfg = ExperimentConfig::defaults_for("synthetic_linear");
  cfg.synthetic_size = 200;
  cfg.epochs = 2;
  cfg.output_dir = dir.string();
  const auto first = run_experiment(cfg);
  CHECK_FALSE(first.cache_hit);
  CHECK(first.run_dir == dir / cfg.hash());
  const std::string csv = slurp(first.csv_path);
  const auto second = run_experiment(cfg);
  CHECK(second.cache_hit);
  CHECK(slurp(second.csv_path) == csv);
}

TEST_CASE("image experiment with the default pass count") {
  const auto dir = oracle::scratch_dir("experiment-cifar");
  auto cfg = ExperimentConfig::defaults_for("cifar10");
  cfg.synthetic_size = 40;
  cfg.train_subset = 40;
  cfg.eval_subset = 20;
  cfg.batch_size = 8;
  cfg.epochs = 1;
  cfg.eval_size = 2;
  cfg.export_maps = 0;
  cfg.output_dir = dir.string();
  const auto r = run_experiment(cfg);
  CHECK(r.report.samples == 20);
  CHECK(r.report.metric("0", "ssim_mean") == 1.0);
}

}  // TEST_SUITE
