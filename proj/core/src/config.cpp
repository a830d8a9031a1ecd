#include "uxai/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "uxai/error.hpp"
#include "uxai/hash.hpp"

namespace uxai {

namespace {

using Setter = std::function<void(ExperimentConfig&, const nlohmann::json&)>;

template <typename T>
Setter set(T ExperimentConfig::*field) {
  return [field](ExperimentConfig& cfg, const nlohmann::json& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("expected a number");
    } else {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError("expected a non-negative integer");
      }
    }
    cfg.*field = v.get<T>();
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"dataset", set(&ExperimentConfig::dataset)},
      {"data_path", set(&ExperimentConfig::data_path)},
      {"target_column", set(&ExperimentConfig::target_column)},
      {"test_fraction", set(&ExperimentConfig::test_fraction)},
      {"train_subset", set(&ExperimentConfig::train_subset)},
      {"eval_subset", set(&ExperimentConfig::eval_subset)},
      {"eval_size", set(&ExperimentConfig::eval_size)},
      {"synthetic_size", set(&ExperimentConfig::synthetic_size)},
      {"architecture", set(&ExperimentConfig::architecture)},
      {"uq", set(&ExperimentConfig::uq)},
      {"p", set(&ExperimentConfig::p)},
      {"members", set(&ExperimentConfig::members)},
      {"T", set(&ExperimentConfig::T)},
      {"explainer", set(&ExperimentConfig::explainer)},
      {"ig_steps", set(&ExperimentConfig::ig_steps)},
      {"lime_samples", set(&ExperimentConfig::lime_samples)},
      {"lime_kernel_width", set(&ExperimentConfig::lime_kernel_width)},
      {"lime_sigma", set(&ExperimentConfig::lime_sigma)},
      {"test", set(&ExperimentConfig::test)},
      {"epochs", set(&ExperimentConfig::epochs)},
      {"batch_size", set(&ExperimentConfig::batch_size)},
      {"learning_rate", set(&ExperimentConfig::learning_rate)},
      {"momentum", set(&ExperimentConfig::momentum)},
      {"optimizer", set(&ExperimentConfig::optimizer)},
      {"seed", set(&ExperimentConfig::seed)},
      {"rho_threshold", set(&ExperimentConfig::rho_threshold)},
      {"sigma_margin", set(&ExperimentConfig::sigma_margin)},
      {"ssim_final_max", set(&ExperimentConfig::ssim_final_max)},
      {"ssim_data_max", set(&ExperimentConfig::ssim_data_max)},
      {"export_maps", set(&ExperimentConfig::export_maps)},
      {"output_dir", set(&ExperimentConfig::output_dir)},
  };
  return table;
}

template <typename F>
auto as_config_error(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_for(const std::string& dataset) {
  ExperimentConfig cfg;
  cfg.dataset = dataset;
  if (dataset == "cifar10") {
    cfg.epochs = 15;
    cfg.synthetic_size = 5000;
  } else if (dataset == "housing") {
    cfg.learning_rate = 0.003;
  } else if (dataset == "synthetic_linear") {
    cfg.synthetic_size = 1000;
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (dataset != "cifar10" && dataset != "housing" && dataset != "synthetic_linear") {
    throw ConfigError("unknown dataset '" + dataset + "' (expected cifar10, housing or synthetic_linear)");
  }
  const auto kind = as_config_error("explainer", [&] { return explainer_spec().kind; });
  as_config_error("uq", [&] { return strategy(); });
  as_config_error("test", [&] { return sanity_test(); });
  const auto arch = as_config_error("architecture", [&] { return resolved_architecture(); });
  if (kind == ExplainerKind::Lime && dataset == "cifar10") {
    throw ConfigError("explainer 'lime' is tabular-only and cannot explain the cifar10 image dataset");
  }
  if ((dataset == "cifar10") != (arch == Architecture::CifarCnn)) {
    throw ConfigError("architecture '" + std::string(to_string(arch)) + "' does not fit dataset '" + dataset + "'");
  }
  if (optimizer != "sgd" && optimizer != "sgd_momentum") {
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected sgd or sgd_momentum)");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("p must lie in (0, 1)");
  if (members == 0) throw ConfigError("members must be positive");
  if (uq == "ensemble" && T != 0 && T != members) throw ConfigError("ensemble T must equal members");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (ig_steps == 0) throw ConfigError("ig_steps must be positive");
  if (lime_samples == 0) throw ConfigError("lime_samples must be positive");
  if (!(lime_sigma > 0.0) || lime_kernel_width < 0.0) throw ConfigError("invalid LIME parameters");
  if (!(sigma_margin >= 0.0)) throw ConfigError("sigma_margin must be non-negative");
  if (synthetic_size < 10 && data_path.empty()) throw ConfigError("synthetic_size too small");
}

Architecture ExperimentConfig::resolved_architecture() const {
  if (!architecture.empty()) return parse_architecture(architecture);
  if (dataset == "cifar10") return Architecture::CifarCnn;
  if (dataset == "synthetic_linear") return Architecture::Linear;
  return Architecture::HousingMlp;
}

UqStrategy ExperimentConfig::strategy() const {
  UqStrategy s;
  s.method = parse_uq_method(uq);
  s.p = static_cast<float>(p);
  s.members = members;
  if (s.method != UqMethod::Ensemble && T != 0) s.samples = T;
  return s;
}

ExplainerSpec ExperimentConfig::explainer_spec() const {
  ExplainerSpec spec;
  spec.kind = parse_explainer(explainer);
  spec.ig_steps = ig_steps;
  spec.lime.samples = lime_samples;
  spec.lime.kernel_width = lime_kernel_width;
  spec.lime.perturbation_sigma = lime_sigma;
  return spec;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = static_cast<float>(learning_rate);
  t.momentum = static_cast<float>(momentum);
  t.optimizer = optimizer == "sgd" ? Optimizer::Sgd : Optimizer::SgdMomentum;
  t.seed = seed;
  return t;
}

VerdictRules ExperimentConfig::rules() const {
  return VerdictRules{rho_threshold, sigma_margin, ssim_final_max, ssim_data_max};
}

SanityTest ExperimentConfig::sanity_test() const { return parse_sanity_test(test); }

std::string ExperimentConfig::hash() const {
  auto j = to_json(*this);
  j.erase("output_dir");
  return hex64(fnv1a(j.dump()));
}

std::string ExperimentConfig::training_hash() const {
  const auto j = to_json(*this);
  nlohmann::json t;
  for (const char* key : {"dataset", "data_path", "target_column", "test_fraction", "train_subset", "eval_subset",
                          "synthetic_size", "architecture", "uq", "p", "members", "epochs", "batch_size",
                          "learning_rate", "momentum", "optimizer", "seed"}) {
    t[key] = j.at(key);
  }
  t["architecture"] = std::string(to_string(resolved_architecture()));
  return hex64(fnv1a(t.dump()));
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return nlohmann::json{
      {"dataset", c.dataset},
      {"data_path", c.data_path},
      {"target_column", c.target_column},
      {"test_fraction", c.test_fraction},
      {"train_subset", c.train_subset},
      {"eval_subset", c.eval_subset},
      {"eval_size", c.eval_size},
      {"synthetic_size", c.synthetic_size},
      {"architecture", c.architecture},
      {"uq", c.uq},
      {"p", c.p},
      {"members", c.members},
      {"T", c.T},
      {"explainer", c.explainer},
      {"ig_steps", c.ig_steps},
      {"lime_samples", c.lime_samples},
      {"lime_kernel_width", c.lime_kernel_width},
      {"lime_sigma", c.lime_sigma},
      {"test", c.test},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"momentum", c.momentum},
      {"optimizer", c.optimizer},
      {"seed", c.seed},
      {"rho_threshold", c.rho_threshold},
      {"sigma_margin", c.sigma_margin},
      {"ssim_final_max", c.ssim_final_max},
      {"ssim_data_max", c.ssim_data_max},
      {"export_maps", c.export_maps},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig apply_json(ExperimentConfig base, const nlohmann::json& patch) {
  if (!patch.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : patch.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return base;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  std::string dataset = "housing";
  if (doc.is_object() && doc.contains("dataset")) {
    if (!doc["dataset"].is_string()) throw ConfigError("config key 'dataset': expected a string");
    dataset = doc["dataset"].get<std::string>();
  }
  return apply_json(ExperimentConfig::defaults_for(dataset), doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(doc);
}

}  // namespace uxai
