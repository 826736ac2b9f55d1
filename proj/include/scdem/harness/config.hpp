#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scdem/engine.hpp"
#include "scdem/inference.hpp"
#include "scdem/pretrain.hpp"

namespace scdem {

/// One data source. Synthetic sources are Gaussian blobs generated from the
/// run seed; csv sources read `label,v1,...,v_dx` rows from disk.
struct DomainConfig {
  std::string name = "blobs";
  std::string kind = "synthetic";  // synthetic | csv
  std::size_t n_classes = 10;
  std::size_t per_class = 200;
  double separation = 10.0;
  std::string train_path;
  std::string test_path;
};

struct DataConfig {
  std::size_t input_dim = 32;
  std::size_t steps_per_domain = 5;
  std::vector<DomainConfig> domains{DomainConfig{}};
};

/// Stand-in backbones: count, architecture, and their synthetic source tasks.
struct BackbonesConfig {
  std::size_t count = 2;
  BackboneConfig arch{};
  PretrainConfig pretrain{};
  std::size_t source_classes = 8;
  std::size_t source_per_class = 100;
  double source_separation = 6.0;
  std::string checkpoint;  // load pretrained backbones from here instead
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  DataConfig data{};
  BackbonesConfig backbones{};
  TrainConfig train{};
  RoutingConfig routing{};

  void validate() const {
    if (data.domains.empty()) throw ConfigurationError("data.domains must list at least one domain");
    if (data.input_dim < 1) throw ConfigurationError("data.input_dim must be >= 1");
    for (const auto& d : data.domains) {
      if (d.kind != "synthetic" && d.kind != "csv") {
        throw ConfigurationError("domain '" + d.name + "': unknown kind '" + d.kind + "'");
      }
      if (d.n_classes < 2) throw ConfigurationError("domain '" + d.name + "': n_classes must be >= 2");
      if (d.kind == "csv" && (d.train_path.empty() || d.test_path.empty())) {
        throw ConfigurationError("domain '" + d.name + "': csv domains need train and test paths");
      }
    }
    if (backbones.count < 1) throw ConfigurationError("backbones.count must be >= 1");
    if (backbones.arch.input_dim != data.input_dim) {
      throw ConfigurationError("backbone input_dim must equal data.input_dim");
    }
    train.validate();
    routing.validate();
  }
};

namespace detail {

using nlohmann::json;

// Rejects keys outside `allowed` so typos fail loudly.
inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigurationError(where + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.count(key)) throw ConfigurationError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigurationError(where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config", {"seed", "data", "backbones", "train", "ot", "routing"});
  read(j, "seed", c.seed, "config");

  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::check_keys(d, "data", {"input_dim", "steps_per_domain", "domains"});
    read(d, "input_dim", c.data.input_dim, "data");
    read(d, "steps_per_domain", c.data.steps_per_domain, "data");
    if (d.contains("domains")) {
      if (!d["domains"].is_array()) throw ConfigurationError("data.domains must be an array");
      c.data.domains.clear();
      for (const auto& jd : d["domains"]) {
        DomainConfig dc;
        detail::check_keys(jd, "data.domains[]",
                           {"name", "kind", "n_classes", "per_class", "separation", "train_path", "test_path"});
        read(jd, "name", dc.name, "domain");
        read(jd, "kind", dc.kind, "domain");
        read(jd, "n_classes", dc.n_classes, "domain");
        read(jd, "per_class", dc.per_class, "domain");
        read(jd, "separation", dc.separation, "domain");
        read(jd, "train_path", dc.train_path, "domain");
        read(jd, "test_path", dc.test_path, "domain");
        c.data.domains.push_back(std::move(dc));
      }
    }
  }
  c.backbones.arch.input_dim = c.data.input_dim;

  if (j.contains("backbones")) {
    const auto& b = j["backbones"];
    detail::check_keys(b, "backbones",
                       {"count", "trunk_depth", "trunk_width", "tail_depth", "feature_dim", "activation",
                        "source_classes", "source_per_class", "source_separation", "pretrain_max_epochs",
                        "pretrain_batch_size", "pretrain_target_accuracy", "pretrain_lr", "checkpoint"});
    read(b, "count", c.backbones.count, "backbones");
    read(b, "trunk_depth", c.backbones.arch.trunk_depth, "backbones");
    read(b, "trunk_width", c.backbones.arch.trunk_width, "backbones");
    read(b, "tail_depth", c.backbones.arch.tail_depth, "backbones");
    read(b, "feature_dim", c.backbones.arch.feature_dim, "backbones");
    if (b.contains("activation")) {
      std::string act;
      read(b, "activation", act, "backbones");
      c.backbones.arch.activation = parse_activation(act);
    }
    read(b, "source_classes", c.backbones.source_classes, "backbones");
    read(b, "source_per_class", c.backbones.source_per_class, "backbones");
    read(b, "source_separation", c.backbones.source_separation, "backbones");
    read(b, "pretrain_max_epochs", c.backbones.pretrain.max_epochs, "backbones");
    read(b, "pretrain_batch_size", c.backbones.pretrain.batch_size, "backbones");
    read(b, "pretrain_target_accuracy", c.backbones.pretrain.target_accuracy, "backbones");
    read(b, "pretrain_lr", c.backbones.pretrain.adam.lr, "backbones");
    read(b, "checkpoint", c.backbones.checkpoint, "backbones");
  }

  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t, "train",
                       {"lambda_cls", "lambda_com", "lambda_fused", "lambda_fdc", "epochs_per_task", "batch_size",
                        "lr", "beta1", "beta2", "adam_eps", "expert_dim", "regularizer_mode"});
    read(t, "lambda_cls", c.train.lambda_cls, "train");
    read(t, "lambda_com", c.train.lambda_com, "train");
    read(t, "lambda_fused", c.train.lambda_fused, "train");
    read(t, "lambda_fdc", c.train.lambda_fdc, "train");
    read(t, "epochs_per_task", c.train.epochs_per_task, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "lr", c.train.adam.lr, "train");
    read(t, "beta1", c.train.adam.beta1, "train");
    read(t, "beta2", c.train.adam.beta2, "train");
    read(t, "adam_eps", c.train.adam.eps, "train");
    read(t, "expert_dim", c.train.expert_dim, "train");
    if (t.contains("regularizer_mode")) {
      std::string mode;
      read(t, "regularizer_mode", mode, "train");
      c.train.mode = parse_regularizer_mode(mode);
    }
  }

  if (j.contains("ot")) {
    const auto& o = j["ot"];
    detail::check_keys(o, "ot", {"epsilon", "max_iters", "tol"});
    read(o, "epsilon", c.train.ot.epsilon, "ot");
    read(o, "max_iters", c.train.ot.max_iters, "ot");
    read(o, "tol", c.train.ot.tol, "ot");
  }

  if (j.contains("routing")) {
    const auto& r = j["routing"];
    detail::check_keys(r, "routing", {"gamma", "temperature"});
    read(r, "gamma", c.routing.gamma, "routing");
    read(r, "temperature", c.routing.temperature, "routing");
  }
  c.validate();
  return c;
}

/// Full config with every default filled in; parse_config(to_json(c)) == c.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["data"]["input_dim"] = c.data.input_dim;
  j["data"]["steps_per_domain"] = c.data.steps_per_domain;
  j["data"]["domains"] = nlohmann::json::array();
  for (const auto& d : c.data.domains) {
    nlohmann::json jd{{"name", d.name}, {"kind", d.kind}, {"n_classes", d.n_classes}};
    if (d.kind == "synthetic") {
      jd["per_class"] = d.per_class;
      jd["separation"] = d.separation;
    } else {
      jd["train_path"] = d.train_path;
      jd["test_path"] = d.test_path;
    }
    j["data"]["domains"].push_back(std::move(jd));
  }
  const auto& b = c.backbones;
  j["backbones"] = {{"count", b.count},
                    {"trunk_depth", b.arch.trunk_depth},
                    {"trunk_width", b.arch.trunk_width},
                    {"tail_depth", b.arch.tail_depth},
                    {"feature_dim", b.arch.feature_dim},
                    {"activation", to_string(b.arch.activation)},
                    {"source_classes", b.source_classes},
                    {"source_per_class", b.source_per_class},
                    {"source_separation", b.source_separation},
                    {"pretrain_max_epochs", b.pretrain.max_epochs},
                    {"pretrain_batch_size", b.pretrain.batch_size},
                    {"pretrain_target_accuracy", b.pretrain.target_accuracy},
                    {"pretrain_lr", b.pretrain.adam.lr}};
  if (!b.checkpoint.empty()) j["backbones"]["checkpoint"] = b.checkpoint;
  const auto& t = c.train;
  j["train"] = {{"lambda_cls", t.lambda_cls},
                {"lambda_com", t.lambda_com},
                {"lambda_fused", t.lambda_fused},
                {"lambda_fdc", t.lambda_fdc},
                {"epochs_per_task", t.epochs_per_task},
                {"batch_size", t.batch_size},
                {"lr", t.adam.lr},
                {"beta1", t.adam.beta1},
                {"beta2", t.adam.beta2},
                {"adam_eps", t.adam.eps},
                {"expert_dim", t.expert_dim},
                {"regularizer_mode", to_string(t.mode)}};
  j["ot"] = {{"epsilon", t.ot.epsilon}, {"max_iters", t.ot.max_iters}, {"tol", t.ot.tol}};
  j["routing"] = {{"gamma", c.routing.gamma}, {"temperature", c.routing.temperature}};
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(j);
}

}  // namespace scdem
