// Copyright 2026 The FedCVU Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedcvu/harness/config.h"

#include <fstream>
#include <set>
#include <type_traits>

#include "fedcvu/errors.h"

namespace fedcvu::harness {
namespace {

using nlohmann::json;

constexpr Method kMethods[] = {
    Method::kFedCvu,         Method::kFedAvg,          Method::kFedProx,
    Method::kFedBn,          Method::kFedCvuNoVsNorm,  Method::kFedCvuNoCvAlign,
    Method::kFedCvuNoSla,
};

// Tracks which keys of a JSON object were consumed.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(Where("") + "must be an object");
  }

  bool Has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  void Get(const std::string& key, T& out) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    out = Convert<T>(obj_.at(key), Where(key));
  }

  Reader Child(const std::string& key) {
    seen_.insert(key);
    return Reader(obj_.at(key), path_.empty() ? key : path_ + "." + key);
  }

  void Finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + Where(key) + "'");
    }
  }

 private:
  std::string Where(const std::string& key) const {
    if (path_.empty()) return key;
    return key.empty() ? path_ : path_ + "." + key;
  }

  template <typename T>
  static T Convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ConfigError(where + ": must be >= 0");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(Convert<typename T::value_type>(
            v[i], where + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

data::PartitionRule ParsePartition(const std::string& s) {
  if (s == "strict") return data::PartitionRule::kStrict;
  if (s == "balanced") return data::PartitionRule::kBalanced;
  throw ConfigError("partition must be 'strict' or 'balanced', got '" + s + "'");
}

UnseenNorm ParseUnseenNorm(const std::string& s) {
  if (s == "mean") return UnseenNorm::kMean;
  if (s == "global_batch_recalib") return UnseenNorm::kGlobalBatchRecalib;
  throw ConfigError("unseen_norm must be 'mean' or 'global_batch_recalib', got '" + s + "'");
}

nn::NormKind ParseNorm(const std::string& s) {
  if (s == "batch") return nn::NormKind::kBatch;
  if (s == "layer") return nn::NormKind::kLayer;
  throw ConfigError("model.norm must be 'batch' or 'layer', got '" + s + "'");
}

nn::OptimizerKind ParseOptimizer(const std::string& s) {
  if (s == "adamw") return nn::OptimizerKind::kAdamW;
  if (s == "sgd") return nn::OptimizerKind::kSgd;
  throw ConfigError("optimizer.kind must be 'adamw' or 'sgd', got '" + s + "'");
}

server::SignatureMode ParseSignature(const std::string& s) {
  if (s == "full") return server::SignatureMode::kFull;
  if (s == "sketch") return server::SignatureMode::kSketch;
  throw ConfigError("sla.signature must be 'full' or 'sketch', got '" + s + "'");
}

}  // namespace

std::string_view MethodName(Method m) {
  switch (m) {
    case Method::kFedCvu: return "fedcvu";
    case Method::kFedAvg: return "fedavg";
    case Method::kFedProx: return "fedprox";
    case Method::kFedBn: return "fedbn";
    case Method::kFedCvuNoVsNorm: return "fedcvu_no_vsnorm";
    case Method::kFedCvuNoCvAlign: return "fedcvu_no_cvalign";
    case Method::kFedCvuNoSla: return "fedcvu_no_sla";
  }
  return "?";
}

Method ParseMethod(std::string_view name) {
  for (Method m : kMethods) {
    if (MethodName(m) == name) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

const std::vector<Method>& AllMethods() {
  static const std::vector<Method> all(std::begin(kMethods), std::end(kMethods));
  return all;
}

server::MethodToggles TogglesFor(Method m, double prox_mu) {
  switch (m) {
    case Method::kFedCvu: return {true, true, true, 0.0};
    case Method::kFedAvg: return {false, false, false, 0.0};
    case Method::kFedProx: return {false, false, false, prox_mu};
    case Method::kFedBn: return {true, false, false, 0.0};
    case Method::kFedCvuNoVsNorm: return {false, true, true, 0.0};
    case Method::kFedCvuNoCvAlign: return {true, false, true, 0.0};
    case Method::kFedCvuNoSla: return {true, true, false, 0.0};
  }
  throw ConfigError("unknown method");
}

ExperimentConfig::ExperimentConfig() {
  optimizer.lr = 1e-4;
  optimizer.weight_decay = 0.05;
}

data::SynthConfig ExperimentConfig::SynthFor(std::uint64_t seed) const {
  data::SynthConfig s = synth;
  s.seed = seed;
  return s;
}

server::FederationConfig ExperimentConfig::ToFederationConfig(std::uint64_t seed,
                                                              int threads) const {
  server::FederationConfig f;
  f.dims = model;
  f.dims.input_dim = synth.input_dim;
  f.dims.num_classes = synth.num_classes;
  f.toggles = TogglesFor(method, prox_mu);
  f.local.epochs = local_epochs;
  f.local.batch_size = batch_size;
  f.local.align_weight = align_weight;
  f.local.tau_temp = tau_temp;
  f.optimizer = optimizer;
  f.optimizer.total_steps = 0;
  f.total_rounds = cosine_schedule ? rounds : 0;
  f.sla = sla;
  f.signature = signature;
  f.proto_momentum = proto_momentum;
  f.threads = threads;
  f.seed = seed;
  return f;
}

void ExperimentConfig::Validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (clients < 1) throw ConfigError("clients must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (method == Method::kFedProx && !(prox_mu > 0)) {
    throw ConfigError("fedprox needs prox_mu > 0");
  }
  if (!(init_residual_scale > 0)) throw ConfigError("init_residual_scale must be positive");
  if (!(optimizer.lr > 0) || optimizer.weight_decay < 0) {
    throw ConfigError("optimizer lr must be positive and weight_decay >= 0");
  }
  synth.Validate();
  if (model.input_dim != synth.input_dim || model.num_classes != synth.num_classes) {
    throw ConfigError("model input_dim/num_classes must match synth");
  }
  const auto seen = static_cast<int>(synth.seen_views.size());
  if (partition == data::PartitionRule::kStrict && clients % seen != 0) {
    throw ConfigError("strict partition needs clients (" + std::to_string(clients) +
                      ") to be a multiple of the seen views (" + std::to_string(seen) + ")");
  }
  if (clients < seen) throw ConfigError("need at least one client per seen view");
  const auto fed = ToFederationConfig(seeds.front(), 0);
  fed.Validate(clients);
  if (fed.toggles.sla) {
    server::PayloadOptions opts;
    opts.include_norm = !fed.toggles.vs_norm;
    opts.bytes_per_param = sla.bytes_per_param;
    const auto spec = server::MakePayloadSpec(fed.dims, opts);
    server::SlaState::Create(sla, fed.dims.num_blocks, spec.block_bytes);
  }
}

ExperimentConfig ParseConfig(const json& doc) {
  ExperimentConfig c;
  Reader r(doc, "");
  std::string s;
  if (r.Has("method")) {
    r.Get("method", s);
    c.method = ParseMethod(s);
  }
  r.Get("rounds", c.rounds);
  r.Get("clients", c.clients);
  r.Get("local_epochs", c.local_epochs);
  r.Get("batch_size", c.batch_size);
  r.Get("seeds", c.seeds);
  if (r.Has("output_dir")) {
    r.Get("output_dir", s);
    c.output_dir = s;
  }
  if (r.Has("dataset_file")) {
    r.Get("dataset_file", s);
    c.dataset_file = s;
  }
  if (r.Has("partition")) {
    r.Get("partition", s);
    c.partition = ParsePartition(s);
  }
  if (r.Has("unseen_norm")) {
    r.Get("unseen_norm", s);
    c.unseen_norm = ParseUnseenNorm(s);
  }
  r.Get("prox_mu", c.prox_mu);

  if (r.Has("synth")) {
    auto sr = r.Child("synth");
    auto& y = c.synth;
    sr.Get("num_classes", y.num_classes);
    sr.Get("input_dim", y.input_dim);
    sr.Get("num_views", y.num_views);
    sr.Get("seen_views", y.seen_views);
    sr.Get("unseen_views", y.unseen_views);
    sr.Get("samples_per_class_per_view", y.samples_per_class_per_view);
    sr.Get("class_sep", y.class_sep);
    sr.Get("jitter_std", y.jitter_std);
    sr.Get("noise_std", y.noise_std);
    sr.Get("rotation_scale", y.rotation_scale);
    sr.Get("scale_min", y.scale_min);
    sr.Get("scale_max", y.scale_max);
    sr.Get("bias_std", y.bias_std);
    sr.Get("max_condition", y.max_condition);
    sr.Get("test_fraction", y.test_fraction);
    sr.Get("id_mode", y.id_mode);
    sr.Get("appearance_shift_std", y.appearance_shift_std);
    sr.Get("min_view_gap", y.min_view_gap);
    sr.Finish();
  }
  c.model.input_dim = c.synth.input_dim;
  c.model.num_classes = c.synth.num_classes;
  if (r.Has("model")) {
    auto mr = r.Child("model");
    mr.Get("input_dim", c.model.input_dim);
    mr.Get("num_classes", c.model.num_classes);
    mr.Get("width", c.model.width);
    mr.Get("num_blocks", c.model.num_blocks);
    if (mr.Has("norm")) {
      mr.Get("norm", s);
      c.model.norm_kind = ParseNorm(s);
    }
    mr.Get("init_residual_scale", c.init_residual_scale);
    mr.Finish();
  }
  if (r.Has("optimizer")) {
    auto orr = r.Child("optimizer");
    if (orr.Has("kind")) {
      orr.Get("kind", s);
      c.optimizer.kind = ParseOptimizer(s);
    }
    orr.Get("lr", c.optimizer.lr);
    orr.Get("weight_decay", c.optimizer.weight_decay);
    orr.Get("beta1", c.optimizer.beta1);
    orr.Get("beta2", c.optimizer.beta2);
    orr.Get("eps", c.optimizer.eps);
    orr.Get("cosine", c.cosine_schedule);
    orr.Finish();
  }
  if (r.Has("cv_align")) {
    auto ar = r.Child("cv_align");
    ar.Get("weight", c.align_weight);
    ar.Get("tau_temp", c.tau_temp);
    ar.Get("proto_momentum", c.proto_momentum);
    ar.Finish();
  }
  if (r.Has("sla")) {
    auto lr = r.Child("sla");
    auto& q = c.sla;
    lr.Get("budget_bytes", q.budget_bytes);
    lr.Get("budget_fraction", q.budget_fraction);
    lr.Get("decide_every", q.decide_every);
    lr.Get("lambda", q.lambda_cap);
    lr.Get("alpha", q.alpha);
    lr.Get("tau_kappa", q.tau_kappa);
    lr.Get("eta", q.eta);
    lr.Get("mandatory_blocks", q.mandatory_blocks);
    lr.Get("bytes_per_param", q.bytes_per_param);
    if (lr.Has("signature")) {
      lr.Get("signature", s);
      c.signature.mode = ParseSignature(s);
    }
    lr.Get("proj_dim", c.signature.proj_dim);
    lr.Finish();
  }
  r.Finish();
  return c;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return ParseConfig(doc);
}

json ToJson(const ExperimentConfig& c) {
  const auto& y = c.synth;
  json synth = {
      {"num_classes", y.num_classes},
      {"input_dim", y.input_dim},
      {"num_views", y.num_views},
      {"seen_views", y.seen_views},
      {"unseen_views", y.unseen_views},
      {"samples_per_class_per_view", y.samples_per_class_per_view},
      {"class_sep", y.class_sep},
      {"jitter_std", y.jitter_std},
      {"noise_std", y.noise_std},
      {"rotation_scale", y.rotation_scale},
      {"scale_min", y.scale_min},
      {"scale_max", y.scale_max},
      {"bias_std", y.bias_std},
      {"max_condition", y.max_condition},
      {"test_fraction", y.test_fraction},
      {"id_mode", y.id_mode},
      {"appearance_shift_std", y.appearance_shift_std},
      {"min_view_gap", y.min_view_gap},
  };
  json model = {
      {"input_dim", c.model.input_dim},
      {"num_classes", c.model.num_classes},
      {"width", c.model.width},
      {"num_blocks", c.model.num_blocks},
      {"norm", c.model.norm_kind == nn::NormKind::kBatch ? "batch" : "layer"},
      {"init_residual_scale", c.init_residual_scale},
  };
  json optimizer = {
      {"kind", c.optimizer.kind == nn::OptimizerKind::kAdamW ? "adamw" : "sgd"},
      {"lr", c.optimizer.lr},
      {"weight_decay", c.optimizer.weight_decay},
      {"beta1", c.optimizer.beta1},
      {"beta2", c.optimizer.beta2},
      {"eps", c.optimizer.eps},
      {"cosine", c.cosine_schedule},
  };
  json sla = {
      {"budget_fraction", c.sla.budget_fraction},
      {"decide_every", c.sla.decide_every},
      {"lambda", c.sla.lambda_cap},
      {"alpha", c.sla.alpha},
      {"tau_kappa", c.sla.tau_kappa},
      {"eta", c.sla.eta},
      {"mandatory_blocks", c.sla.mandatory_blocks},
      {"bytes_per_param", c.sla.bytes_per_param},
      {"signature", c.signature.mode == server::SignatureMode::kFull ? "full" : "sketch"},
      {"proj_dim", c.signature.proj_dim},
  };
  if (c.sla.budget_bytes >= 0) sla["budget_bytes"] = c.sla.budget_bytes;
  json doc = {
      {"method", std::string(MethodName(c.method))},
      {"rounds", c.rounds},
      {"clients", c.clients},
      {"local_epochs", c.local_epochs},
      {"batch_size", c.batch_size},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir.string()},
      {"partition", c.partition == data::PartitionRule::kStrict ? "strict" : "balanced"},
      {"unseen_norm", c.unseen_norm == UnseenNorm::kMean ? "mean" : "global_batch_recalib"},
      {"prox_mu", c.prox_mu},
      {"synth", synth},
      {"model", model},
      {"optimizer", optimizer},
      {"cv_align",
       {{"weight", c.align_weight},
        {"tau_temp", c.tau_temp},
        {"proto_momentum", c.proto_momentum}}},
      {"sla", sla},
  };
  if (!c.dataset_file.empty()) doc["dataset_file"] = c.dataset_file.string();
  return doc;
}

}  // namespace fedcvu::harness
