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

#include "fedcvu/data/synth.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/SVD>

#include "fedcvu/errors.h"

namespace fedcvu::data {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'D', 'C', 'V', 'U', 'D', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

// Stream tags so splitting never consumes the generator's stream.
constexpr std::uint64_t kSplitStream = 0x5u;

}  // namespace

void SynthConfig::Validate() const {
  if (num_classes < 1 || input_dim < 1 || num_views < 2 ||
      samples_per_class_per_view < 1) {
    throw ConfigError("synth: sizes must be positive and num_views >= 2");
  }
  if (seen_views.empty() || unseen_views.empty()) {
    throw ConfigError("synth: need at least one seen and one unseen view");
  }
  std::set<int> seen(seen_views.begin(), seen_views.end());
  std::set<int> unseen(unseen_views.begin(), unseen_views.end());
  if (seen.size() != seen_views.size() || unseen.size() != unseen_views.size()) {
    throw ConfigError("synth: duplicate view ids");
  }
  for (int v : seen) {
    if (unseen.count(v)) {
      throw ConfigError("synth: view " + std::to_string(v) +
                        " is both seen and unseen");
    }
  }
  if (static_cast<int>(seen.size() + unseen.size()) != num_views ||
      *seen.begin() < 0 || *unseen.begin() < 0 ||
      std::max(*seen.rbegin(), *unseen.rbegin()) >= num_views) {
    throw ConfigError("synth: seen and unseen views must cover 0.." +
                      std::to_string(num_views - 1));
  }
  if (class_sep <= 0 || jitter_std < 0 || noise_std < 0 || bias_std < 0 ||
      rotation_scale < 0 || appearance_shift_std < 0) {
    throw ConfigError("synth: negative spread parameters");
  }
  if (!(scale_min > 0 && scale_min <= scale_max)) {
    throw ConfigError("synth: need 0 < scale_min <= scale_max");
  }
  if (max_condition < 1) throw ConfigError("synth: max_condition must be >= 1");
  if (!(test_fraction > 0 && test_fraction < 1)) {
    throw ConfigError("synth: test_fraction must be in (0, 1)");
  }
}

ViewRole SynthConfig::RoleOf(int view_id) const {
  return std::find(seen_views.begin(), seen_views.end(), view_id) !=
                 seen_views.end()
             ? ViewRole::kSeen
             : ViewRole::kUnseen;
}

Dataset Dataset::Subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.view_ids.reserve(rows.size());
  out.sample_ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(r));
    out.labels.push_back(labels[r]);
    out.view_ids.push_back(view_ids[r]);
    out.sample_ids.push_back(sample_ids[r]);
  }
  return out;
}

Dataset Dataset::Concat(const std::vector<const Dataset*>& parts) {
  Dataset out;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto* p : parts) {
    rows += p->features.rows();
    if (p->features.rows() > 0) cols = p->features.cols();
  }
  out.features.resize(rows, cols);
  Eigen::Index at = 0;
  for (const auto* p : parts) {
    if (p->features.rows() == 0) continue;
    out.features.middleRows(at, p->features.rows()) = p->features;
    at += p->features.rows();
    out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
    out.view_ids.insert(out.view_ids.end(), p->view_ids.begin(),
                        p->view_ids.end());
    out.sample_ids.insert(out.sample_ids.end(), p->sample_ids.begin(),
                          p->sample_ids.end());
  }
  return out;
}

namespace {

double ConditionNumber(const Matrix<double>& m) {
  Eigen::JacobiSVD<Matrix<double>> svd(m);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) <= 0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

// Cayley transform of a random skew-symmetric generator: orthonormal, and
// the identity when scale == 0.
Matrix<double> RandomRotation(int d, double scale, std::mt19937_64& rng,
                              std::normal_distribution<double>& normal) {
  Matrix<double> g(d, d);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  Matrix<double> skew = (g - g.transpose()) * (scale / std::sqrt(2.0 * d));
  Matrix<double> eye = Matrix<double>::Identity(d, d);
  return (eye - skew).partialPivLu().solve(eye + skew);
}

}  // namespace

Benchmark Generate(const SynthConfig& config) {
  config.Validate();
  const int d = config.input_dim;
  const int k = config.num_classes;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(config.scale_min,
                                                 config.scale_max);

  Benchmark bench;
  bench.config = config;
  bench.prototypes.resize(k, d);
  const double proto_std = config.class_sep / std::sqrt(2.0 * d);
  for (Eigen::Index i = 0; i < bench.prototypes.size(); ++i) {
    bench.prototypes.data()[i] = proto_std * normal(rng);
  }

  for (int v = 0; v < config.num_views; ++v) {
    ViewSpec view;
    view.view_id = v;
    view.role = config.RoleOf(v);
    view.noise_std = config.noise_std;
    for (int attempt = 0;; ++attempt) {
      Matrix<double> rot = RandomRotation(d, config.rotation_scale, rng, normal);
      Vector<double> scales(d);
      for (int j = 0; j < d; ++j) scales(j) = uniform(rng);
      view.transform = rot * scales.asDiagonal();
      if (ConditionNumber(view.transform) <= config.max_condition) break;
      if (attempt >= 100) {
        throw ConfigError("synth: cannot draw a view transform within "
                          "max_condition");
      }
    }
    view.bias.resize(d);
    for (int j = 0; j < d; ++j) view.bias(j) = config.bias_std * normal(rng);
    bench.views.push_back(std::move(view));
  }

  const double jitter =
      config.id_mode ? 0.5 * config.jitter_std : config.jitter_std;
  const int per_cell = config.samples_per_class_per_view;
  std::uint32_t next_id = 0;
  for (const auto& view : bench.views) {
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(k) * per_cell, d);
    Vector<double> latent(d);
    Vector<double> shift = Vector<double>::Zero(d);
    Eigen::Index row = 0;
    for (int c = 0; c < k; ++c) {
      if (config.id_mode) {
        for (int j = 0; j < d; ++j) {
          shift(j) = config.appearance_shift_std * normal(rng);
        }
      }
      for (int s = 0; s < per_cell; ++s, ++row) {
        for (int j = 0; j < d; ++j) {
          latent(j) = bench.prototypes(c, j) + shift(j) + jitter * normal(rng);
        }
        Vector<double> x = view.transform * latent + view.bias;
        for (int j = 0; j < d; ++j) x(j) += view.noise_std * normal(rng);
        ds.features.row(row) = x.transpose().cast<float>();
        ds.labels.push_back(c);
        ds.view_ids.push_back(view.view_id);
        ds.sample_ids.push_back(next_id++);
      }
    }
    bench.per_view.push_back(std::move(ds));
  }
  return bench;
}

Vector<double> ExpectedClassMean(const Benchmark& bench, int label, int view) {
  const auto& spec = bench.views.at(static_cast<std::size_t>(view));
  return spec.transform * bench.prototypes.row(label).transpose() + spec.bias;
}

double MinViewMeanGap(const Benchmark& bench) {
  double gap = std::numeric_limits<double>::infinity();
  const int n_views = static_cast<int>(bench.views.size());
  for (int v = 0; v < n_views; ++v) {
    for (int w = v + 1; w < n_views; ++w) {
      for (int c = 0; c < bench.prototypes.rows(); ++c) {
        gap = std::min(gap, (ExpectedClassMean(bench, c, v) -
                             ExpectedClassMean(bench, c, w))
                                .norm());
      }
    }
  }
  return gap;
}

bool ViewHeterogeneityHolds(const Benchmark& bench) {
  return MinViewMeanGap(bench) >= bench.config.min_view_gap;
}

std::vector<Shard> PartitionClients(const std::vector<Dataset>& seen_train,
                                    int num_clients, PartitionRule rule) {
  const int n_views = static_cast<int>(seen_train.size());
  if (n_views == 0) throw ConfigError("partition: no seen views");
  if (num_clients < n_views) {
    throw ConfigError("partition: " + std::to_string(num_clients) +
                      " clients cannot cover " + std::to_string(n_views) +
                      " seen views");
  }
  if (rule == PartitionRule::kStrict && num_clients % n_views != 0) {
    throw ConfigError("partition: " + std::to_string(num_clients) +
                      " clients is not a multiple of " +
                      std::to_string(n_views) + " seen views");
  }
  std::vector<Shard> shards;
  int client = 0;
  for (int v = 0; v < n_views; ++v) {
    const int per_view =
        num_clients / n_views + (v < num_clients % n_views ? 1 : 0);
    const auto& ds = seen_train[static_cast<std::size_t>(v)];
    const std::size_t n = ds.size();
    if (n < static_cast<std::size_t>(per_view)) {
      throw ConfigError("partition: view has fewer samples than clients");
    }
    std::size_t start = 0;
    for (int j = 0; j < per_view; ++j) {
      const std::size_t len =
          n / per_view + (static_cast<std::size_t>(j) < n % per_view ? 1 : 0);
      std::vector<std::size_t> rows(len);
      std::iota(rows.begin(), rows.end(), start);
      start += len;
      Shard shard;
      shard.client_id = client++;
      shard.view_id = ds.view_ids.empty() ? -1 : ds.view_ids.front();
      shard.data = ds.Subset(rows);
      shards.push_back(std::move(shard));
    }
  }
  return shards;
}

Splits EvalSplits(const SynthConfig& config,
                  const std::vector<Dataset>& per_view) {
  config.Validate();
  if (static_cast<int>(per_view.size()) != config.num_views) {
    throw ConfigError("eval splits: expected one dataset per view");
  }
  std::mt19937_64 rng(config.seed ^ (kSplitStream << 56));
  Splits splits;

  for (int v : config.seen_views) {
    const auto& ds = per_view[static_cast<std::size_t>(v)];
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(config.num_classes));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    }
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (auto& rows : by_class) {
      std::shuffle(rows.begin(), rows.end(), rng);
      const auto n_test = static_cast<std::size_t>(
          std::llround(config.test_fraction * static_cast<double>(rows.size())));
      test_rows.insert(test_rows.end(), rows.begin(),
                       rows.begin() + static_cast<std::ptrdiff_t>(n_test));
      train_rows.insert(train_rows.end(),
                        rows.begin() + static_cast<std::ptrdiff_t>(n_test),
                        rows.end());
    }
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    splits.seen_train.push_back(ds.Subset(train_rows));
    splits.seen_test.push_back(ds.Subset(test_rows));
  }
  std::vector<const Dataset*> parts;
  for (const auto& t : splits.seen_test) parts.push_back(&t);
  splits.seen_test_all = Dataset::Concat(parts);

  parts.clear();
  for (int v : config.unseen_views) {
    parts.push_back(&per_view[static_cast<std::size_t>(v)]);
  }
  splits.unseen_test = Dataset::Concat(parts);

  if (config.id_mode) {
    const auto& unseen = splits.unseen_test;
    std::vector<std::vector<std::size_t>> by_id(
        static_cast<std::size_t>(config.num_classes));
    for (std::size_t i = 0; i < unseen.size(); ++i) {
      by_id[static_cast<std::size_t>(unseen.labels[i])].push_back(i);
    }
    std::vector<std::size_t> query_rows;
    std::vector<std::size_t> gallery_rows;
    for (auto& rows : by_id) {
      if (rows.size() < 2) {
        if (!rows.empty()) ++splits.excluded_identities;
        continue;
      }
      std::shuffle(rows.begin(), rows.end(), rng);
      const std::size_t n_query = std::max<std::size_t>(1, rows.size() / 4);
      query_rows.insert(query_rows.end(), rows.begin(),
                        rows.begin() + static_cast<std::ptrdiff_t>(n_query));
      gallery_rows.insert(gallery_rows.end(),
                          rows.begin() + static_cast<std::ptrdiff_t>(n_query),
                          rows.end());
    }
    std::sort(query_rows.begin(), query_rows.end());
    std::sort(gallery_rows.begin(), gallery_rows.end());
    splits.query = unseen.Subset(query_rows);
    splits.gallery = unseen.Subset(gallery_rows);
  }
  return splits;
}

namespace {

template <typename T>
void Put(std::vector<char>& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T Take(const std::vector<char>& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw ConfigError("dataset file truncated");
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

std::vector<char> SerializeDataset(const Benchmark& bench) {
  const auto& cfg = bench.config;
  std::vector<char> out(kMagic, kMagic + sizeof(kMagic));
  Put<std::uint32_t>(out, kFormatVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.input_dim));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.num_classes));
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(bench.per_view.size()));
  Put<std::uint64_t>(out, cfg.seed);
  for (std::size_t v = 0; v < bench.per_view.size(); ++v) {
    const auto& ds = bench.per_view[v];
    Put<std::int32_t>(out, static_cast<std::int32_t>(v));
    Put<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.RoleOf(static_cast<int>(v))));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
      Put<std::uint32_t>(out, ds.sample_ids[i]);
      Put<std::int32_t>(out, ds.labels[i]);
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        Put<float>(out, ds.features(static_cast<Eigen::Index>(i), j));
      }
    }
  }
  return out;
}

void SaveDataset(const Benchmark& bench, const std::filesystem::path& path) {
  const auto bytes = SerializeDataset(bench);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

Benchmark LoadDataset(const SynthConfig& config,
                      const std::filesystem::path& path) {
  config.Validate();
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open dataset file " + path.string());
  std::vector<char> in((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  if (in.size() < sizeof(kMagic) ||
      std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path.string() + " is not a dataset file");
  }
  std::size_t at = sizeof(kMagic);
  const auto version = Take<std::uint32_t>(in, at);
  if (version != kFormatVersion) {
    throw ConfigError("unsupported dataset version " + std::to_string(version));
  }
  const auto d = Take<std::uint32_t>(in, at);
  const auto k = Take<std::uint32_t>(in, at);
  const auto n_views = Take<std::uint32_t>(in, at);
  const auto seed = Take<std::uint64_t>(in, at);
  if (static_cast<int>(d) != config.input_dim ||
      static_cast<int>(k) != config.num_classes ||
      static_cast<int>(n_views) != config.num_views) {
    throw ConfigError("dataset file dimensions do not match the config");
  }
  Benchmark bench;
  bench.config = config;
  bench.config.seed = seed;
  for (std::uint32_t v = 0; v < n_views; ++v) {
    const auto view_id = Take<std::int32_t>(in, at);
    const auto role = static_cast<ViewRole>(Take<std::uint8_t>(in, at));
    if (view_id != static_cast<std::int32_t>(v) || role != config.RoleOf(view_id)) {
      throw ConfigError("dataset file view roles do not match the config");
    }
    const auto count = Take<std::uint32_t>(in, at);
    Dataset ds;
    ds.features.resize(count, d);
    for (std::uint32_t i = 0; i < count; ++i) {
      ds.sample_ids.push_back(Take<std::uint32_t>(in, at));
      const auto label = Take<std::int32_t>(in, at);
      if (label < 0 || label >= static_cast<std::int32_t>(k)) {
        throw ConfigError("dataset file label out of range");
      }
      ds.labels.push_back(label);
      ds.view_ids.push_back(view_id);
      for (std::uint32_t j = 0; j < d; ++j) ds.features(i, j) = Take<float>(in, at);
    }
    bench.per_view.push_back(std::move(ds));
  }
  if (at != in.size()) throw ConfigError("trailing bytes in dataset file");
  return bench;
}

}  // namespace fedcvu::data
