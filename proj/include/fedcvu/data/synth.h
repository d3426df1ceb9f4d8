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

#ifndef FEDCVU_DATA_SYNTH_H_
#define FEDCVU_DATA_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedcvu/nn/tensor.h"

namespace fedcvu::data {

using nn::Matrix;
using nn::Vector;

enum class ViewRole : std::uint8_t { kSeen = 0, kUnseen = 1 };

// One camera: x = transform * latent + bias + N(0, noise_std^2).
struct ViewSpec {
  int view_id = 0;
  Matrix<double> transform;
  Vector<double> bias;
  double noise_std = 0.0;
  ViewRole role = ViewRole::kSeen;
};

// How clients are laid over seen views.
enum class PartitionRule {
  kStrict,    // C must be a multiple of |seen|
  kBalanced,  // the first C mod |seen| views get one extra client
};

struct SynthConfig {
  int num_classes = 12;
  int input_dim = 32;
  int num_views = 8;
  std::vector<int> seen_views{0, 1, 2, 3, 4, 5};
  std::vector<int> unseen_views{6, 7};
  int samples_per_class_per_view = 120;
  // Expected distance between two class prototypes.
  double class_sep = 6.0;
  // Per-sample latent jitter around the class prototype (per coordinate).
  double jitter_std = 0.5;
  double noise_std = 0.1;
  // Skew-symmetric generator scale of the per-view Cayley rotation; 0 gives
  // identity rotations.
  double rotation_scale = 0.5;
  double scale_min = 0.7;
  double scale_max = 1.3;
  double bias_std = 0.5;
  double max_condition = 10.0;
  double test_fraction = 0.2;
  // Re-identification flavour: identities get smaller jitter plus a
  // per-(identity, view) appearance shift, and retrieval splits are built.
  bool id_mode = false;
  double appearance_shift_std = 0.3;
  // Heterogeneity margin checked by ViewHeterogeneityHolds.
  double min_view_gap = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError (overlapping / missing views, empty seen or unseen
  // set, non-positive sizes, bad ranges).
  void Validate() const;
  ViewRole RoleOf(int view_id) const;
};

// Examples stored column-wise: row i of `features` is example i.
struct Dataset {
  Matrix<float> features;
  std::vector<int> labels;  // 0-based
  std::vector<int> view_ids;
  std::vector<std::uint32_t> sample_ids;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Dataset Subset(const std::vector<std::size_t>& rows) const;
  static Dataset Concat(const std::vector<const Dataset*>& parts);
};

struct Benchmark {
  SynthConfig config;
  std::vector<ViewSpec> views;   // indexed by view id; empty when loaded
  Matrix<double> prototypes;     // [K, d_in]; empty when loaded
  std::vector<Dataset> per_view; // indexed by view id
};

// Pure function of the config (including seed).
Benchmark Generate(const SynthConfig& config);

// Expected feature mean of (class, view) implied by the generator
// parameters, ignoring appearance shifts.
Vector<double> ExpectedClassMean(const Benchmark& bench, int label, int view);

// Smallest over view pairs and classes of the distance between expected
// per-view class means.
double MinViewMeanGap(const Benchmark& bench);
bool ViewHeterogeneityHolds(const Benchmark& bench);

struct Shard {
  int client_id = 0;
  int view_id = 0;
  Dataset data;
  std::size_t n() const { return data.size(); }
};

// `seen_train` holds one dataset per seen view (in seen-view order). Each
// client receives a contiguous slice of exactly one view; a view's slices
// differ in size by at most one. Clients are numbered view-major.
std::vector<Shard> PartitionClients(const std::vector<Dataset>& seen_train,
                                    int num_clients,
                                    PartitionRule rule = PartitionRule::kStrict);

struct Splits {
  std::vector<Dataset> seen_train;  // per seen view, shuffled
  std::vector<Dataset> seen_test;   // per seen view
  Dataset seen_test_all;
  Dataset unseen_test;
  Dataset query;    // id_mode only
  Dataset gallery;  // id_mode only
  int excluded_identities = 0;
};

// Stratified train/test split of each seen view (test_fraction per class),
// all unseen-view samples as unseen test, and in id_mode a query/gallery
// split of the unseen samples in which every query identity also appears in
// the gallery. Identities with fewer than 2 unseen samples are excluded and
// counted.
Splits EvalSplits(const SynthConfig& config, const std::vector<Dataset>& per_view);

// Binary dump: "FEDCVUDS", u32 version, u32 d_in, u32 K, u32 n_views,
// u64 seed, then per view: i32 view_id, u8 role, u32 count, and count
// records of (u32 sample_id, i32 label, f32 x d_in). Little endian.
void SaveDataset(const Benchmark& bench, const std::filesystem::path& path);
std::vector<char> SerializeDataset(const Benchmark& bench);
// Loads per-view datasets; throws ConfigError when the file does not match
// the config's dimensions or view roles. The returned config carries the
// seed stored in the file, so splits derived from it are pinned as well.
Benchmark LoadDataset(const SynthConfig& config,
                      const std::filesystem::path& path);

}  // namespace fedcvu::data

#endif  // FEDCVU_DATA_SYNTH_H_
