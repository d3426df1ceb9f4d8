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

#include "fedcvu/harness/evaluate.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedcvu/errors.h"

namespace fedcvu::harness {

TopKAccuracy TopK(const nn::Matrix<float>& logits, std::span<const int> labels) {
  const auto n = logits.rows();
  if (n == 0) throw ConfigError("top-k on an empty split");
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ConfigError("top-k: label count does not match logits");
  }
  const auto k5 = std::min<Eigen::Index>(5, logits.cols());
  std::int64_t hit1 = 0, hit5 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const float truth = logits(i, labels[static_cast<std::size_t>(i)]);
    Eigen::Index above = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) above += logits(i, j) > truth;
    hit1 += above < 1;
    hit5 += above < k5;
  }
  TopKAccuracy acc;
  acc.n = n;
  acc.top1 = 100.0 * static_cast<double>(hit1) / static_cast<double>(n);
  acc.top5 = 100.0 * static_cast<double>(hit5) / static_cast<double>(n);
  return acc;
}

RetrievalMetrics Retrieval(const nn::Matrix<float>& query, std::span<const int> query_labels,
                           const nn::Matrix<float>& gallery,
                           std::span<const int> gallery_labels) {
  if (query.rows() == 0 || gallery.rows() == 0) {
    throw ConfigError("retrieval on an empty query or gallery");
  }
  auto unit = [](const nn::Matrix<float>& m) {
    nn::Matrix<double> u = m.cast<double>();
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double norm = u.row(i).norm();
      if (norm > 1e-12) u.row(i) /= norm;
    }
    return u;
  };
  const nn::Matrix<double> sim = unit(query) * unit(gallery).transpose();
  double ap_sum = 0.0;
  std::int64_t top1 = 0, counted = 0;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(gallery.rows()));
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    const int label = query_labels[static_cast<std::size_t>(q)];
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return sim(q, a) > sim(q, b); });
    std::int64_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_labels[static_cast<std::size_t>(order[r])] == label) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    if (hits == 0) continue;
    ++counted;
    ap_sum += precision_sum / static_cast<double>(hits);
    top1 += gallery_labels[static_cast<std::size_t>(order[0])] == label;
  }
  RetrievalMetrics m;
  if (counted > 0) {
    m.map = 100.0 * ap_sum / static_cast<double>(counted);
    m.cmc1 = 100.0 * static_cast<double>(top1) / static_cast<double>(counted);
  }
  return m;
}

nn::NormState<float> MeanNormState(std::span<const nn::NormState<float>* const> states) {
  if (states.empty()) throw ConfigError("mean of zero norm states");
  nn::NormState<float> out = *states[0];
  const double inv = 1.0 / static_cast<double>(states.size());
  for (std::size_t l = 0; l < out.size(); ++l) {
    auto mean = [&](auto member) {
      auto& dst = out[l].*member;
      nn::Vector<double> acc = nn::Vector<double>::Zero(dst.size());
      for (const auto* s : states) acc += ((*s)[l].*member).template cast<double>();
      dst = (acc * inv).template cast<float>();
    };
    mean(&nn::NormLayer<float>::gamma);
    mean(&nn::NormLayer<float>::beta);
    mean(&nn::NormLayer<float>::running_mean);
    mean(&nn::NormLayer<float>::running_var);
  }
  return out;
}

client::Net UnseenViewNet(const server::Federation& fed, UnseenNorm mode,
                          const nn::Matrix<float>& unseen) {
  client::Net net = fed.global().net;
  if (fed.config().toggles.vs_norm) {
    std::vector<const nn::NormState<float>*> states;
    for (const auto& c : fed.clients()) states.push_back(&c.local_norm);
    net.SetNormState(MeanNormState(states));
  }
  if (mode == UnseenNorm::kGlobalBatchRecalib && net.dims.norm_kind == nn::NormKind::kBatch) {
    if (unseen.rows() < 2) throw ConfigError("recalibration needs at least two samples");
    for (auto& b : net.blocks) b.norm.momentum = 1.0f;
    nn::Forward<float>(net, unseen, nn::Mode::kTrain, nullptr);
    const float default_momentum = fed.global().net.blocks.front().norm.momentum;
    for (auto& b : net.blocks) b.norm.momentum = default_momentum;
  }
  return net;
}

EvalMetrics Evaluate(const server::Federation& fed, const data::Splits& splits,
                     UnseenNorm mode) {
  const bool vs_norm = fed.config().toggles.vs_norm;
  EvalMetrics m;
  double top1 = 0.0, top5 = 0.0;
  for (const auto& c : fed.clients()) {
    const data::Dataset* test = nullptr;
    for (const auto& d : splits.seen_test) {
      if (!d.empty() && d.view_ids.front() == c.shard.view_id) test = &d;
    }
    if (test == nullptr) {
      throw ConfigError("no seen test split for view " + std::to_string(c.shard.view_id));
    }
    client::Net net = fed.global().net;
    if (vs_norm) net.SetNormState(c.local_norm);
    const auto out = nn::ForwardEval(net, test->features);
    const auto acc = TopK(out.logits, test->labels);
    top1 += acc.top1;
    top5 += acc.top5;
  }
  const auto clients = static_cast<double>(fed.clients().size());
  m.seen_top1 = top1 / clients;
  m.seen_top5 = top5 / clients;

  const auto& unseen = splits.unseen_test;
  const client::Net net = UnseenViewNet(fed, mode, unseen.features);
  const auto acc = TopK(nn::ForwardEval(net, unseen.features).logits, unseen.labels);
  m.unseen_top1 = acc.top1;
  m.unseen_top5 = acc.top5;
  if (!splits.query.empty() && !splits.gallery.empty()) {
    const auto q = nn::ForwardEval(net, splits.query.features);
    const auto g = nn::ForwardEval(net, splits.gallery.features);
    const auto r = Retrieval(q.embeddings, splits.query.labels, g.embeddings,
                             splits.gallery.labels);
    m.map = r.map;
    m.cmc1 = r.cmc1;
  }
  return m;
}

}  // namespace fedcvu::harness
