/*
 * Copyright 2026 The xmhash Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "xmhash/dataset.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/rng.hpp"

namespace xmhash {

/// Gaussian-blob image features and per-cluster topic BoW texts.
///
/// The database holds `clusters * per_cluster` instances, `per_cluster` with
/// each primary cluster in order. Each instance picks a second, different
/// cluster with probability `mix_prob`; its labels are {cluster mod c} over
/// its clusters. Image feature = mean of its cluster centroids plus
/// `noise`·N(0, 1) per dimension. Each of `doc_length` words is, with
/// probability noise/(1+noise), uniform over the vocabulary, otherwise
/// uniform over the topic words of one of its clusters (word w belongs to
/// cluster w mod clusters). Held-out queries number round(holdout·n) and
/// draw their primary cluster uniformly.
struct SyntheticSpec {
  std::size_t clusters = 3;
  std::size_t per_cluster = 200;
  std::size_t d_x = 32;
  std::size_t d_y = 100;
  std::size_t c = 3;
  double noise = 1.0;
  double mix_prob = 0.2;
  double holdout = 0.1;
  std::size_t doc_length = 20;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset database;
  Dataset queries;
  Matrix centroids;  // clusters × d_x
};

namespace detail {

struct SyntheticSampler {
  const SyntheticSpec& spec;
  Rng& rng;
  const Matrix& centroids;

  InstanceRecord draw(std::size_t primary) {
    std::vector<std::size_t> members{primary};
    if (spec.mix_prob > 0.0 && spec.clusters > 1 && rng.uniform() < spec.mix_prob) {
      std::size_t other = rng.below(spec.clusters - 1);
      if (other >= primary) ++other;
      members.push_back(other);
    }

    InstanceRecord rec;
    rec.labels.assign(spec.c, 0);
    for (auto m : members) rec.labels[m % spec.c] = 1;

    rec.image_feat.assign(spec.d_x, 0.0);
    for (auto m : members)
      for (std::size_t p = 0; p < spec.d_x; ++p)
        rec.image_feat[p] += centroids(m, p) / static_cast<double>(members.size());
    for (auto& x : rec.image_feat) x += spec.noise * rng.normal();

    const double background = spec.noise / (1.0 + spec.noise);
    std::map<std::uint32_t, double> counts;
    for (std::size_t w = 0; w < spec.doc_length; ++w) {
      std::uint32_t word;
      if (rng.uniform() < background) {
        word = static_cast<std::uint32_t>(rng.below(spec.d_y));
      } else {
        const std::size_t topic = members[rng.below(members.size())];
        const std::size_t topic_size =
            (spec.d_y - topic + spec.clusters - 1) / spec.clusters;
        word = static_cast<std::uint32_t>(topic + spec.clusters * rng.below(topic_size));
      }
      counts[word] += 1.0;
    }
    for (const auto& [idx, value] : counts) rec.text_bow.push_back({idx, value});
    return rec;
  }
};

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  detail::require(spec.c >= 2, "gen-data: need c >= 2");
  detail::require(spec.clusters >= 1 && spec.per_cluster >= 1,
                  "gen-data: need clusters >= 1 and per_cluster >= 1");
  detail::require(spec.d_x >= 1, "gen-data: need d_x >= 1");
  detail::require(spec.d_y >= spec.clusters,
                  "gen-data: need at least one topic word per cluster");
  detail::require(spec.noise >= 0.0 && spec.mix_prob >= 0.0 &&
                      spec.mix_prob <= 1.0 && spec.holdout >= 0.0,
                  "gen-data: noise, mix_prob, holdout out of range");

  Rng rng(spec.seed);
  Matrix centroids(spec.clusters, spec.d_x);
  for (double& x : centroids.data()) x = rng.normal();

  detail::SyntheticSampler sampler{spec, rng, centroids};
  std::vector<InstanceRecord> db;
  for (std::size_t cl = 0; cl < spec.clusters; ++cl)
    for (std::size_t i = 0; i < spec.per_cluster; ++i) db.push_back(sampler.draw(cl));

  const auto n_queries = static_cast<std::size_t>(
      std::llround(spec.holdout * static_cast<double>(db.size())));
  std::vector<InstanceRecord> qs;
  for (std::size_t i = 0; i < n_queries; ++i)
    qs.push_back(sampler.draw(rng.below(spec.clusters)));

  return {Dataset(spec.d_x, spec.d_y, spec.c, std::move(db)),
          Dataset(spec.d_x, spec.d_y, spec.c, std::move(qs)), std::move(centroids)};
}

}  // namespace xmhash
