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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmhash/dataset.hpp"
#include "xmhash/encoders.hpp"
#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/solvers.hpp"

namespace xmhash {

/// k-bit code packed little-endian into 64-bit words; bit set means +1.
struct PackedCode {
  std::size_t k = 0;
  std::vector<std::uint64_t> words;

  static PackedCode from_signs(std::span<const double> values) {
    PackedCode c{values.size(), std::vector<std::uint64_t>((values.size() + 63) / 64)};
    for (std::size_t j = 0; j < values.size(); ++j)
      if (values[j] > 0.0) c.words[j / 64] |= std::uint64_t{1} << (j % 64);
    return c;
  }

  static PackedCode from_row(const CodeMatrix& codes, std::size_t i) {
    auto row = codes.packed_row(i);
    return {codes.k(), {row.begin(), row.end()}};
  }

  /// Entry j as ±1.
  double sign(std::size_t j) const {
    return ((words[j / 64] >> (j % 64)) & 1u) ? 1.0 : -1.0;
  }

  friend bool operator==(const PackedCode&, const PackedCode&) = default;
};

inline int hamming(std::span<const std::uint64_t> a,
                   std::span<const std::uint64_t> b) {
  detail::require(a.size() == b.size(), "hamming: code length mismatch");
  int d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += std::popcount(a[w] ^ b[w]);
  return d;
}

inline int hamming(const PackedCode& a, const PackedCode& b) {
  detail::require(a.k == b.k, "hamming: code length mismatch");
  return hamming(std::span<const std::uint64_t>(a.words),
                 std::span<const std::uint64_t>(b.words));
}

/// Out-of-sample code: bit j is +1 iff encoder output j is strictly positive.
inline PackedCode hash_query(const MlpParams& params, std::span<const double> input) {
  detail::require(input.size() == params.input_dim(),
                  "hash_query: input dimension does not match encoder");
  const Matrix x(1, input.size(), std::vector<double>(input.begin(), input.end()));
  const Matrix out = forward(params, x).first;
  return PackedCode::from_signs(out.row(0));
}

inline std::vector<PackedCode> hash_batch(const MlpParams& params,
                                          const Matrix& inputs) {
  const Matrix out = forward(params, inputs).first;
  std::vector<PackedCode> codes;
  codes.reserve(out.rows());
  for (std::size_t r = 0; r < out.rows(); ++r)
    codes.push_back(PackedCode::from_signs(out.row(r)));
  return codes;
}

/// Database codes plus multi-hot labels; immutable once built.
class RetrievalIndex {
 public:
  RetrievalIndex(CodeMatrix codes, const Matrix& labels)
      : codes_(std::move(codes)), c_(labels.cols()) {
    detail::require(labels.rows() == codes_.n(),
                    "RetrievalIndex: label rows != code rows");
    labels_.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
      labels_[i] = labels.data()[i] != 0.0 ? 1 : 0;
  }

  std::size_t n() const { return codes_.n(); }
  std::size_t k() const { return codes_.k(); }
  std::size_t c() const { return c_; }
  const CodeMatrix& codes() const { return codes_; }
  std::span<const std::uint8_t> labels(std::size_t i) const {
    return {labels_.data() + i * c_, c_};
  }

 private:
  CodeMatrix codes_;
  std::size_t c_;
  std::vector<std::uint8_t> labels_;
};

struct QueryResult {
  std::vector<std::size_t> indices;  // ascending distance, ties by index
  std::vector<int> distances;        // aligned with indices
};

/// Full Hamming ranking by counting sort over distances 0..k, which keeps
/// equal-distance items in ascending database order.
inline QueryResult rank(const RetrievalIndex& index, const PackedCode& query) {
  detail::require(query.k == index.k(), "rank: code length mismatch");
  const std::size_t n = index.n(), k = index.k();
  std::vector<int> dist(n);
  std::vector<std::size_t> bucket(k + 2, 0);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = hamming(index.codes().packed_row(i),
                      std::span<const std::uint64_t>(query.words));
    ++bucket[dist[i] + 1];
  }
  for (std::size_t d = 1; d < bucket.size(); ++d) bucket[d] += bucket[d - 1];
  QueryResult out{std::vector<std::size_t>(n), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = bucket[dist[i]]++;
    out.indices[pos] = i;
    out.distances[pos] = dist[i];
  }
  return out;
}

struct Query {
  PackedCode code;
  std::vector<std::uint8_t> labels;
};

namespace detail {

inline std::vector<std::uint8_t> relevance(const RetrievalIndex& index,
                                           const Query& q) {
  std::vector<std::uint8_t> rel(index.n());
  for (std::size_t i = 0; i < index.n(); ++i)
    rel[i] = similarity(q.labels, index.labels(i)) > 0 ? 1 : 0;
  return rel;
}

}  // namespace detail

/// Average precision over the full ranking: mean, over relevant ranks r, of
/// (relevant items in top r)/r. Zero when nothing is relevant.
inline double average_precision(const RetrievalIndex& index, const Query& q) {
  const QueryResult ranked = rank(index, q.code);
  const auto rel = detail::relevance(index, q);
  double hits = 0.0, acc = 0.0;
  for (std::size_t r = 0; r < ranked.indices.size(); ++r) {
    if (rel[ranked.indices[r]]) {
      hits += 1.0;
      acc += hits / static_cast<double>(r + 1);
    }
  }
  return hits > 0.0 ? acc / hits : 0.0;
}

inline double mean_average_precision(const RetrievalIndex& index,
                                     std::span<const Query> queries) {
  detail::require(!queries.empty(), "mean_average_precision: no queries");
  double acc = 0.0;
  for (const auto& q : queries) acc += average_precision(index, q);
  return acc / static_cast<double>(queries.size());
}

inline double precision_at(const RetrievalIndex& index,
                           std::span<const Query> queries, std::size_t n_cut) {
  detail::require(n_cut >= 1 && n_cut <= index.n(),
                  "precision_at: cut-off out of range");
  detail::require(!queries.empty(), "precision_at: no queries");
  double acc = 0.0;
  for (const auto& q : queries) {
    const QueryResult ranked = rank(index, q.code);
    const auto rel = detail::relevance(index, q);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n_cut; ++r) hits += rel[ranked.indices[r]];
    acc += static_cast<double>(hits) / static_cast<double>(n_cut);
  }
  return acc / static_cast<double>(queries.size());
}

struct PrPoint {
  int radius = 0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Hash-lookup PR curve for radii 0..k, macro-averaged over queries. An
/// empty retrieval set scores precision 1; a query with no relevant items
/// scores recall 0.
inline std::vector<PrPoint> pr_curve(const RetrievalIndex& index,
                                     std::span<const Query> queries) {
  const std::size_t k = index.k();
  std::vector<PrPoint> curve(k + 1);
  for (std::size_t r = 0; r <= k; ++r) curve[r].radius = static_cast<int>(r);
  if (queries.empty()) return curve;

  for (const auto& q : queries) {
    detail::require(q.code.k == k, "pr_curve: code length mismatch");
    const auto rel = detail::relevance(index, q);
    // Histogram of retrieved / relevant-retrieved by distance.
    std::vector<std::size_t> at(k + 1, 0), rel_at(k + 1, 0);
    std::size_t total_rel = 0;
    for (std::size_t i = 0; i < index.n(); ++i) {
      const int d = hamming(index.codes().packed_row(i),
                            std::span<const std::uint64_t>(q.code.words));
      ++at[d];
      rel_at[d] += rel[i];
      total_rel += rel[i];
    }
    std::size_t retrieved = 0, hit = 0;
    for (std::size_t r = 0; r <= k; ++r) {
      retrieved += at[r];
      hit += rel_at[r];
      curve[r].precision += retrieved == 0 ? 1.0
                                           : static_cast<double>(hit) /
                                                 static_cast<double>(retrieved);
      curve[r].recall += total_rel == 0 ? 0.0
                                        : static_cast<double>(hit) /
                                              static_cast<double>(total_rel);
    }
  }
  const double nq = static_cast<double>(queries.size());
  for (auto& p : curve) {
    p.precision /= nq;
    p.recall /= nq;
  }
  return curve;
}

/// {map, p_at_n: {"<n>": value}, pr_curve: [[radius, precision, recall]...]}
inline nlohmann::json metrics_json(const RetrievalIndex& index,
                                   std::span<const Query> queries,
                                   std::span<const std::size_t> cutoffs) {
  nlohmann::json p_at_n = nlohmann::json::object();
  for (std::size_t cut : cutoffs)
    if (cut >= 1 && cut <= index.n())
      p_at_n[std::to_string(cut)] = precision_at(index, queries, cut);
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : pr_curve(index, queries))
    curve.push_back(nlohmann::json::array({p.radius, p.precision, p.recall}));
  return {{"map", mean_average_precision(index, queries)},
          {"p_at_n", p_at_n},
          {"pr_curve", curve}};
}

/// Queries for one modality of a held-out dataset, hashed by `encoder`.
inline std::vector<Query> make_queries(const MlpParams& encoder,
                                       const Dataset& queries, bool image_side) {
  const auto idx = queries.all_indices();
  const Matrix inputs =
      image_side ? queries.image_matrix(idx) : queries.text_matrix(idx);
  auto codes = hash_batch(encoder, inputs);
  std::vector<Query> out;
  out.reserve(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    out.push_back({std::move(codes[i]), queries[i].labels});
  return out;
}

/// Both cross-modal directions against the unified database codes:
/// "i2t" hashes image queries with the image encoder, "t2i" hashes text
/// queries with the text encoder.
inline nlohmann::json evaluate_cross_modal(const MlpParams& image_encoder,
                                           const MlpParams& text_encoder,
                                           const RetrievalIndex& index,
                                           const Dataset& queries,
                                           std::span<const std::size_t> cutoffs) {
  detail::require(queries.n() >= 1, "evaluation needs at least one query");
  detail::require(queries.c() == index.c(), "query label width != database");
  const auto i2t = make_queries(image_encoder, queries, true);
  const auto t2i = make_queries(text_encoder, queries, false);
  return {{"i2t", metrics_json(index, i2t, cutoffs)},
          {"t2i", metrics_json(index, t2i, cutoffs)}};
}

}  // namespace xmhash
