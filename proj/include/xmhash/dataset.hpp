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

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xmhash/error.hpp"
#include "xmhash/numerics.hpp"
#include "xmhash/rng.hpp"

namespace xmhash {

struct BowEntry {
  std::uint32_t index = 0;
  double value = 0.0;
  friend bool operator==(const BowEntry&, const BowEntry&) = default;
};

/// One database instance: image feature, bag-of-words text, multi-hot labels.
struct InstanceRecord {
  std::vector<double> image_feat;
  std::vector<BowEntry> text_bow;
  std::vector<std::uint8_t> labels;  // length c, entries 0/1

  friend bool operator==(const InstanceRecord&, const InstanceRecord&) = default;
};

/// +1 if the two label vectors share at least one label, else -1.
inline int similarity(std::span<const std::uint8_t> a,
                      std::span<const std::uint8_t> b) {
  detail::require(a.size() == b.size(), "similarity: label length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && b[i]) return +1;
  return -1;
}

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t d_x, std::size_t d_y, std::size_t c,
          std::vector<InstanceRecord> records)
      : d_x_(d_x), d_y_(d_y), c_(c), records_(std::move(records)) {
    for (std::size_t i = 0; i < records_.size(); ++i) validate(i);
    pack_labels();
  }

  std::size_t n() const { return records_.size(); }
  std::size_t d_x() const { return d_x_; }
  std::size_t d_y() const { return d_y_; }
  std::size_t c() const { return c_; }
  const std::vector<InstanceRecord>& records() const { return records_; }
  const InstanceRecord& operator[](std::size_t i) const { return records_[i]; }

  /// Similarity of instances i and j via packed label words.
  int similarity(std::size_t i, std::size_t j) const {
    const std::uint64_t* a = &label_words_[i * words_per_label_];
    const std::uint64_t* b = &label_words_[j * words_per_label_];
    for (std::size_t w = 0; w < words_per_label_; ++w)
      if (a[w] & b[w]) return +1;
    return -1;
  }

  Matrix image_matrix(std::span<const std::size_t> index) const {
    Matrix out(index.size(), d_x_);
    for (std::size_t r = 0; r < index.size(); ++r)
      std::ranges::copy(records_.at(index[r]).image_feat, out.row(r).begin());
    return out;
  }

  /// Dense batch of text vectors for the given rows.
  Matrix text_matrix(std::span<const std::size_t> index) const {
    Matrix out(index.size(), d_y_);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (const auto& e : records_.at(index[r]).text_bow)
        out(r, e.index) = e.value;
    return out;
  }

  Matrix label_matrix() const {
    Matrix out(n(), c_);
    for (std::size_t i = 0; i < n(); ++i)
      for (std::size_t j = 0; j < c_; ++j) out(i, j) = records_[i].labels[j];
    return out;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(n());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }

 private:
  void validate(std::size_t i) const {
    const auto& r = records_[i];
    const std::string where = "record " + std::to_string(i) + ": ";
    if (r.image_feat.size() != d_x_)
      throw ParseError(where + "image feature has " +
                       std::to_string(r.image_feat.size()) + " dims, expected " +
                       std::to_string(d_x_));
    if (r.labels.size() != c_)
      throw ParseError(where + "label vector length mismatch");
    if (std::ranges::none_of(r.labels, [](auto b) { return b != 0; }))
      throw ParseError(where + "empty label set");
    for (std::size_t p = 0; p < r.text_bow.size(); ++p) {
      if (r.text_bow[p].index >= d_y_)
        throw ParseError(where + "bow index out of range");
      if (p > 0 && r.text_bow[p].index <= r.text_bow[p - 1].index)
        throw ParseError(where + "bow indices not strictly increasing");
      if (!(r.text_bow[p].value >= 0.0))
        throw ParseError(where + "negative bow value");
    }
  }

  void pack_labels() {
    words_per_label_ = std::max<std::size_t>(1, (c_ + 63) / 64);
    label_words_.assign(records_.size() * words_per_label_, 0);
    for (std::size_t i = 0; i < records_.size(); ++i)
      for (std::size_t j = 0; j < c_; ++j)
        if (records_[i].labels[j])
          label_words_[i * words_per_label_ + j / 64] |= std::uint64_t{1}
                                                        << (j % 64);
  }

  std::size_t d_x_ = 0;
  std::size_t d_y_ = 0;
  std::size_t c_ = 0;
  std::vector<InstanceRecord> records_;
  std::size_t words_per_label_ = 1;
  std::vector<std::uint64_t> label_words_;
};

// ---------------------------------------------------------------------------
// JSON-lines I/O. Line 1: {"d_x":..,"d_y":..,"c":..}. Then one object per
// record: {"img":[...], "bow":[[index, value], ...], "labels":[label ids]}.

inline Dataset parse_dataset(std::istream& in) {
  using nlohmann::json;
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError("dataset: missing header line");
  std::size_t d_x = 0, d_y = 0, c = 0;
  try {
    const json header = json::parse(line);
    d_x = header.at("d_x").get<std::size_t>();
    d_y = header.at("d_y").get<std::size_t>();
    c = header.at("c").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset header: ") + e.what());
  }

  std::vector<InstanceRecord> records;
  while (next_line()) {
    const std::size_t idx = records.size();
    const std::string where = "record " + std::to_string(idx) + " (line " +
                              std::to_string(lineno) + "): ";
    InstanceRecord rec;
    try {
      const json obj = json::parse(line);
      rec.image_feat = obj.at("img").get<std::vector<double>>();
      for (const auto& pair : obj.at("bow")) {
        if (!pair.is_array() || pair.size() != 2)
          throw ParseError(where + "bow entry is not an [index, value] pair");
        rec.text_bow.push_back(
            {pair[0].get<std::uint32_t>(), pair[1].get<double>()});
      }
      rec.labels.assign(c, 0);
      for (const auto& l : obj.at("labels")) {
        const auto li = l.get<std::size_t>();
        if (li >= c) throw ParseError(where + "label id out of range");
        rec.labels[li] = 1;
      }
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    }
    if (rec.image_feat.size() != d_x)
      throw ParseError(where + "image feature dimension mismatch");
    records.push_back(std::move(rec));
  }
  return Dataset(d_x, d_y, c, std::move(records));
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file: " + path);
  return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  using nlohmann::json;
  out << json{{"c", ds.c()}, {"d_x", ds.d_x()}, {"d_y", ds.d_y()}}.dump()
      << '\n';
  for (const auto& r : ds.records()) {
    json bow = json::array();
    for (const auto& e : r.text_bow) bow.push_back(json::array({e.index, e.value}));
    json labels = json::array();
    for (std::size_t j = 0; j < r.labels.size(); ++j)
      if (r.labels[j]) labels.push_back(j);
    out << json{{"img", r.image_feat}, {"bow", bow}, {"labels", labels}}.dump()
        << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file: " + path);
  write_dataset(out, ds);
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Similarity view over a sampled query set.

struct SimilarityView {
  std::vector<std::size_t> query_index;  // Φ, m distinct database rows
  Matrix values;                         // m×n over {-1,+1}
  double neg_weight = 1.0;

  std::size_t m() const { return query_index.size(); }
  std::size_t n() const { return values.cols(); }

  /// Residual weight for entry (i, j): neg_weight on dissimilar pairs.
  double weight(std::size_t i, std::size_t j) const {
    return values(i, j) < 0.0 ? neg_weight : 1.0;
  }

  /// Entry of S restricted to query rows and query columns, i.e. S(Φi, Φj).
  double query_query(std::size_t i, std::size_t j) const {
    return values(i, query_index[j]);
  }
};

/// Ratio (#similar pairs)/(#dissimilar pairs) over the full n×n similarity,
/// counted by streaming over label pairs; 1 when no dissimilar pair exists.
inline double imbalance_weight(const Dataset& ds) {
  std::uint64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    ++pos;  // diagonal
    for (std::size_t j = i + 1; j < ds.n(); ++j) {
      if (ds.similarity(i, j) > 0)
        pos += 2;
      else
        neg += 2;
    }
  }
  if (neg == 0) return 1.0;
  return static_cast<double>(pos) / static_cast<double>(neg);
}

/// Draws m distinct indices uniformly without replacement (partial
/// Fisher-Yates) and builds the corresponding rows of S.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t m,
                                               std::uint64_t seed) {
  detail::require(m >= 1 && m <= n, "sample_query_set: need 1 <= m <= n");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(perm[i], perm[j]);
  }
  perm.resize(m);
  return perm;
}

inline SimilarityView build_similarity_view(const Dataset& ds,
                                            std::vector<std::size_t> phi,
                                            double neg_weight) {
  SimilarityView view;
  view.values = Matrix(phi.size(), ds.n());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    detail::require(phi[i] < ds.n(), "similarity view: index out of range");
    for (std::size_t j = 0; j < ds.n(); ++j)
      view.values(i, j) = ds.similarity(phi[i], j);
  }
  view.query_index = std::move(phi);
  view.neg_weight = neg_weight;
  return view;
}

inline SimilarityView sample_query_set(const Dataset& ds, std::size_t m,
                                       std::uint64_t seed, double neg_weight) {
  return build_similarity_view(ds, sample_indices(ds.n(), m, seed), neg_weight);
}

inline SimilarityView sample_query_set(const Dataset& ds, std::size_t m,
                                       std::uint64_t seed) {
  detail::require(m >= 1 && m <= ds.n(), "sample_query_set: need 1 <= m <= n");
  return sample_query_set(ds, m, seed, imbalance_weight(ds));
}

}  // namespace xmhash
