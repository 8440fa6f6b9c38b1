#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vlaudit/datamodel.hpp"
#include "vlaudit/parallel.hpp"
#include "vlaudit/simcore.hpp"
#include "vlaudit/stats.hpp"

namespace vlaudit {

/// Attributes whose values are ordered levels; a minimum gap may apply.
inline bool is_ordinal(Attribute a) {
  return a == Attribute::age || a == Attribute::smiling || a == Attribute::lighting || a == Attribute::pose;
}

inline const std::vector<Attribute>& variation_attributes() {
  static const std::vector<Attribute> all = {Attribute::race,     Attribute::gender, Attribute::age, Attribute::smiling,
                                             Attribute::lighting, Attribute::pose,   Attribute::seed};
  return all;
}

struct VariationConfig {
  Attribute attribute = Attribute::race;
  std::size_t resamples_per_dimension = 1000;
  std::map<Attribute, double> ordinal_min_gap = {{Attribute::age, 1.1}, {Attribute::smiling, 1.1}};
  std::uint64_t rng_seed = 0;
  std::vector<std::string> dimensions;  // empty: every table column

  double gap(Attribute a) const {
    auto it = ordinal_min_gap.find(a);
    return it == ordinal_min_gap.end() ? 0.0 : it->second;
  }
};

// Level differences such as 3.3 - 2.2 land a few ulps under 1.1.
inline constexpr double kGapTolerance = 1e-9;

/// True when records i1 and i2 differ in `attr` (by at least `gap` for
/// ordinal attributes) and agree on every other manifest attribute.
inline bool is_valid_pair(const DatasetManifest& m, std::size_t i1, std::size_t i2, Attribute attr, double gap = 0.0) {
  static const Attribute all[] = {Attribute::dataset, Attribute::seed,     Attribute::race,
                                  Attribute::gender,  Attribute::age,      Attribute::smiling,
                                  Attribute::lighting, Attribute::pose};
  for (auto a : all) {
    const auto v1 = attribute_value(m[i1], a), v2 = attribute_value(m[i2], a);
    if (a != attr) {
      if (v1 != v2) return false;
      continue;
    }
    if (std::holds_alternative<std::monostate>(v1) || std::holds_alternative<std::monostate>(v2)) return false;
    if (v1 == v2) return false;
    if (is_ordinal(a) && std::fabs(std::get<double>(v1) - std::get<double>(v2)) < gap - kGapTolerance) return false;
  }
  return true;
}

/// Enumerates the valid unordered pairs for one attribute and draws from
/// them uniformly.
class PairSampler {
 public:
  PairSampler(const DatasetManifest& m, Attribute attr, double gap = 0.0) : attr_(attr), gap_(gap) {
    if (attr == Attribute::dataset || attr == Attribute::age_bin)
      throw Error(ErrorCode::InvalidArgument, "cannot vary " + to_string(attr));
    if (gap < 0.0) throw Error(ErrorCode::InvalidArgument, "negative gap");
    // Bucket records by every attribute except the varied one.
    static const Attribute all[] = {Attribute::dataset, Attribute::seed,     Attribute::race,
                                    Attribute::gender,  Attribute::age,      Attribute::smiling,
                                    Attribute::lighting, Attribute::pose};
    std::map<std::vector<AttributeValue>, std::vector<std::size_t>> buckets;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (std::holds_alternative<std::monostate>(attribute_value(m[i], attr))) continue;
      std::vector<AttributeValue> key;
      for (auto a : all)
        if (a != attr) key.push_back(attribute_value(m[i], a));
      buckets[std::move(key)].push_back(i);
    }
    for (const auto& [_, rows] : buckets)
      for (std::size_t x = 0; x < rows.size(); ++x)
        for (std::size_t y = x + 1; y < rows.size(); ++y)
          if (is_valid_pair(m, rows[x], rows[y], attr, gap)) pairs_.emplace_back(rows[x], rows[y]);
  }

  std::size_t size() const noexcept { return pairs_.size(); }
  const std::vector<std::pair<std::size_t, std::size_t>>& pairs() const noexcept { return pairs_; }

  std::pair<std::size_t, std::size_t> operator()(CounterRng& rng) const {
    if (pairs_.empty())
      throw Error(ErrorCode::NoValidPair, "attribute " + to_string(attr_) + " with all other attributes held fixed" +
                                              (gap_ > 0.0 ? " and min gap " + std::to_string(gap_) : std::string()));
    return pairs_[rng.below(pairs_.size())];
  }

 private:
  Attribute attr_;
  double gap_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

/// One uniformly drawn valid pair. Builds a sampler per call; reuse a
/// PairSampler when drawing many.
inline std::pair<std::size_t, std::size_t> sample_pair(const DatasetManifest& m, Attribute attr, CounterRng& rng,
                                                       double gap = 0.0) {
  return PairSampler(m, attr, gap)(rng);
}

inline double absdiff(std::size_t i1, std::size_t i2, std::size_t dim_column, const SimilarityTable& table) {
  return std::fabs(table.at(i1, dim_column).delta_cos - table.at(i2, dim_column).delta_cos);
}

struct AbsDiffDistribution {
  Attribute attribute = Attribute::race;
  std::vector<std::string> dimensions;
  std::size_t resamples_per_dimension = 0;
  std::vector<double> values;  // dimension-major: values[d * resamples + r]
  std::size_t candidate_pairs = 0;
  BoxSummary summary;
  std::vector<BoxSummary> per_dimension;

  std::span<const double> dimension_values(std::size_t d) const {
    return {values.data() + d * resamples_per_dimension, resamples_per_dimension};
  }
};

/// Draws `resamples_per_dimension` pairs (with replacement) for every
/// dimension and records their AbsDiff. Draw r of dimension d uses stream
/// d * resamples + r of the configured seed.
inline AbsDiffDistribution bootstrap_distribution(const DatasetManifest& m, const SimilarityTable& table,
                                                  const VariationConfig& cfg) {
  if (cfg.resamples_per_dimension < 1) throw Error(ErrorCode::InvalidArgument, "resamples must be >= 1");
  if (table.rows() != m.size()) throw Error(ErrorCode::SizeMismatch, "similarity table does not match manifest");
  for (std::size_t i = 0; i < m.size(); ++i)
    if (table.ids()[i] != m[i].id) throw Error(ErrorCode::SizeMismatch, "similarity table row " + std::to_string(i) + " id");
  for (const auto& [a, g] : cfg.ordinal_min_gap)
    if (g < 0.0) throw Error(ErrorCode::InvalidArgument, "negative gap for " + to_string(a));

  AbsDiffDistribution out;
  out.attribute = cfg.attribute;
  out.resamples_per_dimension = cfg.resamples_per_dimension;
  std::vector<std::size_t> columns;
  if (cfg.dimensions.empty()) {
    for (std::size_t c = 0; c < table.cols(); ++c) columns.push_back(c);
  } else {
    for (const auto& name : cfg.dimensions) columns.push_back(table.column(name));
  }
  for (auto c : columns) out.dimensions.push_back(table.dimensions()[c].name);

  const PairSampler sampler(m, cfg.attribute, is_ordinal(cfg.attribute) ? cfg.gap(cfg.attribute) : 0.0);
  out.candidate_pairs = sampler.size();
  if (sampler.size() == 0) {
    CounterRng probe(cfg.rng_seed);
    (void)sampler(probe);  // throws NoValidPair
  }
  const std::size_t per = cfg.resamples_per_dimension;
  out.values.resize(columns.size() * per);
  parallel_for(out.values.size(), [&](std::size_t k) {
    CounterRng rng(cfg.rng_seed, k);
    const auto [i1, i2] = sampler(rng);
    out.values[k] = absdiff(i1, i2, columns[k / per], table);
  });
  out.summary = box_summary(out.values);
  for (std::size_t d = 0; d < columns.size(); ++d) out.per_dimension.push_back(box_summary(out.dimension_values(d)));
  return out;
}

struct AttributeComparison {
  std::vector<Attribute> by_median;  // ascending median
  struct Pair {
    Attribute a;
    Attribute b;
    TestResult test;
  };
  std::vector<Pair> pairwise;
};

/// Rank-sum test for every pair of distributions plus the median ordering.
inline AttributeComparison compare_attributes(const std::vector<AbsDiffDistribution>& dists,
                                              Alternative alt = Alternative::two_sided) {
  if (dists.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two distributions");
  AttributeComparison out;
  std::vector<std::size_t> order(dists.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return dists[x].summary.median < dists[y].summary.median; });
  for (auto i : order) out.by_median.push_back(dists[i].attribute);
  for (std::size_t i = 0; i < dists.size(); ++i)
    for (std::size_t j = i + 1; j < dists.size(); ++j)
      out.pairwise.push_back({dists[i].attribute, dists[j].attribute,
                              wilcoxon_ranksum(dists[i].values, dists[j].values, alt)});
  return out;
}

inline json to_json(const AbsDiffDistribution& d, bool include_values = false) {
  json per = json::object();
  for (std::size_t i = 0; i < d.dimensions.size(); ++i) per[d.dimensions[i]] = to_json(d.per_dimension[i]);
  json j = {{"attribute", to_string(d.attribute)},
            {"dimensions", d.dimensions},
            {"resamples_per_dimension", d.resamples_per_dimension},
            {"candidate_pairs", d.candidate_pairs},
            {"summary", to_json(d.summary)},
            {"per_dimension", per}};
  if (include_values) j["values"] = d.values;
  return j;
}

}  // namespace vlaudit
