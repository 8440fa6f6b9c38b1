#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vlaudit/simcore.hpp"
#include "vlaudit/stats.hpp"

namespace vlaudit {

using VectorRefs = std::vector<std::span<const double>>;

// ---------------------------------------------------------------------------
// SC-WEAT
// ---------------------------------------------------------------------------

enum class SpreadMode { sample, population };

/// How the SC-WEAT null is built. `automatic` enumerates when there are at
/// most 20000 splits and samples otherwise.
enum class PartitionMode { automatic, exact, sampled };

struct WeatResult {
  double statistic = 0.0;    // s(D, A, B)
  double effect_size = 0.0;  // mean over d of s(d, A, B) / std over A u B
  double p_value = 1.0;      // one-sided: share of partitions with a larger statistic
  bool exact = false;
  bool p_floored = false;    // no partition exceeded the observed statistic
  std::size_t partitions = 0;
  std::size_t set_size = 0;  // |A| == |B|
};

/// Single-category association test between one set of text vectors and two
/// equal-size image sets. All vectors must be unit length. The p-value
/// enumerates every equal-size split of A u B when there are at most 20000,
/// otherwise draws `permutations` random splits from streams of `rng_seed`.
inline WeatResult scweat(const VectorRefs& texts, const VectorRefs& a, const VectorRefs& b, std::size_t permutations = 10000,
                         std::uint64_t rng_seed = 0, SpreadMode spread = SpreadMode::sample,
                         PartitionMode mode = PartitionMode::automatic) {
  if (texts.empty()) throw Error(ErrorCode::EmptySample, "no text vectors");
  if (a.size() != b.size()) throw Error(ErrorCode::SizeMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.size() < 2) throw Error(ErrorCode::EmptySample, "SC-WEAT needs |A| == |B| >= 2");
  const std::size_t m = a.size(), n = 2 * m;

  VectorRefs pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  // cos[d][z]
  std::vector<std::vector<double>> cos(texts.size(), std::vector<double>(n));
  for (std::size_t d = 0; d < texts.size(); ++d)
    for (std::size_t z = 0; z < n; ++z) cos[d][z] = cosine(texts[d], pooled[z]);

  WeatResult out;
  out.set_size = m;
  double s_sum = 0.0, es_sum = 0.0;
  for (const auto& row : cos) {
    double sa = 0.0, sb = 0.0;
    for (std::size_t z = 0; z < m; ++z) sa += row[z];
    for (std::size_t z = m; z < n; ++z) sb += row[z];
    const double s = sa / static_cast<double>(m) - sb / static_cast<double>(m);
    const double mu = (sa + sb) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : row) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(spread == SpreadMode::sample ? n - 1 : n));
    if (sd == 0.0) throw Error(ErrorCode::DegenerateSpread, "cosines to a text vector are constant over A u B");
    s_sum += s;
    es_sum += s / sd;
  }
  out.statistic = s_sum / static_cast<double>(texts.size());
  out.effect_size = es_sum / static_cast<double>(texts.size());

  // The split statistic depends only on the A-side sum of per-image mean cosines.
  std::vector<double> g(n, 0.0);
  for (std::size_t z = 0; z < n; ++z) {
    for (const auto& row : cos) g[z] += row[z];
    g[z] /= static_cast<double>(texts.size());
  }
  const double total = std::accumulate(g.begin(), g.end(), 0.0);
  auto stat = [&](std::span<const std::size_t> first) {
    double s = 0.0;
    for (auto z : first) s += g[z];
    return (2.0 * s - total) / static_cast<double>(m);
  };
  std::vector<std::size_t> head(m);
  std::iota(head.begin(), head.end(), 0);
  const double observed = stat(head);
  out.exact = mode == PartitionMode::exact || (mode == PartitionMode::automatic && binomial(n, m) <= kExactPartitionLimit);
  if (mode == PartitionMode::sampled && permutations < 1) throw Error(ErrorCode::InvalidArgument, "permutations must be >= 1");
  const auto null = out.exact ? exact_partition_statistics(n, m, stat)
                              : sampled_partition_statistics(n, m, permutations, rng_seed, stat);
  // Splits equal to the observed one up to rounding do not count as larger.
  const double tol = 1e-12 * std::max(1.0, std::fabs(observed));
  std::size_t larger = 0;
  for (double s : null) larger += s > observed + tol;
  out.partitions = null.size();
  out.p_value = static_cast<double>(larger) / static_cast<double>(null.size());
  if (larger == 0) {
    out.p_value = std::numeric_limits<double>::min();
    out.p_floored = true;
  }
  return out;
}

/// A floored p is displayed as "<1/partitions", the resolution of the null.
inline json to_json(const WeatResult& w) {
  return {{"statistic", w.statistic},
          {"effect_size", w.effect_size},
          {"p_value", w.p_value},
          {"p_display", w.p_floored ? format_p(1.0 / static_cast<double>(w.partitions), true) : format_p(w.p_value, false)},
          {"exact", w.exact},
          {"partitions", w.partitions},
          {"set_size", w.set_size}};
}

// ---------------------------------------------------------------------------
// Markedness and mean cosine similarity
// ---------------------------------------------------------------------------

/// Percentage of images whose template-mean cosine to the neutral prompts
/// strictly exceeds that to the marked prompts.
inline double markedness(const VectorRefs& images, const VectorRefs& neutral, const VectorRefs& marked) {
  if (images.empty()) throw Error(ErrorCode::EmptySample, "markedness needs N >= 1");
  if (neutral.empty() || marked.empty()) throw Error(ErrorCode::EmptySample, "markedness needs prompts");
  std::size_t prefer_neutral = 0;
  for (const auto& img : images) {
    double cn = 0.0, cm = 0.0;
    for (const auto& t : neutral) cn += cosine(img, t);
    for (const auto& t : marked) cm += cosine(img, t);
    cn /= static_cast<double>(neutral.size());
    cm /= static_cast<double>(marked.size());
    prefer_neutral += cn > cm;
  }
  return 100.0 * static_cast<double>(prefer_neutral) / static_cast<double>(images.size());
}

/// Mean cosine (x100) over every image, every adjective of the given
/// dimensions, and every template.
inline double mean_cossim(const EmbeddingSet& images, std::span<const std::size_t> rows,
                          const std::vector<const Dimension*>& dims, const PromptContext& ctx) {
  if (rows.empty()) throw Error(ErrorCode::EmptySample, "no images selected");
  if (dims.empty()) throw Error(ErrorCode::EmptySample, "no dimensions selected");
  VectorRefs prompts;
  for (const auto* d : dims)
    for (const auto& adj : d->adjectives)
      for (std::size_t t = 0; t < ctx.templates.templates.size(); ++t) prompts.push_back(ctx.prompt(adj, t));
  double sum = 0.0;
  for (auto r : rows)
    for (const auto& p : prompts) sum += cosine(images.row(r), p);
  return 100.0 * sum / static_cast<double>(rows.size() * prompts.size());
}

// ---------------------------------------------------------------------------
// Ranked lists: Skew@k, MaxSkew@k, NDKL
// ---------------------------------------------------------------------------

struct RankedList {
  std::string query;
  std::vector<std::size_t> items;  // record indices, best first
  std::vector<double> scores;      // aligned with items
  std::size_t k = 0;
};

/// Sorts by descending score; ties go to the ascending id.
inline RankedList build_ranked_list(std::span<const double> scores, std::span<const std::string> ids, std::size_t k,
                                    std::string query = {}) {
  if (scores.size() != ids.size()) throw Error(ErrorCode::SizeMismatch, "scores and ids differ in length");
  if (k == 0 || k > scores.size())
    throw Error(ErrorCode::InvalidArgument, "k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
  RankedList out;
  out.query = std::move(query);
  out.k = k;
  out.items.resize(scores.size());
  std::iota(out.items.begin(), out.items.end(), 0);
  std::sort(out.items.begin(), out.items.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] > scores[y];
    return ids[x] < ids[y];
  });
  for (auto i : out.items) out.scores.push_back(scores[i]);
  return out;
}

/// Ranks the selected image rows by their mean cosine to the query prompts.
inline RankedList build_ranked_list(const EmbeddingSet& images, std::span<const std::size_t> rows,
                                    const VectorRefs& query_prompts, std::size_t k, std::string query = {}) {
  if (query_prompts.empty()) throw Error(ErrorCode::EmptySample, "no query prompts");
  std::vector<double> scores(rows.size());
  std::vector<std::string> ids(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0.0;
    for (const auto& q : query_prompts) s += cosine(images.row(rows[i]), q);
    scores[i] = s / static_cast<double>(query_prompts.size());
    ids[i] = images.ids()[rows[i]];
  }
  auto list = build_ranked_list(scores, ids, k, std::move(query));
  for (auto& item : list.items) item = rows[item];
  return list;
}

using Distribution = std::map<std::string, double>;

inline Distribution uniform_desired(const std::vector<std::string>& values) {
  Distribution d;
  for (const auto& v : values) d[v] = 1.0 / static_cast<double>(values.size());
  return d;
}

namespace detail {

inline void check_desired(const Distribution& desired) {
  if (desired.empty()) throw Error(ErrorCode::InvalidArgument, "empty desired distribution");
  double total = 0.0;
  for (const auto& [value, p] : desired) {
    if (!(p > 0.0)) throw Error(ErrorCode::InvalidArgument, "desired mass for '" + value + "' must be positive");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "desired distribution does not sum to 1");
}

inline std::size_t check_k(const RankedList& list, std::size_t k) {
  if (k == 0) k = list.k;
  if (k == 0 || k > list.items.size())
    throw Error(ErrorCode::InvalidArgument, "k=" + std::to_string(k) + " exceeds list length " + std::to_string(list.items.size()));
  return k;
}

}  // namespace detail

/// ln(share of `value` among the top k / desired share). Returns -infinity
/// when `value` is absent from the top k. `k == 0` uses the list's cutoff.
inline double skew_at_k(const RankedList& list, std::span<const std::string> labels, const std::string& value,
                        double desired, std::size_t k = 0) {
  k = detail::check_k(list, k);
  if (!(desired > 0.0) || desired > 1.0) throw Error(ErrorCode::InvalidArgument, "desired share must be in (0, 1]");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += labels[list.items[i]] == value;
  if (hits == 0) return -std::numeric_limits<double>::infinity();
  return std::log(static_cast<double>(hits) / static_cast<double>(k) / desired);
}

/// Largest skew over the values of the desired distribution.
inline double max_skew_at_k(const RankedList& list, std::span<const std::string> labels, const Distribution& desired,
                            std::size_t k = 0) {
  detail::check_desired(desired);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [value, p] : desired) best = std::max(best, skew_at_k(list, labels, value, p, k));
  return best;
}

/// KL(p || q) with natural log and 0 ln 0 = 0.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (p[j] > 0.0) s += p[j] * std::log(p[j] / q[j]);
  return s;
}

/// NDKL over soft labels: item i carries a distribution over the desired
/// values (same order as `desired`). Prefix distributions are running means.
inline double ndkl_soft(const std::vector<std::vector<double>>& item_dists, std::span<const double> desired) {
  if (item_dists.empty()) throw Error(ErrorCode::EmptySample, "NDKL of an empty list");
  for (double q : desired)
    if (!(q > 0.0)) throw Error(ErrorCode::InvalidArgument, "desired distribution must be strictly positive");
  std::vector<double> running(desired.size(), 0.0), prefix(desired.size());
  double num = 0.0, z = 0.0;
  for (std::size_t i = 0; i < item_dists.size(); ++i) {
    if (item_dists[i].size() != desired.size()) throw Error(ErrorCode::SizeMismatch, "item distribution width");
    for (std::size_t j = 0; j < desired.size(); ++j) running[j] += item_dists[i][j];
    for (std::size_t j = 0; j < desired.size(); ++j) prefix[j] = running[j] / static_cast<double>(i + 1);
    const double w = 1.0 / std::log2(static_cast<double>(i) + 2.0);
    num += w * kl_divergence(prefix, desired);
    z += w;
  }
  return num / z;
}

/// Normalized discounted cumulative KL divergence of the top-k prefixes
/// against the desired distribution. `k == 0` uses the list's cutoff.
inline double ndkl(const RankedList& list, std::span<const std::string> labels, const Distribution& desired,
                   std::size_t k = 0) {
  k = detail::check_k(list, k);
  detail::check_desired(desired);
  std::vector<std::string> values;
  std::vector<double> q;
  for (const auto& [v, p] : desired) {
    values.push_back(v);
    q.push_back(p);
  }
  std::vector<std::vector<double>> items;
  items.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& label = labels[list.items[i]];
    auto it = std::find(values.begin(), values.end(), label);
    if (it == values.end()) throw Error(ErrorCode::UndefinedDivergence, "label '" + label + "' has no desired mass");
    std::vector<double> one_hot(values.size(), 0.0);
    one_hot[static_cast<std::size_t>(it - values.begin())] = 1.0;
    items.push_back(std::move(one_hot));
  }
  return ndkl_soft(items, q);
}

}  // namespace vlaudit
