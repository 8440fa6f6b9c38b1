#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vlaudit/config.hpp"
#include "vlaudit/datamodel.hpp"
#include "vlaudit/embedio.hpp"
#include "vlaudit/fairmetrics.hpp"
#include "vlaudit/hash.hpp"
#include "vlaudit/simcore.hpp"
#include "vlaudit/stats.hpp"
#include "vlaudit/variation.hpp"

namespace vlaudit {

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

struct PipelineInputs {
  DatasetManifest manifest;
  EmbeddingSet images;  // unit rows
  std::optional<PromptIndex> texts;
  PromptTemplateSet templates;
  std::vector<Lexicon> lexicons;
  json hashes = json::object();

  PromptContext context(bool fix_articles) const { return {*texts, templates, fix_articles}; }
};

inline std::vector<Lexicon> selected_lexicons(const AuditConfig& cfg) {
  std::vector<Lexicon> out;
  if (cfg.lexicon == "scm" || cfg.lexicon == "both")
    out.push_back(cfg.lexicon_scm.empty() ? default_scm_lexicon() : load_lexicon(cfg.lexicon_scm));
  if (cfg.lexicon == "abc" || cfg.lexicon == "both")
    out.push_back(cfg.lexicon_abc.empty() ? default_abc_lexicon() : load_lexicon(cfg.lexicon_abc));
  return out;
}

inline PipelineInputs load_inputs(const AuditConfig& cfg) {
  auto require = [](const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::InvalidArgument, std::string("missing input path: ") + what);
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, std::string(what) + " not found: " + path);
  };
  require(cfg.manifest, "manifest");
  require(cfg.embeddings, "embeddings");
  require(cfg.text_embeddings, "text_embeddings");

  PipelineInputs in;
  in.manifest = load_manifest(cfg.manifest);
  in.images = read_embeddings(cfg.embeddings);
  const auto alignment = validate_alignment(in.images, in.manifest);
  if (!alignment.ok) throw Error(ErrorCode::SizeMismatch, "embeddings not aligned with manifest: " + alignment.summary());
  if (!in.images.normalized()) in.images = in.images.normalize();
  in.texts.emplace(read_embeddings(cfg.text_embeddings));
  in.templates = cfg.templates.empty() ? default_templates() : load_templates(cfg.templates);
  validate(in.templates);
  in.lexicons = selected_lexicons(cfg);

  in.hashes["manifest"] = sha256_file(cfg.manifest);
  in.hashes["embeddings"] = sha256_file(cfg.embeddings);
  in.hashes["text_embeddings"] = sha256_file(cfg.text_embeddings);
  in.hashes["templates"] = sha256_hex(to_json(in.templates).dump());
  json lex = json::object();
  for (const auto& l : in.lexicons) lex[to_string(l.model)] = sha256_hex(to_json(l).dump());
  in.hashes["lexicons"] = lex;
  return in;
}

// ---------------------------------------------------------------------------
// Small helpers shared by the analyses
// ---------------------------------------------------------------------------

namespace detail {

/// JSON cannot carry infinities or NaN; they become strings.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline json error_json(const Error& e) { return {{"error", {{"code", std::string(to_string(e.code()))}, {"detail", e.detail()}}}}; }

/// Runs a statistic whose inputs may be degenerate for some cells; such
/// cells are reported instead of aborting the run.
template <typename Fn>
json guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::EmptySample:
      case ErrorCode::DegenerateVariance:
      case ErrorCode::DegenerateSpread:
      case ErrorCode::NoValidPair:
      case ErrorCode::InvalidArgument:
        return error_json(e);
      default:
        throw;
    }
  }
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::size_t> rows_of_dataset(const DatasetManifest& m, Dataset d) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i].dataset == d) out.push_back(i);
  return out;
}

inline std::vector<Dataset> present_datasets(const DatasetManifest& m) {
  std::vector<Dataset> out;
  for (auto d : m.schema().datasets)
    if (!rows_of_dataset(m, d).empty()) out.push_back(d);
  return out;
}

/// Deterministic subsample of `k` of `rows` (kept in ascending order).
inline std::vector<std::size_t> subsample(std::vector<std::size_t> rows, std::size_t k, CounterRng rng) {
  if (k >= rows.size()) return rows;
  for (std::size_t i = 0; i < k; ++i) std::swap(rows[i], rows[i + rng.below(rows.size() - i)]);
  rows.resize(k);
  std::sort(rows.begin(), rows.end());
  return rows;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
  for (unsigned char c : label) h = (h ^ c) * 0x100000001b3ULL;
  return mix64(seed ^ h);
}

inline bool matches_category(const ImageRecord& r, const std::string& cat) {
  return to_string(r.race) == cat || to_string(r.gender) == cat;
}

/// Manipulation levels held fixed outside an attribute's variant family:
/// the most frequent value of each level attribute within the rows.
inline std::map<Attribute, double> baseline_levels(const DatasetManifest& m, const std::vector<std::size_t>& rows) {
  std::map<Attribute, double> out;
  for (auto a : {Attribute::age, Attribute::smiling, Attribute::lighting, Attribute::pose}) {
    std::map<double, std::size_t> counts;
    for (auto r : rows) {
      const auto v = attribute_value(m[r], a);
      if (std::holds_alternative<double>(v)) ++counts[std::get<double>(v)];
    }
    if (counts.empty()) continue;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it)
      if (it->second > best->second) best = it;
    out[a] = best->first;
  }
  return out;
}

/// Rows whose levels other than `varied` sit at the baseline.
inline std::vector<std::size_t> variant_family(const DatasetManifest& m, const std::vector<std::size_t>& rows,
                                               const std::map<Attribute, double>& base, Attribute varied) {
  std::vector<std::size_t> out;
  for (auto r : rows) {
    bool keep = !std::holds_alternative<std::monostate>(attribute_value(m[r], varied));
    for (const auto& [a, level] : base) {
      if (a == varied || !keep) continue;
      const auto v = attribute_value(m[r], a);
      keep = std::holds_alternative<double>(v) && std::get<double>(v) == level;
    }
    if (keep) out.push_back(r);
  }
  return out;
}

inline std::vector<std::size_t> restrict_rows(const std::vector<std::size_t>& members, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> out;
  std::set_intersection(members.begin(), members.end(), rows.begin(), rows.end(), std::back_inserter(out));
  return out;
}

inline std::vector<double> delta_column(const SimilarityTable& t, std::size_t col, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(t.at(r, col).delta_cos);
  return out;
}

inline std::string group_name(const DemographicGroup& g) {
  std::string out;
  for (const auto& [attr, value] : g.key) {
    if (!out.empty()) out += "_";
    out += to_string(value);
  }
  return out.empty() ? "all" : out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Attribute variation
// ---------------------------------------------------------------------------

struct VariationOutput {
  json report;
  std::string values_csv;
};

inline VariationOutput variation_report(const DatasetManifest& m, const SimilarityTable& table, const AuditConfig& cfg) {
  std::vector<AbsDiffDistribution> dists;
  json per_attr = json::object();
  std::ostringstream csv;
  csv << "attribute,dimension,resample,absdiff\n";
  for (const auto& name : cfg.variation_attributes) {
    VariationConfig vc;
    vc.attribute = parse_attribute(name);
    vc.resamples_per_dimension = cfg.resamples;
    vc.ordinal_min_gap = {{Attribute::age, cfg.gap_age}, {Attribute::smiling, cfg.gap_smiling}};
    vc.rng_seed = detail::derive_seed(cfg.rng_seed, "variation:" + name);
    per_attr[name] = detail::guarded([&]() -> json {
      auto d = bootstrap_distribution(m, table, vc);
      for (std::size_t dim = 0; dim < d.dimensions.size(); ++dim) {
        const auto vals = d.dimension_values(dim);
        for (std::size_t r = 0; r < vals.size(); ++r)
          csv << name << ',' << d.dimensions[dim] << ',' << r << ',' << detail::fmt(vals[r]) << '\n';
      }
      json j = to_json(d);
      dists.push_back(std::move(d));
      return j;
    });
  }
  json comparison = nullptr;
  if (dists.size() >= 2) {
    const auto cmp = compare_attributes(dists, parse_alternative(cfg.alternative));
    json order = json::array();
    for (auto a : cmp.by_median) order.push_back(to_string(a));
    json pairs = json::array();
    for (const auto& p : cmp.pairwise) pairs.push_back({{"a", to_string(p.a)}, {"b", to_string(p.b)}, {"test", to_json(p.test)}});
    comparison = {{"by_median", order}, {"pairwise", pairs}};
  }
  return {{{"distributions", per_attr}, {"comparison", comparison}}, csv.str()};
}

// ---------------------------------------------------------------------------
// Fairness metric battery
// ---------------------------------------------------------------------------

inline json metrics_report(const PipelineInputs& in, const AuditConfig& cfg) {
  const auto& m = in.manifest;
  const auto ctx = in.context(cfg.fix_articles);
  const auto datasets = detail::present_datasets(m);
  const auto& toggles = cfg.metrics;

  std::vector<const Dimension*> positive, all_dims;
  for (const auto& lex : in.lexicons)
    for (const auto& d : lex.dimensions) {
      all_dims.push_back(&d);
      if (d.valence == Valence::positive) positive.push_back(&d);
    }

  json report = {{"k", cfg.k}, {"categories", cfg.categories}, {"datasets", json::array()}};
  for (auto d : datasets) report["datasets"].push_back(to_string(d));

  auto members = [&](Dataset d, const std::string& cat) {
    std::vector<std::size_t> out;
    for (auto r : detail::rows_of_dataset(m, d))
      if (detail::matches_category(m[r], cat)) out.push_back(r);
    return out;
  };
  auto refs = [&](const std::vector<std::size_t>& rows) {
    VectorRefs out;
    for (auto r : rows) out.push_back(in.images.row(r));
    return out;
  };
  const std::size_t n_templates = in.templates.templates.size();

  if (toggles.markedness) {
    VectorRefs neutral;
    for (std::size_t t = 0; t < n_templates; ++t) neutral.push_back(ctx.neutral(t));
    json block = json::object();
    for (const auto& cat : cfg.categories) {
      VectorRefs marked;
      for (std::size_t t = 0; t < n_templates; ++t)
        marked.push_back((*in.texts)[fill_template(in.templates.templates[t], cat, cfg.fix_articles)]);
      json row = json::object();
      for (auto d : datasets)
        row[to_string(d)] = detail::guarded([&]() -> json { return markedness(refs(members(d, cat)), neutral, marked); });
      block[cat] = row;
    }
    report["markedness"] = block;
  }

  if (toggles.mean_cossim) {
    json block = json::object();
    for (const auto& cat : cfg.categories) {
      json row = json::object();
      for (auto d : datasets)
        row[to_string(d)] = detail::guarded([&]() -> json {
          const auto rows = members(d, cat);
          return mean_cossim(in.images, rows, positive, ctx);
        });
      block[cat] = row;
    }
    report["mean_cossim"] = block;
  }

  if (toggles.weat) {
    VectorRefs texts;
    for (const auto* dim : all_dims)
      for (const auto& adj : dim->adjectives)
        for (std::size_t t = 0; t < n_templates; ++t) texts.push_back(ctx.prompt(adj, t));
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"white", "black"}, {"asian", "black"}, {"asian", "white"}, {"male", "female"}};
    const auto spread = cfg.spread == "population" ? SpreadMode::population : SpreadMode::sample;
    json block = json::object();
    for (const auto& [a, b] : pairs) {
      const std::string label = a + "-" + b;
      json row = json::object();
      for (auto d : datasets)
        row[to_string(d)] = detail::guarded([&]() -> json {
          auto ra = members(d, a), rb = members(d, b);
          const auto n = std::min(ra.size(), rb.size());
          const auto seed = detail::derive_seed(cfg.rng_seed, "weat:" + label + ":" + to_string(d));
          ra = detail::subsample(std::move(ra), n, CounterRng(seed, 0));
          rb = detail::subsample(std::move(rb), n, CounterRng(seed, 1));
          auto w = to_json(scweat(texts, refs(ra), refs(rb), cfg.permutations, seed, spread));
          w["texts"] = texts.size();
          return w;
        });
      block[label] = row;
    }
    report["weat"] = block;
  }

  if (toggles.skew || toggles.ndkl) {
    json block = json::object();
    for (auto d : datasets) {
      const auto rows = detail::rows_of_dataset(m, d);
      const std::size_t k_eff = std::min(cfg.k, rows.size());
      std::vector<std::string> race_labels(m.size()), gender_labels(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        race_labels[i] = to_string(m[i].race);
        gender_labels[i] = to_string(m[i].gender);
      }
      std::vector<std::string> races, genders;
      for (auto r : m.schema().races) races.push_back(to_string(r));
      for (auto g : m.schema().genders) genders.push_back(to_string(g));
      const std::vector<std::tuple<std::string, const std::vector<std::string>*, Distribution>> attrs = {
          {"race", &race_labels, uniform_desired(races)}, {"gender", &gender_labels, uniform_desired(genders)}};

      json ds = json::object();
      for (const auto& [attr, labels, desired] : attrs) {
        json queries = json::array();
        double max_skew_sum = 0.0, ndkl_sum = 0.0;
        std::size_t max_skew_n = 0, ndkl_n = 0;
        for (const auto* dim : positive) {
          VectorRefs q;
          for (const auto& adj : dim->adjectives)
            for (std::size_t t = 0; t < n_templates; ++t) q.push_back(ctx.prompt(adj, t));
          const auto list = build_ranked_list(in.images, rows, q, k_eff, dim->name);
          json entry = {{"query", dim->name}, {"prompts", q.size()}};
          if (toggles.skew) {
            json skews = json::object();
            for (const auto& [value, p] : desired) skews[value] = detail::number(skew_at_k(list, *labels, value, p));
            const double ms = max_skew_at_k(list, *labels, desired);
            entry["skew"] = skews;
            entry["max_skew"] = detail::number(ms);
            if (std::isfinite(ms)) {
              max_skew_sum += ms;
              ++max_skew_n;
            }
          }
          if (toggles.ndkl) {
            const double v = ndkl(list, *labels, desired);
            entry["ndkl"] = v;
            ndkl_sum += v;
            ++ndkl_n;
          }
          queries.push_back(entry);
        }
        json desired_json = json::object();
        for (const auto& [value, p] : desired) desired_json[value] = p;
        json cell = {{"k_effective", k_eff}, {"desired", desired_json}, {"queries", queries}};
        if (toggles.skew) cell["max_skew_mean"] = max_skew_n ? json(max_skew_sum / static_cast<double>(max_skew_n)) : json(nullptr);
        if (toggles.ndkl) cell["ndkl_mean"] = ndkl_n ? json(ndkl_sum / static_cast<double>(ndkl_n)) : json(nullptr);
        ds[attr] = cell;
      }
      block[to_string(d)] = ds;
    }
    report["ranking"] = block;
    report["ranking_query_config"] = {{"queries", "mean cosine to every prompt of each positive dimension"},
                                      {"tie_break", "ascending id"},
                                      {"desired", "uniform over declared attribute values"}};
  }
  return report;
}

// ---------------------------------------------------------------------------
// Trends over age and smiling
// ---------------------------------------------------------------------------

inline json trends_report(const DatasetManifest& m, const SimilarityTable& table, const AuditConfig& cfg) {
  json out = json::object();
  for (auto d : detail::present_datasets(m)) {
    const auto rows = detail::rows_of_dataset(m, d);
    const auto groups = group_by(m, {Attribute::race, Attribute::gender}, rows);
    json ds = json::array();
    auto fit_series = [&](const std::string& group, const std::string& attribute,
                          const std::map<double, std::vector<std::size_t>>& by_level) {
      for (std::size_t c = 0; c < table.cols(); ++c) {
        std::vector<double> xs, ys;
        std::vector<std::size_t> counts;
        for (const auto& [level, rs] : by_level) {
          if (rs.empty()) continue;
          xs.push_back(level);
          ys.push_back(mean(detail::delta_column(table, c, rs)));
          counts.push_back(rs.size());
        }
        json entry = {{"group", group},   {"attribute", attribute}, {"dimension", table.dimensions()[c].name},
                      {"levels", xs},     {"means", ys},            {"counts", counts}};
        entry["fit"] = detail::guarded([&]() -> json {
          const auto f = polyfit2(xs, ys);
          return {{"c0", f.c0}, {"c1", f.c1}, {"c2", f.c2}, {"rss", f.rss}};
        });
        ds.push_back(entry);
      }
    };

    if (d == Dataset::causalface) {
      const auto base = detail::baseline_levels(m, rows);
      for (auto attr : {Attribute::age, Attribute::smiling}) {
        const auto family = detail::variant_family(m, rows, base, attr);
        for (const auto& g : groups) {
          std::map<double, std::vector<std::size_t>> by_level;
          for (auto r : detail::restrict_rows(g.members, family))
            by_level[std::get<double>(attribute_value(m[r], attr))].push_back(r);
          fit_series(detail::group_name(g), to_string(attr), by_level);
        }
      }
    } else {
      // Decade bins from the minimum age, equal counts per bin within each group.
      const AgeBinning bins{cfg.min_age, 10.0};
      const auto adults = detail::restrict_rows(filter_min_age(m, cfg.min_age, false), rows);
      for (const auto& g : groups) {
        std::map<double, std::vector<std::size_t>> by_bin;
        for (auto r : detail::restrict_rows(g.members, adults)) by_bin[bins.bin_of(*m[r].age)].push_back(r);
        std::size_t smallest = std::numeric_limits<std::size_t>::max();
        for (const auto& [_, rs] : by_bin) smallest = std::min(smallest, rs.size());
        for (auto& [bin, rs] : by_bin)
          rs = detail::subsample(rs, smallest,
                                 CounterRng(detail::derive_seed(cfg.rng_seed, "agebin:" + detail::group_name(g)),
                                            static_cast<std::uint64_t>(bin)));
        fit_series(detail::group_name(g), "age_bin", by_bin);
      }
    }
    out[to_string(d)] = ds;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Confound correlations (smiling, lighting, pose)
// ---------------------------------------------------------------------------

inline json confounds_report(const DatasetManifest& m, const SimilarityTable& table) {
  const auto rows = detail::rows_of_dataset(m, Dataset::causalface);
  if (rows.empty()) return {{"skipped", "no causalface records"}};
  const auto base = detail::baseline_levels(m, rows);
  json out = json::array();
  for (auto attr : {Attribute::smiling, Attribute::lighting, Attribute::pose}) {
    const auto family = detail::variant_family(m, rows, base, attr);
    std::vector<double> levels;
    for (auto r : family) levels.push_back(std::get<double>(attribute_value(m[r], attr)));
    for (std::size_t c = 0; c < table.cols(); ++c) {
      json entry = {{"attribute", to_string(attr)}, {"dimension", table.dimensions()[c].name}, {"n", family.size()}};
      entry["pearson"] = detail::guarded([&]() -> json {
        const auto p = pearson(levels, detail::delta_column(table, c, family));
        return {{"r", p.r}, {"p_value", p.p_value}, {"p_display", format_p(p.p_value, p.p_floored)}};
      });
      out.push_back(entry);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Covariance ellipses
// ---------------------------------------------------------------------------

inline json ellipses_report(const DatasetManifest& m, const SimilarityTable& table, const AuditConfig& cfg) {
  const std::vector<std::pair<std::string, std::string>> axes = {
      {"A+", "A-"}, {"BP", "BC"}, {"C+", "C-"}, {"Warmth", "Competence"}};
  json out = json::object();
  for (auto d : detail::present_datasets(m)) {
    const auto rows = detail::rows_of_dataset(m, d);
    json ds = json::array();
    for (const auto& [x, y] : axes) {
      std::size_t cx = 0, cy = 0;
      try {
        cx = table.column(x);
        cy = table.column(y);
      } catch (const Error&) {
        continue;  // dimension pair not in the selected lexicons
      }
      for (const auto& g : group_by(m, {Attribute::race, Attribute::gender}, rows)) {
        json entry = {{"group", detail::group_name(g)}, {"x", x}, {"y", y}, {"n", g.members.size()}};
        entry["ellipse"] = detail::guarded([&]() -> json {
          std::vector<Point2> pts;
          for (auto r : g.members) pts.push_back({table.at(r, cx).delta_cos, table.at(r, cy).delta_cos});
          const auto e = cov_ellipse(pts, cfg.ellipse_sigma);
          return {{"center", {e.center.x, e.center.y}},
                  {"axes", {e.major, e.minor}},
                  {"rotation", e.rotation},
                  {"k_sigma", cfg.ellipse_sigma}};
        });
        ds.push_back(entry);
      }
    }
    out[to_string(d)] = ds;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Neutral-prompt densities and seed-matched tests
// ---------------------------------------------------------------------------

inline json kde_report(const DatasetManifest& m, const SimilarityTable& table, const AuditConfig& cfg) {
  json out = json::object();
  for (auto d : detail::present_datasets(m)) {
    json ds = json::array();
    for (const auto& g : group_by(m, {Attribute::race, Attribute::gender}, detail::rows_of_dataset(m, d))) {
      json entry = {{"group", detail::group_name(g)}, {"n", g.members.size()}};
      entry["density"] = detail::guarded([&]() -> json {
        std::vector<double> sample;
        for (auto r : g.members) sample.push_back(table.neutral(r));
        const double h = cfg.kde_bandwidth > 0 ? cfg.kde_bandwidth : scott_bandwidth(sample);
        const auto grid = kde_grid(sample, h, cfg.kde_points);
        const auto curve = kde(sample, grid, h);
        return {{"bandwidth", curve.bandwidth}, {"grid", curve.grid}, {"density", curve.density}};
      });
      ds.push_back(entry);
    }
    out[to_string(d)] = ds;
  }
  return out;
}

inline json neutral_report(const DatasetManifest& m, const SimilarityTable& table) {
  const auto rows = detail::rows_of_dataset(m, Dataset::causalface);
  if (rows.empty()) return {{"skipped", "no causalface records"}};
  // Prototype images: every manipulation level at its baseline.
  const auto base = detail::baseline_levels(m, rows);
  std::map<std::string, std::map<std::int64_t, double>> proto;  // group -> seed -> neutral cos
  for (auto r : rows) {
    bool at_base = m[r].seed.has_value();
    for (const auto& [a, level] : base) at_base = at_base && std::get<double>(attribute_value(m[r], a)) == level;
    if (!at_base) continue;
    proto[to_string(m[r].race) + "_" + to_string(m[r].gender)].emplace(*m[r].seed, table.neutral(r));
  }
  std::vector<std::pair<std::string, std::string>> comparisons;
  for (auto g : m.schema().genders)
    for (std::size_t i = 0; i < m.schema().races.size(); ++i)
      for (std::size_t j = i + 1; j < m.schema().races.size(); ++j)
        comparisons.emplace_back(to_string(m.schema().races[i]) + "_" + to_string(g),
                                 to_string(m.schema().races[j]) + "_" + to_string(g));
  for (auto r : m.schema().races)
    for (std::size_t i = 0; i < m.schema().genders.size(); ++i)
      for (std::size_t j = i + 1; j < m.schema().genders.size(); ++j)
        comparisons.emplace_back(to_string(r) + "_" + to_string(m.schema().genders[i]),
                                 to_string(r) + "_" + to_string(m.schema().genders[j]));

  json tests = json::array();
  for (const auto& [ga, gb] : comparisons) {
    std::vector<double> a, b;
    if (proto.count(ga) && proto.count(gb))
      for (const auto& [seed, v] : proto.at(ga))
        if (auto it = proto.at(gb).find(seed); it != proto.at(gb).end()) {
          a.push_back(v);
          b.push_back(it->second);
        }
    json entry = {{"a", ga}, {"b", gb}, {"matched_seeds", a.size()}};
    if (!a.empty()) entry["mean_difference"] = mean(b) - mean(a);
    entry["paired_t"] = detail::guarded([&]() -> json {
      if (a.size() < 2) throw Error(ErrorCode::EmptySample, "need >= 2 matched seeds");
      return to_json(t_test_paired(a, b, Alternative::two_sided));
    });
    entry["pearson"] = detail::guarded([&]() -> json {
      if (a.size() < 3) throw Error(ErrorCode::EmptySample, "need >= 3 matched seeds");
      const auto p = pearson(a, b);
      return {{"r", p.r}, {"p_value", p.p_value}, {"p_display", format_p(p.p_value, p.p_floored)}};
    });
    tests.push_back(entry);
  }
  return {{"baseline_levels", [&] {
             json j = json::object();
             for (const auto& [a, v] : base) j[to_string(a)] = v;
             return j;
           }()},
          {"comparisons", tests}};
}

// ---------------------------------------------------------------------------
// Valence geometry of the text side
// ---------------------------------------------------------------------------

/// Unit-normalized mean of an adjective's template prompts.
inline std::vector<double> adjective_vector(const std::string& adj, const PromptContext& ctx) {
  std::vector<double> v(ctx.texts.dim(), 0.0);
  for (std::size_t t = 0; t < ctx.templates.templates.size(); ++t) {
    const auto p = ctx.prompt(adj, t);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += p[k];
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "adjective '" + adj + "' averages to zero");
  for (double& x : v) x /= norm;
  return v;
}

inline json valence_report(const PipelineInputs& in, const SimilarityTable& table, const AuditConfig& cfg) {
  const auto ctx = in.context(cfg.fix_articles);
  std::map<std::string, const Dimension*> by_name;
  for (const auto& lex : in.lexicons)
    for (const auto& d : lex.dimensions) by_name[d.name] = &d;

  json axes = json::array();
  const std::vector<std::tuple<std::string, std::string, std::string>> poles = {
      {"Agency", "A+", "A-"}, {"Belief", "BP", "BC"}, {"Communion", "C+", "C-"}};
  for (const auto& [axis, pos, neg] : poles) {
    if (!by_name.count(pos) || !by_name.count(neg)) continue;
    std::vector<std::vector<double>> pv, nv;
    for (const auto& a : by_name[pos]->adjectives) pv.push_back(adjective_vector(a, ctx));
    for (const auto& a : by_name[neg]->adjectives) nv.push_back(adjective_vector(a, ctx));
    std::vector<double> within, cross;
    for (const auto* set : {&pv, &nv})
      for (std::size_t i = 0; i < set->size(); ++i)
        for (std::size_t j = i + 1; j < set->size(); ++j) within.push_back(cosine((*set)[i], (*set)[j]));
    for (const auto& p : pv)
      for (const auto& n : nv) cross.push_back(cosine(p, n));
    json entry = {{"axis", axis}, {"positive", pos}, {"negative", neg}};
    entry["within_mean"] = mean(within);
    entry["cross_mean"] = mean(cross);
    entry["test"] = detail::guarded([&]() -> json { return to_json(t_test_independent_one_sided(within, cross)); });
    axes.push_back(entry);
  }

  json projection = detail::guarded([&]() -> json {
    std::vector<double> data;
    json labels = json::array();
    std::size_t n = 0;
    for (const auto& lex : in.lexicons)
      for (const auto& d : lex.dimensions)
        for (const auto& a : d.adjectives) {
          const auto v = adjective_vector(a, ctx);
          data.insert(data.end(), v.begin(), v.end());
          labels.push_back({{"dimension", d.name}, {"adjective", a}});
          ++n;
        }
    const auto p = pca3(data, n, ctx.texts.dim());
    json pts = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      json pt = labels[i];
      pt["xyz"] = p.projected[i];
      pts.push_back(pt);
    }
    return {{"explained_variance", p.explained}, {"total_variance", p.total_variance}, {"points", pts}};
  });

  json heatmaps = json::object();
  const auto& m = in.manifest;
  for (auto d : detail::present_datasets(m)) {
    json ds = json::array();
    for (const auto& g : group_by(m, {Attribute::race, Attribute::gender}, detail::rows_of_dataset(m, d))) {
      json matrix = json::array();
      for (std::size_t a = 0; a < table.cols(); ++a) {
        json row = json::array();
        const auto xa = detail::delta_column(table, a, g.members);
        for (std::size_t b = 0; b < table.cols(); ++b) {
          const auto xb = detail::delta_column(table, b, g.members);
          try {
            row.push_back(pearson(xa, xb).r);
          } catch (const Error&) {
            row.push_back(nullptr);  // fewer than 3 members or a constant column
          }
        }
        matrix.push_back(row);
      }
      ds.push_back({{"group", detail::group_name(g)}, {"n", g.members.size()}, {"r", matrix}});
    }
    heatmaps[to_string(d)] = ds;
  }
  json names = json::array();
  for (const auto& dim : table.dimensions()) names.push_back(dim.name);
  return {{"axes", axes}, {"pca", projection}, {"dimension_order", names}, {"correlation_heatmaps", heatmaps}};
}

// ---------------------------------------------------------------------------
// Output staging
// ---------------------------------------------------------------------------

/// Collects report files in a sibling staging directory and moves them into
/// the output directory on commit. Destroying an uncommitted writer removes
/// the staging directory, so a failed run leaves no partial outputs.
class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path out) : out_(std::move(out)) {
    staging_ = out_;
    staging_ += ".staging";
    std::filesystem::remove_all(staging_);
    std::filesystem::create_directories(staging_);
  }
  OutputWriter(const OutputWriter&) = delete;
  OutputWriter& operator=(const OutputWriter&) = delete;
  ~OutputWriter() {
    if (!committed_) {
      std::error_code ec;
      std::filesystem::remove_all(staging_, ec);
    }
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(staging_ / name, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot write " + (staging_ / name).string());
    f << content;
    if (!f) throw Error(ErrorCode::Io, "short write to " + (staging_ / name).string());
    files_[name] = sha256_hex(content);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  const std::map<std::string, std::string>& files() const noexcept { return files_; }

  void commit() {
    std::filesystem::create_directories(out_);
    for (const auto& [name, _] : files_) std::filesystem::rename(staging_ / name, out_ / name);
    std::filesystem::remove_all(staging_);
    committed_ = true;
  }

 private:
  std::filesystem::path out_;
  std::filesystem::path staging_;
  std::map<std::string, std::string> files_;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

inline constexpr const char* kReportVersion = "1";

/// Runs every enabled analysis and writes the report files. With every
/// toggle off only the similarity table is written. Returns the names of
/// the files written; nothing is left behind on failure.
inline std::vector<std::string> run_pipeline(const AuditConfig& cfg) {
  validate(cfg);
  const auto in = load_inputs(cfg);
  const auto ctx = in.context(cfg.fix_articles);
  const auto table = build_similarity_table(in.images, in.manifest, in.lexicons, ctx);

  const json provenance = {{"config_hash", config_hash(cfg)}, {"inputs", in.hashes}};
  OutputWriter out(cfg.output_dir);
  {
    std::ostringstream csv;
    write_table_csv(csv, table);
    out.write("similarity.csv", csv.str());
    out.write_json("similarity.json", table_to_json(table, provenance));
  }
  const auto& t = cfg.metrics;
  if (t.variation) {
    auto v = variation_report(in.manifest, table, cfg);
    out.write_json("variation.json", v.report);
    out.write("variation_values.csv", v.values_csv);
  }
  if (t.weat || t.markedness || t.mean_cossim || t.skew || t.ndkl)
    out.write_json("metrics.json", metrics_report(in, cfg));
  if (t.trends) out.write_json("trends.json", trends_report(in.manifest, table, cfg));
  if (t.confounds) out.write_json("confounds.json", confounds_report(in.manifest, table));
  if (t.ellipses) out.write_json("ellipses.json", ellipses_report(in.manifest, table, cfg));
  if (t.kde) out.write_json("kde.json", kde_report(in.manifest, table, cfg));
  if (t.neutral) out.write_json("neutral.json", neutral_report(in.manifest, table));
  if (t.valence) out.write_json("valence.json", valence_report(in, table, cfg));

  if (t.any()) {
    json outputs = json::object();
    for (const auto& [name, hash] : out.files()) outputs[name] = hash;
    out.write_json("report.json", {{"version", kReportVersion},
                                   {"config", to_json(cfg)},
                                   {"provenance", provenance},
                                   {"outputs", outputs}});
  }
  std::vector<std::string> names;
  for (const auto& [name, _] : out.files()) names.push_back(name);
  out.commit();
  return names;
}

}  // namespace vlaudit
