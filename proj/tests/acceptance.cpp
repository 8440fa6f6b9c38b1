// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vlaudit/vlaudit.hpp"

using namespace vlaudit;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double rel_err(double got, double want) {
  if (got == want) return 0.0;  // covers matching infinities
  if (!std::isfinite(got) || !std::isfinite(want)) return INFINITY;
  return std::fabs(got - want) / std::max(std::fabs(want), std::numeric_limits<double>::min());
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Random unit vectors for every prompt of `lexicons` under `t`, plus the
/// neutral prompts.
EmbeddingSet random_texts(const std::vector<Lexicon>& lexicons, const PromptTemplateSet& t, std::size_t dim,
                          std::mt19937_64& rng) {
  std::vector<std::string> ids;
  std::vector<double> data;
  std::set<std::string> seen;
  for (const auto& lex : lexicons)
    for (const auto& s : expand_prompts(lex, t).unique_texts()) {
      if (!seen.insert(s).second) continue;
      ids.push_back(s);
      const auto v = fixtures::unit_vec(rng, dim);
      data.insert(data.end(), v.begin(), v.end());
    }
  return EmbeddingSet(dim, std::move(data), std::move(ids), true);
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// ---------------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::string worst_what = "none";
  auto track = [&](double got, double want, const char* what) {
    const double e = rel_err(got, want);
    if (e > worst) {
      worst = e;
      worst_what = what;
    }
  };
  const char* letters[] = {"v0", "v1", "v2", "v3", "v4"};
  const auto t0 = Clock::now();
  for (int fixture = 0; fixture < 200; ++fixture) {
    // ranking: up to 50 items, up to 5 attribute values
    const std::size_t n = 2 + rng() % 49, n_values = 2 + rng() % 4, k = 1 + rng() % n;
    std::vector<double> scores(n);
    std::vector<std::string> ids(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 20) / 20.0;
      ids[i] = fmt("item%03zu", static_cast<std::size_t>(rng() % 1000)) + "_" + std::to_string(i);
      labels[i] = letters[rng() % n_values];
    }
    Distribution desired;
    std::vector<double> w(n_values);
    double wsum = 0.0;
    for (auto& x : w) wsum += (x = 0.05 + static_cast<double>(rng() % 1000) / 1000.0);
    std::vector<std::string> values;
    std::vector<double> q;
    for (std::size_t j = 0; j < n_values; ++j) {
      desired[letters[j]] = w[j] / wsum;
      values.push_back(letters[j]);
      q.push_back(w[j] / wsum);
    }
    const auto list = build_ranked_list(scores, ids, k);
    std::vector<std::string> ranked;
    for (auto i : oracle::rank_by_selection(scores, ids)) ranked.push_back(labels[i]);
    for (std::size_t j = 0; j < n_values; ++j)
      track(skew_at_k(list, labels, values[j], q[j]), oracle::skew(ranked, values[j], q[j], k), "skew_at_k");
    track(ndkl(list, labels, desired), oracle::ndkl(ranked, values, q, k), "ndkl");

    // SC-WEAT, markedness, mean cosine on small embedding sets
    const std::size_t dim = 4 + rng() % 12, m = 2 + rng() % 6, n_texts = 1 + rng() % 5;
    std::vector<std::vector<double>> texts, a, b;
    for (std::size_t i = 0; i < n_texts; ++i) texts.push_back(fixtures::unit_vec(rng, dim));
    for (std::size_t i = 0; i < m; ++i) a.push_back(fixtures::unit_vec(rng, dim));
    for (std::size_t i = 0; i < m; ++i) b.push_back(fixtures::unit_vec(rng, dim));
    const auto spread = fixture % 2 ? SpreadMode::population : SpreadMode::sample;
    const auto wr = scweat(fixtures::refs(texts), fixtures::refs(a), fixtures::refs(b), 100, 1, spread);
    const auto wo = oracle::scweat(texts, a, b, spread == SpreadMode::sample);
    track(wr.statistic, wo.statistic, "scweat statistic");
    track(wr.effect_size, wo.effect_size, "scweat effect size");

    const std::size_t n_templates = 1 + rng() % 3;
    std::vector<std::vector<double>> neutral, marked;
    for (std::size_t t = 0; t < n_templates; ++t) {
      neutral.push_back(fixtures::unit_vec(rng, dim));
      marked.push_back(fixtures::unit_vec(rng, dim));
    }
    track(markedness(fixtures::refs(a), fixtures::refs(neutral), fixtures::refs(marked)),
          oracle::markedness(a, neutral, marked), "markedness");

    PromptTemplateSet tmpl;
    const char* shapes[] = {"A <adjective> person.", "This is a <adjective> person.", "A photo of a <adjective> person."};
    for (std::size_t t = 0; t < n_templates; ++t) tmpl.templates.push_back(shapes[t]);
    Lexicon lex{LexiconModel::SCM, {}};
    const std::size_t n_dims = 1 + rng() % 4;
    for (std::size_t d = 0; d < n_dims; ++d) {
      Dimension dm{"D" + std::to_string(d), "D" + std::to_string(d), Valence::positive, {}};
      const std::size_t n_adj = 1 + rng() % 4;
      for (std::size_t j = 0; j < n_adj; ++j) dm.adjectives.push_back("w" + std::to_string(d) + "x" + std::to_string(j));
      lex.dimensions.push_back(dm);
    }
    const auto text_set = random_texts({lex}, tmpl, dim, rng);
    PromptIndex idx(text_set);
    PromptContext ctx{idx, tmpl};
    std::vector<double> img_data;
    std::vector<std::string> img_ids;
    for (std::size_t i = 0; i < a.size(); ++i) {
      img_data.insert(img_data.end(), a[i].begin(), a[i].end());
      img_ids.push_back("i" + std::to_string(i));
    }
    EmbeddingSet images(dim, img_data, img_ids, true);
    std::vector<std::size_t> rows(a.size());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<const Dimension*> dims;
    std::vector<std::vector<std::vector<std::vector<double>>>> prompts;
    for (const auto& dm : lex.dimensions) {
      dims.push_back(&dm);
      auto& pd = prompts.emplace_back();
      for (const auto& adj : dm.adjectives) {
        auto& pa = pd.emplace_back();
        for (std::size_t t = 0; t < n_templates; ++t) pa.push_back(to_vec(idx[fill_template(tmpl.templates[t], adj)]));
      }
    }
    track(mean_cossim(images, rows, dims, ctx), oracle::mean_cossim(a, prompts), "mean_cossim");
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  return {worst <= 1e-10 && secs < 10.0,
          fmt("200 fixtures, worst relative error %.3g (%s), %.2f s", worst, worst_what.c_str(), secs)};
}

Outcome ndkl_ideal() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_values = 2 + rng() % 4, len = 1 + rng() % 60;
    std::vector<double> q(n_values);
    double s = 0.0;
    for (auto& x : q) s += (x = 0.01 + static_cast<double>(rng() % 1000) / 1000.0);
    for (auto& x : q) x /= s;
    // Every item carries the desired distribution, so every prefix matches it.
    worst = std::max(worst, ndkl_soft(std::vector<std::vector<double>>(len, q), q));
  }
  return {worst < 1e-12, fmt("50 desired distributions, max NDKL %.3g (soft-label lists)", worst)};
}

Outcome ndkl_worked() {
  const std::vector<std::string> ids = {"a", "b"}, labels = {"A", "B"};
  const std::vector<double> scores = {2, 1};
  const double v = ndkl(build_ranked_list(scores, ids, 2), labels, {{"A", 0.5}, {"B", 0.5}});
  return {std::fabs(v - 0.425) <= 0.001, fmt("NDKL([A,B]) = %.6f", v)};
}

Outcome scweat_monte_carlo() {
  std::mt19937_64 rng(99);
  const std::size_t resamples = 10000;
  double worst_z = 0.0;
  std::size_t fixtures_run = 0;
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 2 + trial % 4, dim = 6;
    std::vector<std::vector<double>> t, a, b;
    for (std::size_t i = 0; i < 2; ++i) t.push_back(fixtures::unit_vec(rng, dim));
    for (std::size_t i = 0; i < m; ++i) a.push_back(fixtures::unit_vec(rng, dim));
    for (std::size_t i = 0; i < m; ++i) b.push_back(fixtures::unit_vec(rng, dim));
    const auto ex = scweat(fixtures::refs(t), fixtures::refs(a), fixtures::refs(b), resamples, 0, SpreadMode::sample,
                           PartitionMode::exact);
    const auto mc = scweat(fixtures::refs(t), fixtures::refs(a), fixtures::refs(b), resamples,
                           static_cast<std::uint64_t>(trial), SpreadMode::sample, PartitionMode::sampled);
    const double p = ex.p_floored ? 0.0 : ex.p_value;
    const double p_mc = mc.p_floored ? 0.0 : mc.p_value;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(resamples));
    const double diff = std::fabs(p_mc - p);
    if (diff > 3 * sigma) ok = false;
    if (sigma > 0) worst_z = std::max(worst_z, diff / sigma);
    ++fixtures_run;
  }
  return {ok, fmt("%zu fixtures with |A u B| <= 10, worst |p_mc - p_exact| = %.2f sigma", fixtures_run, worst_z)};
}

Outcome delta_consistency() {
  std::mt19937_64 rng(5);
  const std::size_t dim = 64;
  const auto t = default_templates();
  const auto scm = default_scm_lexicon(), abc = default_abc_lexicon();
  const auto texts = random_texts({scm, abc}, t, dim, rng);
  PromptIndex idx(texts);
  PromptContext ctx{idx, t};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto img = fixtures::unit_vec(rng, dim);
    EmbeddingSet one(dim, img, {"i"}, true);
    const std::size_t rows[] = {0};
    for (const auto* lex : {&scm, &abc})
      for (const auto& d : lex->dimensions)
        worst = std::max(worst, std::fabs(delta_similarity(img, d, ctx) -
                                          (dim_similarity(one, rows, d, ctx) - neutral_similarity(img, ctx))));
  }
  // A dimension whose prompts embed exactly like the neutral prompts.
  const Dimension neutral_dim{"Neutral", "Neutral", Valence::positive, {"plain", "ordinary"}};
  std::vector<std::string> ids;
  std::vector<double> data;
  for (const auto& tm : t.templates) {
    const auto v = fixtures::unit_vec(rng, dim);
    for (const auto& text : {neutral_prompt(tm), fill_template(tm, "plain"), fill_template(tm, "ordinary")}) {
      ids.push_back(text);
      data.insert(data.end(), v.begin(), v.end());
    }
  }
  EmbeddingSet ntexts(dim, data, ids, true);
  PromptIndex nidx(ntexts);
  PromptContext nctx{nidx, t};
  bool zero = true;
  for (int trial = 0; trial < 50; ++trial) zero = zero && delta_similarity(fixtures::unit_vec(rng, dim), neutral_dim, nctx) == 0.0;
  return {worst <= 1e-12 && zero,
          fmt("max |delta - (raw - neutral)| = %.3g over 50 images x 8 dimensions; neutral dimension exactly 0: %s",
              worst, zero ? "yes" : "no")};
}

/// Independent statement of the pair constraint: exactly the varied
/// attribute differs, and ordinal levels differ by at least the gap.
bool pair_ok(const ImageRecord& x, const ImageRecord& y, Attribute attr, double gap) {
  const bool same_seed = x.seed == y.seed, same_race = x.race == y.race, same_gender = x.gender == y.gender;
  const bool same_age = *x.age == *y.age, same_smile = *x.smiling == *y.smiling;
  const bool same_light = *x.lighting == *y.lighting, same_pose = *x.pose == *y.pose;
  const int differing = !same_seed + !same_race + !same_gender + !same_age + !same_smile + !same_light + !same_pose;
  if (differing != 1 || x.dataset != y.dataset) return false;
  switch (attr) {
    case Attribute::seed: return !same_seed;
    case Attribute::race: return !same_race;
    case Attribute::gender: return !same_gender;
    case Attribute::age: return std::fabs(*x.age - *y.age) >= gap - 1e-9;
    case Attribute::smiling: return std::fabs(*x.smiling - *y.smiling) >= gap - 1e-9;
    case Attribute::lighting: return !same_light;
    case Attribute::pose: return !same_pose;
    default: return false;
  }
}

Outcome sampler_constraint() {
  const auto data = make_synthetic_causalface({.seeds = 3, .dim = 4});
  const auto& m = data.manifest;
  std::size_t violations = 0, draws = 0;
  for (auto attr : variation_attributes()) {
    const double gap = (attr == Attribute::age || attr == Attribute::smiling) ? 1.1 : 0.0;
    PairSampler s(m, attr, gap);
    CounterRng rng(31, static_cast<std::uint64_t>(attr));
    for (int i = 0; i < 100000; ++i) {
      const auto [a, b] = s(rng);
      violations += !pair_ok(m[a], m[b], attr, gap);
      ++draws;
    }
  }
  return {violations == 0, fmt("%zu draws over %zu attributes, %zu violations", draws, variation_attributes().size(), violations)};
}

Outcome bias_injection() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(12);
  const std::size_t dim = 64, seeds = 12;
  const double delta_target = 0.02;
  const auto tmpl = default_templates();
  const auto scm = default_scm_lexicon();
  const auto texts = random_texts({scm}, tmpl, dim, rng);
  PromptIndex idx(texts);
  PromptContext ctx{idx, tmpl};
  const Dimension& target = scm.dimension("Warmth");

  std::vector<double> bias_dir(dim, 0.0);
  for (const auto& adj : target.adjectives)
    for (std::size_t t = 0; t < tmpl.templates.size(); ++t) {
      const auto p = ctx.prompt(adj, t);
      for (std::size_t i = 0; i < dim; ++i) bias_dir[i] += p[i];
    }
  double nrm = 0.0;
  for (double x : bias_dir) nrm += x * x;
  for (double& x : bias_dir) x /= std::sqrt(nrm);

  // Images: a shared base plus small identity and per-image noise. Race has
  // no effect except the injected bias; lighting has no effect at all.
  const auto base = fixtures::unit_vec(rng, dim);
  const std::vector<Race> races = {Race::asian, Race::black, Race::white};
  const std::vector<Gender> genders = {Gender::female, Gender::male};
  const std::vector<double> lights = {-3, -2, -1, 0, 1, 2, 3};
  std::vector<ImageRecord> recs;
  std::vector<std::vector<double>> raw;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto identity = fixtures::gaussian_vec(rng, dim, 0.004);
    for (auto race : races)
      for (auto gender : genders)
        for (double l : lights) {
          recs.push_back(fixtures::cf_record("s" + std::to_string(s) + "_" + to_string(race) + "_" + to_string(gender) +
                                                 "_l" + std::to_string(static_cast<int>(l)),
                                             static_cast<std::int64_t>(s), race, gender, 0, 0, l, 0));
          auto v = base;
          const auto noise = fixtures::gaussian_vec(rng, dim, 0.003);
          for (std::size_t i = 0; i < dim; ++i) v[i] += identity[i] + noise[i];
          raw.push_back(v);
        }
  }
  DatasetManifest manifest(fixtures::cf_schema(), recs);
  std::vector<std::size_t> white, black;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].race == Race::white) white.push_back(i);
    if (recs[i].race == Race::black) black.push_back(i);
  }

  auto build = [&](double c) {
    std::vector<double> data;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      auto v = raw[i];
      if (recs[i].race == Race::white)
        for (std::size_t k = 0; k < dim; ++k) v[k] += c * bias_dir[k];
      double s = 0.0;
      for (double x : v) s += x * x;
      for (double& x : v) x /= std::sqrt(s);
      data.insert(data.end(), v.begin(), v.end());
    }
    return EmbeddingSet(dim, std::move(data), manifest.ids(), true);
  };
  auto gap_of = [&](const EmbeddingSet& e) { return dim_similarity(e, white, target, ctx) - dim_similarity(e, black, target, ctx); };
  // Bisect the bias strength so the white-minus-black mean cosine to the
  // target dimension is delta_target.
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (gap_of(build(mid)) < delta_target ? lo : hi) = mid;
  }
  const auto images = build(0.5 * (lo + hi));
  const double achieved = gap_of(images);

  VectorRefs tv, av, bv;
  for (const auto& adj : target.adjectives)
    for (std::size_t t = 0; t < tmpl.templates.size(); ++t) tv.push_back(ctx.prompt(adj, t));
  for (auto r : white) av.push_back(images.row(r));
  for (auto r : black) bv.push_back(images.row(r));
  const auto w = scweat(tv, av, bv, 1000, 3);

  const auto table = build_similarity_table(images, manifest, {scm}, ctx);
  auto dist = [&](Attribute a) {
    VariationConfig vc;
    vc.attribute = a;
    vc.resamples_per_dimension = 2000;
    vc.rng_seed = 77;
    vc.dimensions = {"Warmth"};
    return bootstrap_distribution(manifest, table, vc);
  };
  const auto race = dist(Attribute::race), light = dist(Attribute::lighting);
  const auto test = wilcoxon_ranksum(race.values, light.values, Alternative::greater);
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool ok = w.effect_size > 1.0 && race.summary.median > light.summary.median && test.p_value < 0.001 && secs < 30.0;
  return {ok, fmt("delta %.4f, effect size %.2f, median AbsDiff race %.4f vs lighting %.4f, Wilcoxon p %.3g, %.2f s",
                  achieved, w.effect_size, race.summary.median, light.summary.median, test.p_value, secs)};
}

Outcome stats_checks() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-5, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const double c0 = u(rng), c1 = u(rng), c2 = u(rng);
    std::vector<double> x, y;
    for (int i = 0; i < 20; ++i) {
      x.push_back(u(rng));
      y.push_back(c0 + c1 * x.back() + c2 * x.back() * x.back());
    }
    const auto f = polyfit2(x, y);
    worst = std::max({worst, std::fabs(f.c0 - c0), std::fabs(f.c1 - c1), std::fabs(f.c2 - c2)});
  }
  const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  const double p = wilcoxon_ranksum(a, b, Alternative::less).p_value;
  const std::vector<double> xs = {1, 2, 3, 4, 5}, up = {3, 5, 7, 9, 11}, down = {2, 1, 0, -1, -2};
  const double r_up = pearson(xs, up).r, r_down = pearson(xs, down).r;
  const bool ok = worst <= 1e-9 && std::fabs(p - 0.05) < 1e-12 && std::fabs(r_up - 1) < 1e-12 && std::fabs(r_down + 1) < 1e-12;
  return {ok, fmt("polyfit2 max coefficient error %.3g, rank-sum p %.6f, Pearson %.15g / %.15g", worst, p, r_up, r_down)};
}

Outcome imagestats_checks() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u01(0, 1);
  bool antisym = true;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<GrayImage, GrayImage>> pairs, swapped;
    for (int i = 0; i < 1 + trial % 5; ++i) {
      GrayImage x(24, 18), y(24, 18);
      for (auto& p : x.pixels) p = u01(rng);
      for (auto& p : y.pixels) p = u01(rng);
      for (std::size_t k = 0; k < x.size(); k += 7) y.pixels[k] = x.pixels[k];
      pairs.emplace_back(x, y);
      swapped.emplace_back(y, x);
    }
    const auto g = sign_heatmap(pairs), s = sign_heatmap(swapped);
    for (std::size_t i = 0; i < g.values.size(); ++i) antisym = antisym && g.values[i] == -s.values[i];
  }
  double worst = 0.0;
  std::uniform_real_distribution<double> ref_px(0.2, 0.5), var_px(0.3, 0.6);
  for (int trial = 0; trial < 50; ++trial) {
    GrayImage ref(40, 40), var(40, 40);
    for (auto& p : ref.pixels) p = ref_px(rng);
    for (auto& p : var.pixels) p = var_px(rng);
    FaceMask mask{40, 40, std::vector<std::uint8_t>(1600)};
    for (std::size_t y = 0; y < 40; ++y)
      for (std::size_t x = 0; x < 40; ++x) mask.inside[y * 40 + x] = (x - 20.0) * (x - 20.0) + (y - 20.0) * (y - 20.0) < 225;
    const auto r = brightness_match(var, ref, mask);
    if (r.clipped_pixels != 0) return {false, "fixture clipped"};
    worst = std::max(worst, std::fabs(masked_mean(r.image, mask) - masked_mean(ref, mask)));
  }
  return {antisym && worst <= 1e-6,
          fmt("sign heatmap antisymmetric: %s; brightness match max masked-mean error %.3g", antisym ? "yes" : "no", worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric formulas match brute-force oracles", metric_oracles},
      {"NDKL is zero in the ideal case", ndkl_ideal},
      {"NDKL worked example", ndkl_worked},
      {"SC-WEAT Monte Carlo p agrees with exact enumeration", scweat_monte_carlo},
      {"neutral-corrected similarity equals raw minus neutral", delta_consistency},
      {"variation sampler respects the pair constraint", sampler_constraint},
      {"injected bias is recovered", bias_injection},
      {"statistics primitives", stats_checks},
      {"image statistics", imagestats_checks},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    failures += !o.pass;
  }
  std::fflush(stdout);
  return failures == 0 ? 0 : 1;
}
