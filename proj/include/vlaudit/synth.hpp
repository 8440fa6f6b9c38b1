#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vlaudit/datamodel.hpp"
#include "vlaudit/embedio.hpp"
#include "vlaudit/parallel.hpp"

namespace vlaudit {

/// Options for a synthetic CausalFace-shaped corpus: per seed, six race x
/// gender prototypes with 30 variants each (10 age levels including the
/// prototype, 8 smiling, 6 lighting and 6 pose levels).
struct SynthOptions {
  std::size_t seeds = 2;
  std::size_t dim = 64;
  std::uint64_t rng_seed = 1;
  double noise = 0.3;
  double level_effect = 0.15;  // weight of each level direction per unit level
  // Extra component along the mean prompt direction of `bias_dimension`,
  // keyed by race name.
  std::map<std::string, double> race_bias;
  std::string bias_dimension = "Warmth";
  std::vector<std::string> extra_words = {"asian", "black", "white", "female", "male"};
};

struct SynthData {
  DatasetManifest manifest;
  EmbeddingSet images;
  EmbeddingSet texts;
};

inline const std::vector<double>& synth_age_levels() {
  static const std::vector<double> v = {-2.2, -1.65, -1.1, -0.55, 0.0, 0.55, 1.1, 1.65, 2.2, 2.75};
  return v;
}
inline const std::vector<double>& synth_smiling_levels() {
  static const std::vector<double> v = {-2.2, -1.65, -1.1, -0.55, 0.55, 1.1, 1.65, 2.2};
  return v;
}
inline const std::vector<double>& synth_side_levels() {
  static const std::vector<double> v = {-3.0, -2.0, -1.0, 1.0, 2.0, 3.0};
  return v;
}

namespace detail {

class Gaussian {
 public:
  explicit Gaussian(CounterRng rng) : rng_(rng) {}
  double operator()() {  // Box-Muller from the counter stream
    const double u1 = 1.0 - rng_.uniform(), u2 = rng_.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  std::vector<double> vec(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * (*this)();
    return v;
  }

 private:
  CounterRng rng_;
};

inline void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline std::vector<double> unit(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (double& x : v) x /= s;
  return v;
}

}  // namespace detail

inline SynthData make_synthetic_causalface(const SynthOptions& opt) {
  const std::size_t dim = opt.dim;
  std::uint64_t stream = 0;
  auto gauss = [&] { return detail::Gaussian(CounterRng(opt.rng_seed, stream++)); };

  // Text side: prompt = template direction + word direction + small noise.
  const auto templates = default_templates();
  std::vector<std::string> words;
  for (const auto& lex : {default_scm_lexicon(), default_abc_lexicon()})
    for (const auto& d : lex.dimensions) words.insert(words.end(), d.adjectives.begin(), d.adjectives.end());
  words.insert(words.end(), opt.extra_words.begin(), opt.extra_words.end());
  std::vector<std::vector<double>> template_dir;
  for (std::size_t t = 0; t < templates.templates.size(); ++t) template_dir.push_back(gauss().vec(dim));
  std::map<std::string, std::vector<double>> word_dir;
  for (const auto& w : words)
    if (!word_dir.count(w)) word_dir.emplace(w, gauss().vec(dim, 0.6));

  std::vector<std::string> prompts;
  std::set<std::string> seen;
  std::vector<double> text_data;
  auto emit = [&](const std::string& text, std::vector<double> v) {
    if (!seen.insert(text).second) return;
    detail::axpy(v, 1.0, gauss().vec(dim, 0.05));
    v = detail::unit(std::move(v));
    prompts.push_back(text);
    text_data.insert(text_data.end(), v.begin(), v.end());
  };
  for (std::size_t t = 0; t < templates.templates.size(); ++t) {
    emit(neutral_prompt(templates.templates[t]), template_dir[t]);
    for (const auto& w : words) {
      auto v = template_dir[t];
      detail::axpy(v, 1.0, word_dir[w]);
      emit(fill_template(templates.templates[t], w), std::move(v));
    }
  }
  EmbeddingSet texts(dim, std::move(text_data), prompts, true);

  // Mean direction of the biased dimension's prompts.
  std::vector<double> bias_dir(dim, 0.0);
  if (!opt.race_bias.empty()) {
    const Dimension* target = nullptr;
    static const Lexicon scm = default_scm_lexicon(), abc = default_abc_lexicon();
    for (const auto* lex : {&scm, &abc})
      for (const auto& d : lex->dimensions)
        if (d.name == opt.bias_dimension) target = &d;
    if (!target) throw Error(ErrorCode::UnknownKey, "dimension " + opt.bias_dimension);
    for (const auto& adj : target->adjectives)
      for (const auto& t : templates.templates) {
        const auto it = std::find(prompts.begin(), prompts.end(), fill_template(t, adj));
        const auto row = texts.row(static_cast<std::size_t>(it - prompts.begin()));
        for (std::size_t k = 0; k < dim; ++k) bias_dir[k] += row[k];
      }
    bias_dir = detail::unit(std::move(bias_dir));
  }

  // Image side.
  const std::vector<Race> races = {Race::asian, Race::black, Race::white};
  const std::vector<Gender> genders = {Gender::female, Gender::male};
  std::map<std::string, std::vector<double>> attr_dir;
  for (const auto* name : {"asian", "black", "white", "female", "male"}) attr_dir[name] = gauss().vec(dim, 0.8);
  for (const auto* name : {"age", "smiling", "lighting", "pose"}) attr_dir[name] = detail::unit(gauss().vec(dim));

  std::vector<ImageRecord> records;
  std::vector<double> image_data;
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    const auto identity = gauss().vec(dim);
    for (auto race : races)
      for (auto gender : genders) {
        struct Variant {
          std::string family;
          double age = 0, smiling = 0, lighting = 0, pose = 0;
        };
        std::vector<Variant> variants;
        for (double v : synth_age_levels()) variants.push_back({"age", v, 0, 0, 0});
        for (double v : synth_smiling_levels()) variants.push_back({"smiling", 0, v, 0, 0});
        for (double v : synth_side_levels()) variants.push_back({"lighting", 0, 0, v, 0});
        for (double v : synth_side_levels()) variants.push_back({"pose", 0, 0, 0, v});
        std::size_t k = 0;
        for (const auto& var : variants) {
          ImageRecord r;
          r.id = "s" + std::to_string(s) + "_" + to_string(race) + "_" + to_string(gender) + "_" + var.family + "_" +
                 std::to_string(k++);
          r.dataset = Dataset::causalface;
          r.seed = static_cast<std::int64_t>(s);
          r.race = race;
          r.gender = gender;
          r.age = var.age;
          r.smiling = var.smiling;
          r.lighting = var.lighting;
          r.pose = var.pose;

          auto v = identity;
          detail::axpy(v, 1.0, attr_dir[to_string(race)]);
          detail::axpy(v, 1.0, attr_dir[to_string(gender)]);
          detail::axpy(v, opt.level_effect * var.age, attr_dir["age"]);
          detail::axpy(v, opt.level_effect * var.smiling, attr_dir["smiling"]);
          detail::axpy(v, opt.level_effect * var.lighting, attr_dir["lighting"]);
          detail::axpy(v, opt.level_effect * var.pose, attr_dir["pose"]);
          detail::axpy(v, 1.0, gauss().vec(dim, opt.noise));
          if (auto it = opt.race_bias.find(to_string(race)); it != opt.race_bias.end())
            detail::axpy(v, it->second, bias_dir);
          image_data.insert(image_data.end(), v.begin(), v.end());
          records.push_back(std::move(r));
        }
      }
  }

  AttributeSchema schema;
  schema.datasets = {Dataset::causalface};
  schema.races = races;
  schema.genders = genders;
  std::vector<double> ages = synth_age_levels(), smiles = synth_smiling_levels(), sides = synth_side_levels();
  smiles.push_back(0.0);
  sides.push_back(0.0);
  std::sort(smiles.begin(), smiles.end());
  std::sort(sides.begin(), sides.end());
  schema.age_levels = ages;
  schema.smiling_levels = smiles;
  schema.lighting_levels = sides;
  schema.pose_levels = sides;

  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.id);
  SynthData out{DatasetManifest(std::move(schema), std::move(records)), EmbeddingSet(dim, std::move(image_data), ids, false),
                std::move(texts)};
  return out;
}

}  // namespace vlaudit
