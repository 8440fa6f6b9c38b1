#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlaudit/datamodel.hpp"
#include "vlaudit/embedio.hpp"
#include "vlaudit/error.hpp"
#include "vlaudit/parallel.hpp"

namespace vlaudit {

/// Dot product of two unit vectors, clamped to [-1, 1] against rounding.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch, std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  double dot = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
  return std::clamp(dot, -1.0, 1.0);
}

/// Text embeddings keyed by prompt string. Rows are unit-normalized on
/// construction.
class PromptIndex {
 public:
  explicit PromptIndex(const EmbeddingSet& texts) : texts_(texts.normalized() ? texts : texts.normalize()) {
    for (std::size_t i = 0; i < texts_.count(); ++i)
      if (!rows_.emplace(texts_.ids()[i], i).second) throw Error(ErrorCode::DuplicateId, texts_.ids()[i]);
  }

  std::span<const double> operator[](const std::string& prompt) const {
    auto it = rows_.find(prompt);
    if (it == rows_.end()) throw Error(ErrorCode::MissingPrompt, prompt);
    return texts_.row(it->second);
  }

  bool contains(const std::string& prompt) const { return rows_.count(prompt) != 0; }
  std::size_t dim() const { return texts_.dim(); }
  const EmbeddingSet& embeddings() const { return texts_; }

 private:
  EmbeddingSet texts_;
  std::unordered_map<std::string, std::size_t> rows_;
};

/// Prompts and options shared by the similarity computations.
struct PromptContext {
  const PromptIndex& texts;
  const PromptTemplateSet& templates;
  bool fix_articles = false;

  std::span<const double> prompt(const std::string& adjective, std::size_t t) const {
    return texts[fill_template(templates.templates[t], adjective, fix_articles)];
  }
  std::span<const double> neutral(std::size_t t) const { return texts[neutral_prompt(templates.templates[t])]; }
};

/// Mean cosine over every (image, adjective, template) triple; images are rows
/// of a normalized set. Summation runs image-major, then adjective, then
/// template.
inline double dim_similarity(const EmbeddingSet& images, std::span<const std::size_t> rows, const Dimension& dim,
                             const PromptContext& ctx) {
  if (rows.empty()) throw Error(ErrorCode::EmptySample, "no images selected");
  const std::size_t n_templates = ctx.templates.templates.size();
  // Resolve prompts once so a missing one fails before any work.
  std::vector<std::span<const double>> prompts;
  for (const auto& adj : dim.adjectives)
    for (std::size_t t = 0; t < n_templates; ++t) prompts.push_back(ctx.prompt(adj, t));
  double sum = 0.0;
  for (auto r : rows) {
    const auto img = images.row(r);
    for (const auto& p : prompts) sum += cosine(img, p);
  }
  return sum / static_cast<double>(rows.size() * prompts.size());
}

/// Template-mean cosine between one image and the neutral prompts.
inline double neutral_similarity(std::span<const double> image, const PromptContext& ctx) {
  const std::size_t n_templates = ctx.templates.templates.size();
  double sum = 0.0;
  for (std::size_t t = 0; t < n_templates; ++t) sum += cosine(image, ctx.neutral(t));
  return sum / static_cast<double>(n_templates);
}

/// Neutral-corrected similarity of one image to a dimension: per adjective,
/// the template mean of (adjective-prompt cosine - neutral cosine); then the
/// mean over adjectives.
inline double delta_similarity(std::span<const double> image, const Dimension& dim, const PromptContext& ctx) {
  const std::size_t n_templates = ctx.templates.templates.size();
  std::vector<double> neutral(n_templates);
  for (std::size_t t = 0; t < n_templates; ++t) neutral[t] = cosine(image, ctx.neutral(t));
  double outer = 0.0;
  for (const auto& adj : dim.adjectives) {
    double inner = 0.0;
    for (std::size_t t = 0; t < n_templates; ++t) inner += cosine(image, ctx.prompt(adj, t)) - neutral[t];
    outer += inner / static_cast<double>(n_templates);
  }
  return outer / static_cast<double>(dim.adjectives.size());
}

struct SimilarityCell {
  double raw_cos = 0.0;
  double delta_cos = 0.0;
};

struct TableDimension {
  std::string name;
  std::string axis;
  Valence valence = Valence::positive;
  LexiconModel model = LexiconModel::SCM;
  std::size_t adjectives = 0;
};

/// Images x dimensions of raw and neutral-corrected cosines, plus each
/// image's template-mean neutral cosine.
class SimilarityTable {
 public:
  SimilarityTable() = default;
  SimilarityTable(std::vector<std::string> ids, std::vector<TableDimension> dims, std::size_t templates)
      : ids_(std::move(ids)),
        dims_(std::move(dims)),
        templates_(templates),
        cells_(ids_.size() * dims_.size()),
        neutral_(ids_.size()) {
    for (std::size_t i = 0; i < ids_.size(); ++i) row_of_.emplace(ids_[i], i);
  }

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t cols() const noexcept { return dims_.size(); }
  std::size_t templates() const noexcept { return templates_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<TableDimension>& dimensions() const noexcept { return dims_; }

  std::size_t column(std::string_view name) const {
    for (std::size_t c = 0; c < dims_.size(); ++c)
      if (dims_[c].name == name) return c;
    throw Error(ErrorCode::UnknownKey, "dimension " + std::string(name));
  }

  std::size_t row(const std::string& id) const {
    auto it = row_of_.find(id);
    if (it == row_of_.end()) throw Error(ErrorCode::UnknownKey, "image " + id);
    return it->second;
  }

  SimilarityCell& at(std::size_t r, std::size_t c) { return cells_[r * dims_.size() + c]; }
  const SimilarityCell& at(std::size_t r, std::size_t c) const { return cells_[r * dims_.size() + c]; }
  double& neutral(std::size_t r) { return neutral_[r]; }
  double neutral(std::size_t r) const { return neutral_[r]; }

 private:
  std::vector<std::string> ids_;
  std::vector<TableDimension> dims_;
  std::size_t templates_ = 0;
  std::vector<SimilarityCell> cells_;
  std::vector<double> neutral_;
  std::unordered_map<std::string, std::size_t> row_of_;
};

/// Builds the full table. Images must be aligned with the manifest; rows are
/// computed independently (in parallel) and stored by index.
inline SimilarityTable build_similarity_table(const EmbeddingSet& images, const DatasetManifest& manifest,
                                              const std::vector<Lexicon>& lexicons, const PromptContext& ctx) {
  const auto alignment = validate_alignment(images, manifest);
  if (!alignment.ok) throw Error(ErrorCode::SizeMismatch, "embeddings not aligned with manifest: " + alignment.summary());
  if (images.dim() != ctx.texts.dim())
    throw Error(ErrorCode::DimensionMismatch,
                "image dim " + std::to_string(images.dim()) + " vs text dim " + std::to_string(ctx.texts.dim()));
  validate(ctx.templates);

  std::vector<TableDimension> dims;
  std::vector<const Dimension*> sources;
  std::set<std::string> names;
  for (const auto& lex : lexicons)
    for (const auto& d : lex.dimensions) {
      if (!names.insert(d.name).second) throw Error(ErrorCode::DuplicateId, "dimension " + d.name);
      dims.push_back({d.name, d.axis, d.valence, lex.model, d.adjectives.size()});
      sources.push_back(&d);
    }

  // Touch every prompt up front: a missing embedding fails before the parallel loop.
  for (const auto* d : sources)
    for (const auto& adj : d->adjectives)
      for (std::size_t t = 0; t < ctx.templates.templates.size(); ++t) (void)ctx.prompt(adj, t);
  for (std::size_t t = 0; t < ctx.templates.templates.size(); ++t) (void)ctx.neutral(t);

  const EmbeddingSet unit = images.normalized() ? images : images.normalize();
  SimilarityTable table(unit.ids(), dims, ctx.templates.templates.size());
  parallel_for(unit.count(), [&](std::size_t i) {
    const auto img = unit.row(i);
    const std::size_t one[] = {i};
    table.neutral(i) = neutral_similarity(img, ctx);
    for (std::size_t c = 0; c < sources.size(); ++c) {
      auto& cell = table.at(i, c);
      cell.raw_cos = dim_similarity(unit, one, *sources[c], ctx);
      cell.delta_cos = delta_similarity(img, *sources[c], ctx);
    }
  });
  return table;
}

inline void write_table_csv(std::ostream& out, const SimilarityTable& table) {
  out << "id,dimension,raw_cos,delta_cos\n";
  char buf[64];
  for (std::size_t r = 0; r < table.rows(); ++r)
    for (std::size_t c = 0; c < table.cols(); ++c) {
      out << table.ids()[r] << ',' << table.dimensions()[c].name << ',';
      std::snprintf(buf, sizeof buf, "%.17g", table.at(r, c).raw_cos);
      out << buf << ',';
      std::snprintf(buf, sizeof buf, "%.17g", table.at(r, c).delta_cos);
      out << buf << '\n';
    }
}

/// JSON export; `provenance` carries the lexicon/template/embedding hashes.
inline json table_to_json(const SimilarityTable& table, const json& provenance) {
  json dims = json::array();
  for (const auto& d : table.dimensions())
    dims.push_back({{"name", d.name},
                    {"axis", d.axis},
                    {"valence", to_string(d.valence)},
                    {"model", to_string(d.model)},
                    {"adjectives", d.adjectives},
                    {"templates", table.templates()}});
  json rows = json::array();
  for (std::size_t r = 0; r < table.rows(); ++r) {
    json raw = json::array(), delta = json::array();
    for (std::size_t c = 0; c < table.cols(); ++c) {
      raw.push_back(table.at(r, c).raw_cos);
      delta.push_back(table.at(r, c).delta_cos);
    }
    rows.push_back({{"id", table.ids()[r]}, {"neutral_cos", table.neutral(r)}, {"raw_cos", raw}, {"delta_cos", delta}});
  }
  return {{"provenance", provenance}, {"dimensions", dims}, {"rows", rows}};
}

}  // namespace vlaudit
