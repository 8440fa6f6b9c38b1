// Command-line front end for the vlaudit library.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vlaudit/synth.hpp"
#include "vlaudit/vlaudit.hpp"

namespace fs = std::filesystem;
using namespace vlaudit;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::string> embeddings, manifest, text_embeddings, templates, lexicon, lexicon_scm, lexicon_abc, out;
  std::optional<std::uint64_t> rng_seed;
  bool fix_articles = false;

  void attach(CLI::App* app) {
    app->add_option("-c,--config", config, "TOML or JSON config file")->check(CLI::ExistingFile);
    app->add_option("--embeddings", embeddings, "image embeddings (EMBV1)");
    app->add_option("--manifest", manifest, "manifest JSON");
    app->add_option("--text-embeddings", text_embeddings, "prompt embeddings (EMBV1, ids are prompt strings)");
    app->add_option("--templates", templates, "template JSON (default: built-in)");
    app->add_option("--lexicon", lexicon, "scm, abc or both")->check(CLI::IsMember({"scm", "abc", "both"}));
    app->add_option("--lexicon-scm", lexicon_scm, "SCM lexicon JSON (default: built-in)");
    app->add_option("--lexicon-abc", lexicon_abc, "ABC lexicon JSON (default: built-in)");
    app->add_option("-o,--out", out, "output directory");
    app->add_option("--rng-seed", rng_seed, "global RNG seed");
    app->add_flag("--fix-articles", fix_articles, "use 'an' before vowel-initial words");
  }

  AuditConfig load() const {
    AuditConfig c = config.empty() ? AuditConfig{} : load_config(config);
    if (embeddings) c.embeddings = *embeddings;
    if (manifest) c.manifest = *manifest;
    if (text_embeddings) c.text_embeddings = *text_embeddings;
    if (templates) c.templates = *templates;
    if (lexicon) c.lexicon = *lexicon;
    if (lexicon_scm) c.lexicon_scm = *lexicon_scm;
    if (lexicon_abc) c.lexicon_abc = *lexicon_abc;
    if (out) c.output_dir = *out;
    if (rng_seed) c.rng_seed = *rng_seed;
    if (fix_articles) c.fix_articles = true;
    return c;
  }
};

void run_and_list(const AuditConfig& cfg) {
  const auto files = run_pipeline(cfg);
  for (const auto& f : files) std::cout << (fs::path(cfg.output_dir) / f).string() << '\n';
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << content;
}

std::string lines(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += s + "\n";
  return out;
}

std::vector<std::string> prompt_lines(const Lexicon& lex, const PromptTemplateSet& t, bool fix_articles) {
  const auto ps = expand_prompts(lex, t, fix_articles);
  std::vector<std::string> out;
  for (const auto& p : ps.adjective_prompts) out.push_back(p.text);
  out.insert(out.end(), ps.neutral.begin(), ps.neutral.end());
  return out;
}

void dump_defaults(const fs::path& dir, bool fix_articles, const std::vector<std::string>& words) {
  fs::create_directories(dir);
  const auto scm = default_scm_lexicon(), abc = default_abc_lexicon();
  const auto templates = default_templates();
  write_file(dir / "lexicon_scm.json", to_json(scm).dump(2) + "\n");
  write_file(dir / "lexicon_abc.json", to_json(abc).dump(2) + "\n");
  write_file(dir / "templates.json", to_json(templates).dump(2) + "\n");
  const auto ps = prompt_lines(scm, templates, fix_articles), pa = prompt_lines(abc, templates, fix_articles);
  write_file(dir / "prompts_scm.txt", lines(ps));
  write_file(dir / "prompts_abc.txt", lines(pa));
  std::vector<std::string> marked;
  for (const auto& w : words)
    for (const auto& t : templates.templates) marked.push_back(fill_template(t, w, fix_articles));
  write_file(dir / "prompts_markedness.txt", lines(marked));
  // Union without repeats, in first-seen order: the list an extractor needs.
  std::vector<std::string> all;
  std::set<std::string> seen;
  for (const std::vector<std::string>* list : {&ps, &pa, static_cast<const std::vector<std::string>*>(&marked)})
    for (const auto& p : *list)
      if (seen.insert(p).second) all.push_back(p);
  write_file(dir / "prompts_all.txt", lines(all));
}

PoseSide parse_side(const std::string& s) {
  if (s == "frontal") return PoseSide::frontal;
  if (s == "negative") return PoseSide::negative;
  if (s == "positive") return PoseSide::positive;
  throw Error(ErrorCode::InvalidArgument, "pose side must be frontal, negative or positive");
}

std::vector<std::pair<std::string, std::string>> read_pair_list(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::ParseError, path.string() + ": line " + std::to_string(n) + ": expected 'a.png,b.png'");
    fs::path a = line.substr(0, comma), b = line.substr(comma + 1);
    if (a.is_relative()) a = path.parent_path() / a;
    if (b.is_relative()) b = path.parent_path() / b;
    out.emplace_back(a.string(), b.string());
  }
  return out;
}

int report_error(const std::string& code, const std::string& detail) {
  nlohmann::json j = {{"error", code}, {"detail", detail}};
  std::cerr << j.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social-perception bias audit over precomputed vision-language embeddings"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a manifest against its embeddings and summarise it");
  std::string ing_manifest, ing_embeddings;
  ingest->add_option("--manifest", ing_manifest)->required()->check(CLI::ExistingFile);
  ingest->add_option("--embeddings", ing_embeddings)->check(CLI::ExistingFile);
  std::string ing_texts, ing_prompts;
  ingest->add_option("--text-embeddings", ing_texts)->check(CLI::ExistingFile);
  ingest->add_option("--prompts", ing_prompts, "prompt list the text embeddings were extracted from")
      ->check(CLI::ExistingFile);

  // pipeline-backed subcommands
  CommonFlags sim_f, var_f, met_f, tr_f, val_f, rep_f;
  auto* sim = app.add_subcommand("sim", "similarity table only");
  sim_f.attach(sim);

  auto* variation = app.add_subcommand("variation", "bootstrap AbsDiff distributions per attribute");
  var_f.attach(variation);
  std::vector<std::string> var_attrs;
  std::optional<std::size_t> var_resamples;
  std::optional<double> gap_age, gap_smiling;
  std::optional<std::string> var_alt;
  variation->add_option("--attribute", var_attrs, "attribute to vary (repeatable)");
  variation->add_option("--resamples", var_resamples, "pairs per dimension");
  variation->add_option("--gap-age", gap_age);
  variation->add_option("--gap-smiling", gap_smiling);
  variation->add_option("--alternative", var_alt)->check(CLI::IsMember({"two_sided", "less", "greater"}));

  auto* metrics = app.add_subcommand("metrics", "SC-WEAT, markedness, mean cosine, Skew/MaxSkew/NDKL");
  met_f.attach(metrics);
  bool m_weat = false, m_mark = false, m_cos = false, m_skew = false, m_ndkl = false;
  std::optional<std::size_t> k_opt, perm_opt;
  std::optional<std::string> spread_opt;
  metrics->add_flag("--weat", m_weat);
  metrics->add_flag("--markedness", m_mark);
  metrics->add_flag("--mean-cossim", m_cos);
  metrics->add_flag("--skew", m_skew);
  metrics->add_flag("--ndkl", m_ndkl);
  metrics->add_option("--k", k_opt);
  metrics->add_option("--permutations", perm_opt);
  metrics->add_option("--spread", spread_opt)->check(CLI::IsMember({"sample", "population"}));

  auto* trends = app.add_subcommand("trends", "polynomial trends, confound correlations, ellipses, densities");
  tr_f.attach(trends);
  auto* valence = app.add_subcommand("valence", "text-side valence geometry and neutral-prompt tests");
  val_f.attach(valence);
  auto* report = app.add_subcommand("report", "full pipeline as configured");
  rep_f.attach(report);

  // brightness
  auto* bright = app.add_subcommand("brightness", "pixel-level confound tools");
  bright->require_subcommand(1);
  auto* b_match = bright->add_subcommand("match", "scale a variant to the reference's masked mean brightness");
  std::string bm_variant, bm_reference, bm_mask, bm_out;
  b_match->add_option("--variant", bm_variant)->required()->check(CLI::ExistingFile);
  b_match->add_option("--reference", bm_reference)->required()->check(CLI::ExistingFile);
  b_match->add_option("--mask", bm_mask)->required()->check(CLI::ExistingFile);
  b_match->add_option("--out", bm_out)->required();
  auto* b_heat = bright->add_subcommand("heatmap", "pixel-wise sign heatmap over image pairs");
  std::string bh_pairs, bh_csv, bh_png;
  b_heat->add_option("--pairs", bh_pairs, "text file with one 'a.png,b.png' per line")->required()->check(CLI::ExistingFile);
  b_heat->add_option("--csv", bh_csv)->required();
  b_heat->add_option("--png", bh_png);
  auto* b_crop = bright->add_subcommand("crop", "432x432 crop of a 512x512 image");
  std::string bc_in, bc_out, bc_side = "frontal";
  b_crop->add_option("--in", bc_in)->required()->check(CLI::ExistingFile);
  b_crop->add_option("--out", bc_out)->required();
  b_crop->add_option("--pose", bc_side, "frontal, negative or positive");

  // defaults and fixtures
  auto* dump = app.add_subcommand("dump-defaults", "write built-in lexicons, templates and prompt lists");
  std::string dump_dir = ".";
  bool dump_fix = false;
  dump->add_option("-o,--out", dump_dir);
  dump->add_flag("--fix-articles", dump_fix);

  auto* synth = app.add_subcommand("synth", "write a synthetic CausalFace-shaped corpus and config");
  std::string synth_dir;
  SynthOptions synth_opt;
  std::vector<std::string> synth_bias;
  synth->add_option("-o,--out", synth_dir)->required();
  synth->add_option("--seeds", synth_opt.seeds);
  synth->add_option("--dim", synth_opt.dim);
  synth->add_option("--rng-seed", synth_opt.rng_seed);
  synth->add_option("--noise", synth_opt.noise);
  synth->add_option("--bias", synth_bias, "race=amount along --bias-dimension (repeatable)");
  synth->add_option("--bias-dimension", synth_opt.bias_dimension);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto m = load_manifest(ing_manifest);
      json summary = {{"records", m.size()}};
      json groups = json::object();
      for (const auto& g : group_by(m, {Attribute::dataset, Attribute::race, Attribute::gender}))
        groups[g.label()] = g.members.size();
      summary["groups"] = groups;
      int status = 0;
      if (!ing_embeddings.empty()) {
        const auto e = read_embeddings(ing_embeddings);
        const auto a = validate_alignment(e, m);
        summary["embeddings"] = {{"count", e.count()}, {"dim", e.dim()}, {"normalized", e.normalized()}};
        summary["alignment"] = a.ok ? json("ok") : json(a.summary());
        if (!a.ok) status = 3;
      }
      if (!ing_texts.empty()) {
        const auto t = read_embeddings(ing_texts);
        summary["text_embeddings"] = {{"count", t.count()}, {"dim", t.dim()}, {"normalized", t.normalized()}};
        if (!ing_prompts.empty()) {
          const auto prompts = load_prompt_list(ing_prompts);
          const bool same = prompts == t.ids();
          summary["prompt_alignment"] = same ? json("ok") : json("ids differ from the prompt list");
          if (!same) status = 3;
        }
      }
      std::cout << summary.dump(2) << '\n';
      return status;
    }
    if (*sim) {
      auto cfg = sim_f.load();
      cfg.metrics.set_all(false);
      run_and_list(cfg);
    } else if (*variation) {
      auto cfg = var_f.load();
      cfg.metrics.set_all(false);
      cfg.metrics.variation = true;
      if (!var_attrs.empty()) cfg.variation_attributes = var_attrs;
      if (var_resamples) cfg.resamples = *var_resamples;
      if (gap_age) cfg.gap_age = *gap_age;
      if (gap_smiling) cfg.gap_smiling = *gap_smiling;
      if (var_alt) cfg.alternative = *var_alt;
      run_and_list(cfg);
    } else if (*metrics) {
      auto cfg = met_f.load();
      const bool any = m_weat || m_mark || m_cos || m_skew || m_ndkl;
      cfg.metrics.set_all(false);
      cfg.metrics.weat = !any || m_weat;
      cfg.metrics.markedness = !any || m_mark;
      cfg.metrics.mean_cossim = !any || m_cos;
      cfg.metrics.skew = !any || m_skew;
      cfg.metrics.ndkl = !any || m_ndkl;
      if (k_opt) cfg.k = *k_opt;
      if (perm_opt) cfg.permutations = *perm_opt;
      if (spread_opt) cfg.spread = *spread_opt;
      run_and_list(cfg);
    } else if (*trends) {
      auto cfg = tr_f.load();
      cfg.metrics.set_all(false);
      cfg.metrics.trends = cfg.metrics.confounds = cfg.metrics.ellipses = cfg.metrics.kde = true;
      run_and_list(cfg);
    } else if (*valence) {
      auto cfg = val_f.load();
      cfg.metrics.set_all(false);
      cfg.metrics.valence = cfg.metrics.neutral = true;
      run_and_list(cfg);
    } else if (*report) {
      run_and_list(rep_f.load());
    } else if (*bright) {
      if (*b_match) {
        const auto res = brightness_match(read_png_gray(bm_variant), read_png_gray(bm_reference), read_png_mask(bm_mask));
        write_png_gray(bm_out, res.image);
        std::cout << json{{"scale", res.scale}, {"clipped_pixels", res.clipped_pixels}, {"residual", res.residual}}.dump(2)
                  << '\n';
      } else if (*b_heat) {
        std::vector<std::pair<GrayImage, GrayImage>> pairs;
        for (const auto& [a, b] : read_pair_list(bh_pairs)) pairs.emplace_back(read_png_gray(a), read_png_gray(b));
        const auto grid = sign_heatmap(pairs);
        std::ostringstream csv;
        write_grid_csv(csv, grid);
        write_file(bh_csv, csv.str());
        if (!bh_png.empty()) write_heatmap_png(bh_png, grid);
      } else if (*b_crop) {
        const auto img = read_png_rgb(bc_in);
        write_png_rgb(bc_out, crop_causalface(img, parse_side(bc_side)));
      }
    } else if (*dump) {
      dump_defaults(dump_dir, dump_fix, AuditConfig{}.categories);
    } else if (*synth) {
      for (const auto& b : synth_bias) {
        const auto eq = b.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--bias expects race=amount");
        synth_opt.race_bias[b.substr(0, eq)] = std::stod(b.substr(eq + 1));
      }
      const auto data = make_synthetic_causalface(synth_opt);
      fs::create_directories(synth_dir);
      const fs::path dir(synth_dir);
      write_file(dir / "manifest.json", serialize_manifest(data.manifest));
      write_embeddings(dir / "images.emb", data.images);
      write_embeddings(dir / "texts.emb", data.texts);
      write_file(dir / "audit.toml",
                 "# Synthetic corpus written by `audit synth`.\n"
                 "output_dir = \"" + (dir / "out").string() + "\"\n\n"
                 "[inputs]\n"
                 "embeddings = \"" + (dir / "images.emb").string() + "\"\n"
                 "manifest = \"" + (dir / "manifest.json").string() + "\"\n"
                 "text_embeddings = \"" + (dir / "texts.emb").string() + "\"\n\n"
                 "[params]\n"
                 "k = 100\n"
                 "permutations = 2000\n"
                 "resamples = 200\n"
                 "rng_seed = 7\n");
      std::cout << data.manifest.size() << " records, " << data.texts.count() << " prompts written to " << synth_dir
                << '\n';
    }
  } catch (const Error& e) {
    return report_error(std::string(to_string(e.code())), e.detail());
  } catch (const std::exception& e) {
    return report_error("Internal", e.what());
  }
  return 0;
}
