#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vlaudit/config.hpp"
#include "vlaudit/synth.hpp"
#include "vlaudit/vlaudit.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline std::vector<double> gaussian_vec(std::mt19937_64& rng, std::size_t dim, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

inline std::vector<double> unit_vec(std::mt19937_64& rng, std::size_t dim) {
  auto v = gaussian_vec(rng, dim);
  double s = 0;
  for (double x : v) s += x * x;
  for (auto& x : v) x /= std::sqrt(s);
  return v;
}

inline vlaudit::VectorRefs refs(const std::vector<std::vector<double>>& v) {
  vlaudit::VectorRefs out;
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("vlaudit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

/// Writes a synthetic CausalFace-shaped corpus into `dir` and returns a
/// config pointing at it, with small resampling budgets.
inline vlaudit::AuditConfig write_synth_inputs(const fs::path& dir, const vlaudit::SynthOptions& opt = {}) {
  const auto data = vlaudit::make_synthetic_causalface(opt);
  vlaudit::write_embeddings(dir / "images.emb", data.images);
  vlaudit::write_embeddings(dir / "texts.emb", data.texts);
  spit(dir / "manifest.json", vlaudit::serialize_manifest(data.manifest));
  vlaudit::AuditConfig cfg;
  cfg.embeddings = (dir / "images.emb").string();
  cfg.text_embeddings = (dir / "texts.emb").string();
  cfg.manifest = (dir / "manifest.json").string();
  cfg.output_dir = (dir / "out").string();
  cfg.k = 60;
  cfg.permutations = 500;
  cfg.resamples = 100;
  cfg.rng_seed = 11;
  return cfg;
}

/// Records for a hand-built CausalFace slice.
inline vlaudit::ImageRecord cf_record(const std::string& id, std::int64_t seed, vlaudit::Race race,
                                      vlaudit::Gender gender, double age = 0, double smiling = 0, double lighting = 0,
                                      double pose = 0) {
  vlaudit::ImageRecord r;
  r.id = id;
  r.dataset = vlaudit::Dataset::causalface;
  r.seed = seed;
  r.race = race;
  r.gender = gender;
  r.age = age;
  r.smiling = smiling;
  r.lighting = lighting;
  r.pose = pose;
  return r;
}

inline vlaudit::AttributeSchema cf_schema() {
  vlaudit::AttributeSchema s;
  s.datasets = {vlaudit::Dataset::causalface};
  s.races = {vlaudit::Race::asian, vlaudit::Race::black, vlaudit::Race::white};
  s.genders = {vlaudit::Gender::female, vlaudit::Gender::male};
  return s;
}

}  // namespace fixtures
