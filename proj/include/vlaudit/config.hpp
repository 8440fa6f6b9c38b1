#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vlaudit/datamodel.hpp"
#include "vlaudit/error.hpp"
#include "vlaudit/hash.hpp"
#include "vlaudit/stats.hpp"

namespace vlaudit {

struct MetricToggles {
  bool variation = true;
  bool weat = true;
  bool markedness = true;
  bool mean_cossim = true;
  bool skew = true;
  bool ndkl = true;
  bool trends = true;
  bool confounds = true;
  bool ellipses = true;
  bool kde = true;
  bool valence = true;
  bool neutral = true;

  bool any() const {
    return variation || weat || markedness || mean_cossim || skew || ndkl || trends || confounds || ellipses || kde ||
           valence || neutral;
  }
  void set_all(bool on) { *this = on ? MetricToggles{} : MetricToggles{false, false, false, false, false, false,
                                                                         false, false, false, false, false, false}; }
};

struct AuditConfig {
  // inputs
  std::string embeddings;
  std::string manifest;
  std::string text_embeddings;
  std::string templates;    // empty: built-in templates
  std::string lexicon_scm;  // empty: built-in lexicon
  std::string lexicon_abc;
  std::string lexicon = "both";  // scm | abc | both
  std::string output_dir = "audit_out";

  MetricToggles metrics;

  // parameters
  std::size_t k = 1000;
  std::size_t permutations = 10000;
  std::size_t resamples = 1000;
  double gap_age = 1.1;
  double gap_smiling = 1.1;
  double min_age = 20.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::string> variation_attributes = {"race", "gender", "age", "smiling", "lighting", "pose", "seed"};
  std::string alternative = "two_sided";
  std::string spread = "sample";
  bool fix_articles = false;
  double kde_bandwidth = 0.0;  // 0: Scott's rule
  std::size_t kde_points = 256;
  double ellipse_sigma = 2.0;
  std::vector<std::string> categories = {"asian", "black", "white", "female", "male"};
};

inline json to_json(const AuditConfig& c) {
  const auto& m = c.metrics;
  return {{"inputs",
           {{"embeddings", c.embeddings},
            {"manifest", c.manifest},
            {"text_embeddings", c.text_embeddings},
            {"templates", c.templates},
            {"lexicon_scm", c.lexicon_scm},
            {"lexicon_abc", c.lexicon_abc}}},
          {"lexicon", c.lexicon},
          {"output_dir", c.output_dir},
          {"metrics",
           {{"variation", m.variation},
            {"weat", m.weat},
            {"markedness", m.markedness},
            {"mean_cossim", m.mean_cossim},
            {"skew", m.skew},
            {"ndkl", m.ndkl},
            {"trends", m.trends},
            {"confounds", m.confounds},
            {"ellipses", m.ellipses},
            {"kde", m.kde},
            {"valence", m.valence},
            {"neutral", m.neutral}}},
          {"params",
           {{"k", c.k},
            {"permutations", c.permutations},
            {"resamples", c.resamples},
            {"gap_age", c.gap_age},
            {"gap_smiling", c.gap_smiling},
            {"min_age", c.min_age},
            {"rng_seed", c.rng_seed},
            {"variation_attributes", c.variation_attributes},
            {"alternative", c.alternative},
            {"spread", c.spread},
            {"fix_articles", c.fix_articles},
            {"kde_bandwidth", c.kde_bandwidth},
            {"kde_points", c.kde_points},
            {"ellipse_sigma", c.ellipse_sigma},
            {"categories", c.categories}}}};
}

namespace detail {

template <typename T>
void take(const json& obj, const char* key, T& dst, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
        throw Error(ErrorCode::InvalidArgument, where + "." + key + " must be a non-negative integer");
    }
    dst = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, where + "." + key + ": " + e.what());
  }
}

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::ParseError, where + " must be a table/object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::UnknownKey, where.empty() ? key : where + "." + key);
  }
}

}  // namespace detail

/// Checks value-level constraints; key-level checks happen while parsing.
inline void validate(const AuditConfig& c) {
  if (c.lexicon != "scm" && c.lexicon != "abc" && c.lexicon != "both")
    throw Error(ErrorCode::InvalidArgument, "lexicon must be scm, abc or both");
  if (c.k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (c.permutations < 1) throw Error(ErrorCode::InvalidArgument, "permutations must be >= 1");
  if (c.resamples < 1) throw Error(ErrorCode::InvalidArgument, "resamples must be >= 1");
  if (c.gap_age < 0 || c.gap_smiling < 0) throw Error(ErrorCode::InvalidArgument, "gaps must be >= 0");
  if (c.spread != "sample" && c.spread != "population")
    throw Error(ErrorCode::InvalidArgument, "spread must be sample or population");
  if (c.kde_bandwidth < 0) throw Error(ErrorCode::InvalidArgument, "kde_bandwidth must be >= 0");
  if (c.kde_points < 2) throw Error(ErrorCode::InvalidArgument, "kde_points must be >= 2");
  if (!(c.ellipse_sigma > 0)) throw Error(ErrorCode::InvalidArgument, "ellipse_sigma must be > 0");
  (void)parse_alternative(c.alternative);
  for (const auto& a : c.variation_attributes) {
    const auto attr = parse_attribute(a);
    if (attr == Attribute::dataset || attr == Attribute::age_bin)
      throw Error(ErrorCode::InvalidArgument, "cannot vary " + a);
  }
}

/// Builds a config from its JSON form. Missing keys keep their defaults;
/// unknown keys are rejected.
inline AuditConfig config_from_json(const json& j, AuditConfig c = {}) {
  detail::reject_unknown(j, {"inputs", "lexicon", "output_dir", "metrics", "params"}, "");
  if (auto it = j.find("inputs"); it != j.end()) {
    detail::reject_unknown(*it, {"embeddings", "manifest", "text_embeddings", "templates", "lexicon_scm", "lexicon_abc"},
                           "inputs");
    detail::take(*it, "embeddings", c.embeddings, "inputs");
    detail::take(*it, "manifest", c.manifest, "inputs");
    detail::take(*it, "text_embeddings", c.text_embeddings, "inputs");
    detail::take(*it, "templates", c.templates, "inputs");
    detail::take(*it, "lexicon_scm", c.lexicon_scm, "inputs");
    detail::take(*it, "lexicon_abc", c.lexicon_abc, "inputs");
  }
  detail::take(j, "lexicon", c.lexicon, "");
  detail::take(j, "output_dir", c.output_dir, "");
  if (auto it = j.find("metrics"); it != j.end()) {
    detail::reject_unknown(*it, {"variation", "weat", "markedness", "mean_cossim", "skew", "ndkl", "trends", "confounds",
                                 "ellipses", "kde", "valence", "neutral"},
                           "metrics");
    auto& m = c.metrics;
    detail::take(*it, "variation", m.variation, "metrics");
    detail::take(*it, "weat", m.weat, "metrics");
    detail::take(*it, "markedness", m.markedness, "metrics");
    detail::take(*it, "mean_cossim", m.mean_cossim, "metrics");
    detail::take(*it, "skew", m.skew, "metrics");
    detail::take(*it, "ndkl", m.ndkl, "metrics");
    detail::take(*it, "trends", m.trends, "metrics");
    detail::take(*it, "confounds", m.confounds, "metrics");
    detail::take(*it, "ellipses", m.ellipses, "metrics");
    detail::take(*it, "kde", m.kde, "metrics");
    detail::take(*it, "valence", m.valence, "metrics");
    detail::take(*it, "neutral", m.neutral, "metrics");
  }
  if (auto it = j.find("params"); it != j.end()) {
    detail::reject_unknown(*it, {"k", "permutations", "resamples", "gap_age", "gap_smiling", "min_age", "rng_seed",
                                 "variation_attributes", "alternative", "spread", "fix_articles", "kde_bandwidth",
                                 "kde_points", "ellipse_sigma", "categories"},
                           "params");
    detail::take(*it, "k", c.k, "params");
    detail::take(*it, "permutations", c.permutations, "params");
    detail::take(*it, "resamples", c.resamples, "params");
    detail::take(*it, "gap_age", c.gap_age, "params");
    detail::take(*it, "gap_smiling", c.gap_smiling, "params");
    detail::take(*it, "min_age", c.min_age, "params");
    detail::take(*it, "rng_seed", c.rng_seed, "params");
    detail::take(*it, "variation_attributes", c.variation_attributes, "params");
    detail::take(*it, "alternative", c.alternative, "params");
    detail::take(*it, "spread", c.spread, "params");
    detail::take(*it, "fix_articles", c.fix_articles, "params");
    detail::take(*it, "kde_bandwidth", c.kde_bandwidth, "params");
    detail::take(*it, "kde_points", c.kde_points, "params");
    detail::take(*it, "ellipse_sigma", c.ellipse_sigma, "params");
    detail::take(*it, "categories", c.categories, "params");
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// TOML subset: [table] headers, key = value, strings, integers, floats,
// booleans and single-line arrays of those. Parsed into JSON.
// ---------------------------------------------------------------------------

namespace detail {

class TomlLine {
 public:
  TomlLine(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string key() {
    skip_ws();
    if (peek() == '"') return basic_string();
    const auto start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  json value() {
    skip_ws();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (s_.substr(pos_).starts_with("true")) {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_).starts_with("false")) {
      pos_ += 5;
      return false;
    }
    return number();
  }

 private:
  std::string basic_string() {
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      switch (s_[pos_++]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '\\': out += '\\'; break;
        case '"': out += '"'; break;
        default: fail("unsupported escape");
      }
    }
  }

  std::string literal_string() {
    ++pos_;
    const auto end = s_.find('\'', pos_);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  json array() {
    ++pos_;
    json out = json::array();
    while (true) {
      skip_ws();
      if (peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  json number() {
    const auto start = pos_;
    while (pos_ < s_.size() && std::string_view("+-0123456789._eE").find(s_[pos_]) != std::string_view::npos) ++pos_;
    std::string tok;
    for (char ch : s_.substr(start, pos_ - start))
      if (ch != '_') tok += ch;
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(tok, &used);
        if (used == tok.size()) return v;
      } else {
        const long long v = std::stoll(tok, &used);
        if (used == tok.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("malformed number '" + tok + "'");
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline json parse_toml(std::string_view text) {
  json root = json::object();
  json* table = &root;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    ++line_no;
    start = end + 1;
    detail::TomlLine line(raw, line_no);
    if (line.at_end_or_comment()) continue;
    if (line.peek() == '[') {
      line.expect('[');
      const auto name = line.key();
      line.expect(']');
      if (!line.at_end_or_comment()) line.fail("trailing characters after table header");
      if (root.contains(name)) line.fail("table [" + name + "] defined twice");
      root[name] = json::object();
      table = &root[name];
      continue;
    }
    const auto key = line.key();
    line.expect('=');
    auto value = line.value();
    if (!line.at_end_or_comment()) line.fail("trailing characters after value");
    if (table->contains(key)) line.fail("duplicate key '" + key + "'");
    (*table)[key] = std::move(value);
  }
  return root;
}

/// Loads a `.toml` or `.json` config file (chosen by extension, JSON otherwise).
inline AuditConfig load_config(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  json j;
  if (path.extension() == ".toml") {
    try {
      j = parse_toml(text);
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": " + e.detail());
    }
  } else {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
  }
  return config_from_json(j);
}

/// Canonical serialized form: sorted keys, two-space indent, trailing newline.
inline std::string canonical_config(const AuditConfig& c) { return to_json(c).dump(2) + "\n"; }

inline std::string config_hash(const AuditConfig& c) { return sha256_hex(canonical_config(c)); }

}  // namespace vlaudit
