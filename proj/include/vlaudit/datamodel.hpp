#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "json.hpp"
#include "vlaudit/error.hpp"

namespace vlaudit {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Attribute enums
// ---------------------------------------------------------------------------

enum class Dataset { causalface, fairface, utkface, custom };
enum class Race { asian, black, white, other };
enum class Gender { female, male, other };

inline std::string to_string(Dataset d) {
  switch (d) {
    case Dataset::causalface: return "causalface";
    case Dataset::fairface: return "fairface";
    case Dataset::utkface: return "utkface";
    case Dataset::custom: return "custom";
  }
  return "custom";
}

inline std::string to_string(Race r) {
  switch (r) {
    case Race::asian: return "asian";
    case Race::black: return "black";
    case Race::white: return "white";
    case Race::other: return "other";
  }
  return "other";
}

inline std::string to_string(Gender g) {
  switch (g) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    case Gender::other: return "other";
  }
  return "other";
}

/// Lowercase, trim, and collapse inner whitespace runs to one space.
inline std::string canonical_token(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

inline std::optional<Dataset> parse_dataset(std::string_view raw) {
  const auto s = canonical_token(raw);
  if (s == "causalface") return Dataset::causalface;
  if (s == "fairface") return Dataset::fairface;
  if (s == "utkface") return Dataset::utkface;
  if (s == "custom") return Dataset::custom;
  return std::nullopt;
}

/// FairFace's "East Asian" and "Southeast Asian" both fold into asian.
inline std::optional<Race> parse_race(std::string_view raw) {
  const auto s = canonical_token(raw);
  if (s == "asian" || s == "east asian" || s == "southeast asian") return Race::asian;
  if (s == "black") return Race::black;
  if (s == "white") return Race::white;
  if (s == "other") return Race::other;
  return std::nullopt;
}

inline std::optional<Gender> parse_gender(std::string_view raw) {
  const auto s = canonical_token(raw);
  if (s == "female") return Gender::female;
  if (s == "male") return Gender::male;
  if (s == "other") return Gender::other;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Records and manifest
// ---------------------------------------------------------------------------

struct ImageRecord {
  std::string id;
  Dataset dataset = Dataset::custom;
  std::optional<std::int64_t> seed;
  Race race = Race::other;
  Gender gender = Gender::other;
  std::optional<double> age;
  std::optional<double> smiling;
  std::optional<double> lighting;
  std::optional<double> pose;

  bool operator==(const ImageRecord&) const = default;
};

/// Declared value sets. Categorical lists are kept sorted by name; an ordinal
/// level list, when present, restricts the values records may carry.
struct AttributeSchema {
  std::vector<Dataset> datasets;
  std::vector<Race> races;
  std::vector<Gender> genders;
  std::optional<std::vector<double>> age_levels;
  std::optional<std::vector<double>> smiling_levels;
  std::optional<std::vector<double>> lighting_levels;
  std::optional<std::vector<double>> pose_levels;

  bool operator==(const AttributeSchema&) const = default;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  DatasetManifest(AttributeSchema schema, std::vector<ImageRecord> records);

  const std::vector<ImageRecord>& records() const noexcept { return records_; }
  const AttributeSchema& schema() const noexcept { return schema_; }
  std::size_t size() const noexcept { return records_.size(); }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }

  std::optional<std::size_t> index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.id);
    return out;
  }

  bool operator==(const DatasetManifest& other) const {
    return schema_ == other.schema_ && records_ == other.records_;
  }

 private:
  AttributeSchema schema_;
  std::vector<ImageRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

template <typename E>
void sort_unique_by_name(std::vector<E>& v) {
  std::sort(v.begin(), v.end(), [](E a, E b) { return to_string(a) < to_string(b); });
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

template <typename E>
bool declared(const std::vector<E>& v, E x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

inline bool level_declared(const std::optional<std::vector<double>>& levels,
                           const std::optional<double>& value) {
  if (!levels || !value) return true;
  return std::find(levels->begin(), levels->end(), *value) != levels->end();
}

inline std::string record_tag(std::size_t index, const std::string& id) {
  return "record " + std::to_string(index) + " (id=" + id + ")";
}

}  // namespace detail

inline DatasetManifest::DatasetManifest(AttributeSchema schema, std::vector<ImageRecord> records)
    : schema_(std::move(schema)), records_(std::move(records)) {
  detail::sort_unique_by_name(schema_.datasets);
  detail::sort_unique_by_name(schema_.races);
  detail::sort_unique_by_name(schema_.genders);

  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.id.empty()) throw Error(ErrorCode::InvalidRecord, detail::record_tag(i, r.id) + ": empty id");
    if (!index_.emplace(r.id, i).second) throw Error(ErrorCode::DuplicateId, r.id);

    const auto tag = detail::record_tag(i, r.id);
    if (!detail::declared(schema_.datasets, r.dataset))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": dataset=" + to_string(r.dataset));
    if (!detail::declared(schema_.races, r.race))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": race=" + to_string(r.race));
    if (!detail::declared(schema_.genders, r.gender))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": gender=" + to_string(r.gender));
    if (!detail::level_declared(schema_.age_levels, r.age))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": age");
    if (!detail::level_declared(schema_.smiling_levels, r.smiling))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": smiling");
    if (!detail::level_declared(schema_.lighting_levels, r.lighting))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": lighting");
    if (!detail::level_declared(schema_.pose_levels, r.pose))
      throw Error(ErrorCode::UnknownAttributeValue, tag + ": pose");

    switch (r.dataset) {
      case Dataset::causalface:
        if (!r.seed || !r.age || !r.smiling || !r.lighting || !r.pose)
          throw Error(ErrorCode::InvalidRecord,
                      tag + ": causalface records need seed, age, smiling, lighting and pose");
        break;
      case Dataset::fairface:
      case Dataset::utkface:
        if (!r.age) throw Error(ErrorCode::InvalidRecord, tag + ": wild-dataset records need age");
        if (r.smiling || r.lighting || r.pose)
          throw Error(ErrorCode::InvalidRecord, tag + ": wild-dataset records carry no manipulation levels");
        break;
      case Dataset::custom:
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Manifest JSON
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

inline std::optional<double> optional_number(const json& rec, const char* key, const std::string& tag) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(ErrorCode::ParseError, tag + ": field '" + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::ParseError, tag + ": field '" + key + "' is not finite");
  return v;
}

inline std::optional<std::vector<double>> level_list(const json& schema, const char* key) {
  auto it = schema.find(key);
  if (it == schema.end() || it->is_null()) return std::nullopt;
  if (!it->is_array()) throw Error(ErrorCode::ParseError, std::string("schema.") + key + " must be an array");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) throw Error(ErrorCode::ParseError, std::string("schema.") + key + " must hold numbers");
    out.push_back(v.get<double>());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

template <typename E, typename Parse>
std::vector<E> category_list(const json& schema, const char* key, Parse parse) {
  std::vector<E> out;
  auto it = schema.find(key);
  if (it == schema.end()) return out;
  if (!it->is_array()) throw Error(ErrorCode::ParseError, std::string("schema.") + key + " must be an array");
  for (const auto& v : *it) {
    if (!v.is_string()) throw Error(ErrorCode::ParseError, std::string("schema.") + key + " must hold strings");
    auto parsed = parse(v.get<std::string>());
    if (!parsed)
      throw Error(ErrorCode::UnknownAttributeValue, std::string("schema.") + key + "=" + v.get<std::string>());
    out.push_back(*parsed);
  }
  return out;
}

}  // namespace detail

/// Parses manifest JSON text. `source` names the input in error messages.
inline DatasetManifest parse_manifest(std::string_view text, const std::string& source = "<manifest>") {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                source + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, source + ": top level must be an object");
  for (const auto& [key, _] : doc.items())
    if (key != "schema" && key != "records") throw Error(ErrorCode::UnknownKey, source + ": " + key);

  const json schema_json = doc.value("schema", json::object());
  if (!schema_json.is_object()) throw Error(ErrorCode::ParseError, source + ": schema must be an object");
  static const std::set<std::string> schema_keys = {"dataset", "race",     "gender",   "age",
                                                    "smiling", "lighting", "pose"};
  for (const auto& [key, _] : schema_json.items())
    if (!schema_keys.count(key)) throw Error(ErrorCode::UnknownKey, source + ": schema." + key);

  auto it = doc.find("records");
  if (it == doc.end() || !it->is_array()) throw Error(ErrorCode::ParseError, source + ": records must be an array");

  static const std::set<std::string> record_keys = {"id",  "dataset", "seed",     "race", "gender",
                                                    "age", "smiling", "lighting", "pose"};
  std::vector<ImageRecord> records;
  records.reserve(it->size());
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& rec = (*it)[i];
    std::string tag = source + ": record " + std::to_string(i);
    if (!rec.is_object()) throw Error(ErrorCode::ParseError, tag + ": not an object");
    for (const auto& [key, _] : rec.items())
      if (!record_keys.count(key)) throw Error(ErrorCode::UnknownKey, tag + ": " + key);
    auto id_it = rec.find("id");
    if (id_it == rec.end() || !id_it->is_string()) throw Error(ErrorCode::ParseError, tag + ": missing string id");

    ImageRecord r;
    r.id = id_it->get<std::string>();
    tag += " (id=" + r.id + ")";
    auto str_field = [&](const char* key) -> std::string {
      auto f = rec.find(key);
      if (f == rec.end() || !f->is_string())
        throw Error(ErrorCode::ParseError, tag + ": missing string field '" + key + "'");
      return f->get<std::string>();
    };
    const auto ds = str_field("dataset");
    const auto race = str_field("race");
    const auto gender = str_field("gender");
    auto pd = parse_dataset(ds);
    auto pr = parse_race(race);
    auto pg = parse_gender(gender);
    if (!pd) throw Error(ErrorCode::UnknownAttributeValue, tag + ": dataset=" + ds);
    if (!pr) throw Error(ErrorCode::UnknownAttributeValue, tag + ": race=" + race);
    if (!pg) throw Error(ErrorCode::UnknownAttributeValue, tag + ": gender=" + gender);
    r.dataset = *pd;
    r.race = *pr;
    r.gender = *pg;
    if (auto s = rec.find("seed"); s != rec.end() && !s->is_null()) {
      if (!s->is_number_integer()) throw Error(ErrorCode::ParseError, tag + ": seed must be an integer");
      r.seed = s->get<std::int64_t>();
    }
    r.age = detail::optional_number(rec, "age", tag);
    r.smiling = detail::optional_number(rec, "smiling", tag);
    r.lighting = detail::optional_number(rec, "lighting", tag);
    r.pose = detail::optional_number(rec, "pose", tag);
    records.push_back(std::move(r));
  }

  AttributeSchema schema;
  schema.datasets = detail::category_list<Dataset>(schema_json, "dataset", parse_dataset);
  schema.races = detail::category_list<Race>(schema_json, "race", parse_race);
  schema.genders = detail::category_list<Gender>(schema_json, "gender", parse_gender);
  // Undeclared categorical attributes default to the values observed.
  if (!schema_json.contains("dataset"))
    for (const auto& r : records) schema.datasets.push_back(r.dataset);
  if (!schema_json.contains("race"))
    for (const auto& r : records) schema.races.push_back(r.race);
  if (!schema_json.contains("gender"))
    for (const auto& r : records) schema.genders.push_back(r.gender);
  schema.age_levels = detail::level_list(schema_json, "age");
  schema.smiling_levels = detail::level_list(schema_json, "smiling");
  schema.lighting_levels = detail::level_list(schema_json, "lighting");
  schema.pose_levels = detail::level_list(schema_json, "pose");

  try {
    return DatasetManifest(std::move(schema), std::move(records));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DuplicateId) throw;
    throw Error(e.code(), source + ": " + e.detail());
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.string());
}

inline json to_json(const DatasetManifest& m) {
  json schema = json::object();
  auto names = [](const auto& v) {
    json a = json::array();
    for (auto x : v) a.push_back(to_string(x));
    return a;
  };
  schema["dataset"] = names(m.schema().datasets);
  schema["race"] = names(m.schema().races);
  schema["gender"] = names(m.schema().genders);
  if (m.schema().age_levels) schema["age"] = *m.schema().age_levels;
  if (m.schema().smiling_levels) schema["smiling"] = *m.schema().smiling_levels;
  if (m.schema().lighting_levels) schema["lighting"] = *m.schema().lighting_levels;
  if (m.schema().pose_levels) schema["pose"] = *m.schema().pose_levels;

  json records = json::array();
  for (const auto& r : m.records()) {
    json j = {{"id", r.id}, {"dataset", to_string(r.dataset)}, {"race", to_string(r.race)},
              {"gender", to_string(r.gender)}};
    if (r.seed) j["seed"] = *r.seed;
    if (r.age) j["age"] = *r.age;
    if (r.smiling) j["smiling"] = *r.smiling;
    if (r.lighting) j["lighting"] = *r.lighting;
    if (r.pose) j["pose"] = *r.pose;
    records.push_back(std::move(j));
  }
  return {{"schema", schema}, {"records", records}};
}

inline std::string serialize_manifest(const DatasetManifest& m) { return to_json(m).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Attributes, grouping
// ---------------------------------------------------------------------------

enum class Attribute { dataset, seed, race, gender, age, smiling, lighting, pose, age_bin };

inline std::string to_string(Attribute a) {
  switch (a) {
    case Attribute::dataset: return "dataset";
    case Attribute::seed: return "seed";
    case Attribute::race: return "race";
    case Attribute::gender: return "gender";
    case Attribute::age: return "age";
    case Attribute::smiling: return "smiling";
    case Attribute::lighting: return "lighting";
    case Attribute::pose: return "pose";
    case Attribute::age_bin: return "age_bin";
  }
  return "?";
}

inline Attribute parse_attribute(std::string_view raw) {
  const auto s = canonical_token(raw);
  for (auto a : {Attribute::dataset, Attribute::seed, Attribute::race, Attribute::gender, Attribute::age,
                 Attribute::smiling, Attribute::lighting, Attribute::pose, Attribute::age_bin})
    if (to_string(a) == s) return a;
  throw Error(ErrorCode::UnknownKey, "attribute " + std::string(raw));
}

inline bool is_categorical(Attribute a) {
  return a == Attribute::dataset || a == Attribute::race || a == Attribute::gender;
}

/// Decade-style bins: a record of age x falls into bin start + width * floor((x - start) / width).
struct AgeBinning {
  double start = 20.0;
  double width = 10.0;

  double bin_of(double age) const { return start + width * std::floor((age - start) / width); }
};

/// Missing values sort first; categorical values compare by name.
using AttributeValue = std::variant<std::monostate, std::int64_t, double, std::string>;

inline std::string to_string(const AttributeValue& v) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "none"; }
    std::string operator()(std::int64_t x) const { return std::to_string(x); }
    std::string operator()(double x) const {
      std::ostringstream ss;
      ss << x;
      return ss.str();
    }
    std::string operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

inline json to_json(const AttributeValue& v) {
  struct Visitor {
    json operator()(std::monostate) const { return nullptr; }
    json operator()(std::int64_t x) const { return x; }
    json operator()(double x) const { return x; }
    json operator()(const std::string& s) const { return s; }
  };
  return std::visit(Visitor{}, v);
}

inline AttributeValue attribute_value(const ImageRecord& r, Attribute a, const AgeBinning& bins = {}) {
  auto opt = [](const std::optional<double>& x) -> AttributeValue {
    if (!x) return std::monostate{};
    return *x;
  };
  switch (a) {
    case Attribute::dataset: return to_string(r.dataset);
    case Attribute::seed: return r.seed ? AttributeValue(*r.seed) : AttributeValue(std::monostate{});
    case Attribute::race: return to_string(r.race);
    case Attribute::gender: return to_string(r.gender);
    case Attribute::age: return opt(r.age);
    case Attribute::smiling: return opt(r.smiling);
    case Attribute::lighting: return opt(r.lighting);
    case Attribute::pose: return opt(r.pose);
    case Attribute::age_bin: return r.age ? AttributeValue(bins.bin_of(*r.age)) : AttributeValue(std::monostate{});
  }
  return std::monostate{};
}

struct DemographicGroup {
  std::vector<std::pair<Attribute, AttributeValue>> key;
  std::vector<std::size_t> members;  // record indices, ascending

  std::string label() const {
    if (key.empty()) return "all";
    std::string out;
    for (const auto& [attr, value] : key) {
      if (!out.empty()) out += ",";
      out += to_string(attr) + "=" + to_string(value);
    }
    return out;
  }
};

/// Partitions the selected records (all records when `selection` is empty)
/// by the given keys. Categorical keys enumerate every declared value, so
/// declared-but-unpopulated groups come back with no members. Groups are
/// ordered lexicographically on their key tuples.
inline std::vector<DemographicGroup> group_by(const DatasetManifest& m, const std::vector<Attribute>& keys,
                                              const std::vector<std::size_t>& selection = {},
                                              const AgeBinning& bins = {}) {
  std::vector<std::size_t> rows = selection;
  if (selection.empty()) {
    rows.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) rows[i] = i;
  }

  using Tuple = std::vector<AttributeValue>;
  std::vector<std::size_t> cat_pos, num_pos;
  for (std::size_t k = 0; k < keys.size(); ++k) (is_categorical(keys[k]) ? cat_pos : num_pos).push_back(k);

  // Declared domains for categorical keys.
  std::vector<std::vector<AttributeValue>> cat_domains;
  for (auto k : cat_pos) {
    std::vector<AttributeValue> dom;
    switch (keys[k]) {
      case Attribute::dataset:
        for (auto d : m.schema().datasets) dom.emplace_back(to_string(d));
        break;
      case Attribute::race:
        for (auto r : m.schema().races) dom.emplace_back(to_string(r));
        break;
      default:
        for (auto g : m.schema().genders) dom.emplace_back(to_string(g));
        break;
    }
    std::sort(dom.begin(), dom.end());
    cat_domains.push_back(std::move(dom));
  }

  // Observed combinations of the non-categorical keys.
  std::set<Tuple> num_combos;
  for (auto row : rows) {
    Tuple t;
    for (auto k : num_pos) t.push_back(attribute_value(m[row], keys[k], bins));
    num_combos.insert(std::move(t));
  }
  if (num_combos.empty()) num_combos.insert(Tuple{});

  std::map<Tuple, std::vector<std::size_t>> buckets;
  // Cartesian product over categorical domains x observed numeric combos.
  std::vector<std::size_t> odometer(cat_domains.size(), 0);
  const bool any_empty_domain =
      std::any_of(cat_domains.begin(), cat_domains.end(), [](const auto& d) { return d.empty(); });
  if (!any_empty_domain) {
    while (true) {
      for (const auto& combo : num_combos) {
        Tuple t(keys.size());
        for (std::size_t c = 0; c < cat_pos.size(); ++c) t[cat_pos[c]] = cat_domains[c][odometer[c]];
        for (std::size_t n = 0; n < num_pos.size(); ++n) t[num_pos[n]] = combo[n];
        buckets.emplace(std::move(t), std::vector<std::size_t>{});
      }
      std::size_t c = 0;
      while (c < odometer.size() && ++odometer[c] == cat_domains[c].size()) odometer[c++] = 0;
      if (c == odometer.size()) break;
    }
  }
  for (auto row : rows) {
    Tuple t;
    for (auto a : keys) t.push_back(attribute_value(m[row], a, bins));
    buckets[t].push_back(row);
  }

  std::vector<DemographicGroup> out;
  out.reserve(buckets.size());
  for (auto& [tuple, members] : buckets) {
    DemographicGroup g;
    for (std::size_t k = 0; k < keys.size(); ++k) g.key.emplace_back(keys[k], tuple[k]);
    std::sort(members.begin(), members.end());
    g.members = std::move(members);
    out.push_back(std::move(g));
  }
  return out;
}

/// Indices of records with age >= min_age. Records without age are kept
/// only when `keep_missing` is set.
inline std::vector<std::size_t> filter_min_age(const DatasetManifest& m, double min_age, bool keep_missing = true) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& age = m[i].age;
    if (age ? *age >= min_age : keep_missing) out.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lexicons and prompt templates
// ---------------------------------------------------------------------------

enum class LexiconModel { SCM, ABC };
enum class Valence { positive, negative, progressive, conservative, unsigned_ };

inline std::string to_string(LexiconModel m) { return m == LexiconModel::SCM ? "SCM" : "ABC"; }

inline LexiconModel parse_lexicon_model(std::string_view s) {
  if (s == "SCM" || s == "scm") return LexiconModel::SCM;
  if (s == "ABC" || s == "abc") return LexiconModel::ABC;
  throw Error(ErrorCode::UnknownKey, "lexicon model " + std::string(s));
}

inline std::string to_string(Valence v) {
  switch (v) {
    case Valence::positive: return "positive";
    case Valence::negative: return "negative";
    case Valence::progressive: return "progressive";
    case Valence::conservative: return "conservative";
    case Valence::unsigned_: return "unsigned";
  }
  return "unsigned";
}

inline Valence parse_valence(std::string_view s) {
  for (auto v : {Valence::positive, Valence::negative, Valence::progressive, Valence::conservative, Valence::unsigned_})
    if (to_string(v) == s) return v;
  throw Error(ErrorCode::UnknownKey, "valence " + std::string(s));
}

/// One social-perception dimension. Dimensions sharing an `axis` are the two
/// poles of that axis (e.g. A+ and A- on Agency).
struct Dimension {
  std::string name;
  std::string axis;
  Valence valence = Valence::positive;
  std::vector<std::string> adjectives;

  bool operator==(const Dimension&) const = default;
};

struct Lexicon {
  LexiconModel model = LexiconModel::SCM;
  std::vector<Dimension> dimensions;

  bool operator==(const Lexicon&) const = default;

  const Dimension& dimension(std::string_view name) const {
    for (const auto& d : dimensions)
      if (d.name == name) return d;
    throw Error(ErrorCode::UnknownKey, "dimension " + std::string(name));
  }

  std::size_t adjective_count() const {
    std::size_t n = 0;
    for (const auto& d : dimensions) n += d.adjectives.size();
    return n;
  }
};

inline void validate(const Lexicon& lex) {
  std::set<std::string> names;
  for (const auto& d : lex.dimensions) {
    if (d.name.empty()) throw Error(ErrorCode::InvalidArgument, "dimension with empty name");
    if (!names.insert(d.name).second) throw Error(ErrorCode::DuplicateId, "dimension " + d.name);
    if (d.adjectives.empty()) throw Error(ErrorCode::InvalidArgument, "dimension " + d.name + " has no adjectives");
    std::set<std::string> seen;
    for (const auto& a : d.adjectives) {
      if (a.empty()) throw Error(ErrorCode::InvalidArgument, "empty adjective in " + d.name);
      for (char c : a)
        if (std::isupper(static_cast<unsigned char>(c)))
          throw Error(ErrorCode::InvalidArgument, "adjective '" + a + "' is not lowercase");
      if (!seen.insert(a).second) throw Error(ErrorCode::DuplicateId, "adjective " + a + " in " + d.name);
    }
  }
}

inline Lexicon default_scm_lexicon() {
  return {LexiconModel::SCM,
          {
              {"Warmth", "Warmth", Valence::positive,
               {"warm", "trustworthy", "friendly", "honest", "likeable", "sincere"}},
              {"Competence", "Competence", Valence::positive,
               {"competent", "intelligent", "skilled", "efficient", "assertive", "confident"}},
          }};
}

inline Lexicon default_abc_lexicon() {
  return {LexiconModel::ABC,
          {
              {"A+", "Agency", Valence::positive,
               {"powerful", "high-status", "dominating", "wealthy", "confident", "competitive"}},
              {"A-", "Agency", Valence::negative, {"powerless", "low-status", "dominated", "poor", "meek", "passive"}},
              {"BP", "Belief", Valence::progressive, {"science-oriented", "alternative", "liberal", "modern"}},
              {"BC", "Belief", Valence::conservative, {"religious", "conventional", "conservative", "traditional"}},
              {"C+", "Communion", Valence::positive,
               {"trustworthy", "sincere", "friendly", "benevolent", "likable", "altruistic"}},
              {"C-", "Communion", Valence::negative,
               {"untrustworthy", "dishonest", "unfriendly", "threatening", "unpleasant", "egoistic"}},
          }};
}

inline json to_json(const Lexicon& lex) {
  json dims = json::array();
  for (const auto& d : lex.dimensions)
    dims.push_back({{"name", d.name}, {"axis", d.axis}, {"valence", to_string(d.valence)}, {"adjectives", d.adjectives}});
  return {{"model", to_string(lex.model)}, {"dimensions", dims}};
}

inline Lexicon lexicon_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "lexicon must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "model" && key != "dimensions") throw Error(ErrorCode::UnknownKey, "lexicon." + key);
  Lexicon lex;
  try {
    lex.model = parse_lexicon_model(j.at("model").get<std::string>());
    for (const auto& d : j.at("dimensions")) {
      for (const auto& [key, _] : d.items())
        if (key != "name" && key != "axis" && key != "valence" && key != "adjectives")
          throw Error(ErrorCode::UnknownKey, "lexicon.dimensions." + key);
      Dimension dim;
      dim.name = d.at("name").get<std::string>();
      dim.axis = d.value("axis", dim.name);
      dim.valence = parse_valence(d.value("valence", std::string("positive")));
      dim.adjectives = d.at("adjectives").get<std::vector<std::string>>();
      lex.dimensions.push_back(std::move(dim));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("lexicon: ") + e.what());
  }
  validate(lex);
  return lex;
}

inline Lexicon load_lexicon(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return lexicon_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
}

inline constexpr std::string_view kPlaceholder = "<adjective>";

struct PromptTemplateSet {
  std::vector<std::string> templates;

  bool operator==(const PromptTemplateSet&) const = default;
};

inline void validate(const PromptTemplateSet& set) {
  if (set.templates.empty()) throw Error(ErrorCode::InvalidArgument, "template set is empty");
  for (const auto& t : set.templates) {
    const auto first = t.find(kPlaceholder);
    if (first == std::string::npos) throw Error(ErrorCode::MissingPlaceholder, t);
    if (t.find(kPlaceholder, first + 1) != std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "template has more than one placeholder: " + t);
  }
}

inline PromptTemplateSet default_templates() {
  return {{"A photo of a <adjective> person.", "A <adjective> person.", "This is a <adjective> person.",
           "Cropped face photo of a <adjective> person."}};
}

inline json to_json(const PromptTemplateSet& t) { return {{"templates", t.templates}}; }

inline PromptTemplateSet templates_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "template file must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "templates") throw Error(ErrorCode::UnknownKey, "templates." + key);
  PromptTemplateSet set;
  try {
    set.templates = j.at("templates").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("templates: ") + e.what());
  }
  validate(set);
  return set;
}

inline PromptTemplateSet load_templates(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return templates_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
}

namespace detail {

inline std::string collapse_spaces(std::string_view s) {
  std::string out;
  bool in_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space) out += ' ';
      in_space = true;
    } else {
      out += c;
      in_space = false;
    }
  }
  // Leading/trailing whitespace is removed; "A photo of a  ." keeps its period.
  const auto b = out.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  const auto e = out.find_last_not_of(' ');
  std::string trimmed = out.substr(b, e - b + 1);
  // Deleting a placeholder directly before punctuation leaves " ." behind.
  std::string fixed;
  for (std::size_t i = 0; i < trimmed.size(); ++i) {
    if (trimmed[i] == ' ' && i + 1 < trimmed.size() && (trimmed[i + 1] == '.' || trimmed[i + 1] == ','))
      continue;
    fixed += trimmed[i];
  }
  return fixed;
}

inline bool starts_with_vowel(std::string_view w) {
  if (w.empty()) return false;
  const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(w.front())));
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

}  // namespace detail

/// Splices `word` into the template's placeholder. With `fix_articles`, a
/// standalone "a"/"A" directly before the placeholder becomes "an"/"An" when
/// the word starts with a vowel.
inline std::string fill_template(const std::string& tmpl, const std::string& word, bool fix_articles = false) {
  const auto pos = tmpl.find(kPlaceholder);
  if (pos == std::string::npos) throw Error(ErrorCode::MissingPlaceholder, tmpl);
  std::string head = tmpl.substr(0, pos);
  const std::string tail = tmpl.substr(pos + kPlaceholder.size());
  if (fix_articles && detail::starts_with_vowel(word) && head.size() >= 2 && head.back() == ' ') {
    const char article = head[head.size() - 2];
    const bool standalone = head.size() == 2 || head[head.size() - 3] == ' ';
    if ((article == 'a' || article == 'A') && standalone) head.insert(head.size() - 1, "n");
  }
  return head + word + tail;
}

/// Template with the placeholder deleted and whitespace runs collapsed:
/// "A photo of a <adjective> person." -> "A photo of a person.".
inline std::string neutral_prompt(const std::string& tmpl) {
  const auto pos = tmpl.find(kPlaceholder);
  if (pos == std::string::npos) throw Error(ErrorCode::MissingPlaceholder, tmpl);
  return detail::collapse_spaces(tmpl.substr(0, pos) + tmpl.substr(pos + kPlaceholder.size()));
}

struct AdjectivePrompt {
  std::size_t dimension = 0;  // index into Lexicon::dimensions
  std::string adjective;
  std::size_t template_index = 0;
  std::string text;
};

struct PromptSet {
  std::vector<AdjectivePrompt> adjective_prompts;  // dimension-major, then adjective, then template
  std::vector<std::string> neutral;                // one per template

  /// Distinct prompt strings in first-seen order (adjective prompts, then neutral).
  std::vector<std::string> unique_texts() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& p : adjective_prompts)
      if (seen.insert(p.text).second) out.push_back(p.text);
    for (const auto& n : neutral)
      if (seen.insert(n).second) out.push_back(n);
    return out;
  }
};

inline PromptSet expand_prompts(const Lexicon& lex, const PromptTemplateSet& templates, bool fix_articles = false) {
  validate(templates);
  PromptSet out;
  for (std::size_t d = 0; d < lex.dimensions.size(); ++d)
    for (const auto& adj : lex.dimensions[d].adjectives)
      for (std::size_t t = 0; t < templates.templates.size(); ++t)
        out.adjective_prompts.push_back({d, adj, t, fill_template(templates.templates[t], adj, fix_articles)});
  for (const auto& t : templates.templates) out.neutral.push_back(neutral_prompt(t));
  return out;
}

/// One prompt per line, as consumed by the text extractor. Trailing CR is
/// stripped; blank lines are rejected, as are repeats.
inline std::vector<std::string> parse_prompt_list(std::string_view text) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  std::size_t line = 0;
  while (!text.empty()) {
    ++line;
    const auto nl = text.find('\n');
    std::string_view s = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    if (s.find_first_not_of(" \t") == std::string_view::npos)
      throw Error(ErrorCode::ParseError, "prompt list line " + std::to_string(line) + " is blank");
    if (!seen.emplace(s).second) throw Error(ErrorCode::DuplicateId, std::string(s));
    out.emplace_back(s);
  }
  if (out.empty()) throw Error(ErrorCode::EmptySample, "prompt list is empty");
  return out;
}

inline std::vector<std::string> load_prompt_list(const std::filesystem::path& path) {
  try {
    return parse_prompt_list(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

}  // namespace vlaudit
