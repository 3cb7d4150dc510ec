#pragma once

// Persistence: "percoqs-tree/1" and "percoqs-report/1" JSON, and CSV
// tables. JSON objects are key-sorted, so equal data gives equal bytes.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "percoqs/errors.hpp"
#include "percoqs/lattice.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/substitution.hpp"

namespace percoqs {

using Json = nlohmann::json;

inline constexpr const char* kTreeFormat = "percoqs-tree/1";
inline constexpr const char* kReportFormat = "percoqs-report/1";
inline constexpr const char* kSeriesHeader = "quantity,s,n,value,stderr,seed_count";

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Json word_to_json(std::span<const Label> w) { return Json(std::vector<Label>(w.begin(), w.end())); }

inline Word word_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("word must be an array of labels");
  Word w;
  for (const auto& x : j) {
    if (!x.is_number_unsigned()) throw FormatError("labels must be positive integers");
    w.push_back(x.get<Label>());
  }
  return w;
}

inline Json point_to_json(const ExactPoint& x) {
  Json nums = Json::array();
  for (const BigInt& n : x.nums()) nums.push_back(n.str());
  return Json{{"level", x.level()}, {"num", nums}};
}

inline ExactPoint point_from_json(const Json& j, int base) {
  std::vector<BigInt> nums;
  for (const auto& s : j.at("num")) nums.emplace_back(s.get<std::string>());
  return ExactPoint(base, j.at("level").get<int>(), std::move(nums));
}

inline Json params_to_json(const Params& pr) {
  return Json{{"M", pr.M}, {"d", pr.d}, {"p", pr.p}, {"K", pr.K}, {"eta", word_to_json(pr.eta)}};
}

inline Json tree_to_json(const PercTree& t) {
  Json j = params_to_json(t.params());
  j["format"] = kTreeFormat;
  j["seed"] = t.seed();
  j["depth"] = t.depth();
  Json levels = Json::array();
  for (int k = 0; k <= t.depth(); ++k) {
    Json lvl = Json::array();
    for (std::size_t i = 0; i < t.count(k); ++i) lvl.push_back(word_to_json(t.word(k, i)));
    levels.push_back(std::move(lvl));
  }
  j["survivors"] = std::move(levels);
  if (!t.prefix().empty()) j["prefix"] = word_to_json(t.prefix());
  return j;
}

inline PercTree tree_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != kTreeFormat) throw FormatError("not a percoqs-tree/1 document");
    Params pr{j.at("d").get<int>(), j.at("M").get<int>(), j.at("p").get<double>(), j.at("K").get<int>(),
              word_from_json(j.at("eta"))};
    pr.validate();
    const int depth = j.at("depth").get<int>();
    std::vector<std::vector<Word>> words;
    for (const auto& lvl : j.at("survivors")) {
      std::vector<Word> ws;
      for (const auto& w : lvl) ws.push_back(word_from_json(w));
      words.push_back(std::move(ws));
    }
    Word prefix = j.contains("prefix") ? word_from_json(j.at("prefix")) : Word{};
    return PercTree::from_words(pr, j.at("seed").get<std::uint64_t>(), depth, words, prefix);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad tree document: ") + e.what());
  }
}

inline std::string dump_canonical(const Json& j) { return j.dump(1) + "\n"; }

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_tree(const PercTree& t, const std::string& path) { write_text(path, dump_canonical(tree_to_json(t))); }

inline PercTree load_tree(const std::string& path) {
  const std::string text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return tree_from_json(j);
}

/// Structured results document: resolved configuration, results and named
/// check verdicts.
struct Report {
  std::string command;
  Json config = Json::object();
  Json results = Json::object();
  Json checks = Json::array();

  void add_check(const std::string& name, bool pass, const std::string& detail) {
    checks.push_back(Json{{"name", name}, {"pass", pass}, {"detail", detail}});
  }
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.at("pass").get<bool>()) return false;
    return true;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& c : checks)
      if (!c.at("pass").get<bool>()) out.push_back(c.at("name").get<std::string>());
    return out;
  }
  Json to_json() const {
    return Json{{"format", kReportFormat}, {"command", command}, {"config", config}, {"results", results},
                {"checks", checks}};
  }
};

/// Fixed-format decimal for CSV cells (17 significant digits round-trips).
inline std::string fmt_double(double x) {
  std::ostringstream ss;
  ss << std::setprecision(17) << x;
  return ss.str();
}

struct SeriesRow {
  std::string quantity;
  double s = 0.0;
  int n = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t seed_count = 0;
};

inline std::string series_csv(const std::vector<SeriesRow>& rows) {
  std::ostringstream ss;
  ss << kSeriesHeader << "\n";
  for (const auto& r : rows)
    ss << r.quantity << ',' << fmt_double(r.s) << ',' << r.n << ',' << fmt_double(r.value) << ','
       << fmt_double(r.stderr_) << ',' << r.seed_count << "\n";
  return ss.str();
}

/// One row per level-n survivor: source word, tilde word, image level and
/// exact corner coordinates as decimal num/M^level strings.
inline std::string image_cover_csv(const FlaggedTree& ft, int n) {
  const auto cover = image_cover(ft, n);
  const int d = ft.lattice().d();
  std::ostringstream ss;
  ss << "source_word,tilde_word,level";
  for (int k = 0; k < d; ++k) ss << ",corner_" << k;
  ss << "\n";
  for (std::size_t i = 0; i < cover.size(); ++i) {
    const Word w = ft.tree().word(n, i);
    ss << word_to_string(w) << ',' << word_to_string(tilde(ft, w).labels) << ',' << cover[i].level;
    for (int k = 0; k < d; ++k) ss << ',' << cover[i].corner.coord(static_cast<std::size_t>(k)).to_rational().str();
    ss << "\n";
  }
  return ss.str();
}

inline std::string grid_csv(const std::vector<std::vector<double>>& us, const std::vector<std::vector<double>>& fs) {
  std::ostringstream ss;
  const std::size_t d = us.empty() ? 0 : us.front().size();
  for (std::size_t k = 0; k < d; ++k) ss << (k ? "," : "") << "u" << k;
  for (std::size_t k = 0; k < d; ++k) ss << ",f" << k;
  ss << "\n";
  for (std::size_t i = 0; i < us.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) ss << (k ? "," : "") << fmt_double(us[i][k]);
    for (std::size_t k = 0; k < d; ++k) ss << ',' << fmt_double(fs[i][k]);
    ss << "\n";
  }
  return ss.str();
}

}  // namespace percoqs
