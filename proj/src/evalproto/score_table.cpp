#include "unifloral/evalproto/score_table.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "unifloral/numerics/errors.hpp"

namespace unifloral {

namespace {

void check_field(const std::string& s, const char* what) {
  if (s.find_first_of(",\"\n\r") != std::string::npos)
    throw ContractError(std::string(what) + " may not contain commas, quotes or newlines: " + s);
}

std::string format_score(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

bool ScoreTable::failed(std::size_t p) const {
  const auto& row = scores.at(p);
  return std::all_of(row.begin(), row.end(), [](double v) { return std::isnan(v); });
}

std::vector<std::size_t> ScoreTable::usable() const {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < scores.size(); ++p)
    if (!failed(p)) out.push_back(p);
  return out;
}

double ScoreTable::true_mean(std::size_t p) const {
  const auto& row = scores.at(p);
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

void ScoreTable::validate() const {
  if (scores.empty()) throw ContractError("score table has no policies");
  if (config_ids.size() != scores.size()) throw ContractError("score table needs one config id per row");
  const std::size_t r = scores[0].size();
  if (r == 0) throw ContractError("score table has no episodes");
  std::set<std::string> ids;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (scores[p].size() != r) throw ContractError("score table rows differ in length");
    if (!ids.insert(config_ids[p]).second) throw ContractError("duplicate config id " + config_ids[p]);
    const bool all_nan = failed(p);
    for (double v : scores[p])
      if (!all_nan && !std::isfinite(v))
        throw ContractError("score table row " + config_ids[p] + " mixes finite and non-finite scores");
  }
  if (usable().empty()) throw ContractError("score table has no usable (non-failed) rows");
  check_field(method_name, "method name");
  check_field(env_name, "environment name");
  for (const auto& id : config_ids) check_field(id, "config id");
}

bool operator==(const ScoreTable& a, const ScoreTable& b) {
  if (a.method_name != b.method_name || a.env_name != b.env_name || a.config_ids != b.config_ids ||
      a.scores.size() != b.scores.size())
    return false;
  for (std::size_t p = 0; p < a.scores.size(); ++p) {
    if (a.scores[p].size() != b.scores[p].size()) return false;
    for (std::size_t i = 0; i < a.scores[p].size(); ++i) {
      const double x = a.scores[p][i], y = b.scores[p][i];
      if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
    }
  }
  return true;
}

std::string sidecar_path(const std::string& csv_path) {
  return std::filesystem::path(csv_path).replace_extension(".json").string();
}

void save_score_table(const ScoreTable& t, const std::string& csv_path) {
  t.validate();
  {
    std::ofstream os(csv_path, std::ios::trunc);
    if (!os) throw IoError("cannot write score table: " + csv_path);
    os << "method,env,config_id";
    for (std::size_t i = 0; i < t.num_episodes(); ++i) os << ",episode_" << i;
    os << '\n';
    for (std::size_t p = 0; p < t.num_policies(); ++p) {
      os << t.method_name << ',' << t.env_name << ',' << t.config_ids[p];
      for (double v : t.scores[p]) os << ',' << format_score(v);
      os << '\n';
    }
    if (!os) throw IoError("failed writing score table: " + csv_path);
  }
  std::vector<std::size_t> failed;
  for (std::size_t p = 0; p < t.num_policies(); ++p)
    if (t.failed(p)) failed.push_back(p);
  nlohmann::json side{{"format_version", kScoreTableFormatVersion},
                      {"method", t.method_name},
                      {"env", t.env_name},
                      {"policies", t.num_policies()},
                      {"episodes", t.num_episodes()},
                      {"config_ids", t.config_ids},
                      {"failed_rows", failed},
                      {"extra", t.extra}};
  std::ofstream js(sidecar_path(csv_path), std::ios::trunc);
  if (!js) throw IoError("cannot write score table sidecar: " + sidecar_path(csv_path));
  js << side.dump(2) << '\n';
}

ScoreTable load_score_table(const std::string& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw IoError("cannot open score table: " + csv_path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError("score table is empty: " + csv_path);
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "method" || header[1] != "env" || header[2] != "config_id")
    throw FormatError("score table header must start with method,env,config_id,episode_0");
  for (std::size_t i = 3; i < header.size(); ++i)
    if (header[i] != "episode_" + std::to_string(i - 3))
      throw FormatError("unexpected score table column: " + header[i]);
  ScoreTable t;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size())
      throw FormatError("score table row " + std::to_string(row) + " has the wrong number of columns");
    if (t.scores.empty()) {
      t.method_name = cells[0];
      t.env_name = cells[1];
    } else if (cells[0] != t.method_name || cells[1] != t.env_name) {
      throw FormatError("score table mixes methods or environments");
    }
    t.config_ids.push_back(cells[2]);
    std::vector<double> v;
    for (std::size_t i = 3; i < cells.size(); ++i) {
      if (cells[i] == "nan") {
        v.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::size_t used = 0;
      double x = 0;
      try {
        x = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[i].size() || cells[i].empty())
        throw FormatError("bad score '" + cells[i] + "' on row " + std::to_string(row));
      v.push_back(x);
    }
    t.scores.push_back(std::move(v));
  }
  const auto side = sidecar_path(csv_path);
  if (std::filesystem::exists(side)) {
    std::ifstream js(side);
    try {
      const auto j = nlohmann::json::parse(js);
      if (j.at("format_version").get<int>() != kScoreTableFormatVersion)
        throw VersionError("unsupported score table format version");
      t.extra = j.value("extra", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("invalid score table sidecar " + side + ": " + e.what());
    }
  }
  try {
    t.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid score table: ") + e.what());
  }
  return t;
}

}  // namespace unifloral
