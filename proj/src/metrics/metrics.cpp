#include "cape/metrics/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "cape/error.hpp"
#include "json_access.hpp"

namespace cape::metrics {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string cell(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : "N/A";
}

std::vector<std::string> row_cells(const ReportRow& r) {
  return {r.method,
          cell(r.pct_correct, 2),
          fixed(r.pct_executable, 2),
          fixed(r.pct_affordable, 2),
          cell(r.pct_gs, 2),
          cell(r.lcs, 4),
          cell(r.fleiss_kappa, 4),
          fixed(r.mean_steps, 2),
          fixed(r.mean_corrections, 2),
          std::to_string(r.episodes)};
}

const std::vector<std::string> kColumns{"Method", "%Correct", "%Exec", "%Aff",        "%GS",
                                        "LCS",    "Kappa",    "Steps", "Corrections", "Episodes"};

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& s : out) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    s.erase(0, i);
  }
  return out;
}

using Placement = std::tuple<int, int, int>;

Placement placement(const world::ObjectInstance& o) {
  return {o.room.value, o.container ? o.container->value : -1, o.support ? o.support->value : -1};
}

}  // namespace

GroundTruthProgram load_ground_truth(const json& doc, const world::Domain& domain) {
  GroundTruthProgram gt;
  gt.task = detail::get<std::string>(doc, "task", "");
  const json& steps = detail::require_array(doc, "steps", "");
  world::SceneGraph scene = domain.scene;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto text = detail::as<std::string>(steps[i], detail::child("/steps", i));
    const auto where = "ground truth '" + gt.task + "' step " + std::to_string(i + 1) + " '" + text + "'";
    auto action = world::parse_action(scene, domain.skills, text);
    if (!action || (!action->object_id && !action->object_name.empty())) {
      throw ValidationError(where + " is not an admissible action");
    }
    if (auto err = world::check_preconditions(scene, domain.skills, *action)) {
      throw ValidationError(where + " fails: " + err->message);
    }
    scene = world::apply_action(scene, domain.skills, *action);
    gt.steps.push_back(text);
    gt.actions.push_back(std::move(*action));
  }
  gt.final_scene = std::move(scene);
  return gt;
}

GroundTruthProgram load_ground_truth_file(const std::filesystem::path& path,
                                          const world::Domain& domain) {
  const auto doc = detail::parse_document(read_file(path), path.string());
  try {
    return load_ground_truth(doc, domain);
  } catch (const ParseError& e) {
    throw ParseError(e.path(), path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::map<std::string, GroundTruthProgram> load_ground_truth_dir(const std::filesystem::path& dir,
                                                                const world::Domain& domain) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("ground-truth directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, GroundTruthProgram> out;
  for (const auto& f : files) {
    auto gt = load_ground_truth_file(f, domain);
    const auto task = gt.task;
    if (!out.emplace(task, std::move(gt)).second) {
      throw ValidationError("duplicate ground truth for task '" + task + "' in " + f.string());
    }
  }
  return out;
}

int executability(std::span<const world::GroundedAction> actions, const world::SceneGraph& initial,
                  std::span<const world::SkillTemplate> skills) {
  if (actions.empty()) return 0;
  return world::replay(initial, skills, actions).failure ? 0 : 1;
}

double affordability(std::span<const world::GroundedAction> actions,
                     const world::SceneGraph& initial,
                     std::span<const world::SkillTemplate> skills) {
  if (actions.empty()) return 0.0;
  world::SceneGraph scene = initial;
  std::size_t executed = 0;
  for (const auto& a : actions) {
    if (world::check_preconditions(scene, skills, a)) continue;
    scene = world::apply_action(scene, skills, a);
    ++executed;
  }
  return 100.0 * static_cast<double>(executed) / static_cast<double>(actions.size());
}

std::string normalize_step(std::string_view step) {
  std::string out;
  bool space = false;
  for (char c : step) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::string> na, nb;
  for (const auto& s : a) na.push_back(normalize_step(s));
  for (const auto& s : b) nb.push_back(normalize_step(s));
  return lcs_table<std::string>(na, nb);
}

double lcs(std::span<const std::string> generated, std::span<const std::string> ground_truth) {
  const auto longest = std::max(generated.size(), ground_truth.size());
  if (longest == 0) return 1.0;
  return static_cast<double>(lcs_length(generated, ground_truth)) / static_cast<double>(longest);
}

double graph_similarity(const world::SceneGraph& generated, const world::SceneGraph& ground_truth) {
  std::map<int, std::pair<const world::ObjectInstance*, const world::ObjectInstance*>> objects;
  for (const auto& o : generated.objects) objects[o.id.value].first = &o;
  for (const auto& o : ground_truth.objects) objects[o.id.value].second = &o;
  if (objects.empty()) return 100.0;
  std::size_t matching = 0;
  for (const auto& [id, pair] : objects) {
    const auto* a = pair.first;
    const auto* b = pair.second;
    if (!a || !b) continue;
    if (placement(*a) == placement(*b)) ++matching;
    for (auto attr : kStateAttributes) {
      const std::string key(attr);
      if (a->attribute(key) == b->attribute(key)) ++matching;
    }
  }
  return 100.0 * static_cast<double>(matching) /
         static_cast<double>(objects.size() * kSlotsPerObject);
}

AnnotationMatrix parse_annotations_csv(std::string_view text) {
  AnnotationMatrix m;
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      auto line = std::string(text.substr(start, end - start));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      start = end + 1;
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("/0", "annotation file is empty");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || header[0] != "plan_id") {
    throw ParseError("/0", "header must be plan_id,rater_1,...");
  }
  for (std::size_t c = 1; c < header.size(); ++c) {
    if (header[c] != "rater_" + std::to_string(c)) {
      throw ParseError("/0/" + std::to_string(c), "expected rater_" + std::to_string(c));
    }
  }
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto cells = split(lines[r], ',');
    const std::string where = "/" + std::to_string(r);
    if (cells.size() != header.size()) throw ParseError(where, "wrong number of cells");
    std::vector<int> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c] != "0" && cells[c] != "1") {
        throw ParseError(where + "/" + std::to_string(c), "label must be 0 or 1");
      }
      row.push_back(cells[c] == "1" ? 1 : 0);
    }
    m.plan_ids.push_back(cells[0]);
    m.ratings.push_back(std::move(row));
  }
  return m;
}

AnnotationMatrix load_annotations_file(const std::filesystem::path& path) {
  try {
    return parse_annotations_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.path(), path.string() + ": " + e.what());
  }
}

double fleiss_kappa(const AnnotationMatrix& m) {
  const std::size_t items = m.ratings.size();
  if (items < 2) throw InputError("kappa needs at least two rated items");
  const std::size_t n = m.ratings.front().size();
  if (n < 2) throw InputError("kappa needs at least two raters");
  double p_bar = 0.0;
  double ones = 0.0;
  for (const auto& row : m.ratings) {
    if (row.size() != n) throw InputError("every item needs the same number of ratings");
    double k1 = 0;
    for (int v : row) {
      if (v != 0 && v != 1) throw InputError("ratings must be 0 or 1");
      k1 += v;
    }
    const double k0 = static_cast<double>(n) - k1;
    const double nn = static_cast<double>(n);
    p_bar += (k0 * k0 + k1 * k1 - nn) / (nn * (nn - 1.0));
    ones += k1;
  }
  p_bar /= static_cast<double>(items);
  const double p1 = ones / static_cast<double>(items * n);
  const double pe = p1 * p1 + (1.0 - p1) * (1.0 - p1);
  if (pe >= 1.0) return 1.0;  // a single category throughout: unanimous
  return (p_bar - pe) / (1.0 - pe);
}

double percent_correct(const AnnotationMatrix& m) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& row : m.ratings) {
    for (int v : row) sum += v;
    count += row.size();
  }
  if (count == 0) throw InputError("no annotations");
  return 100.0 * sum / static_cast<double>(count);
}

EpisodeMetrics evaluate(const planner::PlanTrace& trace, const world::Domain& domain,
                        const GroundTruthProgram* gt) {
  EpisodeMetrics m;
  const auto actions = trace.actions();
  m.executable = executability(actions, domain.scene, domain.skills);
  m.affordability = affordability(actions, domain.scene, domain.skills);
  m.steps = trace.steps.size();
  m.corrections = trace.corrections.size();
  if (gt) {
    m.lcs = lcs(trace.step_texts(), gt->steps);
    // Score the state the plan actually reaches when replayed.
    const auto reached = world::replay(domain.scene, domain.skills, actions).scene;
    m.pct_gs = graph_similarity(reached, gt->final_scene);
  }
  return m;
}

ordered_json to_json(const EpisodeMetrics& m) {
  ordered_json out;
  out["executable"] = m.executable;
  out["affordability"] = m.affordability;
  out["lcs"] = m.lcs ? ordered_json(*m.lcs) : ordered_json(nullptr);
  out["pct_gs"] = m.pct_gs ? ordered_json(*m.pct_gs) : ordered_json(nullptr);
  out["steps"] = m.steps;
  out["corrections"] = m.corrections;
  return out;
}

EpisodeMetrics metrics_from_json(const json& doc, const std::string& path) {
  EpisodeMetrics m;
  m.executable = detail::get<int>(doc, "executable", path);
  m.affordability = detail::get<double>(doc, "affordability", path);
  if (auto it = doc.find("lcs"); it != doc.end() && !it->is_null()) {
    m.lcs = detail::as<double>(*it, detail::child(path, "lcs"));
  }
  if (auto it = doc.find("pct_gs"); it != doc.end() && !it->is_null()) {
    m.pct_gs = detail::as<double>(*it, detail::child(path, "pct_gs"));
  }
  m.steps = static_cast<std::size_t>(detail::get<long>(doc, "steps", path));
  m.corrections = static_cast<std::size_t>(detail::get<long>(doc, "corrections", path));
  return m;
}

ReportRow aggregate(std::string method, std::span<const EpisodeMetrics> episodes,
                    const AnnotationMatrix* annotations) {
  if (episodes.empty()) throw InputError("cannot aggregate zero episodes for " + method);
  ReportRow row;
  row.method = std::move(method);
  row.episodes = episodes.size();
  double exec = 0, aff = 0, steps = 0, corr = 0, lcs_sum = 0, gs_sum = 0;
  std::size_t lcs_n = 0, gs_n = 0;
  for (const auto& e : episodes) {
    exec += e.executable;
    aff += e.affordability;
    steps += static_cast<double>(e.steps);
    corr += static_cast<double>(e.corrections);
    if (e.lcs) {
      lcs_sum += *e.lcs;
      ++lcs_n;
    }
    if (e.pct_gs) {
      gs_sum += *e.pct_gs;
      ++gs_n;
    }
  }
  const double n = static_cast<double>(episodes.size());
  row.pct_executable = 100.0 * exec / n;
  row.pct_affordable = aff / n;
  row.mean_steps = steps / n;
  row.mean_corrections = corr / n;
  if (lcs_n) row.lcs = lcs_sum / static_cast<double>(lcs_n);
  if (gs_n) row.pct_gs = gs_sum / static_cast<double>(gs_n);
  if (annotations && !annotations->ratings.empty()) {
    row.pct_correct = percent_correct(*annotations);
    if (annotations->ratings.size() >= 2) row.fleiss_kappa = fleiss_kappa(*annotations);
  }
  return row;
}

std::string render_csv(std::span<const ReportRow> rows) {
  std::string out;
  for (std::size_t i = 0; i < kColumns.size(); ++i) out += (i ? "," : "") + kColumns[i];
  out += "\n";
  for (const auto& r : rows) {
    const auto cells = row_cells(r);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::string c = cells[i];
      if (c.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (char ch : c) quoted += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        c = quoted + "\"";
      }
      out += (i ? "," : "") + c;
    }
    out += "\n";
  }
  return out;
}

std::string render_markdown(std::span<const ReportRow> rows) {
  std::string out = "|";
  for (const auto& c : kColumns) out += " " + c + " |";
  out += "\n|";
  for (std::size_t i = 0; i < kColumns.size(); ++i) out += i == 0 ? " --- |" : " ---: |";
  out += "\n";
  for (const auto& r : rows) {
    out += "|";
    for (const auto& c : row_cells(r)) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

}  // namespace cape::metrics
