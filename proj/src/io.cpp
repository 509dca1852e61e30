#include "umri/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unordered_map>

#include "umri/error.hpp"
#include "umri/lp.hpp"

namespace umri::io {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

[[noreturn]] void parse_fail(const std::string& what) { throw Error(ErrorCode::ParseError, what); }

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) parse_fail(std::string("expected an object holding \"") + key + "\"");
  const auto it = j.find(key);
  if (it == j.end()) parse_fail(std::string("missing field \"") + key + "\"");
  return *it;
}

double number(const Json& j, const char* what) {
  if (!j.is_number()) parse_fail(std::string(what) + " must be a number");
  return j.get<double>();
}

std::string text(const Json& j, const char* what) {
  if (!j.is_string()) parse_fail(std::string(what) + " must be a string");
  return j.get<std::string>();
}

Vector vector_from_json(const Json& j, const char* what) {
  if (!j.is_array()) parse_fail(std::string(what) + " must be an array");
  Vector v(idx(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(idx(i)) = number(j[i], what);
  return v;
}

std::vector<double> doubles_from_json(const Json& j, const char* what) {
  const Vector v = vector_from_json(j, what);
  return {v.data(), v.data() + v.size()};
}

Matrix matrix_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) parse_fail(std::string(what) + " must be a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) parse_fail(std::string(what) + " has an empty first row");
  Matrix m(idx(j.size()), idx(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) parse_fail(std::string(what) + " is ragged");
    for (std::size_t c = 0; c < cols; ++c) m(idx(i), idx(c)) = number(j[i][c], what);
  }
  return m;
}

double parse_number(const std::string& s, const char* what) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) parse_fail(std::string("bad ") + what + " '" + s + "'");
  return v;
}

std::size_t parse_index(const std::string& s, const char* what) {
  std::size_t v = 0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    parse_fail(std::string("bad ") + what + " '" + s + "'");
  }
  return v;
}

bool flag(const Json& j, const char* what) {
  if (!j.is_boolean()) parse_fail(std::string(what) + " must be true or false");
  return j.get<bool>();
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoFailure, "cannot move output into place at " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoFailure, "failed reading " + path.string());
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error(ErrorCode::IoFailure, "cannot format number");
  return {buf, ptr};
}

Json parse_json(const std::string& content, const std::string& origin) {
  try {
    return Json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    parse_fail(origin + ": " + e.what());
  }
}

Json default_metadata() {
  const SimplexOptions lp;
  const SbrpOptions sbrp;
  Json m;
  m["tolerances"] = {{"lp_feasibility", lp.feasibility_tol},
                     {"lp_optimality_relative", lp.optimality_tol},
                     {"lp_pivot", lp.pivot_tol},
                     {"degeneracy", kDegeneracyTol},
                     {"box_floor", kPositiveFloor},
                     {"renormalize", kRenormalizeTol},
                     {"stochastic", kStochasticTol}};
  m["margin_fraction"] = kDefaultMarginFraction;
  m["grid_levels"] = {0.25, 0.5, 0.75, 1.0};
  m["robustness_reading"] =
      "maximize epsilon with utilities and costs in [floor, 1], then report "
      "epsilon*K/sum_k ||u_k||^2 (shared model: epsilon/||u||^2) at the optimizer";
  m["sbrp_scheme"] = {{"lambda_min", sbrp.lambda_min},
                      {"lambda_max", sbrp.lambda_max},
                      {"max_rounds", sbrp.max_rounds},
                      {"tolerance", sbrp.tolerance},
                      {"start", "shared utility maximizing the action-switch margin"},
                      {"steps", "lambda by bisection in (c, 1/lambda); (u, c) by LP"}};
  m["compact_cost_gradient"] = "prior(x) u(x,a) / lambda_k";
  m["cost_pieces"] = "per-agent fitted utilities";
  m["kl_reading"] = "sum_x prior(x) KL(truth(.|x) || predicted(.|x)), predicted floored at 1e-12";
  return m;
}

Json dataset_to_json(const DecisionDataset& d) {
  Json j;
  j["num_states"] = d.num_states();
  j["num_actions"] = d.num_actions();
  j["prior"] = vector_to_json(d.prior());
  if (!d.labels().empty()) j["labels"] = d.labels();
  Json agents = Json::array();
  for (const auto& a : d.agents()) {
    agents.push_back({{"agent_id", a.agent_id}, {"choice_prob", matrix_to_json(a.choice_prob)}});
  }
  j["agents"] = std::move(agents);
  return j;
}

DecisionDataset dataset_from_json(const Json& j) {
  if (j.is_object() && j.contains("dataset") && j["dataset"].is_object()) {
    return dataset_from_json(j["dataset"]);
  }
  DatasetCandidate c;
  const Json& ns = field(j, "num_states");
  const Json& na = field(j, "num_actions");
  if (!ns.is_number_unsigned() || !na.is_number_unsigned()) {
    parse_fail("num_states and num_actions must be non-negative integers");
  }
  c.num_states = ns.get<std::size_t>();
  c.num_actions = na.get<std::size_t>();
  c.prior = vector_from_json(field(j, "prior"), "prior");
  if (j.contains("labels")) {
    if (!j["labels"].is_array()) parse_fail("labels must be an array");
    for (const Json& l : j["labels"]) c.labels.push_back(text(l, "label"));
  }
  const Json& agents = field(j, "agents");
  if (!agents.is_array()) parse_fail("agents must be an array");
  for (std::size_t k = 0; k < agents.size(); ++k) {
    const Json& a = agents[k];
    std::string id = a.contains("agent_id") ? text(a["agent_id"], "agent_id") : std::to_string(k);
    c.agents.push_back({std::move(id), matrix_from_json(field(a, "choice_prob"), "choice_prob")});
  }
  return validate_dataset(std::move(c));
}

void save_dataset(const fs::path& path, const DecisionDataset& d) {
  write_file_atomic(path, dataset_to_json(d).dump(2) + "\n");
}

DecisionDataset load_dataset(const fs::path& path) {
  return dataset_from_json(parse_json(read_file(path), path.string()));
}

std::vector<AgentRecords> parse_softmax_csv(const std::string& content) {
  const Table t = parse_csv(content);
  if (t.header.size() < 4 || t.header[0] != "agent_id" || t.header[1] != "image_id" ||
      t.header[2] != "true_label") {
    parse_fail("softmax header must be agent_id,image_id,true_label,p0,...");
  }
  const std::size_t width = t.header.size() - 3;
  for (std::size_t a = 0; a < width; ++a) {
    if (t.header[3 + a] != "p" + std::to_string(a)) {
      parse_fail("softmax column " + std::to_string(3 + a) + " must be p" + std::to_string(a));
    }
  }
  std::vector<AgentRecords> groups;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& row : t.rows) {
    SoftmaxRecord r;
    r.image_id = row[1];
    r.true_label = parse_index(row[2], "true_label");
    for (std::size_t a = 0; a < width; ++a) r.softmax.push_back(parse_number(row[3 + a], "probability"));
    auto [it, fresh] = slot.try_emplace(row[0], groups.size());
    if (fresh) groups.push_back({row[0], {}});
    groups[it->second].records.push_back(std::move(r));
  }
  return groups;
}

std::vector<AgentRecords> load_softmax_csv(const fs::path& path) {
  return parse_softmax_csv(read_file(path));
}

std::string softmax_csv(const std::vector<AgentRecords>& groups) {
  Table t;
  t.header = {"agent_id", "image_id", "true_label"};
  const std::size_t width =
      groups.empty() || groups[0].records.empty() ? 0 : groups[0].records[0].softmax.size();
  for (std::size_t a = 0; a < width; ++a) t.header.push_back("p" + std::to_string(a));
  for (const auto& g : groups) {
    for (const auto& r : g.records) {
      if (r.softmax.size() != width) {
        throw Error(ErrorCode::DimensionMismatch, "softmax rows have different widths");
      }
      std::vector<std::string> row{g.agent_id, r.image_id, std::to_string(r.true_label)};
      for (double p : r.softmax) row.push_back(format_double(p));
      t.rows.push_back(std::move(row));
    }
  }
  return to_csv(t);
}

std::string model_of(const Json& j) {
  const std::string m = text(field(j, "model"), "model");
  if (m != "umri" && m != "s-umri") parse_fail("unknown model '" + m + "'");
  return m;
}

Json profile_to_json(const DecisionDataset& d, const UtilityProfile& p,
                     const std::optional<MarginReport>& report, const Json& metadata) {
  Json j;
  j["model"] = "umri";
  j["margin"] = p.margin;
  if (report) {
    j["epsilon_star"] = report->epsilon_star;
    j["robustness"] = report->robustness;
    j["degenerate"] = report->degenerate;
  } else {
    j["robustness"] = robustness(p);
    j["degenerate"] = p.margin <= kDegeneracyTol;
  }
  Json agents = Json::array();
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    agents.push_back({{"agent_id", d.agent(k).agent_id},
                      {"utility", matrix_to_json(p.utilities[k])},
                      {"cost", p.costs[k]}});
  }
  j["agents"] = std::move(agents);
  j["metadata"] = metadata;
  return j;
}

ProfileFile profile_from_json(const Json& j) {
  if (model_of(j) != "umri") parse_fail("expected a umri profile");
  ProfileFile f;
  f.profile.margin = number(field(j, "margin"), "margin");
  const Json& agents = field(j, "agents");
  if (!agents.is_array() || agents.empty()) parse_fail("agents must be a non-empty array");
  for (const Json& a : agents) {
    f.agent_ids.push_back(text(field(a, "agent_id"), "agent_id"));
    f.profile.utilities.push_back(matrix_from_json(field(a, "utility"), "utility"));
    f.profile.costs.push_back(number(field(a, "cost"), "cost"));
  }
  if (j.contains("epsilon_star")) {
    MarginReport r;
    r.epsilon_star = number(j["epsilon_star"], "epsilon_star");
    r.robustness = number(field(j, "robustness"), "robustness");
    r.degenerate = flag(field(j, "degenerate"), "degenerate");
    for (const Matrix& u : f.profile.utilities) r.utility_norms.push_back(u.squaredNorm());
    f.report = r;
  }
  if (j.contains("metadata")) f.metadata = j["metadata"];
  return f;
}

Json shared_solution_to_json(const DecisionDataset& d, const SharedUtilitySolution& s,
                             const std::optional<SbrpFit>& fit, const Json& metadata) {
  Json j;
  j["model"] = "s-umri";
  j["margin"] = s.margin;
  if (fit) {
    j["epsilon_star"] = fit->epsilon_star;
    j["robustness"] = fit->robustness;
    j["degenerate"] = fit->degenerate;
    j["epsilon_history"] = fit->epsilon_history;
    j["step_epsilon"] = fit->step_epsilon;
  } else {
    j["robustness"] = s.margin / s.utility.squaredNorm();
    j["degenerate"] = s.margin <= kDegeneracyTol;
  }
  j["utility"] = matrix_to_json(s.utility);
  Json agents = Json::array();
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    agents.push_back({{"agent_id", d.agent(k).agent_id},
                      {"lambda", s.sensitivities[k]},
                      {"cost", s.costs[k]}});
  }
  j["agents"] = std::move(agents);
  j["metadata"] = metadata;
  return j;
}

SharedSolutionFile shared_solution_from_json(const Json& j) {
  if (model_of(j) != "s-umri") parse_fail("expected an s-umri solution");
  SharedSolutionFile f;
  f.solution.margin = number(field(j, "margin"), "margin");
  f.solution.utility = matrix_from_json(field(j, "utility"), "utility");
  const Json& agents = field(j, "agents");
  if (!agents.is_array() || agents.empty()) parse_fail("agents must be a non-empty array");
  for (const Json& a : agents) {
    f.agent_ids.push_back(text(field(a, "agent_id"), "agent_id"));
    f.solution.sensitivities.push_back(number(field(a, "lambda"), "lambda"));
    f.solution.costs.push_back(number(field(a, "cost"), "cost"));
  }
  if (j.contains("robustness")) f.robustness = number(j["robustness"], "robustness");
  if (j.contains("epsilon_history")) {
    f.epsilon_history = doubles_from_json(j["epsilon_history"], "epsilon_history");
  }
  if (j.contains("metadata")) f.metadata = j["metadata"];
  return f;
}

Json ground_truth_to_json(const GroundTruth& g) {
  Json j;
  j["dataset"] = dataset_to_json(g.dataset);
  Json us = Json::array();
  for (const Matrix& u : g.utilities) us.push_back(matrix_to_json(u));
  j["utilities"] = std::move(us);
  j["costs"] = g.costs;
  j["construction_margin"] = g.construction_margin;
  j["seed"] = g.seed;
  return j;
}

GroundTruth ground_truth_from_json(const Json& j) {
  GroundTruth g{dataset_from_json(field(j, "dataset")), {}, {}, 0.0, 0};
  const Json& us = field(j, "utilities");
  if (!us.is_array()) parse_fail("utilities must be an array");
  for (const Json& u : us) g.utilities.push_back(matrix_from_json(u, "utility"));
  g.costs = doubles_from_json(field(j, "costs"), "costs");
  g.construction_margin = number(field(j, "construction_margin"), "construction_margin");
  const Json& seed = field(j, "seed");
  if (!seed.is_number_unsigned()) parse_fail("seed must be a non-negative integer");
  g.seed = seed.get<std::uint64_t>();
  return g;
}

Json family_to_json(const std::vector<double>& etas, const DecisionDataset& d,
                    const std::optional<NoiseFamilyTruth>& truth) {
  Json j;
  j["etas"] = etas;
  j["dataset"] = dataset_to_json(d);
  if (truth) {
    j["truth"] = {{"prior", vector_to_json(truth->prior)},
                  {"eta_first", truth->eta_first},
                  {"eta_last", truth->eta_last},
                  {"spread_first", truth->spread_first},
                  {"spread_last", truth->spread_last},
                  {"diag_first", vector_to_json(truth->diag_first)},
                  {"diag_last", vector_to_json(truth->diag_last)}};
  }
  return j;
}

FamilyFile family_from_json(const Json& j) {
  FamilyFile f{doubles_from_json(field(j, "etas"), "etas"), dataset_from_json(field(j, "dataset")),
               std::nullopt};
  if (j.contains("truth")) {
    const Json& t = j["truth"];
    NoiseFamilyTruth truth;
    truth.prior = vector_from_json(field(t, "prior"), "truth.prior");
    truth.eta_first = number(field(t, "eta_first"), "eta_first");
    truth.eta_last = number(field(t, "eta_last"), "eta_last");
    truth.spread_first = number(field(t, "spread_first"), "spread_first");
    truth.spread_last = number(field(t, "spread_last"), "spread_last");
    truth.diag_first = vector_from_json(field(t, "diag_first"), "diag_first");
    truth.diag_last = vector_from_json(field(t, "diag_last"), "diag_last");
    f.truth = std::move(truth);
  }
  return f;
}

std::string to_csv(const Table& t) {
  auto emit = [](std::string& out, const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      const std::string& f = row[i];
      if (f.find_first_of(",\"\r\n") == std::string::npos) {
        out += f;
        continue;
      }
      out += '"';
      for (char ch : f) {
        if (ch == '"') out += '"';
        out += ch;
      }
      out += '"';
    }
    out += '\n';
  };
  std::string out;
  emit(out, t.header);
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size()) {
      throw Error(ErrorCode::DimensionMismatch, "CSV row width differs from header");
    }
    emit(out, row);
  }
  return out;
}

// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line
// breaks; CRLF and LF line endings are both accepted.
Table parse_csv(const std::string& content) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string f;
  bool quoted = false;
  bool was_quoted = false;
  bool pending = false;  // a record has started
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char ch = content[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          f += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        f += ch;
      }
      continue;
    }
    switch (ch) {
      case '"':
        if (!f.empty() || was_quoted) parse_fail("stray quote inside a CSV field");
        quoted = was_quoted = pending = true;
        break;
      case ',':
        row.push_back(std::move(f));
        f.clear();
        was_quoted = false;
        pending = true;
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        if (pending || !f.empty()) {
          row.push_back(std::move(f));
          records.push_back(std::move(row));
        }
        row.clear();
        f.clear();
        was_quoted = pending = false;
        break;
      default:
        if (was_quoted) parse_fail("text after a closing quote in a CSV field");
        f += ch;
        pending = true;
    }
  }
  if (quoted) parse_fail("unterminated quoted CSV field");
  if (pending || !f.empty()) {
    row.push_back(std::move(f));
    records.push_back(std::move(row));
  }
  if (records.empty()) parse_fail("empty CSV");
  Table t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      parse_fail("CSV record " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                 " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

Table parse_csv(const std::string& content, const std::vector<std::string>& expected_header) {
  Table t = parse_csv(content);
  if (t.header != expected_header) {
    std::string want;
    for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
    parse_fail("expected CSV header " + want);
  }
  return t;
}

Table robustness_table(const std::vector<RobustnessRow>& rows) {
  Table t{{"dataset", "model", "epsilon", "robustness", "degenerate"}, {}};
  for (const auto& r : rows) {
    t.rows.push_back({r.dataset, r.model, format_double(r.epsilon), format_double(r.robustness),
                      r.degenerate ? "true" : "false"});
  }
  return t;
}

std::vector<RobustnessRow> robustness_rows(const Table& t) {
  if (t.header != std::vector<std::string>{"dataset", "model", "epsilon", "robustness", "degenerate"}) {
    parse_fail("not a robustness table");
  }
  std::vector<RobustnessRow> out;
  for (const auto& row : t.rows) {
    if (row[4] != "true" && row[4] != "false") parse_fail("degenerate must be true or false");
    out.push_back({row[0], row[1], parse_number(row[2], "epsilon"), parse_number(row[3], "robustness"),
                   row[4] == "true"});
  }
  return out;
}

Table cost_table(const std::vector<std::string>& agent_ids, const std::vector<double>& costs) {
  if (agent_ids.size() != costs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one cost per agent required");
  }
  Table t{{"agent_id", "cost"}, {}};
  for (std::size_t k = 0; k < costs.size(); ++k) t.rows.push_back({agent_ids[k], format_double(costs[k])});
  return t;
}

Table utility_table(const std::vector<std::string>& agent_ids, const std::vector<Matrix>& utilities) {
  if (agent_ids.size() != utilities.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one utility per agent id required");
  }
  Table t{{"agent_id", "state", "action", "value"}, {}};
  for (std::size_t k = 0; k < utilities.size(); ++k) {
    const Matrix& u = utilities[k];
    for (Eigen::Index x = 0; x < u.rows(); ++x) {
      for (Eigen::Index a = 0; a < u.cols(); ++a) {
        t.rows.push_back({agent_ids[k], std::to_string(x), std::to_string(a), format_double(u(x, a))});
      }
    }
  }
  return t;
}

Table prediction_table(const std::vector<PredictionOutcome>& outcomes,
                       const std::vector<std::optional<Matrix>>& truths) {
  if (truths.size() != outcomes.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one truth slot per prediction required");
  }
  Table t{{"eta", "class", "predicted_diag", "true_diag", "delta"}, {}};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const PredictionOutcome& o = outcomes[i];
    const Matrix& p = o.predicted_choice;
    const Eigen::Index n = std::min(p.rows(), p.cols());
    for (Eigen::Index x = 0; x < n; ++x) {
      std::vector<std::string> row{format_double(o.eta), std::to_string(x), format_double(p(x, x)), "", ""};
      if (truths[i]) {
        const double truth = (*truths[i])(x, x);
        row[3] = format_double(truth);
        row[4] = format_double(o.score ? o.score->delta(x) : std::abs(p(x, x) - truth));
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Json prediction_summary(const std::vector<PredictionOutcome>& outcomes) {
  Json out = Json::array();
  for (const auto& o : outcomes) {
    Json e;
    e["eta"] = o.eta;
    e["kl"] = o.score ? Json(o.score->kl) : Json(nullptr);
    e["nias_consistent"] = o.nias_consistent;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace umri::io
