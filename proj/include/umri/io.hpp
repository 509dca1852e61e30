#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "umri/brp.hpp"
#include "umri/dataset.hpp"
#include "umri/predict.hpp"
#include "umri/sbrp.hpp"
#include "umri/synth.hpp"

// File formats. Every writer goes through write_file_atomic, and every format
// has a loader that reads back what the writer produced.
namespace umri::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

/// Writes to a sibling temporary file and renames it over `path`.
/// Throws Error{IoFailure}.
void write_file_atomic(const fs::path& path, const std::string& content);
/// Throws Error{IoFailure}.
std::string read_file(const fs::path& path);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

/// Throws Error{ParseError} on malformed JSON, then whatever validation throws.
Json parse_json(const std::string& text, const std::string& origin);

/// Solver tolerances and defaults, embedded in every JSON output.
Json default_metadata();

// ---- datasets ----

Json dataset_to_json(const DecisionDataset& d);
/// Accepts a dataset object, or any object carrying one under "dataset"
/// (ground-truth and family files). Throws Error{ParseError} or the
/// validation errors.
DecisionDataset dataset_from_json(const Json& j);
void save_dataset(const fs::path& path, const DecisionDataset& d);
DecisionDataset load_dataset(const fs::path& path);

/// CSV with header agent_id,image_id,true_label,p0,...; agents keep the order
/// of first appearance. Throws Error{ParseError}.
std::vector<AgentRecords> parse_softmax_csv(const std::string& text);
std::vector<AgentRecords> load_softmax_csv(const fs::path& path);
std::string softmax_csv(const std::vector<AgentRecords>& groups);

// ---- fitted models ----

struct ProfileFile {
  std::vector<std::string> agent_ids;
  UtilityProfile profile;
  std::optional<MarginReport> report;
  Json metadata;
};

struct SharedSolutionFile {
  std::vector<std::string> agent_ids;
  SharedUtilitySolution solution;
  std::optional<double> robustness;
  std::vector<double> epsilon_history;
  Json metadata;
};

Json profile_to_json(const DecisionDataset& d, const UtilityProfile& p,
                     const std::optional<MarginReport>& report, const Json& metadata);
ProfileFile profile_from_json(const Json& j);

Json shared_solution_to_json(const DecisionDataset& d, const SharedUtilitySolution& s,
                             const std::optional<SbrpFit>& fit, const Json& metadata);
SharedSolutionFile shared_solution_from_json(const Json& j);

/// "umri" or "s-umri"; throws Error{ParseError} otherwise.
std::string model_of(const Json& j);

// ---- generators ----

Json ground_truth_to_json(const GroundTruth& g);
GroundTruth ground_truth_from_json(const Json& j);

struct FamilyFile {
  std::vector<double> etas;
  DecisionDataset dataset;
  std::optional<NoiseFamilyTruth> truth;
};

Json family_to_json(const std::vector<double>& etas, const DecisionDataset& d,
                    const std::optional<NoiseFamilyTruth>& truth);
FamilyFile family_from_json(const Json& j);

// ---- CSV tables ----

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// RFC 4180 quoting for fields containing commas, quotes or line breaks.
std::string to_csv(const Table& t);
/// Throws Error{ParseError} on ragged rows or an empty file.
Table parse_csv(const std::string& text);
/// Throws Error{ParseError} unless the header matches exactly.
Table parse_csv(const std::string& text, const std::vector<std::string>& expected_header);

struct RobustnessRow {
  std::string dataset;
  std::string model;
  double epsilon = 0.0;
  double robustness = 0.0;
  bool degenerate = true;
};
Table robustness_table(const std::vector<RobustnessRow>& rows);
std::vector<RobustnessRow> robustness_rows(const Table& t);

/// agent_id,cost
Table cost_table(const std::vector<std::string>& agent_ids, const std::vector<double>& costs);

/// agent_id,state,action,value with 0-based state and action indices.
Table utility_table(const std::vector<std::string>& agent_ids, const std::vector<Matrix>& utilities);

/// eta,class,predicted_diag,true_diag,delta; the last two are empty without
/// ground truth.
Table prediction_table(const std::vector<PredictionOutcome>& outcomes,
                       const std::vector<std::optional<Matrix>>& truths);
/// [{"eta", "kl", "nias_consistent"}]; kl is null without ground truth.
Json prediction_summary(const std::vector<PredictionOutcome>& outcomes);

}  // namespace umri::io
