#include "umri/cli.hpp"

#include <omp.h>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <optional>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "umri/error.hpp"
#include "umri/io.hpp"

namespace umri::cli {

namespace {

namespace fs = std::filesystem;
using io::Json;

std::shared_ptr<spdlog::logger> logger() {
  static const std::shared_ptr<spdlog::logger> log = [] {
    auto l = std::make_shared<spdlog::logger>("umri", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("umri: %l: %v");
    return l;
  }();
  return log;
}

void configure_logging(int verbosity) {
  auto level = spdlog::level::warn;
  if (const char* env = std::getenv("UMRI_LOG_LEVEL")) {
    const auto parsed = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only accept an explicit "off".
    if (parsed != spdlog::level::off || std::string(env) == "off") level = parsed;
  }
  for (int i = 0; i < verbosity && level > spdlog::level::trace; ++i) {
    level = static_cast<spdlog::level::level_enum>(level - 1);
  }
  logger()->set_level(level);
}

// Writes to `out`, or to standard output when no path was given.
void emit(const std::string& out, const std::string& content) {
  if (out.empty()) {
    std::cout << content << std::flush;
  } else {
    io::write_file_atomic(out, content);
    logger()->info("wrote {}", out);
  }
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

Json metadata_with(const std::string& command, Json extra = Json::object()) {
  Json m = io::default_metadata();
  m["command"] = command;
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  return m;
}

Json load_json(const std::string& path) { return io::parse_json(io::read_file(path), path); }

// Validator for an output path: its directory must exist.
const auto kWritable = CLI::Validator(
    [](std::string& p) -> std::string {
      const fs::path parent = fs::path(p).parent_path();
      if (!parent.empty() && !fs::is_directory(parent)) return "directory " + parent.string() + " does not exist";
      return {};
    },
    "WRITABLE");

const auto kOpenUnit = CLI::Validator(
    [](std::string& v) -> std::string {
      try {
        const double x = std::stod(v);
        if (x > 0.0 && x < 1.0) return {};
      } catch (const std::exception&) {
      }
      return "must lie strictly between 0 and 1";
    },
    "(0,1)");

struct Options {
  int verbosity = 0;
  std::string out;
  std::string softmax;
  std::string dataset;
  std::vector<std::string> datasets;
  std::string model = "umri";
  std::string profile;
  std::vector<std::string> profiles;
  std::string family;
  std::string prediction;
  std::string summary;
  std::string out_dir;
  std::vector<std::string> labels;
  std::optional<std::size_t> states_override;
  double margin_fraction = kDefaultMarginFraction;
  bool fix_sensitivities = false;
  std::string kind = "feasible";
  std::size_t agents = 5;
  std::size_t states = 4;
  std::optional<std::size_t> actions;
  double margin = 0.01;
  std::uint64_t seed = 1;
  std::size_t eta_count = 11;
  std::vector<double> etas;
  bool midpoints = false;
};

// ---- subcommands ----

void do_ingest(const Options& o) {
  const auto groups = io::load_softmax_csv(o.softmax);
  DatasetCandidate c = aggregate_softmax(groups, o.states_override);
  if (!o.labels.empty()) c.labels = o.labels;
  const DecisionDataset d = validate_dataset(std::move(c));
  logger()->info("ingested {} agents, {} states, {} actions", d.num_agents(), d.num_states(), d.num_actions());
  emit(o.out, dump(io::dataset_to_json(d)));
}

void do_test(const Options& o) {
  const DecisionDataset d = io::load_dataset(o.dataset);
  if (o.model == "umri") {
    const BrpFit fit = brp_max_margin(d);
    logger()->info("epsilon* = {} after {} cut rounds", fit.report.epsilon_star, fit.cut_rounds);
    emit(o.out, dump(io::profile_to_json(d, fit.profile, fit.report, metadata_with("test"))));
  } else {
    SbrpOptions so;
    so.fix_sensitivities = o.fix_sensitivities;
    const SbrpFit fit = sbrp_max_margin(d, so);
    logger()->info("epsilon* = {} after {} rounds", fit.epsilon_star, fit.rounds);
    emit(o.out, dump(io::shared_solution_to_json(
                    d, fit.solution, fit,
                    metadata_with("test", {{"fix_sensitivities", o.fix_sensitivities}}))));
  }
}

void do_robustness(const Options& o) {
  std::vector<std::string> models;
  if (o.model == "both" || o.model == "umri") models.push_back("umri");
  if (o.model == "both" || o.model == "s-umri") models.push_back("s-umri");

  // Load everything up front so bad inputs fail before any solving.
  std::vector<DecisionDataset> data;
  for (const auto& p : o.datasets) data.push_back(io::load_dataset(p));

  const std::size_t jobs = data.size() * models.size();
  std::vector<io::RobustnessRow> rows(jobs);
  std::vector<std::exception_ptr> failures(jobs);
  const bool fan_out = jobs > 1 && omp_get_max_threads() > 1;
  const auto exec = fan_out ? kernels::Execution::Serial : kernels::Execution::Parallel;
#pragma omp parallel for schedule(dynamic) if (fan_out)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t i = job / models.size();
    const std::string& model = models[job % models.size()];
    try {
      io::RobustnessRow r{o.datasets[i], model, 0.0, 0.0, true};
      if (model == "umri") {
        BrpOptions bo;
        bo.execution = exec;
        const BrpFit fit = brp_max_margin(data[i], bo);
        r.epsilon = fit.report.epsilon_star;
        r.robustness = fit.report.robustness;
        r.degenerate = fit.report.degenerate;
      } else {
        SbrpOptions so;
        so.execution = exec;
        const SbrpFit fit = sbrp_max_margin(data[i], so);
        r.epsilon = fit.epsilon_star;
        r.robustness = fit.robustness;
        r.degenerate = fit.degenerate;
      }
      rows[job] = std::move(r);
    } catch (...) {
      failures[job] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  emit(o.out, io::to_csv(io::robustness_table(rows)));
}

void do_sparse(const Options& o) {
  const DecisionDataset d = io::load_dataset(o.dataset);
  const Json meta = metadata_with("sparse", {{"margin_fraction", o.margin_fraction}});
  if (o.model == "umri") {
    const BrpFit fit = brp_max_margin(d);
    const UtilityProfile p = brp_sparsest(d, fit, o.margin_fraction);
    emit(o.out, dump(io::profile_to_json(d, p, std::nullopt, meta)));
  } else {
    const SbrpFit fit = sbrp_max_margin(d);
    const SharedUtilitySolution s = sbrp_sparsest(d, fit, o.margin_fraction);
    emit(o.out, dump(io::shared_solution_to_json(d, s, std::nullopt, meta)));
  }
}

// Re-validates a loaded model against its dataset and returns the agent ids,
// per-agent utilities and costs.
struct LoadedModel {
  std::string model;
  std::vector<std::string> agent_ids;
  std::vector<Matrix> utilities;
  std::vector<double> costs;
  double margin = 0.0;
  double robustness = 0.0;
  PiecewiseAffineCost cost;
};

LoadedModel load_model(const DecisionDataset& d, const std::string& path) {
  const Json j = load_json(path);
  LoadedModel m;
  m.model = io::model_of(j);
  if (m.model == "umri") {
    io::ProfileFile f = io::profile_from_json(j);
    const UtilityProfile p = make_profile(d, f.profile.utilities, f.profile.costs);
    m.agent_ids = std::move(f.agent_ids);
    m.utilities = p.utilities;
    m.costs = p.costs;
    m.margin = p.margin;
    m.robustness = robustness(p);
    m.cost = reconstruct_cost(d, p);
  } else {
    io::SharedSolutionFile f = io::shared_solution_from_json(j);
    const SharedUtilitySolution s =
        make_shared_solution(d, f.solution.utility, f.solution.sensitivities, f.solution.costs);
    m.agent_ids = std::move(f.agent_ids);
    m.utilities = {s.utility};
    m.costs = s.costs;
    m.margin = s.margin;
    m.robustness = s.margin / s.utility.squaredNorm();
    m.cost = reconstruct_cost_compact(d, s);
  }
  if (m.agent_ids.size() != d.num_agents()) {
    throw Error(ErrorCode::ProfileMismatch, path + " describes " + std::to_string(m.agent_ids.size()) +
                                                " agents, dataset has " + std::to_string(d.num_agents()));
  }
  return m;
}

void do_cost(const Options& o) {
  const DecisionDataset d = io::load_dataset(o.dataset);
  const LoadedModel m = load_model(d, o.profile);
  for (std::size_t k = 0; k < d.num_agents(); ++k) {
    logger()->debug("C(p_{}) = {} against c = {}", k, m.cost.evaluate(d.choice(k)), m.costs[k]);
  }
  emit(o.out, io::to_csv(io::cost_table(m.agent_ids, m.costs)));
}

GroundTruth constant_truth(DatasetCandidate c, std::uint64_t seed) {
  GroundTruth g{validate_dataset(std::move(c)), {}, {}, 0.0, seed};
  for (std::size_t k = 0; k < g.dataset.num_agents(); ++k) {
    g.utilities.push_back(Matrix::Ones(static_cast<Eigen::Index>(g.dataset.num_states()),
                                       static_cast<Eigen::Index>(g.dataset.num_actions())));
    g.costs.push_back(0.05);
  }
  return g;
}

void do_synth(const Options& o) {
  const std::size_t actions = o.actions.value_or(o.states);
  if (o.kind == "family") {
    const std::vector<double> etas = default_etas(o.eta_count);
    const NoiseFamilyTruth truth = make_noise_family_truth(o.states, etas.front(), etas.back(), o.seed);
    const DecisionDataset d = sample_noise_family(truth, etas);
    emit(o.out, dump(io::family_to_json(etas, d, truth)));
    return;
  }
  GroundTruth g = [&] {
    if (o.kind == "feasible") return generate_feasible_dataset(o.agents, o.states, actions, o.margin, o.seed);
    if (o.kind == "boundary") return generate_boundary_dataset(o.agents, o.states, actions, o.seed);
    DatasetCandidate c;
    c.num_states = o.states;
    c.num_actions = actions;
    c.prior = Vector::Constant(static_cast<Eigen::Index>(o.states), 1.0 / static_cast<double>(o.states));
    Rng rng(o.seed);
    const Matrix shared = random_stochastic(o.states, actions, rng);
    for (std::size_t k = 0; k < o.agents; ++k) {
      Matrix p = o.kind == "uniform"
                     ? Matrix::Constant(static_cast<Eigen::Index>(o.states), static_cast<Eigen::Index>(actions),
                                        1.0 / static_cast<double>(actions))
                     : shared;
      c.agents.push_back({std::to_string(k), std::move(p)});
    }
    return constant_truth(std::move(c), o.seed);
  }();
  emit(o.out, dump(io::ground_truth_to_json(g)));
}

void do_predict(const Options& o) {
  const io::FamilyFile file = io::family_from_json(load_json(o.family));
  std::vector<double> query = o.etas;
  if (o.midpoints) {
    for (std::size_t g = 0; g + 1 < file.etas.size(); ++g) query.push_back(0.5 * (file.etas[g] + file.etas[g + 1]));
  }
  if (query.empty()) throw CLI::ValidationError("predict", "give --eta or --midpoints");
  // Range errors surface before the expensive fit.
  for (double eta : query) locate(file.etas, eta);

  const NoiseFamily fam = fit_family(file.dataset, file.etas);
  logger()->info("fitted family, epsilon* = {}", fam.epsilon_star);
  std::vector<PredictionOutcome> outcomes;
  std::vector<std::optional<Matrix>> truths;
  for (double eta : query) {
    std::optional<Matrix> truth;
    if (file.truth) truth = file.truth->strategy(eta);
    outcomes.push_back(predict_at(fam, eta, truth));
    truths.push_back(std::move(truth));
    if (!outcomes.back().nias_consistent) {
      logger()->warn("prediction at eta {} is not action-switch consistent", eta);
    }
  }
  emit(o.out, io::to_csv(io::prediction_table(outcomes, truths)));
  if (!o.summary.empty()) emit(o.summary, dump(io::prediction_summary(outcomes)));
}

void do_report(const Options& o) {
  const DecisionDataset d = io::load_dataset(o.dataset);
  std::vector<LoadedModel> models;
  for (const auto& p : o.profiles) models.push_back(load_model(d, p));
  std::optional<io::Table> prediction;
  if (!o.prediction.empty()) {
    prediction = io::parse_csv(io::read_file(o.prediction),
                               {"eta", "class", "predicted_diag", "true_diag", "delta"});
  }
  std::optional<Json> summary;
  if (!o.summary.empty()) summary = load_json(o.summary);

  const fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());

  std::vector<io::RobustnessRow> rows;
  Json inputs = Json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    const LoadedModel& m = models[i];
    const std::string stem = fs::path(o.profiles[i]).stem().string();
    rows.push_back({o.dataset, m.model, m.margin, m.robustness, m.margin <= kDegeneracyTol});
    const std::vector<std::string> ids =
        m.model == "umri" ? m.agent_ids : std::vector<std::string>{"shared"};
    io::write_file_atomic(dir / (stem + ".utilities.csv"), io::to_csv(io::utility_table(ids, m.utilities)));
    io::write_file_atomic(dir / (stem + ".costs.csv"), io::to_csv(io::cost_table(m.agent_ids, m.costs)));
    inputs.push_back({{"profile", o.profiles[i]}, {"model", m.model}, {"tables", stem}});
  }
  io::write_file_atomic(dir / "robustness.csv", io::to_csv(io::robustness_table(rows)));
  if (prediction) io::write_file_atomic(dir / "prediction.csv", io::to_csv(*prediction));
  if (summary) io::write_file_atomic(dir / "prediction_summary.json", dump(*summary));
  Json meta = metadata_with("report", {{"dataset", o.dataset}, {"profiles", inputs}});
  if (!o.prediction.empty()) meta["prediction"] = o.prediction;
  io::write_file_atomic(dir / "metadata.json", dump(meta));
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"umri"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  Options o;
  CLI::App app{"Revealed-preference tests and interpretable models for stochastic classifiers"};
  app.require_subcommand(1, 1);
  app.add_flag("-v,--verbose", o.verbosity, "Raise the log level (repeatable)");
  const std::vector<std::string> kModels{"umri", "s-umri"};

  auto* ingest = app.add_subcommand("ingest", "Aggregate a softmax log into a dataset");
  ingest->add_option("--softmax", o.softmax, "CSV agent_id,image_id,true_label,p0,...")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--states", o.states_override, "Number of classes (default: softmax width)");
  ingest->add_option("--labels", o.labels, "Class names")->delimiter(',');
  ingest->add_option("--out", o.out, "Dataset JSON (default: stdout)")->check(kWritable);

  auto* test = app.add_subcommand("test", "Max-margin feasibility test");
  test->add_option("--dataset", o.dataset, "Dataset, ground-truth or family JSON")
      ->required()
      ->check(CLI::ExistingFile);
  test->add_option("--model", o.model, "umri or s-umri")->check(CLI::IsMember(kModels));
  test->add_flag("--fix-sensitivities", o.fix_sensitivities, "s-umri only: keep lambda = 1");
  test->add_option("--out", o.out, "Profile JSON (default: stdout)")->check(kWritable);

  auto* rob = app.add_subcommand("robustness", "Robustness table over datasets");
  rob->add_option("--dataset", o.datasets, "Dataset JSON (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  rob->add_option("--model", o.model, "umri, s-umri or both")
      ->check(CLI::IsMember({"umri", "s-umri", "both"}));
  rob->add_option("--out", o.out, "CSV (default: stdout)")->check(kWritable);

  auto* sparse = app.add_subcommand("sparse", "Sparsest utilities at a fraction of the max margin");
  sparse->add_option("--dataset", o.dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
  sparse->add_option("--model", o.model, "umri or s-umri")->check(CLI::IsMember(kModels));
  sparse->add_option("--margin-fraction", o.margin_fraction, "Fraction f in (0,1)")->check(kOpenUnit);
  sparse->add_option("--out", o.out, "Profile JSON (default: stdout)")->check(kWritable);

  auto* cost = app.add_subcommand("cost", "Per-agent information costs of a fitted model");
  cost->add_option("--dataset", o.dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
  cost->add_option("--profile", o.profile, "umri or s-umri JSON")->required()->check(CLI::ExistingFile);
  cost->add_option("--out", o.out, "CSV agent_id,cost (default: stdout)")->check(kWritable);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--kind", o.kind, "feasible, boundary, uniform, identical or family")
      ->check(CLI::IsMember({"feasible", "boundary", "uniform", "identical", "family"}));
  synth->add_option("--agents", o.agents, "Number of agents")->check(CLI::Range(2, 1000));
  synth->add_option("--states", o.states, "Number of states")->check(CLI::Range(1, 1000));
  synth->add_option("--actions", o.actions, "Number of actions (default: states)")->check(CLI::Range(1, 1000));
  synth->add_option("--margin", o.margin, "Construction margin")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", o.seed, "Generator seed");
  synth->add_option("--etas", o.eta_count, "family: number of grid points")->check(CLI::Range(2, 1000));
  synth->add_option("--out", o.out, "JSON (default: stdout)")->check(kWritable);

  auto* predict = app.add_subcommand("predict", "Predict choice matrices at new noise levels");
  predict->add_option("--family", o.family, "Family JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--eta", o.etas, "Query noise level (repeatable)");
  predict->add_flag("--midpoints", o.midpoints, "Query every midpoint of the grid");
  predict->add_option("--out", o.out, "CSV eta,class,... (default: stdout)")->check(kWritable);
  predict->add_option("--summary", o.summary, "JSON summary path")->check(kWritable);

  auto* report = app.add_subcommand("report", "Emit report tables from fitted models");
  report->add_option("--dataset", o.dataset, "Dataset JSON")->required()->check(CLI::ExistingFile);
  report->add_option("--profile", o.profiles, "umri or s-umri JSON (repeatable)")
      ->required()
      ->check(CLI::ExistingFile);
  report->add_option("--prediction", o.prediction, "Prediction CSV")->check(CLI::ExistingFile);
  report->add_option("--summary", o.summary, "Prediction summary JSON")->check(CLI::ExistingFile);
  report->add_option("--out-dir", o.out_dir, "Output directory")->required();

  const std::vector<std::pair<CLI::App*, std::function<void(const Options&)>>> handlers{
      {ingest, do_ingest},   {test, do_test},       {rob, do_robustness}, {sparse, do_sparse},
      {cost, do_cost},       {synth, do_synth},     {predict, do_predict}, {report, do_report}};

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    configure_logging(0);
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? kOk : kUsageError;
  }
  configure_logging(o.verbosity);

  try {
    for (const auto& [sub, handler] : handlers) {
      if (sub->parsed()) handler(o);
    }
  } catch (const CLI::Error& e) {
    logger()->error("{}", e.what());
    return kUsageError;
  } catch (const Error& e) {
    logger()->error("{}", e.what());
    return e.code() == ErrorCode::NumericalFailure ? kNumericalFailure : kDomainError;
  } catch (const std::exception& e) {
    logger()->error("{}", e.what());
    return kDomainError;
  }
  return kOk;
}

}  // namespace umri::cli
