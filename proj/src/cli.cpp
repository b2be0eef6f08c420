#include "dgsm/cli.hpp"

#include "dgsm/continual.hpp"
#include "dgsm/io.hpp"
#include "dgsm/metrics.hpp"
#include "dgsm/run_config.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace dgsm {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn:
    case ErrorCode::NonMonotonicFrames:
    case ErrorCode::EmptyFile:
    case ErrorCode::BadRatios:
    case ErrorCode::BadSpec:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::BadLambda:
    case ErrorCode::KTooLarge:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::BadWeight:
    case ErrorCode::CapacityZero:
    case ErrorCode::BadCapacity:
    case ErrorCode::BadDivergence:
    case ErrorCode::UnknownScenario:
    case ErrorCode::MissingArtifacts:
    case ErrorCode::BadConfig:
    case ErrorCode::Io:
      return 2;
    case ErrorCode::InsufficientData:
    case ErrorCode::EmptyBatch:
    case ErrorCode::EmptyConditions:
    case ErrorCode::Empty:
      return 3;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteInput:
      return 4;
    case ErrorCode::AllZeroDivergence:
    case ErrorCode::MissingBaseline:
    case ErrorCode::NoConflict:
      return 1;
  }
  return 1;
}

namespace {

// Every RunConfig key doubles as a --flag on the commands that read it.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> raw;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "flat JSON run config");
    for (const auto& [key, value] : RunConfig::defaults().items()) {
      raw[key];
      app->add_option("--" + key, raw[key], "default " + value.dump());
    }
  }

  RunConfig resolve(const CLI::App* app) const {
    RunConfig cfg = file.empty() ? RunConfig() : RunConfig::from_file(file);
    for (const auto& [key, value] : raw)
      if (app->count("--" + key) > 0) cfg.set(key, value);
    cfg.validate();
    return cfg;
  }
};

Json with_config(Json j, const RunConfig& cfg) {
  j["config"] = cfg.values();
  return j;
}

void print_dataset_summary(std::ostream& out, const ScenarioDataset& d) {
  out << "scenario " << d.scenario_id << " (" << d.name << "): samples=" << d.samples.size() << " train=" << d.train.size()
      << " val=" << d.val.size() << " test=" << d.test.size() << "\n";
}

std::string format_matrix(const Matrix& m, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (Index i = 0; i < m.rows(); ++i) {
    os << names[static_cast<std::size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) os << (j == 0 ? "\t" : " ") << m(i, j);
    os << "\n";
  }
  return os.str();
}

int cmd_ingest(const CLI::App* app, const ConfigFlags& flags, const std::string& csv, const std::string& name, int id,
               const std::string& out_path, const std::string& ttcp_path, std::ostream& out) {
  const auto cfg = flags.resolve(app);
  ParseResult parsed;
  const auto ds = ingest_csv(csv, cfg.window(), cfg.ratios(), cfg.get<std::uint64_t>("split_seed"), id, name, &parsed);
  write_json(out_path, dataset_to_json(ds));
  out << "tracks=" << parsed.tracks.size() << " rows=" << parsed.rows << " rejected=" << parsed.rejected_rows << "\n";
  print_dataset_summary(out, ds);
  if (!ttcp_path.empty()) write_json(ttcp_path, to_json(interaction_density(parsed.tracks)));
  return 0;
}

int cmd_synth(const CLI::App* app, const ConfigFlags& flags, const std::string& family, std::uint64_t seed, Index n_vehicles,
              double noise, double duration, const std::string& name, int id, const std::string& out_path,
              const std::string& csv_path, const std::string& ttcp_path, std::ostream& out) {
  const auto cfg = flags.resolve(app);
  auto spec = default_spec(scenario_family_from_string(family), seed);
  spec.frame_rate = cfg.get<double>("frame_rate");
  if (app->count("--n_vehicles")) spec.n_vehicles = n_vehicles;
  if (app->count("--noise_std")) spec.noise_std = noise;
  if (app->count("--duration")) spec.duration = duration;
  spec.validate();
  const auto tracks = generate_synthetic_tracks(spec);
  auto built = build_samples(tracks, cfg.window(), id);
  auto ds = split_dataset(std::move(built.samples), cfg.ratios(), cfg.get<std::uint64_t>("split_seed"));
  ds.scenario_id = id;
  ds.name = name.empty() ? to_string(spec.family) : name;
  ds.frame_rate = spec.frame_rate;
  write_json(out_path, dataset_to_json(ds));
  if (!csv_path.empty()) write_text(csv_path, tracks_to_csv(tracks, spec.frame_rate));
  out << "tracks=" << tracks.size() << "\n";
  print_dataset_summary(out, ds);
  if (!ttcp_path.empty()) {
    const auto rep = interaction_density(tracks);
    write_json(ttcp_path, to_json(rep));
    out << "conflict pairs=" << rep.pairs.size() << " interaction fraction=" << rep.interaction_fraction << "\n";
  }
  return 0;
}

std::vector<ScenarioDataset> gather_datasets(const RunConfig& cfg, const std::vector<std::string>& paths) {
  if (paths.empty()) return cfg.load_scenarios();
  std::vector<ScenarioDataset> out;
  for (const auto& p : paths) out.push_back(dataset_from_json(read_json(p)));
  return out;
}

int cmd_measure(const CLI::App* app, const ConfigFlags& flags, const std::vector<std::string>& paths,
                const std::string& out_path, std::ostream& out) {
  const auto cfg = flags.resolve(app);
  const auto datasets = gather_datasets(cfg, paths);
  if (datasets.size() < 2) throw Error(ErrorCode::BadConfig, "measure-divergence needs at least two scenarios");
  const auto dcfg = cfg.divergence();
  std::vector<ScenarioDensity> densities;
  for (const auto& d : datasets) {
    const auto train = d.train_samples();
    densities.push_back(fit_scenario_density(d.scenario_id, d.name, train, dcfg));
  }
  const auto report = measure_divergence(densities, dcfg);
  write_json(out_path, with_config(to_json(report), cfg));
  out << "weighted CKLD (row highlighted, w1=" << report.w1 << ")\n" << format_matrix(report.weighted, report.names);
  out << "noise bound " << report.noise_bound << "\n";
  return 0;
}

int cmd_train(const CLI::App* app, const ConfigFlags& flags, std::ostream& out) {
  const auto cfg = flags.resolve(app);
  const auto datasets = cfg.load_scenarios();
  const fs::path dir = cfg.get<std::string>("output");
  const auto mode = cfg.mode();
  const auto run = run_continual(datasets, cfg.continual(), mode);

  fs::create_directories(dir);
  write_json(dir / "config.json", cfg.values());
  const Predictor predictor(cfg.predictor());
  Json phases = Json::array();
  Json evals = Json::array();
  for (std::size_t i = 0; i < run.phases.size(); ++i) {
    const auto& ph = run.phases[i];
    const fs::path sub = "phase_" + std::to_string(i);
    write_json(dir / sub / "checkpoint.json", with_config(checkpoint_to_json(predictor, ph.theta, ph.eval.checkpoint), cfg));
    write_json(dir / sub / "eval.json", with_config(to_json(ph.eval), cfg));
    write_json(dir / sub / "plan.json", with_config(to_json(ph.plan), cfg));
    write_text(dir / sub / "training_log.csv", training_log_csv(ph.history));
    Json ref = Json::object();
    for (const auto& [id, v] : ph.history.reference.reference) ref[std::to_string(id)] = v;
    phases.push_back({{"index", i},
                      {"scenario_ids", ph.scenario_ids},
                      {"name", ph.name},
                      {"dir", sub.string()},
                      {"allocated", ph.plan.total()},
                      {"reference_losses", ref},
                      {"projections", ph.history.projections},
                      {"unconverged_qp", ph.history.unconverged_qp},
                      {"sample_evaluations", ph.history.sample_evaluations},
                      {"warnings", ph.warnings}});
    evals.push_back(to_json(ph.eval));
    out << "phase " << i << " (" << ph.name << "): average ADE " << ph.eval.average_ade << " FDE " << ph.eval.average_fde
        << " allocated " << ph.plan.total() << "\n";
  }
  if (run.divergence) write_json(dir / "divergence.json", with_config(to_json(*run.divergence), cfg));
  if (run.repository) save_repository(*run.repository, dir / "repository", cfg.get<std::uint64_t>("seed"));
  Json summary = {{"mode", to_string(mode)},
                  {"phases", phases},
                  {"evals", evals},
                  {"final", to_json(run.evals.back())},
                  {"forgetting", to_json(run.forgetting)},
                  {"allocated_samples", run.allocated_samples},
                  {"sample_evaluations", run.sample_evaluations},
                  {"has_divergence", run.divergence.has_value()}};
  write_json(dir / "summary.json", with_config(summary, cfg));
  write_json(dir / "manifest.json",
             with_config({{"command", "train"},
                          {"files", {"config.json", "summary.json", "divergence.json", "repository/manifest.json"}},
                          {"phases", run.phases.size()}},
                         cfg));
  return 0;
}

int cmd_evaluate(const CLI::App* app, const ConfigFlags& flags, const std::string& checkpoint,
                 const std::vector<std::string>& paths, const std::string& out_path, std::ostream& out) {
  const auto cfg = flags.resolve(app);
  PredictorConfig pc;
  const auto theta = checkpoint_from_json(read_json(checkpoint), &pc);
  const auto datasets = gather_datasets(cfg, paths);
  std::vector<const ScenarioDataset*> ptrs;
  for (const auto& d : datasets) ptrs.push_back(&d);
  const auto report = evaluate(Predictor(pc), theta, ptrs, "evaluate", fs::path(checkpoint).string());
  for (const auto& s : report.scenarios) out << s.name << ": ADE " << s.ade << " FDE " << s.fde << " (n=" << s.n_test << ")\n";
  out << "average: ADE " << report.average_ade << " FDE " << report.average_fde << "\n";
  if (!out_path.empty()) write_json(out_path, with_config(to_json(report), cfg));
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir, std::ostream& out) {
  if (runs.empty()) throw Error(ErrorCode::MissingArtifacts, "no run directories given");
  struct RunView {
    std::string label;
    std::string mode;
    EvalReport final;
    Json forgetting;
    std::size_t allocated = 0;
    std::size_t evaluations = 0;
  };
  std::vector<RunView> views;
  std::map<std::string, int> mode_uses;
  for (const auto& r : runs) {
    const fs::path dir = r;
    if (!fs::exists(dir / "summary.json")) throw Error(ErrorCode::MissingArtifacts, r + " has no summary.json");
    const auto s = read_json(dir / "summary.json");
    RunView v;
    v.mode = s.at("mode").get<std::string>();
    v.label = v.mode + (mode_uses[v.mode]++ ? "#" + std::to_string(mode_uses[v.mode]) : "");
    v.final = eval_report_from_json(s.at("final"));
    v.forgetting = s.at("forgetting");
    // memory cost recomputed from the stored plans
    for (const auto& ph : s.at("phases")) {
      const auto plan = allocation_plan_from_json(read_json(dir / ph.at("dir").get<std::string>() / "plan.json"));
      v.allocated += plan.total();
    }
    v.evaluations = s.at("sample_evaluations").get<std::size_t>();
    views.push_back(std::move(v));
  }

  std::vector<std::pair<int, std::string>> scenarios;
  for (const auto& v : views)
    for (const auto& s : v.final.scenarios)
      if (std::none_of(scenarios.begin(), scenarios.end(), [&](const auto& p) { return p.first == s.scenario_id; }))
        scenarios.emplace_back(s.scenario_id, s.name);

  std::ostringstream csv;
  csv << std::setprecision(10);
  csv << "scenario";
  for (const auto& v : views) csv << ',' << v.label << "_ade," << v.label << "_fde";
  csv << "\n";
  for (const auto& [id, name] : scenarios) {
    csv << name;
    for (const auto& v : views) {
      const auto* s = v.final.find(id);
      csv << ',';
      if (s) csv << s->ade;
      csv << ',';
      if (s) csv << s->fde;
    }
    csv << "\n";
  }
  csv << "average";
  for (const auto& v : views) csv << ',' << v.final.average_ade << ',' << v.final.average_fde;
  csv << "\n";

  Json columns = Json::array();
  const RunView* gsm = nullptr;
  const RunView* dgsm = nullptr;
  for (const auto& v : views) {
    if (v.mode == "gsm" && !gsm) gsm = &v;
    if (v.mode == "dgsm" && !dgsm) dgsm = &v;
    columns.push_back({{"label", v.label},
                       {"final", to_json(v.final)},
                       {"forgetting", v.forgetting},
                       {"allocated_samples", v.allocated},
                       {"sample_evaluations", v.evaluations}});
  }
  Json report = {{"runs", runs}, {"columns", columns}};
  if (gsm && dgsm && gsm->allocated > 0) {
    report["memory_cost_ratio"] = static_cast<double>(dgsm->allocated) / static_cast<double>(gsm->allocated);
    report["time_cost_ratio"] = static_cast<double>(dgsm->evaluations) / static_cast<double>(gsm->evaluations);
  }
  out << csv.str();
  if (report.contains("memory_cost_ratio"))
    out << "memory cost ratio (dgsm/gsm) " << report["memory_cost_ratio"].get<double>() << ", time cost ratio "
        << report["time_cost_ratio"].get<double>() << "\n";
  if (!out_dir.empty()) {
    write_text(fs::path(out_dir) / "table.csv", csv.str());
    write_json(fs::path(out_dir) / "report.json", report);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"continual trajectory prediction with divergence-scaled episodic memory", "dgsm"};
  app.require_subcommand(1);

  ConfigFlags ingest_flags, synth_flags, measure_flags, train_flags, eval_flags;

  auto* ingest = app.add_subcommand("ingest", "parse a track CSV, window, split and store a dataset file");
  std::string csv, name, out_path, ttcp_path;
  int id = 0;
  ingest->add_option("--csv", csv, "input CSV")->required();
  ingest->add_option("--name", name, "scenario name");
  ingest->add_option("--id", id, "scenario id");
  ingest->add_option("--out", out_path, "dataset JSON to write")->required();
  ingest->add_option("--ttcp", ttcp_path, "also write an interaction-density report");
  ingest_flags.attach(ingest);

  auto* synth = app.add_subcommand("synth", "generate a synthetic scenario dataset");
  std::string family = "straight_flow", synth_csv;
  std::uint64_t synth_seed = 0;
  Index n_vehicles = 40;
  double noise = 0.05, duration = 60.0;
  synth->add_option("--family", family, "straight_flow | merge | roundabout | intersection_stop");
  synth->add_option("--synth_seed", synth_seed, "generator seed");
  synth->add_option("--n_vehicles", n_vehicles);
  synth->add_option("--noise_std", noise);
  synth->add_option("--duration", duration);
  synth->add_option("--name", name);
  synth->add_option("--id", id);
  synth->add_option("--out", out_path, "dataset JSON to write")->required();
  synth->add_option("--csv", synth_csv, "also write the raw tracks as CSV");
  synth->add_option("--ttcp", ttcp_path, "also write an interaction-density report");
  synth_flags.attach(synth);

  auto* measure = app.add_subcommand("measure-divergence", "fit per-scenario MDNs and report weighted CKLD");
  std::vector<std::string> datasets;
  measure->add_option("--dataset", datasets, "dataset JSON files (default: config scenarios)");
  measure->add_option("--out", out_path, "report JSON")->required();
  measure_flags.attach(measure);

  auto* train = app.add_subcommand("train", "run continual training over the configured scenario sequence");
  train_flags.attach(train);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint on dataset test splits");
  std::string checkpoint;
  evaluate_cmd->add_option("--checkpoint", checkpoint)->required();
  evaluate_cmd->add_option("--dataset", datasets);
  evaluate_cmd->add_option("--out", out_path);
  eval_flags.attach(evaluate_cmd);

  auto* report = app.add_subcommand("report", "tabulate one or more run directories");
  std::vector<std::string> runs;
  report->add_option("--run", runs, "run directories")->required();
  report->add_option("--out", out_path, "directory for table.csv and report.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return cmd_ingest(ingest, ingest_flags, csv, name, id, out_path, ttcp_path, out);
    if (*synth)
      return cmd_synth(synth, synth_flags, family, synth_seed, n_vehicles, noise, duration, name, id, out_path, synth_csv,
                       ttcp_path, out);
    if (*measure) return cmd_measure(measure, measure_flags, datasets, out_path, out);
    if (*train) return cmd_train(train, train_flags, out);
    if (*evaluate_cmd) return cmd_evaluate(evaluate_cmd, eval_flags, checkpoint, datasets, out_path, out);
    if (*report) return cmd_report(runs, out_path, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace dgsm
