#include "dgsm/io.hpp"

#include "dgsm/error.hpp"

#include <fstream>
#include <sstream>

namespace dgsm {

namespace {

Json trajectory_json(const Trajectory& t) {
  Json a = Json::array();
  for (Index i = 0; i < t.rows(); ++i) a.push_back({t(i, 0), t(i, 1)});
  return a;
}

Trajectory trajectory_from(const Json& a) {
  Trajectory t(static_cast<Index>(a.size()), 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    t(static_cast<Index>(i), 0) = a[i].at(0).get<double>();
    t(static_cast<Index>(i), 1) = a[i].at(1).get<double>();
  }
  return t;
}

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorCode::BadSpec, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadSpec, std::string("field '") + key + "': " + e.what());
  }
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

Json to_json(const TrajectorySample& s) {
  Json neighbors = Json::array();
  for (const auto& n : s.neighbor_histories) neighbors.push_back(n ? trajectory_json(*n) : Json(nullptr));
  return Json{{"scenario_id", s.scenario_id},
              {"target_track_id", s.target_track_id},
              {"last_observed_frame", s.last_observed_frame},
              {"target_history", trajectory_json(s.target_history)},
              {"neighbor_histories", neighbors},
              {"target_future", trajectory_json(s.target_future)}};
}

TrajectorySample sample_from_json(const Json& j) {
  TrajectorySample s;
  s.scenario_id = field<int>(j, "scenario_id");
  s.target_track_id = field<std::int64_t>(j, "target_track_id");
  s.last_observed_frame = field<std::int64_t>(j, "last_observed_frame");
  s.target_history = trajectory_from(j.at("target_history"));
  s.target_future = trajectory_from(j.at("target_future"));
  for (const auto& n : j.at("neighbor_histories")) {
    if (n.is_null()) s.neighbor_histories.emplace_back(std::nullopt);
    else s.neighbor_histories.emplace_back(trajectory_from(n));
  }
  return s;
}

Json dataset_manifest(const ScenarioDataset& d) {
  const Index h = d.samples.empty() ? 0 : d.samples.front().history_frames();
  const Index f = d.samples.empty() ? 0 : d.samples.front().future_frames();
  return Json{{"scenario_id", d.scenario_id},
              {"name", d.name},
              {"frame_rate", d.frame_rate},
              {"history_frames", h},
              {"future_frames", f},
              {"counts", {{"samples", d.samples.size()}, {"train", d.train.size()}, {"val", d.val.size()}, {"test", d.test.size()}}},
              {"split_seed", d.split_seed},
              {"ratios", {{"train", d.ratios.train}, {"val", d.ratios.val}, {"test", d.ratios.test}}},
              {"split", {{"train", d.train}, {"val", d.val}, {"test", d.test}}}};
}

Json dataset_to_json(const ScenarioDataset& d) {
  Json samples = Json::array();
  for (const auto& s : d.samples) samples.push_back(to_json(s));
  return Json{{"manifest", dataset_manifest(d)}, {"samples", std::move(samples)}};
}

ScenarioDataset dataset_from_json(const Json& j) {
  if (!j.contains("manifest") || !j.contains("samples")) throw Error(ErrorCode::BadSpec, "dataset file needs 'manifest' and 'samples'");
  const auto& m = j.at("manifest");
  ScenarioDataset d;
  d.scenario_id = field<int>(m, "scenario_id");
  d.name = field<std::string>(m, "name");
  d.frame_rate = field<double>(m, "frame_rate");
  d.split_seed = field<std::uint64_t>(m, "split_seed");
  const auto& r = m.at("ratios");
  d.ratios = {field<double>(r, "train"), field<double>(r, "val"), field<double>(r, "test")};
  const auto& sp = m.at("split");
  d.train = field<std::vector<std::size_t>>(sp, "train");
  d.val = field<std::vector<std::size_t>>(sp, "val");
  d.test = field<std::vector<std::size_t>>(sp, "test");
  for (const auto& s : j.at("samples")) d.samples.push_back(sample_from_json(s));
  for (const auto* part : {&d.train, &d.val, &d.test})
    for (auto i : *part)
      if (i >= d.samples.size()) throw Error(ErrorCode::BadSpec, "split index out of range");
  return d;
}

Json to_json(const PredictorConfig& c) {
  return Json{{"history_frames", c.history_frames}, {"future_frames", c.future_frames}, {"max_neighbors", c.max_neighbors},
              {"encoder_hidden", c.encoder_hidden}, {"embedding", c.embedding},         {"decoder_hidden", c.decoder_hidden},
              {"normalize", c.normalize},           {"position_scale", c.position_scale}};
}

PredictorConfig predictor_config_from_json(const Json& j) {
  PredictorConfig c;
  c.history_frames = field<Index>(j, "history_frames");
  c.future_frames = field<Index>(j, "future_frames");
  c.max_neighbors = field<Index>(j, "max_neighbors");
  c.encoder_hidden = field<Index>(j, "encoder_hidden");
  c.embedding = field<Index>(j, "embedding");
  c.decoder_hidden = field<Index>(j, "decoder_hidden");
  c.normalize = field<bool>(j, "normalize");
  c.position_scale = field<double>(j, "position_scale");
  return c;
}

Json checkpoint_to_json(const Predictor& predictor, const ParameterVector& theta, const std::string& id) {
  Json layout = Json::array();
  for (const auto& seg : predictor.layout())
    layout.push_back({{"name", seg.name}, {"offset", seg.offset}, {"rows", seg.rows}, {"cols", seg.cols}});
  return Json{{"format", "dgsm-checkpoint"},
              {"version", 1},
              {"id", id},
              {"predictor", to_json(predictor.config())},
              {"parameter_count", theta.values.size()},
              {"layout", layout},
              {"values", vector_json(theta.values)}};
}

ParameterVector checkpoint_from_json(const Json& j, PredictorConfig* config) {
  if (!j.contains("format") || j.at("format") != "dgsm-checkpoint") throw Error(ErrorCode::BadSpec, "not a checkpoint file");
  if (field<int>(j, "version") != 1) throw Error(ErrorCode::BadSpec, "unsupported checkpoint version");
  const auto pc = predictor_config_from_json(j.at("predictor"));
  if (config) *config = pc;
  ParameterVector theta{vector_from(j.at("values"))};
  const Predictor predictor(pc);
  if (theta.values.size() != predictor.parameter_count() || field<Index>(j, "parameter_count") != theta.values.size())
    throw Error(ErrorCode::ShapeMismatch, "checkpoint values do not match its layout");
  return theta;
}

Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  const auto n = static_cast<Index>(j.size());
  Matrix m(n, n == 0 ? 0 : static_cast<Index>(j[0].size()));
  for (Index i = 0; i < n; ++i) m.row(i) = vector_from(j[static_cast<std::size_t>(i)]).transpose();
  return m;
}

Json to_json(const DivergenceConfig& c) {
  return Json{{"neighbors", c.condition.neighbors},
              {"eigenvectors", c.condition.eigenvectors},
              {"lambda_decay", c.condition.lambda_decay},
              {"downsample", c.condition.downsample},
              {"far_distance", c.condition.far_distance},
              {"relative", c.condition.relative},
              {"components", c.mdn.components},
              {"hidden", c.mdn.hidden},
              {"variance_floor", c.mdn.variance_floor},
              {"mdn_epochs", c.mdn.epochs},
              {"mdn_learning_rate", c.mdn.learning_rate},
              {"mdn_batch_size", c.mdn.batch_size},
              {"min_cases_per_component", c.mdn.min_cases_per_component},
              {"mdn_seed", c.mdn.seed},
              {"n_mc", c.n_mc},
              {"max_conditions", c.max_conditions},
              {"w1", c.w1},
              {"log_density_floor", c.log_density_floor},
              {"seed", c.seed}};
}

namespace {

DivergenceConfig divergence_config_from_json(const Json& j) {
  DivergenceConfig c;
  c.condition.neighbors = field<Index>(j, "neighbors");
  c.condition.eigenvectors = field<Index>(j, "eigenvectors");
  c.condition.lambda_decay = field<double>(j, "lambda_decay");
  c.condition.downsample = field<Index>(j, "downsample");
  c.condition.far_distance = field<double>(j, "far_distance");
  c.condition.relative = field<bool>(j, "relative");
  c.mdn.components = field<Index>(j, "components");
  c.mdn.hidden = field<Index>(j, "hidden");
  c.mdn.variance_floor = field<double>(j, "variance_floor");
  c.mdn.epochs = field<Index>(j, "mdn_epochs");
  c.mdn.learning_rate = field<double>(j, "mdn_learning_rate");
  c.mdn.batch_size = field<Index>(j, "mdn_batch_size");
  c.mdn.min_cases_per_component = field<Index>(j, "min_cases_per_component");
  c.mdn.seed = field<std::uint64_t>(j, "mdn_seed");
  c.n_mc = field<Index>(j, "n_mc");
  c.max_conditions = field<Index>(j, "max_conditions");
  c.w1 = field<double>(j, "w1");
  c.log_density_floor = field<double>(j, "log_density_floor");
  c.seed = field<std::uint64_t>(j, "seed");
  return c;
}

}  // namespace

Json to_json(const DivergenceReport& r) {
  return Json{{"scenario_ids", r.scenario_ids},
              {"names", r.names},
              {"directed", to_json(r.directed)},
              {"std_error", to_json(r.std_error)},
              {"weighted", to_json(r.weighted)},
              {"floored", to_json(r.floored)},
              {"w1", r.w1},
              {"n_mc", r.n_mc},
              {"n_conditions", r.n_conditions},
              {"case_counts", r.case_counts},
              {"imputed_counts", r.imputed_counts},
              {"log_density_floor", r.log_density_floor},
              {"noise_bound", r.noise_bound},
              {"config", to_json(r.config)}};
}

DivergenceReport divergence_report_from_json(const Json& j) {
  DivergenceReport r;
  r.scenario_ids = field<std::vector<int>>(j, "scenario_ids");
  r.names = field<std::vector<std::string>>(j, "names");
  r.directed = matrix_from_json(j.at("directed"));
  r.std_error = matrix_from_json(j.at("std_error"));
  r.weighted = matrix_from_json(j.at("weighted"));
  r.floored = matrix_from_json(j.at("floored"));
  r.w1 = field<double>(j, "w1");
  r.n_mc = field<Index>(j, "n_mc");
  r.n_conditions = field<std::vector<std::size_t>>(j, "n_conditions");
  r.case_counts = field<std::vector<std::size_t>>(j, "case_counts");
  r.imputed_counts = field<std::vector<std::size_t>>(j, "imputed_counts");
  r.log_density_floor = field<double>(j, "log_density_floor");
  r.noise_bound = field<double>(j, "noise_bound");
  r.config = divergence_config_from_json(j.at("config"));
  return r;
}

Json to_json(const AllocationPlan& p) {
  Json counts = Json::object(), divs = Json::object();
  for (const auto& [id, n] : p.counts) counts[std::to_string(id)] = n;
  for (const auto& [id, d] : p.divergences) divs[std::to_string(id)] = d;
  return Json{{"counts", counts},          {"m_max", p.m_max},       {"total", p.total()},
              {"divergences", divs},       {"equal_fallback", p.equal_fallback}, {"warnings", p.warnings}};
}

AllocationPlan allocation_plan_from_json(const Json& j) {
  AllocationPlan p;
  for (const auto& [k, v] : j.at("counts").items()) p.counts[std::stoi(k)] = v.get<std::size_t>();
  for (const auto& [k, v] : j.at("divergences").items()) p.divergences[std::stoi(k)] = v.get<double>();
  p.m_max = field<std::size_t>(j, "m_max");
  p.equal_fallback = field<bool>(j, "equal_fallback");
  p.warnings = field<std::vector<std::string>>(j, "warnings");
  return p;
}

Json to_json(const EvalReport& r) {
  Json rows = Json::array();
  for (const auto& s : r.scenarios)
    rows.push_back({{"scenario_id", s.scenario_id}, {"name", s.name}, {"ade", s.ade}, {"fde", s.fde}, {"n_test", s.n_test}});
  return Json{{"mode", r.mode},
              {"checkpoint", r.checkpoint},
              {"learned", r.learned},
              {"scenarios", rows},
              {"average_ade", r.average_ade},
              {"average_fde", r.average_fde}};
}

EvalReport eval_report_from_json(const Json& j) {
  EvalReport r;
  r.mode = field<std::string>(j, "mode");
  r.checkpoint = field<std::string>(j, "checkpoint");
  r.learned = field<std::size_t>(j, "learned");
  for (const auto& s : j.at("scenarios"))
    r.scenarios.push_back({field<int>(s, "scenario_id"), field<std::string>(s, "name"), field<double>(s, "ade"),
                           field<double>(s, "fde"), field<std::size_t>(s, "n_test")});
  r.average_ade = field<double>(j, "average_ade");
  r.average_fde = field<double>(j, "average_fde");
  return r;
}

Json to_json(const ForgettingReport& r) {
  Json rows = Json::array();
  for (const auto& e : r.entries)
    rows.push_back({{"scenario_id", e.scenario_id},
                    {"then_ade", e.then_ade},
                    {"now_ade", e.now_ade},
                    {"increment", e.increment},
                    {"percent", e.percent},
                    {"then_fde", e.then_fde},
                    {"now_fde", e.now_fde},
                    {"fde_increment", e.fde_increment}});
  return Json{{"entries", rows}};
}

Json to_json(const TtcpReport& r) {
  Json pairs = Json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"track_1", p.track_1},
                     {"track_2", p.track_2},
                     {"conflict_point", {p.conflict_point.x(), p.conflict_point.y()}},
                     {"ttcp_min", p.value},
                     {"window_closed", p.window_closed}});
  return Json{{"pairs", pairs},
              {"bin_edges", r.bin_edges},
              {"histogram", r.histogram},
              {"interacting", r.interacting},
              {"interaction_fraction", r.interaction_fraction}};
}

std::string training_log_csv(const TrainHistory& h) {
  std::vector<int> tasks;
  for (const auto& [id, v] : h.reference.reference) tasks.push_back(id);
  std::ostringstream os;
  os.precision(17);
  os << "step,epoch,loss";
  for (int id : tasks) os << ",task_" << id << "_loss";
  os << ",violations,projection_active,delta_norm\n";
  for (const auto& s : h.steps) {
    os << s.step << ',' << s.epoch << ',' << s.loss;
    for (int id : tasks) {
      auto it = s.task_losses.find(id);
      os << ',';
      if (it != s.task_losses.end()) os << it->second;
    }
    os << ',' << s.violations << ',' << (s.projection_active ? 1 : 0) << ',' << s.projection_delta << '\n';
  }
  return os.str();
}

void save_repository(const ScenarioRepository& repo, const std::filesystem::path& dir, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Json scenarios = Json::array();
  for (int id : repo.scenario_ids()) {
    const auto& b = repo.buffer(id);
    const std::string file = "scenario_" + std::to_string(id) + ".json";
    scenarios.push_back({{"scenario_id", id}, {"file", file}, {"size", b.size()}, {"received", b.received}});
    Json samples = Json::array();
    for (const auto& s : b.samples) samples.push_back(to_json(s));
    write_json(dir / file, Json{{"scenario_id", id}, {"source_ids", b.source_ids}, {"samples", samples}});
  }
  write_json(dir / "manifest.json", Json{{"capacity", repo.capacity()},
                                         {"scenarios_seen", repo.scenarios_seen()},
                                         {"per_scenario_capacity", repo.per_scenario_capacity()},
                                         {"seed", seed},
                                         {"scenarios", scenarios}});
}

ScenarioRepository load_repository(const std::filesystem::path& dir) {
  const auto m = read_json(dir / "manifest.json");
  ScenarioRepository repo(field<std::size_t>(m, "capacity"));
  for (const auto& s : m.at("scenarios")) {
    const auto j = read_json(dir / field<std::string>(s, "file"));
    ScenarioBuffer b;
    b.received = field<std::size_t>(s, "received");
    b.source_ids = field<std::vector<std::size_t>>(j, "source_ids");
    for (const auto& x : j.at("samples")) b.samples.push_back(sample_from_json(x));
    repo.restore(field<int>(s, "scenario_id"), std::move(b));
  }
  return repo;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadSpec, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

}  // namespace dgsm
