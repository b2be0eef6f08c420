#include "dgsm/run_config.hpp"

#include "dgsm/error.hpp"

#include <cmath>
#include <sstream>

namespace dgsm {

const Json& RunConfig::defaults() {
  static const Json d = {
      {"scenarios", Json::array()},
      {"mode", "dgsm"},
      {"output", "run"},
      // memory
      {"M", 9000},
      {"M_cl", 3500},
      {"memory_per_task", nullptr},
      {"memory_floor", 10},
      // trainer
      {"lr", 0.001},
      {"epochs", 250},
      {"batch_size", 64},
      {"gamma", 1e-3},
      {"eps_feas", 1e-8},
      {"qp_tol", 1e-8},
      {"qp_max_iter", 10000},
      {"clip_norm", 0.0},
      {"full_memory_batches", false},
      {"resample", true},
      // data windows
      {"frame_rate", 10.0},
      {"t_h", 2.0},
      {"t_f", 4.0},
      {"N", 5},
      {"stride", 1},
      {"train_ratio", 0.7},
      {"val_ratio", 0.1},
      {"test_ratio", 0.2},
      // predictor
      {"normalize", true},
      {"position_scale", 10.0},
      {"encoder_hidden", 32},
      {"embedding", 16},
      {"decoder_hidden", 64},
      // divergence
      {"w1", 0.5},
      {"k", 3},
      {"lambda", 0.9},
      {"downsample", 5},
      {"far_distance", 100.0},
      {"relative_conditions", true},
      {"K", 20},
      {"mdn_hidden", 64},
      {"mdn_epochs", 30},
      {"mdn_lr", 3e-3},
      {"mdn_batch_size", 64},
      {"variance_floor", 1e-2},
      {"min_cases_per_component", 300},
      {"n_mc", 200},
      {"max_conditions", 2000},
      {"log_density_floor", kDefaultLogDensityFloor},
      // seeds
      {"seed", 0},
      {"trainer_seed", 0},
      {"split_seed", 0},
      {"mdn_seed", 0},
      {"divergence_seed", 0},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

namespace {

bool same_kind(const Json& expected, const Json& value) {
  if (expected.is_boolean()) return value.is_boolean();
  if (expected.is_number_integer()) return value.is_number_integer() && (value.is_number_unsigned() || value.get<std::int64_t>() >= 0);
  if (expected.is_number()) return value.is_number();
  if (expected.is_string()) return value.is_string();
  if (expected.is_array()) return value.is_array();
  if (expected.is_null()) return value.is_null() || value.is_number_unsigned() || (value.is_number_integer() && value.get<std::int64_t>() >= 0);
  return false;
}

}  // namespace

void RunConfig::set(const std::string& key, const Json& value) {
  const auto& d = defaults();
  if (!d.contains(key)) throw Error(ErrorCode::BadConfig, "unknown config key '" + key + "'");
  if (!same_kind(d.at(key), value))
    throw Error(ErrorCode::BadConfig, "config key '" + key + "' expects a value like " + d.at(key).dump() + ", got " + value.dump());
  values_[key] = value;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  if (defaults().contains(key) && defaults().at(key).is_string() && !value.is_string()) value = raw;
  set(key, value);
}

RunConfig RunConfig::from_json(const Json& overrides) {
  if (!overrides.is_object()) throw Error(ErrorCode::BadConfig, "config must be a JSON object");
  RunConfig c;
  for (const auto& [k, v] : overrides.items()) c.set(k, v);
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) { return from_json(read_json(path)); }

WindowConfig RunConfig::window() const {
  WindowConfig w;
  w.history_seconds = get<double>("t_h");
  w.future_seconds = get<double>("t_f");
  w.frame_rate = get<double>("frame_rate");
  w.max_neighbors = get<Index>("N");
  w.stride = get<Index>("stride");
  return w;
}

SplitRatios RunConfig::ratios() const {
  return {get<double>("train_ratio"), get<double>("val_ratio"), get<double>("test_ratio")};
}

PredictorConfig RunConfig::predictor() const {
  const auto w = window();
  PredictorConfig p;
  p.history_frames = w.history_frames();
  p.future_frames = w.future_frames();
  p.max_neighbors = w.max_neighbors;
  p.encoder_hidden = get<Index>("encoder_hidden");
  p.embedding = get<Index>("embedding");
  p.decoder_hidden = get<Index>("decoder_hidden");
  p.normalize = get<bool>("normalize");
  p.position_scale = get<double>("position_scale");
  return p;
}

TrainerConfig RunConfig::trainer() const {
  TrainerConfig t;
  t.learning_rate = get<double>("lr");
  t.epochs = get<Index>("epochs");
  t.batch_size = get<Index>("batch_size");
  t.gamma = get<double>("gamma");
  t.eps_feas = get<double>("eps_feas");
  t.qp_tol = get<double>("qp_tol");
  t.qp_max_iter = get<Index>("qp_max_iter");
  t.clip_norm = get<double>("clip_norm");
  t.full_memory_batches = get<bool>("full_memory_batches");
  t.resample = get<bool>("resample");
  t.seed = get<std::uint64_t>("trainer_seed");
  return t;
}

DivergenceConfig RunConfig::divergence() const {
  DivergenceConfig d;
  d.condition.neighbors = get<Index>("N");
  d.condition.eigenvectors = get<Index>("k");
  d.condition.lambda_decay = get<double>("lambda");
  d.condition.downsample = get<Index>("downsample");
  d.condition.far_distance = get<double>("far_distance");
  d.condition.relative = get<bool>("relative_conditions");
  d.mdn.components = get<Index>("K");
  d.mdn.hidden = get<Index>("mdn_hidden");
  d.mdn.epochs = get<Index>("mdn_epochs");
  d.mdn.learning_rate = get<double>("mdn_lr");
  d.mdn.batch_size = get<Index>("mdn_batch_size");
  d.mdn.variance_floor = get<double>("variance_floor");
  d.mdn.min_cases_per_component = get<Index>("min_cases_per_component");
  d.mdn.seed = get<std::uint64_t>("mdn_seed");
  d.n_mc = get<Index>("n_mc");
  d.max_conditions = get<Index>("max_conditions");
  d.w1 = get<double>("w1");
  d.log_density_floor = get<double>("log_density_floor");
  d.seed = get<std::uint64_t>("divergence_seed");
  return d;
}

ContinualConfig RunConfig::continual() const {
  ContinualConfig c;
  c.predictor = predictor();
  c.trainer = trainer();
  c.divergence = divergence();
  c.memory_capacity = get<std::size_t>("M");
  c.memory_budget = get<std::size_t>("M_cl");
  if (!values_.at("memory_per_task").is_null()) c.memory_per_task = get<std::size_t>("memory_per_task");
  c.memory_floor = get<std::size_t>("memory_floor");
  c.seed = get<std::uint64_t>("seed");
  return c;
}

TrainingMode RunConfig::mode() const { return training_mode_from_string(get<std::string>("mode")); }

void RunConfig::validate() const {
  window().validate();
  const auto r = ratios();
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw Error(ErrorCode::BadRatios, "split ratios must be non-negative and sum to 1");
  continual().validate();
  mode();
  if (get<std::size_t>("M_cl") == 0) throw Error(ErrorCode::BadCapacity, "M_cl must be positive");
  for (const auto& s : values_.at("scenarios")) {
    if (s.is_string()) continue;
    if (!s.is_object() || !s.contains("family"))
      throw Error(ErrorCode::BadConfig, "scenario entries are paths or objects with a 'family' field");
    for (const auto& [k, v] : s.items()) {
      static const std::vector<std::string> allowed{"family", "seed", "id", "name", "n_vehicles", "noise_std", "duration"};
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        throw Error(ErrorCode::BadConfig, "unknown synthetic scenario key '" + k + "'");
    }
    scenario_family_from_string(s.at("family").get<std::string>());
  }
}

ScenarioDataset ingest_csv(const std::filesystem::path& csv, const WindowConfig& window, const SplitRatios& ratios,
                           std::uint64_t split_seed, int scenario_id, const std::string& name, ParseResult* parsed) {
  window.validate();
  ParseResult pr;
  try {
    pr = parse_tracks(csv, window.frame_rate);
  } catch (const Error& e) {
    throw Error(e.code(), csv.string() + ": " + e.detail());
  }
  auto built = build_samples(pr.tracks, window, scenario_id);
  auto ds = split_dataset(std::move(built.samples), ratios, split_seed);
  ds.scenario_id = scenario_id;
  ds.name = name.empty() ? csv.stem().string() : name;
  ds.frame_rate = window.frame_rate;
  if (parsed) *parsed = std::move(pr);
  return ds;
}

std::string tracks_to_csv(std::span<const Track> tracks, double frame_rate) {
  std::ostringstream os;
  os.precision(17);
  os << "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy\n";
  for (const auto& t : tracks) {
    for (const auto& p : t.points) {
      os << t.id << ',' << p.frame << ',' << std::llround(static_cast<double>(p.frame) * 1000.0 / frame_rate) << ','
         << to_string(t.agent_type) << ',' << p.x << ',' << p.y << ',';
      if (p.vx) os << *p.vx;
      os << ',';
      if (p.vy) os << *p.vy;
      os << '\n';
    }
  }
  return os.str();
}

std::vector<ScenarioDataset> RunConfig::load_scenarios(const std::filesystem::path& base) const {
  std::vector<ScenarioDataset> out;
  const auto w = window();
  const auto r = ratios();
  const auto split_seed = get<std::uint64_t>("split_seed");
  int position = 0;
  for (const auto& s : values_.at("scenarios")) {
    if (s.is_string()) {
      std::filesystem::path p = s.get<std::string>();
      if (p.is_relative() && !base.empty()) p = base / p;
      if (p.extension() == ".csv") {
        out.push_back(ingest_csv(p, w, r, split_seed, position, p.stem().string()));
      } else {
        out.push_back(dataset_from_json(read_json(p)));
      }
    } else {
      auto spec = default_spec(scenario_family_from_string(s.at("family").get<std::string>()), s.value("seed", std::uint64_t{0}));
      spec.frame_rate = w.frame_rate;
      if (s.contains("n_vehicles")) spec.n_vehicles = s.at("n_vehicles").get<Index>();
      if (s.contains("noise_std")) spec.noise_std = s.at("noise_std").get<double>();
      if (s.contains("duration")) spec.duration = s.at("duration").get<double>();
      spec.validate();
      const int id = s.value("id", position);
      auto built = build_samples(generate_synthetic_tracks(spec), w, id);
      auto ds = split_dataset(std::move(built.samples), r, split_seed);
      ds.scenario_id = id;
      ds.name = s.value("name", to_string(spec.family));
      ds.frame_rate = spec.frame_rate;
      out.push_back(std::move(ds));
    }
    ++position;
  }
  if (out.empty()) throw Error(ErrorCode::BadConfig, "config lists no scenarios");
  const auto expect_h = w.history_frames();
  const auto expect_f = w.future_frames();
  for (const auto& d : out) {
    if (d.samples.empty()) throw Error(ErrorCode::InsufficientData, "scenario " + d.name + " produced no samples");
    if (d.samples.front().history_frames() != expect_h || d.samples.front().future_frames() != expect_f)
      throw Error(ErrorCode::ShapeMismatch, "scenario " + d.name + " was windowed with different t_h / t_f / frame_rate");
  }
  return out;
}

}  // namespace dgsm
