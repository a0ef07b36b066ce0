#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>

#include "nbed/io.hpp"

extern char** environ;

namespace nbed::cli {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Reads keys of one object, remembering which were consumed so the rest can be
// reported as unknown.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return join(path_, key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  Section sub(const std::string& key) { return Section(raw(key), at(key)); }

  double number(const std::string& key, double def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number");
    return v->get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = raw(key);
    if (!v || v->is_null()) return std::nullopt;
    if (!v->is_number()) throw ConfigError(at(key), "expected a number or null");
    return v->get<double>();
  }

  long long integer(const std::string& key, long long def) {
    const json* v = raw(key);
    if (!v) return def;
    return to_integer(*v, at(key));
  }

  std::size_t count(const std::string& key, std::size_t def) {
    const long long v = integer(key, static_cast<long long>(def));
    if (v < 0) throw ConfigError(at(key), "must be >= 0");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_number()) throw ConfigError(item(key, i), "expected a number");
      out.push_back((*v)[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def) {
    const json* v = raw(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(at(key), "expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const long long x = to_integer((*v)[i], item(key, i));
      if (x < 0) throw ConfigError(item(key, i), "must be >= 0");
      out.push_back(static_cast<std::size_t>(x));
    }
    return out;
  }

  std::string item(const std::string& key, std::size_t i) const { return at(key) + "[" + std::to_string(i) + "]"; }

  void finish() const {
    if (!j_) return;
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }
  }

 private:
  static long long to_integer(const json& v, const std::string& where) {
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<long long>(d);
    }
    throw ConfigError(where, "expected an integer");
  }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

std::size_t state_dim(const DatasetConfig& d) {
  if (d.system == "lorenz63") return 3;
  if (d.system == "linear_complex") return 2;
  if (d.system == "two_mode") return d.pca_components ? d.pca_components : d.grid_points;
  return 0;  // csv: known only after reading
}

DatasetConfig parse_dataset(Section s) {
  DatasetConfig d;
  d.system = s.string("system", d.system);
  require(d.system == "lorenz63" || d.system == "linear_complex" || d.system == "two_mode" || d.system == "csv",
          s.at("system"), "must be one of lorenz63, linear_complex, two_mode, csv");
  d.dt = s.number("dt", d.dt);
  require(d.dt > 0.0, s.at("dt"), "must be > 0");
  d.transient = s.count("transient", d.transient);
  d.train_length = s.count("train_length", d.train_length);
  require(d.train_length >= 3, s.at("train_length"), "must be >= 3");
  d.test_length = s.count("test_length", d.test_length);
  d.initial_state = s.numbers("initial_state", d.initial_state);
  if (d.system == "lorenz63") require(d.initial_state.size() == 3, s.at("initial_state"), "needs 3 values");
  {
    Section l = s.sub("lorenz");
    d.lorenz.sigma = l.number("sigma", d.lorenz.sigma);
    d.lorenz.rho = l.number("rho", d.lorenz.rho);
    d.lorenz.beta = l.number("beta", d.lorenz.beta);
    l.finish();
  }
  {
    Section l = s.sub("linear");
    d.alpha_re = l.number("alpha_re", d.alpha_re);
    d.alpha_im = l.number("alpha_im", d.alpha_im);
    d.z0_re = l.number("z0_re", d.z0_re);
    d.z0_im = l.number("z0_im", d.z0_im);
    l.finish();
  }
  d.grid_points = s.count("grid_points", d.grid_points);
  require(d.grid_points >= 2, s.at("grid_points"), "must be >= 2");
  d.omega = s.number("omega", d.omega);
  d.pca_components = s.count("pca_components", d.pca_components);
  if (d.system == "two_mode")
    require(d.pca_components <= d.grid_points, s.at("pca_components"), "cannot exceed grid_points");
  d.observe = s.counts("observe", d.observe);
  const std::size_t dim = state_dim(d);
  for (std::size_t i = 0; i < d.observe.size(); ++i) {
    if (dim) require(d.observe[i] < dim, s.item("observe", i), "index outside the state dimension " + std::to_string(dim));
  }
  std::vector<std::size_t> sorted = d.observe;
  std::sort(sorted.begin(), sorted.end());
  require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), s.at("observe"), "duplicate index");
  d.noise = s.number("noise", d.noise);
  require(d.noise >= 0.0, s.at("noise"), "must be >= 0");
  d.path = s.string("path", d.path);
  if (d.system == "csv") require(!d.path.empty(), s.at("path"), "required when system is csv");
  s.finish();
  return d;
}

ModelConfig parse_model(Section s, const DatasetConfig& data) {
  ModelConfig m;
  m.latent_dims = s.counts("latent_dims", m.latent_dims);
  require(!m.latent_dims.empty(), s.at("latent_dims"), "must list at least one dimension");
  const std::size_t n = data.observe.empty() ? state_dim(data) : data.observe.size();
  for (std::size_t i = 0; i < m.latent_dims.size(); ++i) {
    require(m.latent_dims[i] >= 1, s.item("latent_dims", i), "must be >= 1");
    if (n) require(m.latent_dims[i] >= n, s.item("latent_dims", i), "must be >= the observed dimension " + std::to_string(n));
  }
  m.quadratic = s.boolean("quadratic", m.quadratic);
  m.layers = s.count("layers", m.layers);
  m.width = s.count("width", m.width);
  require(m.layers == 0 || m.width > 0, s.at("width"), "must be > 0 when layers > 0");

  TrainConfig& t = m.train;
  t.lambda = s.number("lambda", t.lambda);
  require(t.lambda >= 0.0, s.at("lambda"), "must be >= 0");
  const long long epochs = s.integer("epochs", 20000);
  require(epochs >= 1, s.at("epochs"), "must be >= 1");
  t.epochs = static_cast<int>(epochs);
  t.theta_step = s.number("theta_step", t.theta_step);
  require(t.theta_step > 0.0, s.at("theta_step"), "must be > 0");
  t.latent_step = s.number("latent_step", t.latent_step);
  require(t.latent_step > 0.0, s.at("latent_step"), "must be > 0");
  t.beta1 = s.number("beta1", t.beta1);
  require(t.beta1 >= 0.0 && t.beta1 < 1.0, s.at("beta1"), "must be in [0, 1)");
  t.beta2 = s.number("beta2", t.beta2);
  require(t.beta2 >= 0.0 && t.beta2 < 1.0, s.at("beta2"), "must be in [0, 1)");
  t.eps = s.number("eps", t.eps);
  require(t.eps > 0.0, s.at("eps"), "must be > 0");
  t.latent_init_scale = s.number("latent_init_scale", t.latent_init_scale);
  require(t.latent_init_scale >= 0.0, s.at("latent_init_scale"), "must be >= 0");
  t.theta_init_scale = s.number("theta_init_scale", t.theta_init_scale);
  require(t.theta_init_scale >= 0.0, s.at("theta_init_scale"), "must be >= 0");
  t.alternating = s.boolean("alternating", t.alternating);
  t.alternate_period = static_cast<int>(s.integer("alternate_period", t.alternate_period));
  require(t.alternate_period >= 1, s.at("alternate_period"), "must be >= 1");
  t.polish_iterations = static_cast<int>(s.integer("polish_iterations", t.polish_iterations));
  require(t.polish_iterations >= 0, s.at("polish_iterations"), "must be >= 0");
  t.integrator.substeps = static_cast<int>(s.integer("substeps", t.integrator.substeps));
  require(t.integrator.substeps >= 1, s.at("substeps"), "must be >= 1");
  t.divergence_limit = s.number("divergence_limit", t.divergence_limit);
  require(t.divergence_limit > 0.0, s.at("divergence_limit"), "must be > 0");
  m.snapshot_every = static_cast<int>(s.integer("snapshot_every", m.snapshot_every));
  require(m.snapshot_every >= 0, s.at("snapshot_every"), "must be >= 0");
  m.checkpoint_every = static_cast<int>(s.integer("checkpoint_every", m.checkpoint_every));
  require(m.checkpoint_every >= 0, s.at("checkpoint_every"), "must be >= 0");
  m.loss_gate = s.optional_number("loss_gate");
  s.finish();
  return m;
}

InferenceSection parse_inference(Section s) {
  InferenceSection out;
  out.window = s.count("window", out.window);
  require(out.window >= 2, s.at("window"), "must be >= 2");
  auto& c = out.inference;
  const std::string init = s.string("init", "nearest_training");
  require(init == "nearest_training" || init == "random", s.at("init"), "must be nearest_training or random");
  c.init = init == "random" ? InitStrategy::random : InitStrategy::nearest_training;
  c.iterations = static_cast<int>(s.integer("iterations", c.iterations));
  require(c.iterations >= 0, s.at("iterations"), "must be >= 0");
  c.step = s.number("step", c.step);
  require(c.step > 0.0, s.at("step"), "must be > 0");
  c.polish_iterations = static_cast<int>(s.integer("polish_iterations", c.polish_iterations));
  require(c.polish_iterations >= 0, s.at("polish_iterations"), "must be >= 0");
  c.lambda = s.optional_number("lambda");
  if (c.lambda) require(*c.lambda >= 0.0, s.at("lambda"), "must be >= 0");
  s.finish();
  return out;
}

void check_embedding(Section& s, std::size_t tau, std::size_t dim) {
  require(tau >= 1, s.at("tau"), "must be >= 1");
  require(dim >= 1, s.at("dim"), "must be >= 1");
}

BaselinesConfig parse_baselines(Section s) {
  BaselinesConfig b;
  b.nbeddyn = s.boolean("nbeddyn", b.nbeddyn);
  auto list = [&](const std::string& key, auto&& each) {
    const json* v = s.raw(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(s.at(key), "expected an array of objects");
    for (std::size_t i = 0; i < v->size(); ++i) each(Section(&(*v)[i], s.item(key, i)));
  };
  list("analog", [&](Section e) {
    AnalogSpec a;
    a.tau = e.count("tau", a.tau);
    a.dim = e.count("dim", a.dim);
    check_embedding(e, a.tau, a.dim);
    a.k = e.count("k", a.k);
    require(a.k >= 1, e.at("k"), "must be >= 1");
    const std::string r = e.string("regression", "locally_linear");
    require(r == "locally_linear" || r == "locally_constant", e.at("regression"),
            "must be locally_linear or locally_constant");
    a.regression = r == "locally_linear" ? AnalogRegression::locally_linear : AnalogRegression::locally_constant;
    e.finish();
    b.analog.push_back(a);
  });
  list("sparse", [&](Section e) {
    SparseSpec p;
    p.tau = e.count("tau", p.tau);
    p.dim = e.count("dim", p.dim);
    check_embedding(e, p.tau, p.dim);
    p.threshold = e.number("threshold", p.threshold);
    require(p.threshold >= 0.0, e.at("threshold"), "must be >= 0");
    e.finish();
    b.sparse.push_back(p);
  });
  b.max_lag = s.count("max_lag", b.max_lag);
  require(b.max_lag >= 2, s.at("max_lag"), "must be >= 2");
  b.bins = s.count("bins", b.bins);
  require(b.bins >= 2, s.at("bins"), "must be >= 2");
  b.max_dim = s.count("max_dim", b.max_dim);
  require(b.max_dim >= 1, s.at("max_dim"), "must be >= 1");
  s.finish();
  return b;
}

EvaluationConfig parse_evaluation(Section s) {
  EvaluationConfig e;
  e.horizons = s.counts("horizons", e.horizons);
  require(!e.horizons.empty(), s.at("horizons"), "must list at least one horizon");
  for (std::size_t i = 0; i < e.horizons.size(); ++i) {
    require(e.horizons[i] >= 1, s.item("horizons", i), "must be >= 1");
    if (i) require(e.horizons[i] > e.horizons[i - 1], s.item("horizons", i), "horizons must be strictly increasing");
  }
  e.stride = s.count("stride", e.stride);
  require(e.stride >= 1, s.at("stride"), "must be >= 1");
  e.lyapunov_steps = s.count("lyapunov_steps", e.lyapunov_steps);
  e.spectrum_stride = s.count("spectrum_stride", e.spectrum_stride);
  require(e.spectrum_stride >= 1, s.at("spectrum_stride"), "must be >= 1");
  e.spectrum_threshold = s.number("spectrum_threshold", e.spectrum_threshold);
  require(e.spectrum_threshold > 0.0 && e.spectrum_threshold < 1.0, s.at("spectrum_threshold"), "must be in (0, 1)");
  e.overlay_length = s.count("overlay_length", e.overlay_length);
  e.forecast_horizon = s.count("forecast_horizon", e.forecast_horizon);
  require(e.forecast_horizon >= 1, s.at("forecast_horizon"), "must be >= 1");
  s.finish();
  return e;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Architecture ExperimentConfig::architecture(std::size_t latent_dim, std::size_t observed_dim) const {
  Architecture a;
  a.latent_dim = latent_dim;
  a.observed_dim = observed_dim;
  a.quadratic = model.quadratic;
  a.layers = model.layers;
  a.width = model.width;
  return a;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t = model.train;
  t.seed = seed;
  t.integrator.dt = dataset.dt;
  return t;
}

void apply_env_overrides(json& doc, const std::vector<std::string>& env) {
  const std::string prefix = kEnvPrefix;
  for (const auto& entry : env) {
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    const std::string name = entry.substr(0, eq);
    const std::string value = entry.substr(eq + 1);
    std::vector<std::string> keys;
    std::string rest = name.substr(prefix.size());
    for (std::size_t p; (p = rest.find("__")) != std::string::npos; rest = rest.substr(p + 2))
      keys.push_back(lower(rest.substr(0, p)));
    keys.push_back(lower(rest));
    json* node = &doc;
    std::string path;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].empty()) throw ConfigError(name, "malformed override name");
      if (!node->is_object()) throw ConfigError(path, "override " + name + " descends into a non-object");
      path = join(path, keys[i]);
      node = &(*node)[keys[i]];
    }
    json parsed = json::parse(value, nullptr, false);
    *node = parsed.is_discarded() ? json(value) : parsed;
  }
}

std::vector<std::string> process_environment() {
  std::vector<std::string> out;
  for (char** e = environ; e && *e; ++e) out.emplace_back(*e);
  return out;
}

ExperimentConfig parse_config(const json& doc) {
  Section root(&doc, "");
  ExperimentConfig c;
  const json* version = root.raw("schema_version");
  if (!version) throw ConfigError("schema_version", "missing");
  if (!version->is_number_integer() || version->get<long long>() != kConfigSchemaVersion) {
    throw ConfigError("schema_version", "unsupported value " + version->dump() + " (this build reads " +
                                            std::to_string(kConfigSchemaVersion) + ")");
  }
  c.run_name = root.string("run_name", c.run_name);
  require(!c.run_name.empty() && c.run_name.find('/') == std::string::npos && c.run_name != "." && c.run_name != "..",
          "run_name", "must be a plain directory name");
  c.output_dir = root.string("output_dir", c.output_dir);
  const long long seed = root.integer("seed", 0);
  require(seed >= 0, "seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.dataset = parse_dataset(root.sub("dataset"));
  c.model = parse_model(root.sub("model"), c.dataset);
  c.inference = parse_inference(root.sub("inference"));
  c.baselines = parse_baselines(root.sub("baselines"));
  c.evaluation = parse_evaluation(root.sub("evaluation"));
  root.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& env) {
  json doc = json::object();
  if (!path.empty()) {
    doc = json::parse(io::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw ConfigError(path.string(), "malformed JSON");
  } else {
    doc["schema_version"] = kConfigSchemaVersion;
  }
  apply_env_overrides(doc, env);
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  const auto& m = c.model;
  const auto& t = m.train;
  json j;
  j["schema_version"] = c.schema_version;
  j["run_name"] = c.run_name;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  j["dataset"] = {{"system", d.system},
                  {"dt", d.dt},
                  {"transient", d.transient},
                  {"train_length", d.train_length},
                  {"test_length", d.test_length},
                  {"initial_state", d.initial_state},
                  {"lorenz", {{"sigma", d.lorenz.sigma}, {"rho", d.lorenz.rho}, {"beta", d.lorenz.beta}}},
                  {"linear", {{"alpha_re", d.alpha_re}, {"alpha_im", d.alpha_im}, {"z0_re", d.z0_re}, {"z0_im", d.z0_im}}},
                  {"grid_points", d.grid_points},
                  {"omega", d.omega},
                  {"pca_components", d.pca_components},
                  {"observe", d.observe},
                  {"noise", d.noise},
                  {"path", d.path}};
  j["model"] = {{"latent_dims", m.latent_dims},
                {"quadratic", m.quadratic},
                {"layers", m.layers},
                {"width", m.width},
                {"lambda", t.lambda},
                {"epochs", t.epochs},
                {"theta_step", t.theta_step},
                {"latent_step", t.latent_step},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"eps", t.eps},
                {"latent_init_scale", t.latent_init_scale},
                {"theta_init_scale", t.theta_init_scale},
                {"alternating", t.alternating},
                {"alternate_period", t.alternate_period},
                {"polish_iterations", t.polish_iterations},
                {"substeps", t.integrator.substeps},
                {"divergence_limit", t.divergence_limit},
                {"snapshot_every", m.snapshot_every},
                {"checkpoint_every", m.checkpoint_every},
                {"loss_gate", m.loss_gate ? json(*m.loss_gate) : json(nullptr)}};
  const auto& inf = c.inference.inference;
  j["inference"] = {{"window", c.inference.window},
                    {"init", inf.init == InitStrategy::random ? "random" : "nearest_training"},
                    {"iterations", inf.iterations},
                    {"step", inf.step},
                    {"polish_iterations", inf.polish_iterations},
                    {"lambda", inf.lambda ? json(*inf.lambda) : json(nullptr)}};
  json analog = json::array(), sparse = json::array();
  for (const auto& a : c.baselines.analog)
    analog.push_back({{"tau", a.tau},
                      {"dim", a.dim},
                      {"k", a.k},
                      {"regression", a.regression == AnalogRegression::locally_linear ? "locally_linear" : "locally_constant"}});
  for (const auto& s : c.baselines.sparse) sparse.push_back({{"tau", s.tau}, {"dim", s.dim}, {"threshold", s.threshold}});
  j["baselines"] = {{"nbeddyn", c.baselines.nbeddyn}, {"analog", analog},       {"sparse", sparse},
                    {"max_lag", c.baselines.max_lag}, {"bins", c.baselines.bins}, {"max_dim", c.baselines.max_dim}};
  const auto& e = c.evaluation;
  j["evaluation"] = {{"horizons", e.horizons},
                     {"stride", e.stride},
                     {"lyapunov_steps", e.lyapunov_steps},
                     {"spectrum_stride", e.spectrum_stride},
                     {"spectrum_threshold", e.spectrum_threshold},
                     {"overlay_length", e.overlay_length},
                     {"forecast_horizon", e.forecast_horizon}};
  return j;
}

std::string config_digest(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical dump; independent of the standard library's hash.
  // Only what shapes the optimisation trajectory: a resume may change the
  // output location or extend the epoch budget.
  json j = config_to_json(cfg);
  json model = j["model"];
  for (const char* k : {"epochs", "snapshot_every", "checkpoint_every", "loss_gate", "polish_iterations"}) model.erase(k);
  const json keyed = {{"seed", j["seed"]}, {"dataset", j["dataset"]}, {"model", model}};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : keyed.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace nbed::cli
