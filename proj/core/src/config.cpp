#include "wcmtl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "wcmtl/errors.hpp"

namespace wcmtl {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

namespace {

constexpr std::pair<SamplerKind, std::string_view> kSamplerNames[] = {
    {SamplerKind::worst_case_bandit, "worst-case-bandit"},
    {SamplerKind::uniform, "uniform"},
    {SamplerKind::size_proportional, "size-proportional"},
    {SamplerKind::sqrt_size, "sqrt-size"},
    {SamplerKind::annealed_mix, "annealed-mix"},
};

// Reads the keys of one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  void finish() const {
    for (const auto& [key, _] : obj_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path_ + key + "'");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, key);
  }

  template <class T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) {
      if (v->is_null())
        out.reset();
      else
        out = convert<T>(*v, key);
    }
  }

  std::string child(const std::string& key) const { return path_ + key + "."; }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config '" + path_ + "': "; }

  template <class T>
  T convert(const json& v, const std::string& key) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + path_ + key + "' has the wrong type");
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_suite(const json& j, SuiteRecipe& s) {
  ObjectReader r(j, "suite.");
  r.read("n_tasks", s.n_tasks);
  r.read("min_train", s.min_train);
  r.read("max_train", s.max_train);
  r.read("n_val", s.n_val);
  r.read("n_test", s.n_test);
  r.read("d_in", s.d_in);
  r.read("d_latent", s.d_latent);
  r.read("alpha", s.alpha);
  r.read("noise", s.noise);
  r.read("margin", s.margin);
  r.read("regression_tasks", s.regression_tasks);
  r.read_optional("scaled_task", s.scaled_task);
  r.read("loss_scale", s.loss_scale);
  r.read_optional("outlier_task", s.outlier_task);
  r.read("class_cycle", s.class_cycle);
  r.finish();
}

PhiSchedule read_phi(const json& j) {
  if (j.is_number()) return PhiSchedule::constant(j.get<double>());
  if (j.is_string()) return phi_from_string(j.get<std::string>());
  ObjectReader r(j, "phi.");
  std::string kind = "constant";
  r.read("kind", kind);
  PhiSchedule phi = kind == "anneal" ? PhiSchedule::anneal() : PhiSchedule::constant(0.5);
  if (kind != "anneal" && kind != "constant") throw ConfigError("phi.kind must be constant or anneal");
  r.read("value", phi.value);
  r.read("start", phi.start);
  r.read("end", phi.end);
  r.read("step", phi.step_per_epoch);
  r.finish();
  return phi;
}

void read_transfer(const json& j, TransferConfig& t) {
  ObjectReader r(j, "transfer.");
  r.read("alpha", t.alpha);
  r.read("n_train", t.n_train);
  r.read("n_val", t.n_val);
  r.read("n_test", t.n_test);
  r.read("fractions", t.fractions);
  r.read("repeats", t.repeats);
  r.read("finetune_epochs", t.finetune_epochs);
  r.read("finetune_lr", t.finetune_lr);
  r.finish();
}

}  // namespace

std::string_view to_string(SamplerKind kind) {
  for (const auto& [k, name] : kSamplerNames)
    if (k == kind) return name;
  return "unknown";
}

SamplerKind sampler_from_string(std::string_view name) {
  for (const auto& [k, n] : kSamplerNames)
    if (n == name) return k;
  throw ConfigError("unknown sampler kind '" + std::string(name) + "'");
}

PhiSchedule phi_from_string(std::string_view text) {
  if (text == "anneal") return PhiSchedule::anneal();
  const std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0' || !(v >= 0.0 && v <= 1.0))
    throw ConfigError("phi must be 'anneal' or a number in [0, 1], got '" + s + "'");
  return PhiSchedule::constant(v);
}

std::string to_string(const PhiSchedule& phi) {
  if (phi.kind == PhiSchedule::Kind::anneal) return "anneal";
  std::ostringstream os;
  os << phi.value;
  return os.str();
}

std::vector<double> ExperimentConfig::v() const {
  if (task_weights.empty()) return std::vector<double>(suite.n_tasks, 1.0);
  return task_weights;
}

void ExperimentConfig::validate() const {
  suite.validate();
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (k() == 0) fail("k must be positive");
  if (capacity == 0) fail("capacity must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (accumulation < 1) fail("accumulation must be >= 1");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (rounds_per_epoch && *rounds_per_epoch == 0) fail("rounds_per_epoch must be positive");
  if (d_hid < suite.d_latent) fail("d_hid must be >= suite.d_latent");
  if (!task_weights.empty()) {
    if (task_weights.size() != suite.n_tasks) fail("task_weights needs one entry per task");
    for (double w : task_weights)
      if (!(w > 0.0)) fail("task_weights must be positive");
  }
  if (phi.kind == PhiSchedule::Kind::constant && !(phi.value >= 0.0 && phi.value <= 1.0))
    fail("phi must lie in [0, 1]");
  if (!(transfer.alpha >= 0.0)) fail("transfer.alpha must be >= 0");
  if (transfer.n_train == 0 || transfer.n_test == 0) fail("transfer split sizes must be positive");
  if (transfer.repeats < 1) fail("transfer.repeats must be >= 1");
  for (double f : transfer.fractions)
    if (!(f > 0.0 && f <= 1.0)) fail("transfer.fractions must lie in (0, 1]");
}

ExperimentConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    ObjectReader r(root, "");
    if (const json* s = r.find("suite")) read_suite(*s, c.suite);
    if (const json* s = r.find("sampler")) {
      if (!s->is_string()) throw ConfigError("config key 'sampler' must be a string");
      c.sampler = sampler_from_string(s->get<std::string>());
    }
    if (const json* p = r.find("phi")) c.phi = read_phi(*p);
    r.read("gamma", c.gamma);
    r.read_optional("k", c.actions_per_round);
    r.read("capacity", c.capacity);
    r.read("batch_size", c.batch_size);
    r.read("accumulation", c.accumulation);
    r.read("learning_rate", c.learning_rate);
    r.read("epochs", c.epochs);
    r.read_optional("rounds_per_epoch", c.rounds_per_epoch);
    r.read("task_weights", c.task_weights);
    r.read("d_hid", c.d_hid);
    if (const json* s = r.find("seeds")) {
      ObjectReader sr(*s, "seeds.");
      sr.read("sampler", c.seeds.sampler);
      sr.read("trainer", c.seeds.trainer);
      sr.read("env", c.seeds.env);
      sr.read("model", c.seeds.model);
      sr.finish();
    }
    if (const json* t = r.find("transfer")) read_transfer(*t, c.transfer);
    r.finish();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered j;
  const auto& s = c.suite;
  j["suite"] = {{"n_tasks", s.n_tasks},
                {"min_train", s.min_train},
                {"max_train", s.max_train},
                {"n_val", s.n_val},
                {"n_test", s.n_test},
                {"d_in", s.d_in},
                {"d_latent", s.d_latent},
                {"alpha", s.alpha},
                {"noise", s.noise},
                {"margin", s.margin},
                {"regression_tasks", s.regression_tasks},
                {"scaled_task", s.scaled_task ? ordered(*s.scaled_task) : ordered(nullptr)},
                {"loss_scale", s.loss_scale},
                {"outlier_task", s.outlier_task ? ordered(*s.outlier_task) : ordered(nullptr)},
                {"class_cycle", s.class_cycle}};
  j["sampler"] = std::string(to_string(c.sampler));
  if (c.phi.kind == PhiSchedule::Kind::anneal)
    j["phi"] = {{"kind", "anneal"}, {"start", c.phi.start}, {"end", c.phi.end}, {"step", c.phi.step_per_epoch}};
  else
    j["phi"] = {{"kind", "constant"}, {"value", c.phi.value}};
  j["gamma"] = c.gamma;
  j["k"] = c.k();
  j["capacity"] = c.capacity;
  j["batch_size"] = c.batch_size;
  j["accumulation"] = c.accumulation;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["rounds_per_epoch"] = c.rounds_per_epoch ? ordered(*c.rounds_per_epoch) : ordered(nullptr);
  j["task_weights"] = c.v();
  j["d_hid"] = c.d_hid;
  j["seeds"] = {{"sampler", c.seeds.sampler}, {"trainer", c.seeds.trainer}, {"env", c.seeds.env},
                {"model", c.seeds.model}};
  const auto& t = c.transfer;
  j["transfer"] = {{"alpha", t.alpha},       {"n_train", t.n_train},
                   {"n_val", t.n_val},       {"n_test", t.n_test},
                   {"fractions", t.fractions}, {"repeats", t.repeats},
                   {"finetune_epochs", t.finetune_epochs}, {"finetune_lr", t.finetune_lr}};
  return j.dump(2) + "\n";
}

}  // namespace wcmtl
