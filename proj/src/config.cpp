#include "act/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "act/errors.hpp"

namespace act {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key, "expected a real number, got '" + v + "'");
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

// Wraps parse helpers that throw std::invalid_argument into ConfigError.
template <typename F>
auto keyed(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key, e.what());
  }
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

void add_backbone_fields(std::vector<Field>& f, const std::string& prefix, BackboneSpec RunConfig::*member) {
  f.push_back({prefix + "_backbone", [=](const RunConfig& c) { return to_string((c.*member).kind); },
               [=](RunConfig& c, const std::string& v) {
                 (c.*member).kind = keyed(prefix + "_backbone", [&] { return parse_backbone_kind(v); });
               }});
  f.push_back({prefix + "_widths", [=](const RunConfig& c) { return join((c.*member).widths); },
               [=](RunConfig& c, const std::string& v) {
                 std::vector<std::int64_t> ws;
                 for (const auto& item : split_list(v)) ws.push_back(parse_int(prefix + "_widths", item));
                 (c.*member).widths = ws;
               }});
  f.push_back({prefix + "_activation", [=](const RunConfig& c) { return to_string((c.*member).activation); },
               [=](RunConfig& c, const std::string& v) {
                 (c.*member).activation = keyed(prefix + "_activation", [&] { return parse_activation(v); });
               }});
  f.push_back({prefix + "_layers_per_block",
               [=](const RunConfig& c) { return std::to_string((c.*member).layers_per_block); },
               [=](RunConfig& c, const std::string& v) {
                 (c.*member).layers_per_block = parse_int(prefix + "_layers_per_block", v);
               }});
  f.push_back({prefix + "_residual_downsampling",
               [=](const RunConfig& c) { return std::string((c.*member).residual_downsampling ? "1" : "0"); },
               [=](RunConfig& c, const std::string& v) {
                 (c.*member).residual_downsampling = parse_bool(prefix + "_residual_downsampling", v);
               }});
  f.push_back({prefix + "_time_embed_dim",
               [=](const RunConfig& c) { return std::to_string((c.*member).time_embed_dim); },
               [=](RunConfig& c, const std::string& v) {
                 (c.*member).time_embed_dim = parse_int(prefix + "_time_embed_dim", v);
               }});
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto real = [&](const std::string& key, auto getter_setter) {
      f.push_back({key, [=](const RunConfig& c) { return fmt_double(getter_setter(const_cast<RunConfig&>(c))); },
                   [=](RunConfig& c, const std::string& v) { getter_setter(c) = parse_double(key, v); }});
    };
    auto integer = [&](const std::string& key, auto getter_setter) {
      f.push_back({key, [=](const RunConfig& c) { return std::to_string(getter_setter(const_cast<RunConfig&>(c))); },
                   [=](RunConfig& c, const std::string& v) { getter_setter(c) = parse_int(key, v); }});
    };
    real("learning_rate", [](RunConfig& c) -> double& { return c.learning_rate; });
    f.push_back({"learning_rate_d",
                 [](const RunConfig& c) { return c.learning_rate_d ? fmt_double(*c.learning_rate_d) : "same"; },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "same") c.learning_rate_d.reset();
                   else c.learning_rate_d = parse_double("learning_rate_d", v);
                 }});
    integer("batch_size", [](RunConfig& c) -> std::int64_t& { return c.batch_size; });
    integer("training_iterations", [](RunConfig& c) -> std::int64_t& { return c.training_iterations; });
    real("mu0", [](RunConfig& c) -> double& { return c.sched.mu0; });
    integer("s0", [](RunConfig& c) -> std::int64_t& { return c.sched.s0; });
    integer("s1", [](RunConfig& c) -> std::int64_t& { return c.sched.s1; });
    real("w_mid", [](RunConfig& c) -> double& { return c.sched.w_mid; });
    real("w", [](RunConfig& c) -> double& { return c.sched.w; });
    integer("I_gp", [](RunConfig& c) -> std::int64_t& { return c.I_gp; });
    real("w_gp", [](RunConfig& c) -> double& { return c.w_gp; });
    real("tau", [](RunConfig& c) -> double& { return c.tau; });
    real("mu_p", [](RunConfig& c) -> double& { return c.mu_p; });
    real("p_r", [](RunConfig& c) -> double& { return c.p_r; });
    real("epsilon", [](RunConfig& c) -> double& { return c.sched.epsilon; });
    real("T", [](RunConfig& c) -> double& { return c.sched.T; });
    real("rho", [](RunConfig& c) -> double& { return c.sched.rho; });

    f.push_back({"lambda",
                 [](const RunConfig& c) { return c.lambda_const ? fmt_double(*c.lambda_const) : "schedule"; },
                 [](RunConfig& c, const std::string& v) {
                   if (v == "schedule") c.lambda_const.reset();
                   else c.lambda_const = parse_double("lambda", v);
                 }});
    f.push_back({"augment", [](const RunConfig& c) { return std::string(c.aug ? "1" : "0"); },
                 [](RunConfig& c, const std::string& v) { c.aug = parse_bool("augment", v); }});
    f.push_back({"aug_ops", [](const RunConfig& c) { return c.aug_ops.empty() ? "default" : join(c.aug_ops); },
                 [](RunConfig& c, const std::string& v) {
                   c.aug_ops = v == "default" ? std::vector<std::string>{} : split_list(v);
                 }});
    f.push_back({"disc_variant", [](const RunConfig& c) { return to_string(c.disc_variant); },
                 [](RunConfig& c, const std::string& v) {
                   c.disc_variant = keyed("disc_variant", [&] { return parse_disc_variant(v); });
                 }});
    f.push_back({"distance", [](const RunConfig& c) { return to_string(c.distance); },
                 [](RunConfig& c, const std::string& v) {
                   c.distance = keyed("distance", [&] { return parse_distance(v); });
                 }});

    f.push_back({"dataset", [](const RunConfig& c) { return to_string(c.data.kind); },
                 [](RunConfig& c, const std::string& v) {
                   c.data.kind = keyed("dataset", [&] { return parse_dataset_kind(v); });
                 }});
    integer("dataset_size", [](RunConfig& c) -> std::int64_t& { return c.data.size; });
    real("dataset_sigma", [](RunConfig& c) -> double& { return c.data.sigma; });
    f.push_back({"dataset_seed", [](const RunConfig& c) { return std::to_string(c.data.seed); },
                 [](RunConfig& c, const std::string& v) {
                   c.data.seed = static_cast<std::uint64_t>(parse_int("dataset_seed", v));
                 }});
    f.push_back({"data_path", [](const RunConfig& c) { return c.data.path.empty() ? "none" : c.data.path; },
                 [](RunConfig& c, const std::string& v) { c.data.path = v == "none" ? "" : v; }});

    add_backbone_fields(f, "gen", &RunConfig::gen);
    add_backbone_fields(f, "disc", &RunConfig::disc);

    f.push_back({"output_dir", [](const RunConfig& c) { return c.output_dir; },
                 [](RunConfig& c, const std::string& v) { c.output_dir = v; }});
    f.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(parse_int("seed", v)); }});
    integer("checkpoint_interval", [](RunConfig& c) -> std::int64_t& { return c.checkpoint_interval; });
    return f;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> ks = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return ks;
}

double RunConfig::lambda_at(std::int64_t n, std::int64_t N) const {
  if (lambda_const) return *lambda_const;
  return adversarial_weight(std::min(n + 1, N - 1), N, sched);
}

void RunConfig::validate() const {
  auto check = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key, what);
  };
  check(learning_rate > 0.0, "learning_rate", "must be positive");
  check(!learning_rate_d || *learning_rate_d > 0.0, "learning_rate_d", "must be positive");
  check(batch_size >= 1, "batch_size", "must be >= 1");
  check(training_iterations >= 1, "training_iterations", "must be >= 1");
  check(I_gp >= 1, "I_gp", "must be >= 1");
  check(w_gp >= 0.0, "w_gp", "must be nonnegative");
  check(p_r >= 0.0 && p_r <= 1.0, "p_r", "must lie in [0, 1]");
  check(mu_p >= 0.0 && mu_p <= 1.0, "mu_p", "must lie in [0, 1]");
  check(!lambda_const || (*lambda_const >= 0.0 && *lambda_const <= 1.0), "lambda", "must lie in [0, 1]");
  check(checkpoint_interval >= 0, "checkpoint_interval", "must be nonnegative");
  check(data.kind != DatasetKind::ImageFolder || !data.path.empty(), "data_path", "image_folder needs data_path");
  check(data.kind == DatasetKind::ImageFolder || data.size >= 1, "dataset_size", "must be >= 1");
  check(data.sigma >= 0.0, "dataset_sigma", "must be nonnegative");
  try {
    sched.validate();
  } catch (const std::exception& e) {
    throw ConfigError("schedule", e.what());
  }
  try {
    if (!aug_ops.empty()) AugPipeline::from_names(aug_ops);
  } catch (const std::exception& e) {
    throw ConfigError("aug_ops", e.what());
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
  return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(key, "unknown config key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(key, "duplicate config key '" + key + "'");
    it->second->set(cfg, value);
  }
  cfg.sched.K = cfg.training_iterations;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << serialize();
}

}  // namespace act
