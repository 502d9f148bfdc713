#include "hive/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace hive {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double parse_real(const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || !std::isfinite(x)) throw ConfigError("not a finite number: '" + v + "'");
  return x;
}

long long parse_int(const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("not an integer: '" + v + "'");
  return x;
}

std::size_t parse_count(const std::string& v) {
  const long long x = parse_int(v);
  if (x < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

template <std::size_t N>
std::array<std::size_t, N> parse_widths(const std::string& v) {
  auto parts = split(v, ',');
  if (parts.size() != N) throw ConfigError("expected " + std::to_string(N) + " comma-separated widths, got '" + v + "'");
  std::array<std::size_t, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_count(parts[i]);
  return out;
}

std::string real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string axis(const Axis3& a) {
  return std::to_string(a[0]) + "x" + std::to_string(a[1]) + "x" + std::to_string(a[2]);
}

std::string shape(const Shape3& a) {
  return std::to_string(a[0]) + "x" + std::to_string(a[1]) + "x" + std::to_string(a[2]);
}

template <class A>
std::string widths(const A& a) {
  std::string s;
  for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s;
}

std::string spacing(const std::array<double, 3>& s) { return real(s[0]) + "," + real(s[1]) + "," + real(s[2]); }

std::array<double, 3> parse_spacing(const std::string& v) {
  auto parts = split(v, ',');
  if (parts.size() != 3) throw ConfigError("expected three comma-separated spacings, got '" + v + "'");
  std::array<double, 3> s{};
  for (int i = 0; i < 3; ++i) {
    s[i] = parse_real(parts[i]);
    if (s[i] <= 0) throw ConfigError("spacing must be positive, got '" + v + "'");
  }
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;  // empty: write-only (presets)
};

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> k;
    // network
    k["network.preset"] = {[](RunConfig& c, const std::string& v) {
                             if (v == "standard") c.network = NetworkConfig::standard();
                             else if (v == "tiny") c.network = NetworkConfig::tiny();
                             else if (v == "quarter") c.network = NetworkConfig::quarter();
                             else if (v.rfind("reduced:", 0) == 0) {
                               auto w = parse_widths<2>(v.substr(8));
                               c.network = NetworkConfig::reduced(w[0], w[1]);
                             } else
                               throw ConfigError("unknown preset '" + v +
                                                 "' (standard, tiny, quarter, reduced:<stage2>,<stage3>)");
                           },
                           {}};
    k["network.encoder"] = {[](RunConfig& c, const std::string& v) { c.network.encoder = parse_widths<4>(v); },
                            [](const RunConfig& c) { return widths(c.network.encoder); }};
    k["network.seg_decoder"] = {
        [](RunConfig& c, const std::string& v) { c.network.seg_decoder = parse_widths<3>(v); },
        [](const RunConfig& c) { return widths(c.network.seg_decoder); }};
    k["network.det_decoder"] = {
        [](RunConfig& c, const std::string& v) { c.network.det_decoder = parse_widths<3>(v); },
        [](const RunConfig& c) { return widths(c.network.det_decoder); }};
    k["network.pools"] = {[](RunConfig& c, const std::string& v) {
                            auto parts = split(v, ',');
                            if (parts.size() != 3) throw ConfigError("expected three pool windows, got '" + v + "'");
                            for (int i = 0; i < 3; ++i) c.network.pools[i] = parse_axis3(parts[i]);
                          },
                          [](const RunConfig& c) {
                            return axis(c.network.pools[0]) + "," + axis(c.network.pools[1]) + "," +
                                   axis(c.network.pools[2]);
                          }};
    k["network.ablation"] = {[](RunConfig& c, const std::string& v) {
                               if (v.size() != 1) throw ConfigError("ablation variant must be one of A, B, C, D, got '" + v + "'");
                               try {
                                 c.network.hvec = apply_variant(c.network.hvec, v[0]);
                               } catch (const std::invalid_argument& e) {
                                 throw ConfigError(e.what());
                               }
                             },
                             [](const RunConfig& c) { return std::string(1, variant_of(c.network.hvec)); }};
    k["network.focal_factor"] = {
        [](RunConfig& c, const std::string& v) { c.network.hvec.focal_factor = parse_axis3(v); },
        [](const RunConfig& c) { return axis(c.network.hvec.focal_factor); }};
    k["network.multitask"] = {[](RunConfig& c, const std::string& v) { c.network.multitask = parse_bool(v); },
                              [](const RunConfig& c) { return std::string(c.network.multitask ? "true" : "false"); }};
    k["network.crop"] = {[](RunConfig& c, const std::string& v) { c.network.crop = parse_axis3(v); },
                         [](const RunConfig& c) { return axis(c.network.crop); }};
    // loss / proximity
    k["loss.lambda"] = {[](RunConfig& c, const std::string& v) { c.loss.lambda = parse_real(v); },
                        [](const RunConfig& c) { return real(c.loss.lambda); }};
    k["loss.epsilon"] = {[](RunConfig& c, const std::string& v) { c.loss.epsilon = parse_real(v); },
                         [](const RunConfig& c) { return real(c.loss.epsilon); }};
    k["proximity.alpha"] = {[](RunConfig& c, const std::string& v) { c.proximity.alpha = parse_real(v); },
                            [](const RunConfig& c) { return real(c.proximity.alpha); }};
    k["proximity.d_max"] = {[](RunConfig& c, const std::string& v) { c.proximity.d_max = parse_real(v); },
                            [](const RunConfig& c) { return real(c.proximity.d_max); }};
    // optim
    auto optim_real = [&](const char* name, double OptimConfig::*f) {
      k[std::string("optim.") + name] = {[f](RunConfig& c, const std::string& v) { c.optim.*f = parse_real(v); },
                                         [f](const RunConfig& c) { return real(c.optim.*f); }};
    };
    optim_real("lr", &OptimConfig::lr0);
    optim_real("beta1", &OptimConfig::beta1);
    optim_real("beta2", &OptimConfig::beta2);
    optim_real("eps", &OptimConfig::eps);
    optim_real("weight_decay", &OptimConfig::weight_decay);
    optim_real("gamma", &OptimConfig::gamma);
    k["optim.decoupled"] = {[](RunConfig& c, const std::string& v) { c.optim.decoupled = parse_bool(v); },
                            [](const RunConfig& c) { return std::string(c.optim.decoupled ? "true" : "false"); }};
    k["optim.step_epochs"] = {[](RunConfig& c, const std::string& v) { c.optim.step_epochs = int(parse_int(v)); },
                              [](const RunConfig& c) { return std::to_string(c.optim.step_epochs); }};
    // train
    auto train_int = [&](const char* name, int TrainConfig::*f) {
      k[std::string("train.") + name] = {[f](RunConfig& c, const std::string& v) { c.train.*f = int(parse_int(v)); },
                                         [f](const RunConfig& c) { return std::to_string(c.train.*f); }};
    };
    train_int("max_epochs", &TrainConfig::max_epochs);
    train_int("crops_per_volume", &TrainConfig::crops_per_volume);
    train_int("patience", &TrainConfig::patience);
    train_int("val_every", &TrainConfig::val_every);
    k["train.augment"] = {[](RunConfig& c, const std::string& v) { c.train.augment = parse_bool(v); },
                          [](const RunConfig& c) { return std::string(c.train.augment ? "true" : "false"); }};
    k["train.data_fraction"] = {[](RunConfig& c, const std::string& v) { c.train.data_fraction = parse_real(v); },
                                [](const RunConfig& c) { return real(c.train.data_fraction); }};
    k["train.seed"] = {[](RunConfig& c, const std::string& v) { c.train.seed = parse_count(v); },
                       [](const RunConfig& c) { return std::to_string(c.train.seed); }};
    k["train.target_jac"] = {[](RunConfig& c, const std::string& v) { c.train.target_jac = parse_real(v); },
                             [](const RunConfig& c) { return real(c.train.target_jac); }};
    k["train.target_reg_drop"] = {
        [](RunConfig& c, const std::string& v) { c.train.target_reg_drop = parse_real(v); },
        [](const RunConfig& c) { return real(c.train.target_reg_drop); }};
    k["train.max_iterations"] = {
        [](RunConfig& c, const std::string& v) { c.train.max_iterations = long(parse_count(v)); },
        [](const RunConfig& c) { return std::to_string(c.train.max_iterations); }};
    // phantom
    k["phantom.dims"] = {[](RunConfig& c, const std::string& v) {
                           Axis3 a = parse_axis3(v);
                           c.phantom.dims = {std::size_t(a[0]), std::size_t(a[1]), std::size_t(a[2])};
                         },
                         [](const RunConfig& c) { return shape(c.phantom.dims); }};
    auto ph_int = [&](const char* name, int PhantomConfig::*f) {
      k[std::string("phantom.") + name] = {[f](RunConfig& c, const std::string& v) { c.phantom.*f = int(parse_int(v)); },
                                           [f](const RunConfig& c) { return std::to_string(c.phantom.*f); }};
    };
    ph_int("min_instances", &PhantomConfig::min_instances);
    ph_int("max_instances", &PhantomConfig::max_instances);
    ph_int("max_attempts", &PhantomConfig::max_attempts);
    auto ph_real = [&](const char* name, double PhantomConfig::*f) {
      k[std::string("phantom.") + name] = {[f](RunConfig& c, const std::string& v) { c.phantom.*f = parse_real(v); },
                                           [f](const RunConfig& c) { return real(c.phantom.*f); }};
    };
    ph_real("min_radius", &PhantomConfig::min_radius);
    ph_real("max_radius", &PhantomConfig::max_radius);
    ph_real("curvature", &PhantomConfig::curvature);
    ph_real("contrast", &PhantomConfig::contrast);
    ph_real("noise", &PhantomConfig::noise);
    ph_real("clutter", &PhantomConfig::clutter);
    k["phantom.spacing"] = {[](RunConfig& c, const std::string& v) { c.phantom.spacing = parse_spacing(v); },
                            [](const RunConfig& c) { return spacing(c.phantom.spacing); }};
    k["phantom.seed"] = {[](RunConfig& c, const std::string& v) { c.phantom.seed = parse_count(v); },
                         [](const RunConfig& c) { return std::to_string(c.phantom.seed); }};
    // predict
    k["predict.window"] = {[](RunConfig& c, const std::string& v) { c.predict.window = parse_axis3(v); },
                           [](const RunConfig& c) { return axis(c.predict.window); }};
    k["predict.tta"] = {[](RunConfig& c, const std::string& v) { c.predict.tta = parse_bool(v); },
                        [](const RunConfig& c) { return std::string(c.predict.tta ? "true" : "false"); }};
    k["predict.threshold"] = {[](RunConfig& c, const std::string& v) { c.predict.threshold = parse_real(v); },
                              [](const RunConfig& c) { return real(c.predict.threshold); }};
    return k;
  }();
  return table;
}

}  // namespace

Axis3 parse_axis3(const std::string& s) {
  std::string v = s;
  for (auto& ch : v)
    if (ch == 'X') ch = 'x';
  auto parts = split(v, 'x');
  if (parts.size() != 3) throw ConfigError("expected DxHxW, got '" + s + "'");
  Axis3 a{};
  for (int i = 0; i < 3; ++i) {
    const long long x = parse_int(parts[i]);
    if (x < 0 || x > 1 << 20) throw ConfigError("axis value out of range in '" + s + "'");
    a[i] = int(x);
  }
  return a;
}

void OptimConfig::validate() const {
  if (!(lr0 > 0)) throw ConfigError("optim.lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("optim betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("optim.eps must be positive");
  if (weight_decay < 0) throw ConfigError("optim.weight_decay must be non-negative");
  if (step_epochs < 1) throw ConfigError("optim.step_epochs must be >= 1");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("optim.gamma must lie in (0, 1]");
}

double lr_at(const OptimConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("epoch must be non-negative");
  return cfg.lr0 * std::pow(cfg.gamma, epoch / cfg.step_epochs);
}

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  if (crops_per_volume < 1) throw ConfigError("train.crops_per_volume must be >= 1");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (val_every < 1) throw ConfigError("train.val_every must be >= 1");
  if (!(data_fraction > 0 && data_fraction <= 1)) throw ConfigError("train.data_fraction must lie in (0, 1]");
  if (target_jac < 0 || target_jac > 1) throw ConfigError("train.target_jac must lie in [0, 1]");
  if (target_reg_drop < 0) throw ConfigError("train.target_reg_drop must be non-negative");
}

void RunConfig::validate() const {
  try {
    network.validate();
    loss.validate();
    proximity.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  optim.validate();
  train.validate();
  if (!(predict.threshold > 0 && predict.threshold < 1)) throw ConfigError("predict.threshold must lie in (0, 1)");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& k = keys();
  auto it = k.find(key);
  if (it == k.end()) throw ConfigError("unknown configuration key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void apply_text(RunConfig& cfg, std::istream& in, const std::string& where) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string at = where + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(at + "expected 'section.key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_setting(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  RunConfig cfg;
  apply_text(cfg, f, path);
  return cfg;
}

std::string to_text(const RunConfig& cfg, std::initializer_list<const char*> sections) {
  std::string out;
  for (const char* sec : sections) {
    const std::string prefix = std::string(sec) + ".";
    for (const auto& [name, key] : keys()) {
      if (!key.get || name.rfind(prefix, 0) != 0) continue;
      out += name + " = " + key.get(cfg) + "\n";
    }
  }
  return out;
}

std::string to_text(const RunConfig& cfg) {
  return to_text(cfg, {"network", "loss", "proximity", "optim", "train", "phantom", "predict"});
}

}  // namespace hive
