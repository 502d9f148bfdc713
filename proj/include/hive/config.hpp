#pragma once

// Run configuration. Text form: one `section.key = value` per line, '#'
// starts a comment, later lines override earlier ones. Lists are comma
// separated; 3-axis values are written DxHxW.

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "hive/centerline.hpp"
#include "hive/losses.hpp"
#include "hive/network.hpp"
#include "hive/phantom.hpp"

namespace hive {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct OptimConfig {
  double lr0 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  bool decoupled = false;  // AdamW-style decay instead of L2 in the gradient
  int step_epochs = 15;
  double gamma = 0.9;

  void validate() const;
};

/// lr0 * gamma^floor(epoch / step_epochs)
double lr_at(const OptimConfig& cfg, int epoch);

struct TrainConfig {
  int max_epochs = 250;
  int crops_per_volume = 50;  // iterations per volume per epoch
  int patience = 25;          // epochs without a better monitored JAC
  bool augment = true;
  double data_fraction = 1.0;  // leading share of each training volume's depth
  std::uint64_t seed = 1;
  int val_every = 1;
  /// Stop early once the epoch's training JAC reaches this (0 disables) and,
  /// when the regression loss is active, it has fallen by reg_drop.
  double target_jac = 0.0;
  double target_reg_drop = 0.0;
  /// Hard cap on optimizer steps across all epochs (0 = none).
  long max_iterations = 0;

  void validate() const;
};

struct PredictConfig {
  Axis3 window{0, 0, 0};  // zero -> network crop
  bool tta = false;
  double threshold = 0.5;
};

struct RunConfig {
  NetworkConfig network = NetworkConfig::standard();
  LossConfig loss{};
  ProximityConfig proximity{};
  OptimConfig optim{};
  TrainConfig train{};
  PhantomConfig phantom{};
  PredictConfig predict{};

  void validate() const;
};

/// Applies one setting; throws ConfigError naming the key or value.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// `where` prefixes error messages (file name).
void apply_text(RunConfig& cfg, std::istream& in, const std::string& where = "config");
RunConfig load_config(const std::string& path);

/// Canonical text of the given sections ("network", "loss", ...), readable
/// back through apply_text. Reals print with round-trip precision.
std::string to_text(const RunConfig& cfg, std::initializer_list<const char*> sections);
std::string to_text(const RunConfig& cfg);

Axis3 parse_axis3(const std::string& s);

}  // namespace hive
