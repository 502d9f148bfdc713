#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>

#include "hive/checkpoint.hpp"
#include "hive/phantom.hpp"

namespace hive {

/// Non-finite loss or gradient during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainData {
  std::vector<Sample> train;
  std::vector<Sample> val;  // empty: training JAC drives early stopping
};

struct EpochLog {
  int epoch = 0;
  long iterations = 0;  // cumulative optimizer steps
  double lr = 0.0;
  double l_seg = 0.0, l_reg = 0.0, l_total = 0.0;  // epoch means
  bool reg_active = false;
  double train_jac = 0.0;
  std::optional<double> val_jac;
};

struct TrainResult {
  Network net;       // final weights
  Network best_net;  // weights at the best monitored JAC
  OptimState optim;
  std::uint64_t rng_state = 0;
  int epochs = 0;
  long iterations = 0;
  double initial_reg = 0.0;  // regression loss of the first step
  double best_jac = -1.0;
  int best_epoch = -1;
  std::string stop_reason;
  std::vector<EpochLog> log;
};

struct TrainHooks {
  std::ostream* csv = nullptr;       // CSV log, written as epochs finish
  std::ostream* progress = nullptr;  // human-readable lines
  std::function<void(const EpochLog&, const TrainResult&)> on_epoch;
};

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const EpochLog& e);

/// Seeded, single-threaded training. Each epoch draws crops_per_volume
/// random crops per training volume (optionally augmented), minimizes
/// lambda * jaccard + (1 - lambda) * mse with Adam, and stops on the target,
/// on patience, on the iteration cap or at max_epochs.
TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainHooks& hooks = {});
/// Continues from a network and optimizer state (epoch numbering restarts
/// at start_epoch).
TrainResult train(const RunConfig& cfg, const TrainData& data, Network net, OptimState optim, Rng rng,
                  int start_epoch, const TrainHooks& hooks = {});

Tensor to_tensor(const Volume<double>& v);
Tensor to_tensor(const Mask& m);
Volume<double> to_volume(const Tensor& t);

/// Pooled JAC of prob >= threshold against the mask.
double jaccard_at(const Volume<double>& prob, const Mask& gt, double threshold = 0.5);

struct Prediction {
  Volume<double> prob;
  std::optional<Volume<double>> prox;
};
using WindowModel = std::function<Prediction(const Volume<double>& window)>;

WindowModel network_model(const Network& net);

/// Window start offsets along one axis: stride steps plus a final window
/// flush with the end. When n < w a single window is centered, starting at
/// -(w - n) / 2; the outside is zero-padded.
std::vector<long> window_offsets(std::size_t n, std::size_t w, std::size_t stride);

/// Uniform average over every window covering a voxel.
Prediction sliding_window(const WindowModel& model, const Volume<double>& image, const Shape3& window,
                          const Shape3& stride);
/// Half-window stride; with tta the volume is also predicted after 1, 2 and
/// 3 quarter turns in H-W, each turned back before averaging.
Prediction predict(const WindowModel& model, const Volume<double>& image, const Shape3& window, bool tta);

/// k quarter turns in the H-W plane, H != W allowed: out(d, h, w) = in(d, H - 1 - w, h).
template <class T>
Volume<T> rotate_hw(const Volume<T>& v, int k);

/// Leading share of the depth, at least min_depth slices.
Sample depth_fraction(const Sample& s, double fraction, std::size_t min_depth);

}  // namespace hive
