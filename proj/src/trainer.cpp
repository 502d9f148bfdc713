#include "hive/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace hive {

Tensor to_tensor(const Volume<double>& v) {
  Tensor t = Tensor::uninitialized({1, 1, v.shape[0], v.shape[1], v.shape[2]});
  std::copy(v.data.begin(), v.data.end(), t.data().begin());
  return t;
}

Tensor to_tensor(const Mask& m) {
  Tensor t = Tensor::uninitialized({1, 1, m.shape[0], m.shape[1], m.shape[2]});
  for (std::size_t i = 0; i < m.data.size(); ++i) t[i] = m.data[i] ? 1.0 : 0.0;
  return t;
}

Volume<double> to_volume(const Tensor& t) {
  if (t.n() != 1 || t.c() != 1) throw ShapeError("expected one single-channel volume, got " + to_string(t.dims()));
  Volume<double> v({t.d(), t.h(), t.w()});
  std::copy(t.data().begin(), t.data().end(), v.data.begin());
  return v;
}

double jaccard_at(const Volume<double>& prob, const Mask& gt, double threshold) {
  require_same_shape(prob, gt, "jaccard_at");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = prob[i] >= threshold, g = gt[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  return uni ? double(inter) / double(uni) : 1.0;
}

void write_csv_header(std::ostream& os) { os << "epoch,iterations,lr,l_seg,l_reg,l_total,train_jac,val_jac\n"; }

void write_csv_row(std::ostream& os, const EpochLog& e) {
  os << std::setprecision(10) << e.epoch << ',' << e.iterations << ',' << e.lr << ',' << e.l_seg << ',';
  if (e.reg_active) os << e.l_reg;
  os << ',' << e.l_total << ',' << e.train_jac << ',';
  if (e.val_jac) os << *e.val_jac;
  os << '\n';
  os.flush();
}

Sample depth_fraction(const Sample& s, double fraction, std::size_t min_depth) {
  if (fraction >= 1.0) return s;
  const std::size_t depth = static_cast<std::size_t>(std::ceil(fraction * double(s.image.shape[0])));
  if (depth < min_depth)
    throw std::invalid_argument("data fraction leaves " + std::to_string(depth) + " slices, fewer than the crop depth " +
                                std::to_string(min_depth));
  return crop(s, {0, 0, 0}, {depth, s.image.shape[1], s.image.shape[2]});
}

namespace {

Shape3 crop_shape(const NetworkConfig& c) {
  return {std::size_t(c.crop[0]), std::size_t(c.crop[1]), std::size_t(c.crop[2])};
}

double monitored_val(const Network& net, const std::vector<Sample>& val, const Shape3& window) {
  std::size_t inter = 0, uni = 0;
  auto model = network_model(net);
  for (const auto& s : val) {
    const Prediction p = predict(model, s.image, window, false);
    for (std::size_t i = 0; i < s.label.data.size(); ++i) {
      const bool a = p.prob[i] >= 0.5, g = s.label[i] != 0;
      inter += a && g;
      uni += a || g;
    }
  }
  return uni ? double(inter) / double(uni) : 1.0;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const TrainData& data, const TrainHooks& hooks) {
  cfg.validate();
  Rng rng(cfg.train.seed);
  Network net = build_network(cfg.network, rng.next());
  return train(cfg, data, std::move(net), OptimState{}, rng, 0, hooks);
}

TrainResult train(const RunConfig& cfg, const TrainData& data, Network net, OptimState optim, Rng rng,
                  int start_epoch, const TrainHooks& hooks) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("no training volumes");
  const Shape3 cs = crop_shape(cfg.network);
  if (cfg.train.augment && cs[1] != cs[2])
    throw std::invalid_argument("augmentation needs a square H-W crop, got " + to_string(cfg.network.crop));

  std::vector<Sample> volumes;
  for (const auto& s : data.train) {
    for (int a = 0; a < 3; ++a)
      if (s.image.shape[a] < cs[a])
        throw std::invalid_argument("training volume " + shape_string(s.image.shape) + " is smaller than the crop " +
                                    to_string(cfg.network.crop));
    volumes.push_back(depth_fraction(s, cfg.train.data_fraction, cs[0]));
  }

  const bool reg_active = cfg.network.multitask && cfg.loss.lambda < 1.0;
  const double lambda = cfg.network.multitask ? cfg.loss.lambda : 1.0;

  TrainResult res;
  res.best_net = net;
  auto params = parameters(net);
  int since_best = 0;
  bool first_step = true;

  for (int epoch = start_epoch; epoch < cfg.train.max_epochs; ++epoch) {
    const double lr = lr_at(cfg.optim, epoch);
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.reg_active = reg_active;
    double sum_seg = 0, sum_reg = 0, sum_total = 0;
    std::size_t inter = 0, uni = 0, steps = 0;
    bool capped = false;

    for (int k = 0; k < cfg.train.crops_per_volume && !capped; ++k) {
      for (const auto& vol : volumes) {
        if (cfg.train.max_iterations > 0 && res.iterations >= cfg.train.max_iterations) {
          capped = true;
          break;
        }
        Sample s = random_crop(vol, cs, rng);
        if (cfg.train.augment) s = random_augment(s, rng);

        NetworkCache cache;
        const NetworkOutput out = forward(net, to_tensor(s.image), &cache);
        const Tensor y = to_tensor(s.label);
        LossValue seg = jaccard_loss(out.prob, y, cfg.loss.epsilon);
        for (double& g : seg.grad.data()) g *= lambda;

        std::optional<LossValue> reg;
        if (reg_active) {
          reg = regression_loss(*out.prox, to_tensor(s.proximity));
          for (double& g : reg->grad.data()) g *= 1.0 - lambda;
        }
        const double total = reg ? total_loss(seg.value, reg->value, cfg.loss) : seg.value;

        net.zero_grad();
        backward(net, seg.grad, reg ? &reg->grad : nullptr, cache);
        const double gn = grad_norm(params);
        if (!std::isfinite(total) || !std::isfinite(gn)) {
          std::ostringstream msg;
          msg << "non-finite training state at epoch " << epoch << " step " << res.iterations << ": loss " << total
              << ", grad norm " << gn << ", lr " << lr;
          throw NumericError(msg.str());
        }
        adam_step(params, optim, cfg.optim, lr);

        if (first_step && reg) res.initial_reg = reg->value;
        first_step = false;
        sum_seg += seg.value;
        if (reg) sum_reg += reg->value;
        sum_total += total;
        for (std::size_t i = 0; i < y.size(); ++i) {
          const bool p = out.prob[i] >= 0.5, g = y[i] != 0.0;
          inter += p && g;
          uni += p || g;
        }
        ++steps;
        ++res.iterations;
      }
    }
    if (steps == 0) {
      res.stop_reason = "iteration cap";
      break;
    }

    log.iterations = res.iterations;
    log.l_seg = sum_seg / double(steps);
    log.l_reg = sum_reg / double(steps);
    log.l_total = sum_total / double(steps);
    log.train_jac = uni ? double(inter) / double(uni) : 1.0;
    const bool last = epoch + 1 == cfg.train.max_epochs;
    if (!data.val.empty() && ((epoch - start_epoch + 1) % cfg.train.val_every == 0 || last))
      log.val_jac = monitored_val(net, data.val, cs);

    res.epochs = epoch + 1;
    res.log.push_back(log);

    const std::optional<double> monitor = data.val.empty() ? std::optional<double>(log.train_jac) : log.val_jac;
    if (monitor) {
      if (*monitor > res.best_jac) {
        res.best_jac = *monitor;
        res.best_epoch = epoch;
        res.best_net = net;
        since_best = 0;
      } else {
        since_best += data.val.empty() ? 1 : cfg.train.val_every;
      }
    }

    res.net = net;
    res.optim = optim;
    res.rng_state = rng.state();
    if (hooks.csv) write_csv_row(*hooks.csv, log);
    if (hooks.progress) {
      *hooks.progress << "epoch " << epoch << " steps " << res.iterations << " lr " << lr << " seg " << log.l_seg;
      if (reg_active) *hooks.progress << " reg " << log.l_reg;
      *hooks.progress << " train_jac " << log.train_jac;
      if (log.val_jac) *hooks.progress << " val_jac " << *log.val_jac;
      *hooks.progress << std::endl;
    }
    if (hooks.on_epoch) hooks.on_epoch(log, res);

    if (cfg.train.target_jac > 0 && log.train_jac >= cfg.train.target_jac &&
        (!reg_active || cfg.train.target_reg_drop <= 0 ||
         log.l_reg * cfg.train.target_reg_drop <= res.initial_reg)) {
      res.stop_reason = "target reached";
      break;
    }
    if (capped) {
      res.stop_reason = "iteration cap";
      break;
    }
    if (since_best >= cfg.train.patience) {
      res.stop_reason = "no improvement for " + std::to_string(since_best) + " epochs";
      break;
    }
  }
  if (res.stop_reason.empty()) res.stop_reason = "epoch limit";
  res.net = std::move(net);
  res.optim = std::move(optim);
  res.rng_state = rng.state();
  return res;
}

WindowModel network_model(const Network& net) {
  return [&net](const Volume<double>& w) {
    const NetworkOutput out = forward(net, to_tensor(w));
    Prediction p{to_volume(out.prob), std::nullopt};
    if (out.prox) p.prox = to_volume(*out.prox);
    return p;
  };
}

std::vector<long> window_offsets(std::size_t n, std::size_t w, std::size_t stride) {
  if (w == 0 || stride == 0) throw std::invalid_argument("window and stride must be positive");
  if (n <= w) return {-static_cast<long>((w - n) / 2)};
  std::vector<long> out;
  for (std::size_t p = 0; p + w < n; p += stride) out.push_back(long(p));
  out.push_back(long(n - w));
  return out;
}

Prediction sliding_window(const WindowModel& model, const Volume<double>& image, const Shape3& window,
                          const Shape3& stride) {
  const Shape3& s = image.shape;
  std::array<std::vector<long>, 3> offs;
  for (int a = 0; a < 3; ++a) offs[a] = window_offsets(s[a], window[a], stride[a]);

  Volume<double> acc(s, 0.0), count(s, 0.0);
  std::optional<Volume<double>> acc_prox;
  Volume<double> patch(window);
  for (long od : offs[0])
    for (long oh : offs[1])
      for (long ow : offs[2]) {
        for (std::size_t d = 0; d < window[0]; ++d)
          for (std::size_t h = 0; h < window[1]; ++h)
            for (std::size_t w = 0; w < window[2]; ++w) {
              const Coord3 c{od + long(d), oh + long(h), ow + long(w)};
              patch(d, h, w) = image.contains(c) ? image(std::size_t(c[0]), std::size_t(c[1]), std::size_t(c[2])) : 0.0;
            }
        const Prediction out = model(patch);
        if (out.prob.shape != window) throw std::invalid_argument("window prediction has shape " + shape_string(out.prob.shape));
        if (out.prox && !acc_prox) acc_prox.emplace(s, 0.0);
        for (std::size_t d = 0; d < window[0]; ++d)
          for (std::size_t h = 0; h < window[1]; ++h)
            for (std::size_t w = 0; w < window[2]; ++w) {
              const Coord3 c{od + long(d), oh + long(h), ow + long(w)};
              if (!image.contains(c)) continue;
              const std::size_t i = image.index(std::size_t(c[0]), std::size_t(c[1]), std::size_t(c[2]));
              acc[i] += out.prob(d, h, w);
              count[i] += 1.0;
              if (out.prox) (*acc_prox)[i] += (*out.prox)(d, h, w);
            }
      }
  for (std::size_t i = 0; i < acc.data.size(); ++i) {
    acc[i] /= count[i];
    if (acc_prox) (*acc_prox)[i] /= count[i];
  }
  return {std::move(acc), std::move(acc_prox)};
}

template <class T>
Volume<T> rotate_hw(const Volume<T>& v, int k) {
  k = ((k % 4) + 4) % 4;
  Volume<T> cur = v;
  for (int t = 0; t < k; ++t) {
    const auto [D, H, W] = cur.shape;
    Volume<T> out({D, W, H});
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t h = 0; h < W; ++h)
        for (std::size_t w = 0; w < H; ++w) out(d, h, w) = cur(d, H - 1 - w, h);
    cur = std::move(out);
  }
  return cur;
}

template Volume<double> rotate_hw(const Volume<double>&, int);
template Volume<std::uint8_t> rotate_hw(const Volume<std::uint8_t>&, int);
template Volume<std::int32_t> rotate_hw(const Volume<std::int32_t>&, int);

Prediction predict(const WindowModel& model, const Volume<double>& image, const Shape3& window, bool tta) {
  auto half = [](const Shape3& w) {
    return Shape3{std::max<std::size_t>(1, w[0] / 2), std::max<std::size_t>(1, w[1] / 2),
                  std::max<std::size_t>(1, w[2] / 2)};
  };
  if (!tta) return sliding_window(model, image, window, half(window));
  Prediction sum;
  for (int k = 0; k < 4; ++k) {
    const Shape3 win = k % 2 ? Shape3{window[0], window[2], window[1]} : window;
    Prediction p = sliding_window(model, rotate_hw(image, k), win, half(win));
    Volume<double> prob = rotate_hw(p.prob, 4 - k);
    if (k == 0) {
      sum.prob = std::move(prob);
    } else {
      for (std::size_t i = 0; i < prob.data.size(); ++i) sum.prob[i] += prob[i];
    }
    if (p.prox) {
      Volume<double> px = rotate_hw(*p.prox, 4 - k);
      if (!sum.prox) {
        sum.prox = std::move(px);
      } else {
        for (std::size_t i = 0; i < px.data.size(); ++i) (*sum.prox)[i] += px[i];
      }
    }
  }
  for (double& x : sum.prob.data) x /= 4.0;
  if (sum.prox)
    for (double& x : sum.prox->data) x /= 4.0;
  return sum;
}

}  // namespace hive
