// hive: phantom generation, training, inference, evaluation and model analysis.

#include <malloc.h>

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "hive/checkpoint.hpp"
#include "hive/hvol.hpp"
#include "hive/trainer.hpp"

namespace fs = std::filesystem;
using namespace hive;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  bool single_task = false;
  std::optional<double> data_fraction;
  bool tta = false;
  std::string ablation;
  std::string preset;
};

RunConfig resolve(const Globals& g) {
  RunConfig cfg;
  if (!g.preset.empty()) apply_setting(cfg, "network.preset", g.preset);
  if (!g.config.empty()) {
    std::ifstream f(g.config);
    if (!f) throw UsageError("cannot open config file " + g.config);
    apply_text(cfg, f, g.config);
  }
  for (const auto& s : g.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.phantom.seed = *g.seed;
  }
  if (g.lambda) cfg.loss.lambda = *g.lambda;
  if (g.single_task) cfg.network.multitask = false;
  if (g.data_fraction) cfg.train.data_fraction = *g.data_fraction;
  if (g.tta) cfg.predict.tta = true;
  if (!g.ablation.empty()) apply_setting(cfg, "network.ablation", g.ablation);
  cfg.validate();
  return cfg;
}

Shape3 to_shape(const Axis3& a) { return {std::size_t(a[0]), std::size_t(a[1]), std::size_t(a[2])}; }

Sample load_sample(const std::string& image, const std::string& label, const std::string& centerline,
                   const ProximityConfig& pc, bool need_target) {
  const Hvol img = read_hvol(image);
  const Hvol lab = read_hvol(label);
  if (img.shape != lab.shape)
    throw FormatError(image + " is " + shape_string(img.shape) + " but " + label + " is " + shape_string(lab.shape));
  Sample s{img.real(), lab.mask(), Volume<double>(img.shape, 0.0)};
  if (need_target) {
    if (centerline.empty()) throw FormatError("multitask training needs a centerline file for " + image);
    CenterlineSet c = read_centerline_file(centerline, img.shape);
    c.spacing = img.spacing;
    s.proximity = normalize_proximity(proximity_map(distance_transform(img.shape, c), pc), pc);
  }
  return s;
}

int cmd_gen_phantom(const RunConfig& cfg, const std::string& out_dir) {
  const LabeledVolume v = generate(cfg.phantom);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_hvol((dir / "image.hvol").string(), v.image, v.spacing);
  write_hvol((dir / "label.hvol").string(), v.labels, v.spacing);
  write_hvol((dir / "instances.hvol").string(), v.instances.ids, v.spacing);
  {
    std::ofstream f(dir / "centerline.txt");
    write_centerline(f, v.all_centerlines());
  }
  const Sample s = make_sample(v, cfg.proximity);
  write_hvol((dir / "proximity.hvol").string(), s.proximity, v.spacing);
  std::cout << "wrote " << v.instances.count << " instances in " << shape_string(v.image.shape) << " to "
            << out_dir << "\n";
  return kOk;
}

int cmd_make_proximity(const RunConfig& cfg, const std::string& centerline, const std::string& like,
                       const std::string& dims, const std::string& out, bool raw) {
  Shape3 shape;
  std::array<double, 3> spacing{1, 1, 1};
  if (!like.empty()) {
    const Hvol ref = read_hvol(like);
    shape = ref.shape;
    spacing = ref.spacing;
  } else if (!dims.empty()) {
    shape = to_shape(parse_axis3(dims));
  } else {
    throw UsageError("make-proximity needs --like or --dims");
  }
  CenterlineSet c = read_centerline_file(centerline, shape);
  c.spacing = spacing;
  Volume<double> map = proximity_map(distance_transform(shape, c), cfg.proximity);
  if (!raw) map = normalize_proximity(map, cfg.proximity);
  write_hvol(out, map, spacing);
  std::cout << "wrote proximity map " << shape_string(shape) << " (" << c.voxels.size() << " centerline voxels) to "
            << out << "\n";
  return kOk;
}

struct TrainArgs {
  std::vector<std::string> images, labels, centerlines;
  std::vector<std::string> val_images, val_labels;
  int phantoms = 0;
  std::string out = "model.ckpt";
  std::string last;
  std::string log;
  std::string resume;
  bool quiet = false;
};

int cmd_train(RunConfig cfg, const TrainArgs& a) {
  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    cfg.network = resumed->config.network;
  }
  const bool need_target = cfg.network.multitask && cfg.loss.lambda < 1.0;
  TrainData data;
  if (a.phantoms > 0) {
    for (int i = 0; i < a.phantoms; ++i) {
      PhantomConfig pc = cfg.phantom;
      pc.seed = cfg.phantom.seed + std::uint64_t(i);
      data.train.push_back(make_sample(generate(pc), cfg.proximity));
    }
  }
  if (a.images.size() != a.labels.size()) throw UsageError("--image and --label must be given the same number of times");
  if (!a.centerlines.empty() && a.centerlines.size() != a.images.size())
    throw UsageError("--centerline must be given once per --image");
  for (std::size_t i = 0; i < a.images.size(); ++i)
    data.train.push_back(load_sample(a.images[i], a.labels[i], a.centerlines.empty() ? "" : a.centerlines[i],
                                     cfg.proximity, need_target));
  if (a.val_images.size() != a.val_labels.size())
    throw UsageError("--val-image and --val-label must be given the same number of times");
  for (std::size_t i = 0; i < a.val_images.size(); ++i)
    data.val.push_back(load_sample(a.val_images[i], a.val_labels[i], "", cfg.proximity, false));
  if (data.train.empty()) throw UsageError("no training data: pass --image/--label or --phantoms N");

  std::ofstream csv;
  TrainHooks hooks;
  if (!a.log.empty()) {
    csv.open(a.log);
    if (!csv) throw std::runtime_error("cannot write " + a.log);
    write_csv_header(csv);
    hooks.csv = &csv;
  }
  if (!a.quiet) hooks.progress = &std::cerr;
  if (!a.last.empty())
    hooks.on_epoch = [&](const EpochLog& e, const TrainResult& r) {
      save_checkpoint(a.last, cfg, r.net, r.optim, r.rng_state, std::uint32_t(e.epoch + 1));
    };

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = resumed ? train(cfg, data, std::move(resumed->net), std::move(resumed->optim),
                                  Rng(resumed->rng_state), int(resumed->epoch), hooks)
                          : train(cfg, data, hooks);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(a.out, cfg, r.best_net, r.optim, r.rng_state, std::uint32_t(r.best_epoch + 1));
  std::cout << "stopped after " << r.epochs << " epochs, " << r.iterations << " steps (" << r.stop_reason << ", "
            << std::fixed << std::setprecision(1) << secs << " s)\n"
            << std::setprecision(4) << "best JAC " << r.best_jac << " at epoch " << r.best_epoch << "; saved "
            << a.out << "\n";
  return kOk;
}

struct PredictArgs {
  std::string checkpoint, image, out, prox_out, mask_out, instances_out, window;
};

int cmd_predict(const RunConfig& cli, const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Hvol img = read_hvol(a.image);
  Axis3 win = !a.window.empty() ? parse_axis3(a.window) : cli.predict.window;
  if (win == Axis3{0, 0, 0}) win = ck.config.network.crop;
  NetworkConfig probe = ck.config.network;
  probe.crop = win;
  probe.validate();
  const Prediction p = predict(network_model(ck.net), img.real(), to_shape(win), cli.predict.tta);
  write_hvol(a.out, p.prob, img.spacing);
  if (!a.prox_out.empty()) {
    if (!p.prox) throw UsageError("--prox-out needs a multitask checkpoint");
    write_hvol(a.prox_out, *p.prox, img.spacing);
  }
  const Mask m = threshold(p.prob, cli.predict.threshold);
  if (!a.mask_out.empty()) write_hvol(a.mask_out, m, img.spacing);
  if (!a.instances_out.empty()) write_hvol(a.instances_out, connected_components(m).ids, img.spacing);
  std::cout << "predicted " << shape_string(img.shape) << " with window " << to_string(win)
            << (cli.predict.tta ? " and 4-way rotation averaging" : "") << "\n";
  return kOk;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path, int conn, bool with_sweep,
                 const std::string& kv_out) {
  const Hvol pred = read_hvol(pred_path);
  const Hvol gt = read_hvol(gt_path);
  if (pred.shape != gt.shape)
    throw FormatError("prediction " + shape_string(pred.shape) + " and ground truth " + shape_string(gt.shape) +
                      " differ in shape");
  const Connectivity c = conn == 6 ? Connectivity::Six : Connectivity::TwentySix;
  const Labels g = gt.type == HvolType::U16 ? relabel(gt.ids())
                                            : connected_components(gt.mask(), c);
  Volume<double> prob = pred.real();
  if (pred.type != HvolType::F32)
    for (double& x : prob.data) x = x != 0.0 ? 1.0 : 0.0;
  const MetricReport r = evaluate(prob, g, c, with_sweep);
  r.write_table(std::cout);
  if (with_sweep) {
    std::cout << "\nthreshold  f1      ap\n";
    for (int t = 50; t <= 85; t += 5)
      std::cout << std::fixed << std::setprecision(2) << "  " << t / 100.0 << "    " << std::setprecision(4)
                << r.get("sweep_f1_" + std::to_string(t)) << "  " << r.get("sweep_ap_" + std::to_string(t)) << "\n";
  }
  if (!kv_out.empty()) {
    std::ofstream f(kv_out);
    if (!f) throw std::runtime_error("cannot write " + kv_out);
    r.write_kv(f);
  }
  return kOk;
}

int cmd_analyze(const RunConfig& cfg, const std::string& input) {
  const Axis3 in = input.empty() ? cfg.network.crop : parse_axis3(input);
  const NetworkConfig& nc = cfg.network;
  const Network net = make_network(nc);
  std::map<std::string, std::size_t> parts;
  std::vector<std::string> order;
  net.visit([&](const std::string& name, const Tensor& t) {
    const std::string part = name.substr(0, name.find('.'));
    if (!parts.count(part)) order.push_back(part);
    parts[part] += t.size();
  });
  const FlopReport f = count_flops(nc, in);
  std::cout << describe(nc) << "\n\n";
  for (const auto& p : order) std::cout << "  " << std::left << std::setw(12) << p << std::right << std::setw(12) << parts[p] << "\n";
  std::cout << std::fixed << std::setprecision(3) << "\nparameters      " << count_params(net) << " ("
            << count_params(net) / 1e6 << " M)\n"
            << "input           " << to_string(in) << "\n"
            << "MACs            " << f.macs / 1e9 << " G\n"
            << "elementwise     " << f.elementwise / 1e9 << " G\n"
            << "FLOPs (MAC)     " << f.total(FlopConvention::Mac) / 1e9 << " G\n"
            << "FLOPs (2*MAC)   " << f.total(FlopConvention::TwoMac) / 1e9 << " G\n";
  return kOk;
}

void tune_allocator() {
  // Activation buffers are large and short-lived: keep them on the heap
  // instead of fresh mmaps each step.
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 * 1024 * 1024);
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"hive: volumetric instance segmentation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Config file of 'section.key = value' lines");
  app.add_option("--set", g.sets, "Override one setting, e.g. --set optim.lr=1e-3");
  app.add_option("--preset", g.preset, "Network preset: standard, tiny, quarter, reduced:<c2>,<c3>");
  app.add_option("--seed", g.seed, "Seed for training and phantom generation");
  app.add_option("--lambda", g.lambda, "Segmentation loss weight");
  app.add_flag("--single-task", g.single_task, "Drop the detection decoder");
  app.add_option("--data-fraction", g.data_fraction, "Share of each training volume (leading depth) to use");
  app.add_flag("--tta", g.tta, "Average predictions over four in-plane rotations");
  app.add_option("--ablation", g.ablation, "Block variant")->check(CLI::IsMember({"A", "B", "C", "D"}));

  auto* gen = app.add_subcommand("gen-phantom", "Write a synthetic volume with labels and centerlines");
  std::string gen_out = "phantom";
  gen->add_option("--out-dir", gen_out, "Output directory");
  std::string gen_dims;
  gen->add_option("--dims", gen_dims, "Volume size DxHxW");

  auto* prox = app.add_subcommand("make-proximity", "Build a proximity map from a centerline file");
  std::string px_cl, px_like, px_dims, px_out = "proximity.hvol";
  bool px_raw = false;
  prox->add_option("--centerline", px_cl, "Centerline side file")->required();
  prox->add_option("--like", px_like, "HVOL file giving shape and spacing");
  prox->add_option("--dims", px_dims, "Volume size DxHxW");
  prox->add_option("--out", px_out, "Output HVOL");
  prox->add_flag("--raw", px_raw, "Keep unnormalized values (peak exp(alpha) - 1)");

  auto* tr = app.add_subcommand("train", "Train a network");
  TrainArgs ta;
  tr->add_option("--image", ta.images, "Training image HVOL (repeatable)");
  tr->add_option("--label", ta.labels, "Training label HVOL (repeatable)");
  tr->add_option("--centerline", ta.centerlines, "Centerline file per image");
  tr->add_option("--val-image", ta.val_images, "Validation image HVOL");
  tr->add_option("--val-label", ta.val_labels, "Validation label HVOL");
  tr->add_option("--phantoms", ta.phantoms, "Also train on N generated phantoms");
  tr->add_option("--out", ta.out, "Checkpoint of the best epoch");
  tr->add_option("--last", ta.last, "Checkpoint rewritten after every epoch");
  tr->add_option("--log", ta.log, "CSV training log");
  tr->add_option("--resume", ta.resume, "Continue from a checkpoint");
  tr->add_flag("--quiet", ta.quiet, "No per-epoch progress");

  auto* pr = app.add_subcommand("predict", "Sliding-window inference");
  PredictArgs pa;
  pr->add_option("--checkpoint", pa.checkpoint, "Checkpoint file")->required();
  pr->add_option("--image", pa.image, "Input HVOL")->required();
  pr->add_option("--out", pa.out, "Probability HVOL")->required();
  pr->add_option("--prox-out", pa.prox_out, "Proximity HVOL (multitask)");
  pr->add_option("--mask-out", pa.mask_out, "Thresholded mask HVOL");
  pr->add_option("--instances-out", pa.instances_out, "Connected-component ids HVOL");
  pr->add_option("--window", pa.window, "Window DxHxW (default: training crop)");

  auto* ev = app.add_subcommand("evaluate", "Score a prediction against ground truth");
  std::string ev_pred, ev_gt, ev_kv;
  int ev_conn = 26;
  bool ev_sweep = false;
  ev->add_option("--pred", ev_pred, "Probability (f32) or mask/ids HVOL")->required();
  ev->add_option("--gt", ev_gt, "Ground truth: u16 instance ids or u8 mask")->required();
  ev->add_option("--connectivity", ev_conn, "6 or 26")->check(CLI::IsMember({6, 26}));
  ev->add_flag("--sweep", ev_sweep, "F1 and AP over thresholds 0.50..0.85");
  ev->add_option("--kv", ev_kv, "Write key=value report");

  auto* an = app.add_subcommand("analyze", "Parameter and FLOP counts");
  std::string an_input = "40x136x136";
  an->add_option("--input", an_input, "Input size DxHxW");

  for (auto* sub : {gen, prox, tr, pr, ev, an}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    RunConfig cfg = resolve(g);
    if (*gen) {
      if (!gen_dims.empty()) {
        apply_setting(cfg, "phantom.dims", gen_dims);
      }
      return cmd_gen_phantom(cfg, gen_out);
    }
    if (*prox) return cmd_make_proximity(cfg, px_cl, px_like, px_dims, px_out, px_raw);
    if (*tr) return cmd_train(cfg, ta);
    if (*pr) return cmd_predict(cfg, pa);
    if (*ev) return cmd_evaluate(ev_pred, ev_gt, ev_conn, ev_sweep, ev_kv);
    if (*an) return cmd_analyze(cfg, an_input);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
