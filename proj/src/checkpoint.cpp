#include "hive/checkpoint.hpp"

#include <sstream>

#include "hive/binio.hpp"

namespace hive {

std::vector<char> serialize_checkpoint(const RunConfig& cfg, const Network& net, const OptimState& optim,
                                       std::uint64_t rng_state, std::uint32_t epoch) {
  binio::Writer w;
  w.put_bytes("HIVE");
  w.put<std::uint16_t>(kCheckpointVersion);
  RunConfig shown = cfg;
  shown.network = net.cfg;
  const std::string text = to_text(shown, {"network", "loss", "proximity", "optim"});
  w.put<std::uint32_t>(std::uint32_t(text.size()));
  w.put_bytes(text);

  std::vector<const Tensor*> params;
  std::vector<std::string> names;
  net.visit([&](const std::string& name, const Tensor& t) {
    names.push_back(name);
    params.push_back(&t);
  });
  w.put<std::uint32_t>(std::uint32_t(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (names[i].size() > 65535) throw std::invalid_argument("parameter name too long");
    w.put<std::uint16_t>(std::uint16_t(names[i].size()));
    w.put_bytes(names[i]);
    for (auto d : params[i]->dims()) w.put<std::uint32_t>(std::uint32_t(d));
    for (double x : params[i]->data()) w.put_f32(x);
  }

  w.put<std::uint64_t>(optim.step);
  const bool moments = !optim.m.empty();
  if (moments && optim.m.size() != params.size())
    throw std::invalid_argument("optimizer state does not match the network");
  w.put<std::uint8_t>(moments ? 1 : 0);
  if (moments)
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (double x : optim.m[i]) w.put_f32(x);
      for (double x : optim.v[i]) w.put_f32(x);
    }
  w.put<std::uint64_t>(rng_state);
  w.put<std::uint32_t>(epoch);
  return std::move(w.bytes);
}

Checkpoint parse_checkpoint(const std::vector<char>& bytes, const std::string& what) {
  binio::Reader r(bytes, what);
  if (r.get_bytes(4, "magic") != "HIVE") r.fail("bad magic (expected HIVE)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));

  Checkpoint ck;
  const auto text_len = r.get<std::uint32_t>("config length");
  std::istringstream text(r.get_bytes(text_len, "config text"));
  try {
    apply_text(ck.config, text, what + " config");
    ck.config.network.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("invalid configuration: ") + e.what());
  }
  ck.net = make_network(ck.config.network);

  std::vector<Tensor*> params;
  std::vector<std::string> names;
  ck.net.visit([&](const std::string& name, Tensor& t) {
    names.push_back(name);
    params.push_back(&t);
  });
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != params.size())
    r.fail("tensor count " + std::to_string(count) + " does not match the configured network (" +
           std::to_string(params.size()) + ")");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto len = r.get<std::uint16_t>("name length");
    const std::string name = r.get_bytes(len, "name");
    if (name != names[i]) r.fail("tensor " + std::to_string(i) + " is '" + name + "', expected '" + names[i] + "'");
    Dims d{};
    for (auto& x : d) x = r.get<std::uint32_t>("dims");
    if (d != params[i]->dims())
      r.fail("tensor '" + name + "' has dims " + to_string(d) + ", expected " + to_string(params[i]->dims()));
    r.need(4 * params[i]->size(), "tensor values");
    for (double& x : params[i]->data()) x = r.get_f32("tensor values");
    ck.payload_bytes += 4 * params[i]->size();
  }

  ck.optim.step = r.get<std::uint64_t>("optimizer step");
  const auto moments = r.get<std::uint8_t>("optimizer flag");
  if (moments > 1) r.fail("bad optimizer flag");
  if (moments) {
    ck.optim.m.resize(params.size());
    ck.optim.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      r.need(8 * params[i]->size(), "optimizer moments");
      ck.optim.m[i].resize(params[i]->size());
      ck.optim.v[i].resize(params[i]->size());
      for (double& x : ck.optim.m[i]) x = r.get_f32("optimizer moments");
      for (double& x : ck.optim.v[i]) x = r.get_f32("optimizer moments");
    }
  }
  ck.rng_state = r.get<std::uint64_t>("rng state");
  ck.epoch = r.get<std::uint32_t>("epoch");
  if (!r.at_end()) r.fail("trailing bytes");
  return ck;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const Network& net, const OptimState& optim,
                     std::uint64_t rng_state, std::uint32_t epoch) {
  binio::write_file(path, serialize_checkpoint(cfg, net, optim, rng_state, epoch));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(binio::read_file(path), path); }

}  // namespace hive
