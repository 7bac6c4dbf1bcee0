#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "adaptct/binary_io.hpp"
#include "adaptct/config.hpp"
#include "adaptct/trainer.hpp"

namespace adaptct {

// "CTAC" | u32 version | u64 payload_size | payload | u64 fnv1a64(payload)
inline constexpr char kCheckpointMagic[4] = {'C', 'T', 'A', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;  // resolved RunConfig
  TrainerState state;

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.config_text == b.config_text && a.state.params == b.state.params &&
           a.state.policy_opt == b.state.policy_opt && a.state.value_opt == b.state.value_opt &&
           a.state.rng == b.state.rng && a.state.episode == b.state.episode;
  }
};

namespace checkpoint_detail {

inline void write_adam(io::Writer& w, const std::string& name, const nn::AdamState& s) {
  w.str(name);
  w.u64(s.t);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.eps);
  w.f64(s.weight_decay);
  w.u32(static_cast<std::uint32_t>(s.m.size()));
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.u64(s.m[i].size());
    for (double x : s.m[i]) w.f64(x);
    for (double x : s.v[i]) w.f64(x);
  }
}

inline nn::AdamState read_adam(io::Reader& r, const std::string& expected_name, const std::vector<Tensor*>& group) {
  const std::string name = r.str();
  if (name != expected_name) throw FormatError("checkpoint: expected optimizer group '" + expected_name + "', found '" + name + "'");
  nn::AdamState s;
  s.t = r.u64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.eps = r.f64();
  s.weight_decay = r.f64();
  const std::uint32_t buffers = r.u32();
  if (buffers != group.size()) throw FormatError("checkpoint: optimizer group '" + name + "' has the wrong buffer count");
  s.m.resize(buffers);
  s.v.resize(buffers);
  for (std::uint32_t i = 0; i < buffers; ++i) {
    const std::uint64_t n = r.u64();
    if (n != group[i]->size()) throw FormatError("checkpoint: optimizer buffer size mismatch in group '" + name + "'");
    s.m[i].resize(n);
    s.v[i].resize(n);
    for (auto& x : s.m[i]) x = r.f64();
    for (auto& x : s.v[i]) x = r.f64();
  }
  return s;
}

}  // namespace checkpoint_detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  io::Writer p;
  p.str(ck.config_text);
  p.u64(ck.state.episode);
  p.str(rng_state(ck.state.rng));
  std::uint32_t count = 0;
  ck.state.params.for_each([&](const std::string&, const Tensor&) { ++count; });
  p.u32(count);
  ck.state.params.for_each([&](const std::string& name, const Tensor& t) {
    p.str(name);
    p.u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape) p.u32(static_cast<std::uint32_t>(d));
    for (double x : t.values) p.f64(x);
  });
  p.u32(2);
  checkpoint_detail::write_adam(p, "policy", ck.state.policy_opt);
  checkpoint_detail::write_adam(p, "value", ck.state.value_opt);

  const auto& payload = p.buffer();
  io::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(payload.size());
  w.bytes(payload.data(), payload.size());
  w.u64(io::fnv1a64(payload.data(), payload.size()));
  return std::move(w.buffer());
}

/// Verifies magic, version and checksum, then rebuilds the trainer state.
/// Tensor names and shapes must match the architecture implied by the
/// embedded configuration.
inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::Reader h(bytes);
  char magic[4];
  h.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint32_t version = h.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t size = h.u64();
  if (size > h.remaining() || h.remaining() - size != 8) throw FormatError("checkpoint: payload size does not match file size");
  const std::uint8_t* payload = bytes.data() + h.position();
  io::Reader tail(payload + size, 8);
  if (tail.u64() != io::fnv1a64(payload, size)) throw FormatError("checkpoint: checksum mismatch");

  io::Reader r(payload, size);
  Checkpoint ck;
  ck.config_text = r.str();
  const RunConfig cfg = parse_config(ck.config_text);
  ck.state.episode = r.u64();
  ck.state.rng = rng_from_state(r.str());
  Rng scratch(0);
  ck.state.params = init_agent(cfg.agent_config(), scratch);

  std::uint32_t expected = 0;
  ck.state.params.for_each([&](const std::string&, const Tensor&) { ++expected; });
  if (r.u32() != expected) throw FormatError("checkpoint: tensor count mismatch");
  ck.state.params.for_each([&](const std::string& name, Tensor& t) {
    const std::string stored = r.str();
    if (stored != name) throw FormatError("checkpoint: expected tensor '" + name + "', found '" + stored + "'");
    std::vector<int> shape(r.u32());
    for (int& d : shape) d = static_cast<int>(r.u32());
    if (shape != t.shape)
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + nn::shape_string(shape) + ", expected " +
                        nn::shape_string(t.shape));
    for (double& x : t.values) x = r.f64();
  });
  if (r.u32() != 2) throw FormatError("checkpoint: expected two optimizer groups");
  ck.state.policy_opt = checkpoint_detail::read_adam(r, "policy", ck.state.params.policy_group());
  ck.state.value_opt = checkpoint_detail::read_adam(r, "value", ck.state.params.value_group());
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes in payload");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) { io::write_file(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace adaptct
