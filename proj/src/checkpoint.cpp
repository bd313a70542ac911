#include "latentflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace latentflow {

namespace {

constexpr char kMagic[8] = {'L', 'F', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void need(std::istream& in, const std::string& path) {
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file in " + path);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  need(in, path);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  need(in, path);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double read_f64(std::istream& in, const std::string& path) {
  const std::uint64_t bits = read_u64(in, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& in, const std::string& path, std::size_t limit = 1u << 26) {
  const std::uint32_t len = read_u32(in, path);
  if (len > limit) throw std::runtime_error("checkpoint: corrupt string length in " + path);
  std::string s(len, '\0');
  in.read(s.data(), len);
  need(in, path);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<NamedParam>& params, const std::string& echo,
                     std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_string(out, kind);
  write_string(out, echo);
  write_u64(out, seed);
  write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& np : params) {
    write_string(out, np.name);
    write_u32(out, static_cast<std::uint32_t>(np.tensor->rank()));
    for (std::size_t d : np.tensor->shape()) write_u64(out, d);
    for (std::size_t i = 0; i < np.tensor->size(); ++i) write_f64(out, (*np.tensor)[i]);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

RawCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  need(in, path);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic, not a checkpoint file: " + path);
  }
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version) + " in " + path);
  }
  RawCheckpoint ckpt;
  ckpt.kind = read_string(in, path);
  ckpt.echo = read_string(in, path);
  ckpt.seed = read_u64(in, path);
  const std::uint32_t count = read_u32(in, path);
  ckpt.entries.resize(count);
  for (auto& e : ckpt.entries) {
    e.name = read_string(in, path);
    const std::uint32_t rank = read_u32(in, path);
    if (rank > 8) throw std::runtime_error("checkpoint: corrupt rank in " + path);
    e.shape.resize(rank);
    std::size_t numel = 1;
    for (auto& d : e.shape) {
      d = static_cast<std::size_t>(read_u64(in, path));
      if (d == 0 || d > (1u << 28)) throw std::runtime_error("checkpoint: corrupt dim in " + path);
      numel *= d;
    }
    e.data.resize(numel);
    for (auto& v : e.data) v = read_f64(in, path);
  }
  return ckpt;
}

RawCheckpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
  RawCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != expected_kind) {
    throw std::runtime_error("checkpoint: kind '" + ckpt.kind + "' where '" + expected_kind +
                             "' was expected: " + path);
  }
  return ckpt;
}

namespace {

using nlohmann::ordered_json;

void fill_params(const RawCheckpoint& ckpt, std::vector<NamedParam> params,
                 const std::string& path) {
  if (params.size() != ckpt.entries.size()) {
    throw std::runtime_error("checkpoint: " + std::to_string(ckpt.entries.size()) +
                             " entries for a model with " + std::to_string(params.size()) +
                             " parameters: " + path);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = ckpt.entries[i];
    if (e.name != params[i].name) {
      throw std::runtime_error("checkpoint: parameter '" + e.name + "' where '" +
                               params[i].name + "' was expected: " + path);
    }
    if (e.shape != params[i].tensor->shape()) {
      throw std::runtime_error("checkpoint: shape " + shape_str(e.shape) + " for '" + e.name +
                               "' does not match the declared kind (" +
                               shape_str(params[i].tensor->shape()) + "): " + path);
    }
    *params[i].tensor = Tensor(e.shape, e.data);
  }
}

std::string make_echo(const ordered_json& model_meta, const std::string& experiment_echo) {
  ordered_json j;
  j["model"] = model_meta;
  j["experiment"] = experiment_echo;
  return j.dump();
}

ordered_json parse_echo(const std::string& echo, const std::string& path,
                        std::string* experiment_echo) {
  ordered_json j;
  try {
    j = ordered_json::parse(echo);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint: corrupt echo JSON in " + path + ": " + e.what());
  }
  if (experiment_echo != nullptr) {
    *experiment_echo = j.value("experiment", std::string{});
  }
  return j.at("model");
}

}  // namespace

void save_vae_checkpoint(const std::string& path, VaeModel& model,
                         const std::string& experiment_echo, std::uint64_t seed) {
  const VaeConfig& c = model.config();
  ordered_json meta{{"input_dim", c.input_dim},   {"latent_dim", c.latent_dim},
                    {"hidden", c.hidden},         {"n_hidden_layers", c.n_hidden_layers},
                    {"beta", c.beta}};
  save_checkpoint(path, "vae", model.named_params(), make_echo(meta, experiment_echo), seed);
}

VaeModel load_vae_checkpoint(const std::string& path, std::string* experiment_echo,
                             std::uint64_t* seed) {
  RawCheckpoint ckpt = load_checkpoint(path, "vae");
  ordered_json meta = parse_echo(ckpt.echo, path, experiment_echo);
  if (seed != nullptr) *seed = ckpt.seed;
  VaeConfig cfg;
  cfg.input_dim = meta.at("input_dim").get<std::size_t>();
  cfg.latent_dim = meta.at("latent_dim").get<std::size_t>();
  cfg.hidden = meta.at("hidden").get<std::size_t>();
  cfg.n_hidden_layers = meta.at("n_hidden_layers").get<std::size_t>();
  cfg.beta = meta.at("beta").get<double>();
  Rng init(0);
  VaeModel model(cfg, init);
  fill_params(ckpt, model.named_params(), path);
  return model;
}

void save_flow_checkpoint(const std::string& path, FlowModel& model,
                          const std::string& experiment_echo, std::uint64_t seed) {
  const FlowConfig& c = model.config();
  ordered_json meta{{"latent_dim", c.latent_dim},
                    {"scheme", scheme_name(c.scheme)},
                    {"hidden", c.hidden},
                    {"n_hidden_layers", c.n_hidden_layers},
                    {"activation", activation_name(c.act)},
                    {"n_classes", c.n_classes},
                    {"n_continuous", c.n_continuous},
                    {"embed_dim", c.embed_dim},
                    {"time_embedding", time_embedding_name(c.time_embedding)}};
  save_checkpoint(path, "flow", model.named_params(), make_echo(meta, experiment_echo), seed);
}

FlowModel load_flow_checkpoint(const std::string& path, std::string* experiment_echo,
                               std::uint64_t* seed) {
  RawCheckpoint ckpt = load_checkpoint(path, "flow");
  ordered_json meta = parse_echo(ckpt.echo, path, experiment_echo);
  if (seed != nullptr) *seed = ckpt.seed;
  FlowConfig cfg;
  cfg.latent_dim = meta.at("latent_dim").get<std::size_t>();
  cfg.scheme = scheme_from_name(meta.at("scheme").get<std::string>());
  cfg.hidden = meta.at("hidden").get<std::size_t>();
  cfg.n_hidden_layers = meta.at("n_hidden_layers").get<std::size_t>();
  cfg.act = activation_from_name(meta.at("activation").get<std::string>());
  cfg.n_classes = meta.at("n_classes").get<int>();
  cfg.n_continuous = meta.at("n_continuous").get<std::size_t>();
  cfg.embed_dim = meta.at("embed_dim").get<std::size_t>();
  cfg.time_embedding = time_embedding_from_name(meta.at("time_embedding").get<std::string>());
  Rng init(0);
  FlowModel model(cfg, init);
  fill_params(ckpt, model.named_params(), path);
  return model;
}

}  // namespace latentflow
