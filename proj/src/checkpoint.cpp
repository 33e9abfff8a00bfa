#include "selfgnn/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace selfgnn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'S', 'G', 'N', 'N'};

static_assert(sizeof(double) == 8, "checkpoint format requires 64-bit doubles");

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::string& s, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  return v;
}

void append_f64_le(std::string& out, const Tensor& t) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    std::uint64_t bits;
    const double v = t[i];
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
}

Tensor read_f64_le(const std::string& payload, std::size_t offset, std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const std::uint64_t bits = get_u64(payload, offset + 8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    t[i] = v;
  }
  return t;
}

json config_to_json(const ModelConfig& c) {
  return json{{"users", c.users},
              {"items", c.items},
              {"d", c.d},
              {"periods", c.periods},
              {"gnn_layers", c.gnn_layers},
              {"att_layers", c.att_layers},
              {"max_seq", c.max_seq},
              {"d_sal", c.d_sal},
              {"heads", c.heads},
              {"leaky_slope", c.leaky_slope},
              {"edge_dropout", c.edge_dropout},
              {"layer_combine", c.layer_combine == LayerCombine::Mean ? "mean" : "concat_project"},
              {"sal_params", c.sal_params},
              {"unit_weights", c.ablation.unit_weights},
              {"instance_encoder", c.ablation.instance_encoder},
              {"gru_attention", c.ablation.gru_attention},
              {"graph_propagation", c.ablation.graph_propagation}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.users = j.at("users").get<std::size_t>();
  c.items = j.at("items").get<std::size_t>();
  c.d = j.at("d").get<std::size_t>();
  c.periods = j.at("periods").get<std::size_t>();
  c.gnn_layers = j.at("gnn_layers").get<std::size_t>();
  c.att_layers = j.at("att_layers").get<std::size_t>();
  c.max_seq = j.at("max_seq").get<std::size_t>();
  c.d_sal = j.at("d_sal").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.edge_dropout = j.at("edge_dropout").get<double>();
  c.layer_combine = j.at("layer_combine").get<std::string>() == "concat_project"
                        ? LayerCombine::ConcatProject
                        : LayerCombine::Mean;
  c.sal_params = j.at("sal_params").get<bool>();
  c.ablation.unit_weights = j.at("unit_weights").get<bool>();
  c.ablation.instance_encoder = j.at("instance_encoder").get<bool>();
  c.ablation.gru_attention = j.at("gru_attention").get<bool>();
  c.ablation.graph_propagation = j.at("graph_propagation").get<bool>();
  return c;
}

json hp_to_json_obj(const HyperParams& hp) {
  return json{{"d", hp.d},
              {"gnn_layers", hp.gnn_layers},
              {"att_layers", hp.att_layers},
              {"periods", hp.periods},
              {"d_sal", hp.d_sal},
              {"heads", hp.heads},
              {"max_seq", hp.max_seq},
              {"batch", hp.batch},
              {"n_pr", hp.n_pr},
              {"n_sal", hp.n_sal},
              {"epochs", hp.epochs},
              {"patience", hp.patience},
              {"lambda1", hp.lambda1},
              {"lambda2", hp.lambda2},
              {"lr", hp.lr},
              {"lr_decay", hp.lr_decay},
              {"dropout", hp.dropout},
              {"leaky_slope", hp.leaky_slope},
              {"seed", hp.seed},
              {"layer_combine", hp.layer_combine == LayerCombine::Mean ? "mean" : "concat_project"},
              {"ssl_scope", hp.ssl_scope == SslScope::Batch ? "batch" : "per_user"}};
}

HyperParams hp_from_json_obj(const json& j) {
  HyperParams hp;
  hp.d = j.at("d").get<std::size_t>();
  hp.gnn_layers = j.at("gnn_layers").get<std::size_t>();
  hp.att_layers = j.at("att_layers").get<std::size_t>();
  hp.periods = j.at("periods").get<std::size_t>();
  hp.d_sal = j.at("d_sal").get<std::size_t>();
  hp.heads = j.at("heads").get<std::size_t>();
  hp.max_seq = j.at("max_seq").get<std::size_t>();
  hp.batch = j.at("batch").get<std::size_t>();
  hp.n_pr = j.at("n_pr").get<std::size_t>();
  hp.n_sal = j.at("n_sal").get<std::size_t>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  hp.patience = j.at("patience").get<std::size_t>();
  hp.lambda1 = j.at("lambda1").get<double>();
  hp.lambda2 = j.at("lambda2").get<double>();
  hp.lr = j.at("lr").get<double>();
  hp.lr_decay = j.at("lr_decay").get<double>();
  hp.dropout = j.at("dropout").get<double>();
  hp.leaky_slope = j.at("leaky_slope").get<double>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  hp.layer_combine = j.at("layer_combine").get<std::string>() == "concat_project"
                         ? LayerCombine::ConcatProject
                         : LayerCombine::Mean;
  hp.ssl_scope = j.at("ssl_scope").get<std::string>() == "per_user" ? SslScope::PerUser
                                                                    : SslScope::Batch;
  return hp;
}

}  // namespace

std::string hyperparams_to_json(const HyperParams& hp) { return hp_to_json_obj(hp).dump(2); }

HyperParams hyperparams_from_json(const std::string& text) {
  return hp_from_json_obj(json::parse(text));
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.tensors.size() != ckpt.names.size() || ckpt.adam_m.size() != ckpt.tensors.size() ||
      ckpt.adam_v.size() != ckpt.tensors.size()) {
    throw std::invalid_argument("save_checkpoint: tensor/name/moment counts disagree");
  }
  std::string payload;
  json manifest = json::array();
  auto add_tensor = [&](const std::string& name, const Tensor& t) {
    manifest.push_back(json{{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    append_f64_le(payload, t);
  };
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) add_tensor(ckpt.names[i], ckpt.tensors[i]);
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) add_tensor("adam.m." + ckpt.names[i], ckpt.adam_m[i]);
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) add_tensor("adam.v." + ckpt.names[i], ckpt.adam_v[i]);

  json header;
  header["hyperparams"] = hp_to_json_obj(ckpt.hp);
  header["model_config"] = config_to_json(ckpt.model_config);
  header["epoch"] = ckpt.epoch;
  header["adam_step"] = ckpt.adam_step;
  header["rng"] = json{{"seed", ckpt.rng_seed}};
  header["train_state"] =
      json{{"best_val_hr10", ckpt.best_val_hr10}, {"epochs_since_improve", ckpt.epochs_since_improve}};
  header["param_count"] = ckpt.tensors.size();
  header["tensors"] = std::move(manifest);
  const std::string header_str = header.dump();

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, ckpt.version);
  put_u64(out, header_str.size());
  out += header_str;
  put_u64(out, payload.size());
  out += payload;
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size())));
  put_u32(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint not found: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 + 4 + 8 + 8 + 4) throw std::runtime_error("checkpoint truncated: " + path);
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint format error: bad magic in " + path);
  }
  const auto stored_crc = get_u32(buf, buf.size() - 4);
  const auto crc = static_cast<std::uint32_t>(::crc32(
      0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc) {
    throw std::runtime_error("checkpoint checksum mismatch: " + path);
  }

  Checkpoint ckpt;
  ckpt.version = get_u32(buf, 4);
  if (ckpt.version != 1) {
    throw std::runtime_error("checkpoint version mismatch: got " + std::to_string(ckpt.version));
  }
  const std::uint64_t hlen = get_u64(buf, 8);
  const std::size_t hoff = 16;
  if (hoff + hlen + 8 + 4 > buf.size()) throw std::runtime_error("checkpoint truncated: " + path);
  const json header = json::parse(buf.substr(hoff, hlen));
  const std::uint64_t plen = get_u64(buf, hoff + hlen);
  const std::size_t poff = hoff + hlen + 8;
  if (poff + plen + 4 != buf.size()) throw std::runtime_error("checkpoint truncated: " + path);
  const std::string payload = buf.substr(poff, plen);

  ckpt.hp = hp_from_json_obj(header.at("hyperparams"));
  ckpt.model_config = config_from_json(header.at("model_config"));
  ckpt.ablation = ckpt.model_config.ablation;
  ckpt.epoch = header.at("epoch").get<std::uint64_t>();
  ckpt.adam_step = header.at("adam_step").get<std::uint64_t>();
  ckpt.rng_seed = header.at("rng").at("seed").get<std::uint64_t>();
  ckpt.best_val_hr10 = header.at("train_state").at("best_val_hr10").get<double>();
  ckpt.epochs_since_improve = header.at("train_state").at("epochs_since_improve").get<std::uint64_t>();
  const std::size_t n = header.at("param_count").get<std::size_t>();

  const auto& manifest = header.at("tensors");
  if (manifest.size() != 3 * n) throw std::runtime_error("checkpoint manifest size mismatch");
  auto read_entry = [&](const json& e) {
    auto shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto offset = e.at("offset").get<std::size_t>();
    std::size_t numel = shape.empty() ? 0 : 1;
    for (auto s : shape) numel *= s;
    if (offset + 8 * numel > payload.size()) {
      throw std::runtime_error("checkpoint tensor out of payload bounds");
    }
    return read_f64_le(payload, offset, std::move(shape));
  };
  for (std::size_t i = 0; i < n; ++i) {
    ckpt.names.push_back(manifest[i].at("name").get<std::string>());
    ckpt.tensors.push_back(read_entry(manifest[i]));
  }
  for (std::size_t i = 0; i < n; ++i) ckpt.adam_m.push_back(read_entry(manifest[n + i]));
  for (std::size_t i = 0; i < n; ++i) ckpt.adam_v.push_back(read_entry(manifest[2 * n + i]));
  return ckpt;
}

}  // namespace selfgnn
