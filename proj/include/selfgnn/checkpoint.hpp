#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selfgnn/adam.hpp"
#include "selfgnn/model.hpp"

namespace selfgnn {

struct HyperParams {
  std::size_t d = 64;
  std::size_t gnn_layers = 2;     // L
  std::size_t att_layers = 2;     // L_a
  std::size_t periods = 4;        // T
  std::size_t d_sal = 16;
  std::size_t heads = 4;
  std::size_t max_seq = 50;       // M
  std::size_t batch = 256;        // B
  std::size_t n_pr = 1;
  std::size_t n_sal = 20;
  std::size_t epochs = 100;       // E
  std::size_t patience = 10;
  double lambda1 = 1e-6;
  double lambda2 = 1e-2;
  double lr = 1e-3;
  double lr_decay = 0.96;
  double dropout = 0.5;
  double leaky_slope = 0.1;
  std::uint64_t seed = 42;
  LayerCombine layer_combine = LayerCombine::Mean;
  SslScope ssl_scope = SslScope::Batch;
};

// Complete training state: hyperparameters, every trainable tensor, Adam
// moments, epoch counter and RNG seed. Saves and loads bit-exactly.
struct Checkpoint {
  std::uint32_t version = 1;
  HyperParams hp;
  AblationFlags ablation;
  ModelConfig model_config;       // includes users/items
  std::vector<std::string> names;
  std::vector<Tensor> tensors;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  std::uint64_t adam_step = 0;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t rng_seed = 0;
  double best_val_hr10 = -1.0;
  std::uint64_t epochs_since_improve = 0;
};

// Binary layout: magic "SGNN", u32 version, u64 header length, JSON header
// with hyperparameters and a (name, shape, offset) tensor manifest, u64
// payload length, raw little-endian f64 payload, trailing CRC32 of all
// preceding bytes.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::string hyperparams_to_json(const HyperParams& hp);
HyperParams hyperparams_from_json(const std::string& json_text);

}  // namespace selfgnn
