#pragma once

#include <cstdint>
#include <string>

#include "ttlift/common.hpp"

namespace ttlift::uplift {

struct ModelConfig {
  int d = 128;            // embedding width
  int layers = 16;        // blocks in the uplifting network (trajectory + spin stages)
  int heads = 4;
  int embed_blocks = 4;   // blocks in the per-frame embedding module
  int spin_blocks = 4;    // final blocks that feed the spin head
  int mlp_ratio = 4;
  int head_layers = 3;    // fully connected layers per output head
  double delta_t = 0.002; // RoPE time quantum, s
  double rope_base = 10000.0;
  double spin_scale = 500.0;  // spin head output unit, rad/s
  std::uint64_t init_seed = 0;

  int head_dim() const { return d / heads; }
  int trajectory_blocks() const { return layers - spin_blocks; }

  /// Throws ConfigError if the widths or depths are inconsistent.
  void validate() const {
    if (d <= 0 || heads <= 0) throw ConfigError("model: d and heads must be positive");
    if (d % (2 * heads) != 0) throw ConfigError("model: d must be divisible by 2 * heads");
    if (spin_blocks < 1 || layers <= spin_blocks)
      throw ConfigError("model: layers must exceed spin_blocks");
    if (embed_blocks < 1) throw ConfigError("model: embed_blocks must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("model: mlp_ratio must be >= 1");
    if (head_layers != 3) throw ConfigError("model: output heads have exactly 3 layers");
    if (!(delta_t > 0.0)) throw ConfigError("model: delta_t must be > 0");
    if (!(rope_base > 1.0)) throw ConfigError("model: rope_base must be > 1");
    if (!(spin_scale > 0.0)) throw ConfigError("model: spin_scale must be > 0");
  }
};

}  // namespace ttlift::uplift
