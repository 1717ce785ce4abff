#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "obsmae/core/error.hpp"

namespace obsmae::model {

/// Architecture hyperparameters. `full` is the full-size model; `tiny` is the desk preset.
struct ModelConfig {
  std::string preset = "full";
  std::size_t token_dim = 768;
  std::size_t backbone_blocks = 12;
  std::size_t backbone_heads = 12;
  std::size_t decoder_blocks = 6;
  std::size_t decoder_heads = 8;
  std::size_t context_dim = 384;
  std::size_t mlp_ratio = 4;
  std::size_t patch_time = 1;
  std::size_t patch = 16;
  std::size_t window = 144;
  std::size_t window_hours = 12;
  std::size_t vae_latent_dim = 768;
  std::size_t vae_hidden = 1536;
  double kl_weight = 1e-4;
  std::size_t mask_budget = 128;
  double dirichlet_alpha = 1.0;
  std::uint64_t init_seed = 0;

  static ModelConfig full() { return {}; }

  static ModelConfig tiny() {
    ModelConfig c;
    c.preset = "tiny";
    c.token_dim = 64;
    c.backbone_blocks = 2;
    c.backbone_heads = 4;
    c.decoder_blocks = 2;
    c.decoder_heads = 4;
    c.context_dim = 32;
    c.window = 48;
    c.vae_latent_dim = 16;
    c.vae_hidden = 128;
    c.mask_budget = 48;
    return c;
  }

  static ModelConfig from_preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "tiny") return tiny();
    throw Error("unknown model preset '" + name + "'");
  }

  std::size_t tokens_per_side() const { return window / patch; }

  void validate() const {
    require(token_dim % backbone_heads == 0, "model: token_dim must be divisible by backbone_heads");
    require(context_dim % decoder_heads == 0, "model: context_dim must be divisible by decoder_heads");
    require(patch > 0 && window % patch == 0, "model: patch must divide the window");
    require(patch_time == 1, "model: only single-frame tokens are supported");
    require(backbone_blocks >= 1 && decoder_blocks >= 1, "model: need at least one backbone and decoder block");
    require(vae_latent_dim >= 1 && vae_hidden >= 1, "model: VAE dimensions must be positive");
    require(mask_budget >= 1, "model: mask_budget must be >= 1");
    require(dirichlet_alpha > 0.0, "model: dirichlet_alpha must be positive");
  }

  nlohmann::json to_json() const {
    return {{"preset", preset},
            {"token_dim", token_dim},
            {"backbone_blocks", backbone_blocks},
            {"backbone_heads", backbone_heads},
            {"decoder_blocks", decoder_blocks},
            {"decoder_heads", decoder_heads},
            {"context_dim", context_dim},
            {"mlp_ratio", mlp_ratio},
            {"patch_time", patch_time},
            {"patch", patch},
            {"window", window},
            {"window_hours", window_hours},
            {"vae_latent_dim", vae_latent_dim},
            {"vae_hidden", vae_hidden},
            {"kl_weight", kl_weight},
            {"mask_budget", mask_budget},
            {"dirichlet_alpha", dirichlet_alpha},
            {"init_seed", init_seed}};
  }

  /// Starts from the named preset (default "tiny") and overrides any keys present.
  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c = from_preset(j.value("preset", std::string("tiny")));
    c.token_dim = j.value("token_dim", c.token_dim);
    c.backbone_blocks = j.value("backbone_blocks", c.backbone_blocks);
    c.backbone_heads = j.value("backbone_heads", c.backbone_heads);
    c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
    c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
    c.context_dim = j.value("context_dim", c.context_dim);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.patch_time = j.value("patch_time", c.patch_time);
    c.patch = j.value("patch", c.patch);
    c.window = j.value("window", c.window);
    c.window_hours = j.value("window_hours", c.window_hours);
    c.vae_latent_dim = j.value("vae_latent_dim", c.vae_latent_dim);
    c.vae_hidden = j.value("vae_hidden", c.vae_hidden);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.mask_budget = j.value("mask_budget", c.mask_budget);
    c.dirichlet_alpha = j.value("dirichlet_alpha", c.dirichlet_alpha);
    c.init_seed = j.value("init_seed", c.init_seed);
    c.validate();
    return c;
  }
};

}  // namespace obsmae::model
