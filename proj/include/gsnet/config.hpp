#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "gsnet/tensor.hpp"

namespace gsnet {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Which parameters of a backbone stream are trained.
enum class TrainPolicy { Freeze, AttentionQV, Full };

TrainPolicy parse_policy(const std::string& s);
std::string policy_name(TrainPolicy p);

struct EncoderConfig {
    int patch_stride = 16;
    int depth = 8;
    int width = 32;
    int heads = 4;
    int mlp_ratio = 4;
    int tap_n1 = 4;  // 1-based block indices
    int tap_n2 = 8;
    TrainPolicy policy = TrainPolicy::Freeze;

    void validate(const std::string& which) const;
};

/// Model hyper-parameters. Serialized as JSON with the same key names; see
/// README for the full key list.
struct ModelConfig {
    int image_size = 64;  // native input extent; positional grids are sized for it
    EncoderConfig generalist{16, 8, 32, 4, 4, 4, 8, TrainPolicy::AttentionQV};
    EncoderConfig specialist{8, 8, 32, 4, 4, 4, 8, TrainPolicy::Freeze};
    int embed_dim = 32;    // D: query and final feature dimension
    int latent_dim = 64;   // D_z: cost-volume embedding channels
    int tap_dim = 8;       // C_tap: reduced tap channels in the decoder
    int decoder_dim = 32;  // decoder channels
    int gn_groups = 8;
    std::uint64_t seed = 0;
    std::uint64_t text_seed = 0;
    std::string prompt_template = "A photo of a {class}";
    int patch_canvas = 640;  // R: inference canvas for oversized images
    int patch_size = 384;    // P: patch extent on that canvas

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    static ModelConfig load(const std::filesystem::path& path);
    /// Dotted key, e.g. "generalist.depth=4" or "latent_dim=16".
    void apply_override(const std::string& assignment);
};

/// Tiny configuration used by tests and the gradient suite.
ModelConfig tiny_config();

}  // namespace gsnet
