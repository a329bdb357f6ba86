#pragma once

#include <map>
#include <string>
#include <vector>

#include "gsnet/config.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/params.hpp"

namespace gsnet {

/// Encoder output: final feature (h x w x D, channels last) plus
/// intermediate taps keyed by 1-based block index (h' x w' x width).
template <typename T>
struct FeaturePyramid {
    Var<T> final;
    std::map<int, Var<T>> taps;

    const Var<T>& tap(int layer) const;
};

template <typename T>
struct BlockParams {
    Parameter<T>* ln1_gamma;
    Parameter<T>* ln1_beta;
    Parameter<T>* q_weight;
    Parameter<T>* q_bias;
    Parameter<T>* k_weight;
    Parameter<T>* k_bias;
    Parameter<T>* v_weight;
    Parameter<T>* v_bias;
    Parameter<T>* out_weight;
    Parameter<T>* out_bias;
    Parameter<T>* ln2_gamma;
    Parameter<T>* ln2_beta;
    Parameter<T>* fc1_weight;
    Parameter<T>* fc1_bias;
    Parameter<T>* fc2_weight;
    Parameter<T>* fc2_bias;

    static BlockParams create(ParameterStore<T>& store, const std::string& prefix, int width, int mlp_ratio,
                              ParamGroup group, Rng& rng);
};

/// Pre-norm transformer block over an L x width token matrix. When
/// `attention` is given, the softmax attention maps (heads x L x L) are
/// stored there.
template <typename T>
Var<T> transformer_block(const Var<T>& tokens, const BlockParams<T>& p, int heads,
                         Tensor<T>* attention = nullptr);

/// Plain ViT backbone: patch embedding, class token, learned positional
/// embedding (bilinear-resized for other grids), pre-norm blocks.
template <typename T>
class VisionTransformer {
public:
    VisionTransformer(std::string prefix, const EncoderConfig& cfg, int image_size, ParamGroup group,
                      ParameterStore<T>& store, Rng& rng);

    struct Output {
        Var<T> tokens;  // h x w x width after the final layer norm (class token dropped)
        std::map<int, Var<T>> taps;
    };

    /// image: 3 x H x W, H and W divisible by 16.
    Output forward(const Var<T>& image) const;

    const EncoderConfig& config() const { return cfg_; }
    const std::vector<BlockParams<T>>& blocks() const { return blocks_; }

private:
    std::string prefix_;
    EncoderConfig cfg_;
    std::int64_t init_grid_;
    Parameter<T>* patch_weight_;
    Parameter<T>* patch_bias_;
    Parameter<T>* cls_token_;
    Parameter<T>* pos_cls_;
    Parameter<T>* pos_grid_;
    Parameter<T>* ln_gamma_;
    Parameter<T>* ln_beta_;
    std::vector<BlockParams<T>> blocks_;
};

/// Generalist stream: stride-16 ViT, final tokens projected to D.
template <typename T>
class GeneralistEncoder {
public:
    GeneralistEncoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng);
    /// Final grid (H/16, W/16, D); taps at the same grid with the ViT width.
    FeaturePyramid<T> forward(const Var<T>& image) const;
    const VisionTransformer<T>& backbone() const { return vit_; }

private:
    VisionTransformer<T> vit_;
    Parameter<T>* proj_weight_;
    Parameter<T>* proj_bias_;
};

/// Specialist stream: stride-8 ViT whose final map is aligned to the
/// generalist grid by a 2x2 stride-2 convolution. Taps stay at H/8.
template <typename T>
class SpecialistEncoder {
public:
    SpecialistEncoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng);
    FeaturePyramid<T> forward(const Var<T>& image) const;
    /// The alignment convolution alone: h x w x width -> h/2 x w/2 x D.
    Var<T> align(const Var<T>& native) const;
    const VisionTransformer<T>& backbone() const { return vit_; }

private:
    VisionTransformer<T> vit_;
    Parameter<T>* align_weight_;
    Parameter<T>* align_bias_;
};

/// Throws ContractError unless H and W are positive multiples of 16.
void check_image_extent(std::int64_t h, std::int64_t w);

/// Sets trainable flags for one stream: Freeze -> none, AttentionQV -> only
/// the q/v projection weights and biases, Full -> all of that stream.
/// Returns the number of parameters marked trainable.
template <typename T>
std::size_t apply_policy(ParameterStore<T>& store, ParamGroup stream, TrainPolicy policy);

/// Channels-last h x w x C  <->  1 x C x h x w.
template <typename T>
Var<T> to_nchw(const Var<T>& hwc);
template <typename T>
Var<T> to_hwc(const Var<T>& nchw);

}  // namespace gsnet
