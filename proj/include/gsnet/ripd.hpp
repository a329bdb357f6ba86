#pragma once

#include <array>
#include <vector>

#include "gsnet/config.hpp"
#include "gsnet/encoders.hpp"
#include "gsnet/qgff.hpp"

namespace gsnet {

/// Decoder state: N x C x h x w (queries as batch). Stage 0 sits on the
/// H/16 grid, stage 1 on H/8, stage 2 on H/4.
template <typename T>
struct DecoderState {
    Var<T> z;
    int stage = 0;
};

/// Encoder taps brought to a stage grid and reduced to C_tap channels,
/// each 1 x C_tap x h x w.
template <typename T>
struct ProjectedTaps {
    Var<T> g;
    Var<T> s;
};

template <typename T>
struct AgrParams {
    Parameter<T>* conv_weight;
    Parameter<T>* conv_bias;
    Parameter<T>* gn_gamma;
    Parameter<T>* gn_beta;
};

/// conv3x3 (pad 1) -> group norm -> ReLU. Preserves the grid.
template <typename T>
Var<T> agr(const Var<T>& x, const AgrParams<T>& p, int groups);

template <typename T>
class ResidualDecoder {
public:
    ResidualDecoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng);

    /// Stage 1 targets H/8: generalist deconv x2, specialist as is.
    /// Stage 2 targets H/4: generalist deconv x4 (two x2), specialist x2.
    /// Each branch ends in a linear reduction to C_tap.
    ProjectedTaps<T> project_taps(const FeaturePyramid<T>& generalist, const FeaturePyramid<T>& specialist,
                                  int stage) const;

    /// deconv x2, concat with both taps (broadcast over queries), conv3x3,
    /// then two AGR units.
    DecoderState<T> block(const DecoderState<T>& state, const ProjectedTaps<T>& taps) const;

    /// Two blocks from H/16 to H/4, a query-shared 3x3 conv to one channel,
    /// and bilinear x4 to the full resolution. Returns raw H x W x N logits.
    Var<T> predict(const LatentVolume<T>& fused, const FeaturePyramid<T>& generalist,
                   const FeaturePyramid<T>& specialist) const;

    const AgrParams<T>& agr_params(int stage, int which) const;
    int groups() const { return groups_; }

private:
    struct Stage {
        std::vector<std::pair<Parameter<T>*, Parameter<T>*>> g_up;  // deconv weight/bias, applied in order
        Parameter<T>* g_lin_weight;
        Parameter<T>* g_lin_bias;
        std::vector<std::pair<Parameter<T>*, Parameter<T>*>> s_up;
        Parameter<T>* s_lin_weight;
        Parameter<T>* s_lin_bias;
        Parameter<T>* up_weight;
        Parameter<T>* up_bias;
        Parameter<T>* mix_weight;
        Parameter<T>* mix_bias;
        std::array<AgrParams<T>, 2> agr;
    };

    int tap_n1_g_, tap_n2_g_, tap_n1_s_, tap_n2_s_;
    int groups_;
    std::array<Stage, 2> stages_;
    Parameter<T>* head_weight_;
    Parameter<T>* head_bias_;
};

}  // namespace gsnet
