#pragma once

#include "gsnet/config.hpp"
#include "gsnet/encoders.hpp"
#include "gsnet/qgff.hpp"
#include "gsnet/ripd.hpp"
#include "gsnet/text_embed.hpp"

namespace gsnet {

/// Full network: both encoder streams, cost-volume fusion, and the
/// residual decoder. Owns its parameters; not copyable.
template <typename T>
class GSNet {
public:
    explicit GSNet(const ModelConfig& cfg);
    GSNet(const GSNet&) = delete;
    GSNet& operator=(const GSNet&) = delete;

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& params() { return store_; }
    const ParameterStore<T>& params() const { return store_; }
    const GeneralistEncoder<T>& generalist() const { return generalist_; }
    const SpecialistEncoder<T>& specialist() const { return specialist_; }
    QueryGuidedFusion<T>& fusion() { return fusion_; }
    const QueryGuidedFusion<T>& fusion() const { return fusion_; }
    const ResidualDecoder<T>& decoder() const { return decoder_; }

    /// Re-applies the per-stream training policies from the config; the
    /// decoder, fusion, and projection layers always stay trainable.
    void apply_policies();

    FeaturePyramid<T> encode_generalist(const Var<T>& image) const { return generalist_.forward(image); }
    FeaturePyramid<T> encode_specialist(const Var<T>& image) const { return specialist_.forward(image); }

    /// Everything after the encoders. queries: N x D. Returns H x W x N
    /// logits where H = 16 x (generalist grid rows).
    Var<T> head(const FeaturePyramid<T>& g, const FeaturePyramid<T>& s, const Var<T>& queries) const;

    /// image: 3 x H x W with H, W multiples of 16. Returns H x W x N logits.
    Var<T> forward(const Var<T>& image, const Var<T>& queries) const;

    /// Forward without graph recording.
    Tensor<T> infer(const Tensor<T>& image, const QuerySet& queries) const;

    static Var<T> query_var(const QuerySet& queries);

private:
    ModelConfig cfg_;
    ParameterStore<T> store_;
    Rng rng_;
    GeneralistEncoder<T> generalist_;
    SpecialistEncoder<T> specialist_;
    QueryGuidedFusion<T> fusion_;
    ResidualDecoder<T> decoder_;
};

extern template class GSNet<float>;
extern template class GSNet<double>;

}  // namespace gsnet
