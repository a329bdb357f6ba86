#pragma once

#include "gsnet/config.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/params.hpp"

namespace gsnet {

enum class Stream { Generalist, Specialist };

/// Per-pixel, per-query cosine similarity, h x w x N. Entries lie in [-1, 1].
template <typename T>
struct CostVolume {
    Var<T> values;
    Stream stream = Stream::Generalist;
};

/// Embedded cost volume. Stored query-major as N x D_z x h x w so the query
/// axis doubles as the convolution batch axis; element (h, w, n, d) of the
/// conceptual h x w x N x D_z volume lives at values[n, d, h, w].
template <typename T>
struct LatentVolume {
    Var<T> values;

    std::int64_t queries() const { return values.dim(0); }
    std::int64_t channels() const { return values.dim(1); }
};

/// values[h,w,n] = <norm(features[h,w,:]), norm(queries[n,:])>.
/// features: h x w x D, queries: N x D.
template <typename T>
CostVolume<T> compute_cost_volume(const Var<T>& features, const Var<T>& queries, Stream stream);

/// Query-guided fusion of the two streams' cost volumes.
template <typename T>
class QueryGuidedFusion {
public:
    QueryGuidedFusion(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng);

    /// sigmoid(conv7x7(M)) with 1 -> D_z channels, weights shared by queries.
    LatentVolume<T> embed(const CostVolume<T>& cost, Stream stream) const;
    /// sigmoid(conv7x7(Zg ++ Zs)) + Zg, concatenating along D_z.
    LatentVolume<T> fuse(const LatentVolume<T>& zg, const LatentVolume<T>& zs) const;

    Parameter<T>& fuse_weight() { return *fuse_weight_; }
    Parameter<T>& fuse_bias() { return *fuse_bias_; }
    Parameter<T>& embed_weight(Stream s) { return s == Stream::Generalist ? *embed_g_weight_ : *embed_s_weight_; }
    Parameter<T>& embed_bias(Stream s) { return s == Stream::Generalist ? *embed_g_bias_ : *embed_s_bias_; }

private:
    Parameter<T>* embed_g_weight_;
    Parameter<T>* embed_g_bias_;
    Parameter<T>* embed_s_weight_;
    Parameter<T>* embed_s_bias_;
    Parameter<T>* fuse_weight_;
    Parameter<T>* fuse_bias_;
};

}  // namespace gsnet
