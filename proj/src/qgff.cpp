#include "gsnet/qgff.hpp"

namespace gsnet {

using namespace ops;

template <typename T>
CostVolume<T> compute_cost_volume(const Var<T>& features, const Var<T>& queries, Stream stream) {
    const Shape& fs = features.shape();
    const Shape& qs = queries.shape();
    if (fs.size() != 3 || qs.size() != 2) {
        throw ContractError("cost volume expects h x w x D features and N x D queries, got " + shape_str(fs) +
                            " and " + shape_str(qs));
    }
    if (fs[2] != qs[1]) {
        throw ContractError("feature dim " + std::to_string(fs[2]) + " != query dim " + std::to_string(qs[1]));
    }
    const std::int64_t h = fs[0], w = fs[1], d = fs[2], n = qs[0];
    auto e = reshape(l2_normalize(features), {h * w, d});
    auto q = permute(l2_normalize(queries), {1, 0});
    // Rounding can push a cosine a hair past 1.
    auto m = clamp(matmul(e, q), T(-1), T(1));
    return {reshape(m, {h, w, n}), stream};
}

template <typename T>
QueryGuidedFusion<T>::QueryGuidedFusion(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng) {
    const std::int64_t dz = cfg.latent_dim;
    embed_g_weight_ = &store.create("qgff.embed_g.weight", {dz, 1, 7, 7}, ParamGroup::Head, Init::KaimingUniform, rng, 49);
    embed_g_bias_ = &store.create("qgff.embed_g.bias", {dz}, ParamGroup::Head, Init::Zeros, rng);
    embed_s_weight_ = &store.create("qgff.embed_s.weight", {dz, 1, 7, 7}, ParamGroup::Head, Init::KaimingUniform, rng, 49);
    embed_s_bias_ = &store.create("qgff.embed_s.bias", {dz}, ParamGroup::Head, Init::Zeros, rng);
    fuse_weight_ = &store.create("qgff.fuse.weight", {dz, 2 * dz, 7, 7}, ParamGroup::Head, Init::KaimingUniform, rng,
                                 2 * dz * 49);
    fuse_bias_ = &store.create("qgff.fuse.bias", {dz}, ParamGroup::Head, Init::Zeros, rng);
}

template <typename T>
LatentVolume<T> QueryGuidedFusion<T>::embed(const CostVolume<T>& cost, Stream stream) const {
    const Shape& s = cost.values.shape();
    if (s.size() != 3) {
        throw ContractError("cost volume must be h x w x N, got " + shape_str(s));
    }
    auto m = reshape(permute(cost.values, {2, 0, 1}), {s[2], 1, s[0], s[1]});
    const auto* wt = stream == Stream::Generalist ? embed_g_weight_ : embed_s_weight_;
    const auto* b = stream == Stream::Generalist ? embed_g_bias_ : embed_s_bias_;
    return {sigmoid(conv2d(m, wt->var, b->var, 1, 3))};
}

template <typename T>
LatentVolume<T> QueryGuidedFusion<T>::fuse(const LatentVolume<T>& zg, const LatentVolume<T>& zs) const {
    if (zg.values.shape() != zs.values.shape()) {
        throw ContractError("fuse: latent volumes differ: " + shape_str(zg.values.shape()) + " vs " +
                            shape_str(zs.values.shape()));
    }
    auto cat = concat<T>({zg.values, zs.values}, 1);
    return {add(sigmoid(conv2d(cat, fuse_weight_->var, fuse_bias_->var, 1, 3)), zg.values)};
}

template CostVolume<float> compute_cost_volume(const Var<float>&, const Var<float>&, Stream);
template CostVolume<double> compute_cost_volume(const Var<double>&, const Var<double>&, Stream);
template class QueryGuidedFusion<float>;
template class QueryGuidedFusion<double>;

}  // namespace gsnet
