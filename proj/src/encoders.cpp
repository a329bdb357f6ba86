#include "gsnet/encoders.hpp"

#include <cmath>

namespace gsnet {

using namespace ops;

template <typename T>
const Var<T>& FeaturePyramid<T>::tap(int layer) const {
    auto it = taps.find(layer);
    if (it == taps.end()) {
        throw ContractError("missing encoder tap for layer " + std::to_string(layer));
    }
    return it->second;
}

void check_image_extent(std::int64_t h, std::int64_t w) {
    if (h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0) {
        throw ContractError("image extent " + std::to_string(h) + "x" + std::to_string(w) +
                            " is not a positive multiple of 16");
    }
}

template <typename T>
Var<T> to_nchw(const Var<T>& hwc) {
    const Shape& s = hwc.shape();
    if (s.size() != 3) {
        throw ContractError("expected an h x w x C map, got " + shape_str(s));
    }
    return reshape(permute(hwc, {2, 0, 1}), {1, s[2], s[0], s[1]});
}

template <typename T>
Var<T> to_hwc(const Var<T>& nchw) {
    const Shape& s = nchw.shape();
    if (s.size() != 4 || s[0] != 1) {
        throw ContractError("expected a 1 x C x h x w map, got " + shape_str(s));
    }
    return permute(reshape(nchw, {s[1], s[2], s[3]}), {1, 2, 0});
}

template <typename T>
BlockParams<T> BlockParams<T>::create(ParameterStore<T>& store, const std::string& prefix, int width, int mlp_ratio,
                                      ParamGroup group, Rng& rng) {
    const std::int64_t w = width;
    const std::int64_t hidden = w * mlp_ratio;
    auto mk = [&](const std::string& name, Shape shape, Init init) {
        return &store.create(prefix + name, std::move(shape), group, init, rng);
    };
    BlockParams p{};
    p.ln1_gamma = mk(".ln1.gamma", {w}, Init::Ones);
    p.ln1_beta = mk(".ln1.beta", {w}, Init::Zeros);
    p.q_weight = mk(".attn.q.weight", {w, w}, Init::TruncNormal);
    p.q_bias = mk(".attn.q.bias", {w}, Init::Zeros);
    p.k_weight = mk(".attn.k.weight", {w, w}, Init::TruncNormal);
    p.k_bias = mk(".attn.k.bias", {w}, Init::Zeros);
    p.v_weight = mk(".attn.v.weight", {w, w}, Init::TruncNormal);
    p.v_bias = mk(".attn.v.bias", {w}, Init::Zeros);
    p.out_weight = mk(".attn.out.weight", {w, w}, Init::TruncNormal);
    p.out_bias = mk(".attn.out.bias", {w}, Init::Zeros);
    p.ln2_gamma = mk(".ln2.gamma", {w}, Init::Ones);
    p.ln2_beta = mk(".ln2.beta", {w}, Init::Zeros);
    p.fc1_weight = mk(".mlp.fc1.weight", {w, hidden}, Init::TruncNormal);
    p.fc1_bias = mk(".mlp.fc1.bias", {hidden}, Init::Zeros);
    p.fc2_weight = mk(".mlp.fc2.weight", {hidden, w}, Init::TruncNormal);
    p.fc2_bias = mk(".mlp.fc2.bias", {w}, Init::Zeros);
    return p;
}

template <typename T>
Var<T> transformer_block(const Var<T>& tokens, const BlockParams<T>& p, int heads, Tensor<T>* attention) {
    const Shape& s = tokens.shape();
    if (s.size() != 2 || s[1] != p.q_weight->value().dim(0)) {
        throw ContractError("transformer block expects L x width tokens, got " + shape_str(s));
    }
    const std::int64_t len = s[0], width = s[1];
    const std::int64_t hd = width / heads;

    auto h = layer_norm(tokens, p.ln1_gamma->var, p.ln1_beta->var);
    auto q = linear(h, p.q_weight->var, p.q_bias->var);
    auto k = linear(h, p.k_weight->var, p.k_bias->var);
    auto v = linear(h, p.v_weight->var, p.v_bias->var);
    // L x width -> heads x L x hd (keys as heads x hd x L)
    q = permute(reshape(q, {len, heads, hd}), {1, 0, 2});
    k = permute(reshape(k, {len, heads, hd}), {1, 2, 0});
    v = permute(reshape(v, {len, heads, hd}), {1, 0, 2});
    auto scores = scale(matmul(q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
    auto attn = softmax_lastdim(scores);
    if (attention) {
        *attention = attn.value();
    }
    auto ctx = reshape(permute(matmul(attn, v), {1, 0, 2}), {len, width});
    auto x = add(tokens, linear(ctx, p.out_weight->var, p.out_bias->var));

    auto m = layer_norm(x, p.ln2_gamma->var, p.ln2_beta->var);
    m = linear(gelu(linear(m, p.fc1_weight->var, p.fc1_bias->var)), p.fc2_weight->var, p.fc2_bias->var);
    return add(x, m);
}

template <typename T>
VisionTransformer<T>::VisionTransformer(std::string prefix, const EncoderConfig& cfg, int image_size,
                                        ParamGroup group, ParameterStore<T>& store, Rng& rng)
    : prefix_(std::move(prefix)), cfg_(cfg), init_grid_(image_size / cfg.patch_stride) {
    const std::int64_t w = cfg.width, s = cfg.patch_stride;
    patch_weight_ = &store.create(prefix_ + ".patch.weight", {w, 3, s, s}, group, Init::KaimingUniform, rng, 3 * s * s);
    patch_bias_ = &store.create(prefix_ + ".patch.bias", {w}, group, Init::Zeros, rng);
    cls_token_ = &store.create(prefix_ + ".cls_token", {1, w}, group, Init::TruncNormal, rng);
    pos_cls_ = &store.create(prefix_ + ".pos_cls", {1, w}, group, Init::TruncNormal, rng);
    pos_grid_ = &store.create(prefix_ + ".pos_grid", {init_grid_ * init_grid_, w}, group, Init::TruncNormal, rng);
    for (int i = 0; i < cfg.depth; ++i) {
        blocks_.push_back(
            BlockParams<T>::create(store, prefix_ + ".blocks." + std::to_string(i), cfg.width, cfg.mlp_ratio, group, rng));
    }
    ln_gamma_ = &store.create(prefix_ + ".ln_final.gamma", {w}, group, Init::Ones, rng);
    ln_beta_ = &store.create(prefix_ + ".ln_final.beta", {w}, group, Init::Zeros, rng);
}

template <typename T>
typename VisionTransformer<T>::Output VisionTransformer<T>::forward(const Var<T>& image) const {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[0] != 3) {
        throw ContractError("image must be 3 x H x W, got " + shape_str(s));
    }
    check_image_extent(s[1], s[2]);
    const std::int64_t stride = cfg_.patch_stride;
    const std::int64_t gh = s[1] / stride, gw = s[2] / stride, width = cfg_.width;

    auto patches = conv2d(reshape(image, {1, 3, s[1], s[2]}), patch_weight_->var, patch_bias_->var,
                          static_cast<int>(stride), 0);
    auto tokens = permute(reshape(patches, {width, gh * gw}), {1, 0});

    Var<T> pos = pos_grid_->var;
    if (gh != init_grid_ || gw != init_grid_) {
        auto grid = to_nchw(reshape(pos, {init_grid_, init_grid_, width}));
        pos = reshape(to_hwc(bilinear_resize(grid, gh, gw)), {gh * gw, width});
    }
    tokens = add(tokens, pos);
    auto cls = add(cls_token_->var, pos_cls_->var);
    auto x = concat<T>({cls, tokens}, 0);

    Output out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        x = transformer_block(x, blocks_[i], cfg_.heads);
        const int layer = static_cast<int>(i) + 1;
        if (layer == cfg_.tap_n1 || layer == cfg_.tap_n2) {
            out.taps[layer] = reshape(slice(x, 0, 1, gh * gw), {gh, gw, width});
        }
    }
    x = layer_norm(x, ln_gamma_->var, ln_beta_->var);
    out.tokens = reshape(slice(x, 0, 1, gh * gw), {gh, gw, width});
    return out;
}

template <typename T>
GeneralistEncoder<T>::GeneralistEncoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng)
    : vit_("generalist", cfg.generalist, cfg.image_size, ParamGroup::Generalist, store, rng) {
    const std::int64_t w = cfg.generalist.width, d = cfg.embed_dim;
    proj_weight_ = &store.create("generalist_proj.weight", {w, d}, ParamGroup::Head, Init::TruncNormal, rng);
    proj_bias_ = &store.create("generalist_proj.bias", {d}, ParamGroup::Head, Init::Zeros, rng);
}

template <typename T>
FeaturePyramid<T> GeneralistEncoder<T>::forward(const Var<T>& image) const {
    auto out = vit_.forward(image);
    FeaturePyramid<T> fp;
    fp.final = linear(out.tokens, proj_weight_->var, proj_bias_->var);
    fp.taps = std::move(out.taps);
    return fp;
}

template <typename T>
SpecialistEncoder<T>::SpecialistEncoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng)
    : vit_("specialist", cfg.specialist, cfg.image_size, ParamGroup::Specialist, store, rng) {
    const std::int64_t w = cfg.specialist.width, d = cfg.embed_dim;
    align_weight_ =
        &store.create("specialist_align.weight", {d, w, 2, 2}, ParamGroup::Head, Init::KaimingUniform, rng, w * 4);
    align_bias_ = &store.create("specialist_align.bias", {d}, ParamGroup::Head, Init::Zeros, rng);
}

template <typename T>
Var<T> SpecialistEncoder<T>::align(const Var<T>& native) const {
    return to_hwc(conv2d(to_nchw(native), align_weight_->var, align_bias_->var, 2, 0));
}

template <typename T>
FeaturePyramid<T> SpecialistEncoder<T>::forward(const Var<T>& image) const {
    auto out = vit_.forward(image);
    FeaturePyramid<T> fp;
    fp.final = align(out.tokens);
    fp.taps = std::move(out.taps);
    return fp;
}

template <typename T>
std::size_t apply_policy(ParameterStore<T>& store, ParamGroup stream, TrainPolicy policy) {
    std::size_t count = 0;
    for (auto* p : store.all()) {
        if (p->group != stream) {
            continue;
        }
        bool on = false;
        switch (policy) {
            case TrainPolicy::Freeze:
                break;
            case TrainPolicy::Full:
                on = true;
                break;
            case TrainPolicy::AttentionQV:
                on = p->name.find(".attn.q.") != std::string::npos || p->name.find(".attn.v.") != std::string::npos;
                break;
        }
        p->set_trainable(on);
        count += on ? 1 : 0;
    }
    return count;
}

template struct FeaturePyramid<float>;
template struct FeaturePyramid<double>;
template struct BlockParams<float>;
template struct BlockParams<double>;
template Var<float> transformer_block(const Var<float>&, const BlockParams<float>&, int, Tensor<float>*);
template Var<double> transformer_block(const Var<double>&, const BlockParams<double>&, int, Tensor<double>*);
template class VisionTransformer<float>;
template class VisionTransformer<double>;
template class GeneralistEncoder<float>;
template class GeneralistEncoder<double>;
template class SpecialistEncoder<float>;
template class SpecialistEncoder<double>;
template std::size_t apply_policy(ParameterStore<float>&, ParamGroup, TrainPolicy);
template std::size_t apply_policy(ParameterStore<double>&, ParamGroup, TrainPolicy);
template Var<float> to_nchw(const Var<float>&);
template Var<double> to_nchw(const Var<double>&);
template Var<float> to_hwc(const Var<float>&);
template Var<double> to_hwc(const Var<double>&);

}  // namespace gsnet
