#include "gsnet/ripd.hpp"

namespace gsnet {

using namespace ops;

template <typename T>
Var<T> agr(const Var<T>& x, const AgrParams<T>& p, int groups) {
    auto y = conv2d(x, p.conv_weight->var, p.conv_bias->var, 1, 1);
    return relu(group_norm(y, groups, p.gn_gamma->var, p.gn_beta->var));
}

template <typename T>
ResidualDecoder<T>::ResidualDecoder(const ModelConfig& cfg, ParameterStore<T>& store, Rng& rng)
    : tap_n1_g_(cfg.generalist.tap_n1),
      tap_n2_g_(cfg.generalist.tap_n2),
      tap_n1_s_(cfg.specialist.tap_n1),
      tap_n2_s_(cfg.specialist.tap_n2),
      groups_(cfg.gn_groups) {
    const std::int64_t wg = cfg.generalist.width, ws = cfg.specialist.width;
    const std::int64_t ct = cfg.tap_dim, cd = cfg.decoder_dim, dz = cfg.latent_dim;
    auto mk = [&](const std::string& name, Shape shape, Init init, std::int64_t fan_in = 0) {
        return &store.create(name, std::move(shape), ParamGroup::Head, init, rng, fan_in);
    };
    auto deconv = [&](const std::string& name, std::int64_t ch) {
        return std::make_pair(mk(name + ".weight", {ch, ch, 2, 2}, Init::KaimingUniform, ch),
                              mk(name + ".bias", {ch}, Init::Zeros));
    };
    for (int i = 0; i < 2; ++i) {
        const std::string pre = "ripd.stage" + std::to_string(i + 1);
        Stage& st = stages_[static_cast<std::size_t>(i)];
        const int g_ups = i == 0 ? 1 : 2;
        const int s_ups = i == 0 ? 0 : 1;
        for (int u = 0; u < g_ups; ++u) {
            st.g_up.push_back(deconv(pre + ".tap_g.up" + std::to_string(u), wg));
        }
        st.g_lin_weight = mk(pre + ".tap_g.linear.weight", {wg, ct}, Init::TruncNormal);
        st.g_lin_bias = mk(pre + ".tap_g.linear.bias", {ct}, Init::Zeros);
        for (int u = 0; u < s_ups; ++u) {
            st.s_up.push_back(deconv(pre + ".tap_s.up" + std::to_string(u), ws));
        }
        st.s_lin_weight = mk(pre + ".tap_s.linear.weight", {ws, ct}, Init::TruncNormal);
        st.s_lin_bias = mk(pre + ".tap_s.linear.bias", {ct}, Init::Zeros);

        const std::int64_t cin = i == 0 ? dz : cd;
        st.up_weight = mk(pre + ".up.weight", {cin, cd, 2, 2}, Init::KaimingUniform, cin);
        st.up_bias = mk(pre + ".up.bias", {cd}, Init::Zeros);
        const std::int64_t mix_in = cd + 2 * ct;
        st.mix_weight = mk(pre + ".mix.weight", {cd, mix_in, 3, 3}, Init::KaimingUniform, mix_in * 9);
        st.mix_bias = mk(pre + ".mix.bias", {cd}, Init::Zeros);
        for (int a = 0; a < 2; ++a) {
            const std::string ap = pre + ".agr" + std::to_string(a + 1);
            st.agr[static_cast<std::size_t>(a)] = {mk(ap + ".conv.weight", {cd, cd, 3, 3}, Init::KaimingUniform, cd * 9),
                                                   mk(ap + ".conv.bias", {cd}, Init::Zeros),
                                                   mk(ap + ".gn.gamma", {cd}, Init::Ones),
                                                   mk(ap + ".gn.beta", {cd}, Init::Zeros)};
        }
    }
    head_weight_ = mk("ripd.head.weight", {1, cd, 3, 3}, Init::KaimingUniform, cd * 9);
    head_bias_ = mk("ripd.head.bias", {1}, Init::Zeros);
}

template <typename T>
const AgrParams<T>& ResidualDecoder<T>::agr_params(int stage, int which) const {
    return stages_.at(static_cast<std::size_t>(stage - 1)).agr.at(static_cast<std::size_t>(which));
}

template <typename T>
ProjectedTaps<T> ResidualDecoder<T>::project_taps(const FeaturePyramid<T>& generalist,
                                                  const FeaturePyramid<T>& specialist, int stage) const {
    if (stage != 1 && stage != 2) {
        throw ContractError("decoder stage must be 1 or 2, got " + std::to_string(stage));
    }
    const Stage& st = stages_[static_cast<std::size_t>(stage - 1)];
    auto branch = [](const Var<T>& tap, const auto& ups, const Parameter<T>* lw, const Parameter<T>* lb) {
        Var<T> x = tap;
        if (!ups.empty()) {
            auto m = to_nchw(x);
            for (const auto& [w, b] : ups) {
                m = deconv2d(m, w->var, b->var, 2, 2);
            }
            x = to_hwc(m);
        }
        return to_nchw(linear(x, lw->var, lb->var));
    };
    const Var<T>& g_tap = generalist.tap(stage == 1 ? tap_n1_g_ : tap_n2_g_);
    const Var<T>& s_tap = specialist.tap(stage == 1 ? tap_n1_s_ : tap_n2_s_);
    ProjectedTaps<T> out{branch(g_tap, st.g_up, st.g_lin_weight, st.g_lin_bias),
                         branch(s_tap, st.s_up, st.s_lin_weight, st.s_lin_bias)};
    if (out.g.dim(2) != out.s.dim(2) || out.g.dim(3) != out.s.dim(3)) {
        throw ContractError("projected taps disagree on the stage grid: " + shape_str(out.g.shape()) + " vs " +
                            shape_str(out.s.shape()));
    }
    return out;
}

template <typename T>
DecoderState<T> ResidualDecoder<T>::block(const DecoderState<T>& state, const ProjectedTaps<T>& taps) const {
    const int next = state.stage + 1;
    if (next != 1 && next != 2) {
        throw ContractError("decoder block applied at unsupported stage " + std::to_string(state.stage));
    }
    const Stage& st = stages_[static_cast<std::size_t>(next - 1)];
    auto up = deconv2d(state.z, st.up_weight->var, st.up_bias->var, 2, 2);
    const Shape& us = up.shape();
    for (const Var<T>* t : {&taps.g, &taps.s}) {
        const Shape& ts = t->shape();
        if (ts.size() != 4 || ts[0] != 1 || ts[2] != us[2] || ts[3] != us[3]) {
            throw ContractError("tap grid " + shape_str(ts) + " does not match decoder grid " + shape_str(us));
        }
    }
    const std::int64_t n = us[0];
    auto cat = concat<T>({up, repeat_batch(taps.g, n), repeat_batch(taps.s, n)}, 1);
    auto x = conv2d(cat, st.mix_weight->var, st.mix_bias->var, 1, 1);
    x = agr(x, st.agr[0], groups_);
    x = agr(x, st.agr[1], groups_);
    return {x, next};
}

template <typename T>
Var<T> ResidualDecoder<T>::predict(const LatentVolume<T>& fused, const FeaturePyramid<T>& generalist,
                                   const FeaturePyramid<T>& specialist) const {
    DecoderState<T> state{fused.values, 0};
    for (int stage = 1; stage <= 2; ++stage) {
        state = block(state, project_taps(generalist, specialist, stage));
    }
    auto logits = conv2d(state.z, head_weight_->var, head_bias_->var, 1, 1);  // N x 1 x H/4 x W/4
    const std::int64_t n = logits.dim(0), h = logits.dim(2) * 4, w = logits.dim(3) * 4;
    logits = bilinear_resize(logits, h, w);
    return permute(reshape(logits, {n, h, w}), {1, 2, 0});
}

template Var<float> agr(const Var<float>&, const AgrParams<float>&, int);
template Var<double> agr(const Var<double>&, const AgrParams<double>&, int);
template class ResidualDecoder<float>;
template class ResidualDecoder<double>;

}  // namespace gsnet
