#include "gsnet/model.hpp"

namespace gsnet {

template <typename T>
GSNet<T>::GSNet(const ModelConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      rng_(cfg.seed),
      generalist_(cfg_, store_, rng_),
      specialist_(cfg_, store_, rng_),
      fusion_(cfg_, store_, rng_),
      decoder_(cfg_, store_, rng_) {
    apply_policies();
}

template <typename T>
void GSNet<T>::apply_policies() {
    apply_policy(store_, ParamGroup::Generalist, cfg_.generalist.policy);
    apply_policy(store_, ParamGroup::Specialist, cfg_.specialist.policy);
    for (auto* p : store_.all()) {
        if (p->group == ParamGroup::Head) {
            p->set_trainable(true);
        }
    }
}

template <typename T>
Var<T> GSNet<T>::head(const FeaturePyramid<T>& g, const FeaturePyramid<T>& s, const Var<T>& queries) const {
    if (g.final.shape() != s.final.shape()) {
        throw ContractError("generalist and aligned specialist features differ: " + shape_str(g.final.shape()) +
                            " vs " + shape_str(s.final.shape()));
    }
    auto mg = compute_cost_volume(g.final, queries, Stream::Generalist);
    auto ms = compute_cost_volume(s.final, queries, Stream::Specialist);
    auto zg = fusion_.embed(mg, Stream::Generalist);
    auto zs = fusion_.embed(ms, Stream::Specialist);
    auto zf = fusion_.fuse(zg, zs);
    return decoder_.predict(zf, g, s);
}

template <typename T>
Var<T> GSNet<T>::forward(const Var<T>& image, const Var<T>& queries) const {
    const Shape& s = image.shape();
    if (s.size() != 3 || s[0] != 3) {
        throw ContractError("image must be 3 x H x W, got " + shape_str(s));
    }
    check_image_extent(s[1], s[2]);
    return head(encode_generalist(image), encode_specialist(image), queries);
}

template <typename T>
Tensor<T> GSNet<T>::infer(const Tensor<T>& image, const QuerySet& queries) const {
    NoGradGuard guard;
    return forward(Var<T>::constant(image), query_var(queries)).value();
}

template <typename T>
Var<T> GSNet<T>::query_var(const QuerySet& queries) {
    queries.validate();
    return Var<T>::constant(queries.embeddings.template cast<T>());
}

template class GSNet<float>;
template class GSNet<double>;

}  // namespace gsnet
