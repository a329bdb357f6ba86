#include "gsnet/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "gsnet/parallel.hpp"

namespace gsnet {

void TrainConfig::validate() const {
    if (!(lr_backbone > 0) || !(lr_head > 0)) {
        throw ConfigError("learning rates must be positive");
    }
    if (iterations < 1 || batch_size < 1) {
        throw ConfigError("iterations and batch_size must be >= 1");
    }
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0) || weight_decay < 0) {
        throw ConfigError("invalid optimizer hyper-parameters");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr_backbone", lr_backbone}, {"lr_head", lr_head}, {"iterations", iterations},
            {"batch_size", batch_size},   {"beta1", beta1},     {"beta2", beta2},
            {"eps", eps},                 {"weight_decay", weight_decay}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.lr_backbone = j.value("lr_backbone", c.lr_backbone);
        c.lr_head = j.value("lr_head", c.lr_head);
        c.iterations = j.value("iterations", c.iterations);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad training config: ") + e.what());
    }
    c.validate();
    return c;
}

template <typename T>
BceLoss<T> bce_loss(const Var<T>& logits, const SegmentationMask& target, std::uint8_t unlabeled) {
    const Shape& s = logits.shape();
    if (s.size() != 3 || s[0] != target.height || s[1] != target.width) {
        throw ContractError("bce_loss: logits " + shape_str(s) + " do not match mask " +
                            std::to_string(target.height) + "x" + std::to_string(target.width));
    }
    const std::int64_t n = s[2];
    const std::size_t pixels = target.size();
    BceLoss<T> out;
    out.labeled.assign(pixels, 0);
    for (std::size_t p = 0; p < pixels; ++p) {
        const auto c = target.indices[p];
        if (c == unlabeled) {
            continue;
        }
        if (c >= n) {
            throw ContractError("bce_loss: class index " + std::to_string(c) + " outside [0, " + std::to_string(n) +
                                ")");
        }
        out.labeled[p] = 1;
        ++out.labeled_pixels;
    }
    const auto& x = logits.value();
    const double denom = static_cast<double>(out.labeled_pixels * n);
    double total = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
        if (!out.labeled[p]) {
            continue;
        }
        for (std::int64_t k = 0; k < n; ++k) {
            const double v = x[p * static_cast<std::size_t>(n) + static_cast<std::size_t>(k)];
            const double y = target.indices[p] == k ? 1.0 : 0.0;
            total += std::max(v, 0.0) - v * y + std::log1p(std::exp(-std::abs(v)));
        }
    }
    const T value = out.labeled_pixels == 0 ? T(0) : static_cast<T>(total / denom);
    auto labeled = out.labeled;
    auto classes = target.indices;
    out.loss = make_result<T>(Tensor<T>({1}, {value}), "bce", {logits},
                              [labeled, classes, n, denom](Node<T>& self) {
                                  const auto& xv = self.parents[0]->value;
                                  Tensor<T> g(xv.shape());
                                  if (denom > 0) {
                                      const double scale = static_cast<double>(self.grad[0]) / denom;
                                      for (std::size_t p = 0; p < labeled.size(); ++p) {
                                          if (!labeled[p]) {
                                              continue;
                                          }
                                          for (std::int64_t k = 0; k < n; ++k) {
                                              const std::size_t i = p * static_cast<std::size_t>(n) + static_cast<std::size_t>(k);
                                              const double v = xv[i];
                                              const double sig = v >= 0 ? 1 / (1 + std::exp(-v))
                                                                        : std::exp(v) / (1 + std::exp(v));
                                              g[i] = static_cast<T>((sig - (classes[p] == k ? 1.0 : 0.0)) * scale);
                                          }
                                      }
                                  }
                                  self.parents[0]->accumulate(g);
                              });
    return out;
}

template <typename T>
void AdamW<T>::step(ParameterStore<T>& store) {
    ++t_;
    const double bc1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : store.trainable()) {
        const double lr = p->group == ParamGroup::Head ? cfg_.lr_head : cfg_.lr_backbone;
        auto& mom = state_[p->name];
        Tensor<T>& w = p->mutable_value();
        if (mom.m.empty()) {
            mom.m.assign(w.size(), 0.0);
            mom.v.assign(w.size(), 0.0);
        }
        const bool has = p->var.has_grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = has ? static_cast<double>(p->var.grad()[i]) : 0.0;
            double x = static_cast<double>(w[i]);
            x -= lr * cfg_.weight_decay * x;
            mom.m[i] = cfg_.beta1 * mom.m[i] + (1 - cfg_.beta1) * g;
            mom.v[i] = cfg_.beta2 * mom.v[i] + (1 - cfg_.beta2) * g * g;
            x -= lr * (mom.m[i] / bc1) / (std::sqrt(mom.v[i] / bc2) + cfg_.eps);
            w[i] = static_cast<T>(x);
        }
    }
}

template <typename T>
double train_step(GSNet<T>& model, AdamW<T>& opt, const std::vector<const Sample<T>*>& batch,
                  const QuerySet& queries) {
    if (batch.empty()) {
        throw ContractError("train_step: empty batch");
    }
    model.params().zero_grad();
    const auto q = GSNet<T>::query_var(queries);
    const T weight = T(1) / static_cast<T>(batch.size());
    double total = 0;
    try {
        for (const auto* sample : batch) {
            auto logits = model.forward(Var<T>::constant(sample->image), q);
            auto loss = bce_loss(logits, sample->mask);
            total += static_cast<double>(loss.loss.value()[0]);
            if (loss.loss.requires_grad()) {
                backward(loss.loss, Tensor<T>({1}, {weight}));
            }
        }
    } catch (const NumericError& e) {
        std::ostringstream msg;
        msg << "training aborted at step " << opt.steps() + 1 << ": " << e.what();
        throw NumericError(msg.str());
    }
    const double mean = total / static_cast<double>(batch.size());
    if (!std::isfinite(mean)) {
        std::ostringstream msg;
        msg << "training aborted at step " << opt.steps() + 1 << ": loss is " << mean;
        throw NumericError(msg.str());
    }
    opt.step(model.params());
    return mean;
}

std::vector<int> PatchPlan::axis_origins() const {
    std::vector<int> out;
    for (const auto& [r, c] : origins) {
        if (c == origins.front().second) {
            out.push_back(r);
        }
    }
    return out;
}

void PatchPlan::validate() const {
    if (patch < 1 || patch > resize_to) {
        throw ContractError("patch plan: need 1 <= P <= R, got P=" + std::to_string(patch) +
                            " R=" + std::to_string(resize_to));
    }
    std::vector<int> cover(static_cast<std::size_t>(resize_to) * static_cast<std::size_t>(resize_to), 0);
    for (const auto& [r, c] : origins) {
        if (r < 0 || c < 0 || r + patch > resize_to || c + patch > resize_to) {
            throw ContractError("patch plan: origin (" + std::to_string(r) + ", " + std::to_string(c) +
                                ") leaves the canvas");
        }
        for (int i = r; i < r + patch; ++i) {
            for (int j = c; j < c + patch; ++j) {
                cover[static_cast<std::size_t>(i * resize_to + j)] = 1;
            }
        }
    }
    for (std::size_t i = 0; i < cover.size(); ++i) {
        if (!cover[i]) {
            throw ContractError("patch plan rejected: coverage gap at canvas pixel (" +
                                std::to_string(i / static_cast<std::size_t>(resize_to)) + ", " +
                                std::to_string(i % static_cast<std::size_t>(resize_to)) + ")");
        }
    }
}

PatchPlan make_plan(int resize_to, int patch, int stride) {
    if (patch < 1 || patch > resize_to) {
        throw ContractError("patch plan: need 1 <= P <= R, got P=" + std::to_string(patch) +
                            " R=" + std::to_string(resize_to));
    }
    if (stride < 0) {
        throw ContractError("patch plan: negative stride");
    }
    const int span = resize_to - patch;
    if (stride == 0) {
        const int n = span == 0 ? 1 : (span + patch - 1) / patch + 1;
        stride = n == 1 ? patch : (span + n - 2) / (n - 1);
    }
    std::vector<int> axis;
    for (int o = 0; o < span; o += stride) {
        axis.push_back(o);
    }
    axis.push_back(span);
    PatchPlan plan{resize_to, patch, stride, {}};
    for (int r : axis) {
        for (int c : axis) {
            plan.origins.emplace_back(r, c);
        }
    }
    plan.validate();
    return plan;
}

template <typename T>
Tensor<T> resize_image(const Tensor<T>& image, std::int64_t h, std::int64_t w) {
    if (image.rank() != 3) {
        throw ContractError("resize_image: expected C x H x W, got " + shape_str(image.shape()));
    }
    if (image.dim(1) == h && image.dim(2) == w) {
        return image;
    }
    NoGradGuard guard;
    auto x = ops::reshape(Var<T>::constant(image), {1, image.dim(0), image.dim(1), image.dim(2)});
    return ops::reshape(ops::bilinear_resize(x, h, w), {image.dim(0), h, w}).value();
}

template <typename T>
Tensor<T> resize_logits(const Tensor<T>& logits, std::int64_t h, std::int64_t w) {
    if (logits.rank() != 3) {
        throw ContractError("resize_logits: expected H x W x N, got " + shape_str(logits.shape()));
    }
    if (logits.dim(0) == h && logits.dim(1) == w) {
        return logits;
    }
    NoGradGuard guard;
    const auto n = logits.dim(2);
    auto x = ops::reshape(ops::permute(Var<T>::constant(logits), {2, 0, 1}), {1, n, logits.dim(0), logits.dim(1)});
    return ops::permute(ops::reshape(ops::bilinear_resize(x, h, w), {n, h, w}), {1, 2, 0}).value();
}

SegmentationMask resize_mask(const SegmentationMask& mask, std::int64_t h, std::int64_t w) {
    SegmentationMask out(h, w);
    for (std::int64_t r = 0; r < h; ++r) {
        const auto sr = std::min(mask.height - 1, (2 * r + 1) * mask.height / (2 * h));
        for (std::int64_t c = 0; c < w; ++c) {
            const auto sc = std::min(mask.width - 1, (2 * c + 1) * mask.width / (2 * w));
            out.at(r, c) = mask.at(sr, sc);
        }
    }
    return out;
}

template <typename T>
Tensor<T> patch_inference(const Tensor<T>& image, const PatchPredictor<T>& predictor, const PatchPlan& plan) {
    plan.validate();
    if (image.rank() != 3) {
        throw ContractError("patch_inference: expected 3 x H x W, got " + shape_str(image.shape()));
    }
    const std::int64_t ch = image.dim(0), r = plan.resize_to, p = plan.patch;
    const Tensor<T> canvas = resize_image(image, r, r);

    std::vector<Tensor<T>> preds(plan.origins.size());
    parallel_for(0, static_cast<std::int64_t>(plan.origins.size()), [&](std::int64_t k) {
        const auto [oy, ox] = plan.origins[static_cast<std::size_t>(k)];
        Tensor<T> crop({ch, p, p});
        for (std::int64_t c = 0; c < ch; ++c) {
            for (std::int64_t i = 0; i < p; ++i) {
                const T* src = canvas.data() + (c * r + oy + i) * r + ox;
                std::copy(src, src + p, crop.data() + (c * p + i) * p);
            }
        }
        auto out = predictor(crop);
        if (out.rank() != 3 || out.dim(0) != p || out.dim(1) != p) {
            throw ContractError("patch predictor returned " + shape_str(out.shape()) + " for a " + std::to_string(p) +
                                "-pixel patch");
        }
        preds[static_cast<std::size_t>(k)] = std::move(out);
    });

    const std::int64_t n = preds.front().dim(2);
    Tensor<double> sum({r, r, n});
    std::vector<int> count(static_cast<std::size_t>(r * r), 0);
    for (std::size_t k = 0; k < preds.size(); ++k) {
        if (preds[k].dim(2) != n) {
            throw ContractError("patch predictor changed the query count between patches");
        }
        const auto [oy, ox] = plan.origins[k];
        for (std::int64_t i = 0; i < p; ++i) {
            for (std::int64_t j = 0; j < p; ++j) {
                const std::int64_t cell = (oy + i) * r + ox + j;
                ++count[static_cast<std::size_t>(cell)];
                for (std::int64_t q = 0; q < n; ++q) {
                    sum[static_cast<std::size_t>(cell * n + q)] +=
                        static_cast<double>(preds[k][static_cast<std::size_t>((i * p + j) * n + q)]);
                }
            }
        }
    }
    Tensor<T> merged({r, r, n});
    for (std::size_t i = 0; i < merged.size(); ++i) {
        merged[i] = static_cast<T>(sum[i] / count[i / static_cast<std::size_t>(n)]);
    }
    return resize_logits(merged, image.dim(1), image.dim(2));
}

template <typename T>
SegmentationMask predict_labels(const Tensor<T>& logits) {
    if (logits.rank() != 3 || logits.dim(2) < 1) {
        throw ContractError("predict_labels: expected H x W x N logits with N >= 1, got " + shape_str(logits.shape()));
    }
    if (logits.dim(2) > kUnlabeled) {
        throw ContractError("predict_labels: at most 255 queries fit in a mask");
    }
    const auto h = logits.dim(0), w = logits.dim(1), n = logits.dim(2);
    SegmentationMask out(h, w);
    for (std::int64_t i = 0; i < h * w; ++i) {
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < n; ++k) {
            if (logits[static_cast<std::size_t>(i * n + k)] > logits[static_cast<std::size_t>(i * n + best)]) {
                best = k;
            }
        }
        out.indices[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
    }
    return out;
}

#define GSNET_INSTANTIATE_PIPELINE(T)                                                                          \
    template BceLoss<T> bce_loss(const Var<T>&, const SegmentationMask&, std::uint8_t);                       \
    template class AdamW<T>;                                                                                  \
    template double train_step(GSNet<T>&, AdamW<T>&, const std::vector<const Sample<T>*>&, const QuerySet&); \
    template Tensor<T> patch_inference(const Tensor<T>&, const PatchPredictor<T>&, const PatchPlan&);         \
    template Tensor<T> resize_image(const Tensor<T>&, std::int64_t, std::int64_t);                             \
    template Tensor<T> resize_logits(const Tensor<T>&, std::int64_t, std::int64_t);                            \
    template SegmentationMask predict_labels(const Tensor<T>&);

GSNET_INSTANTIATE_PIPELINE(float)
GSNET_INSTANTIATE_PIPELINE(double)

}  // namespace gsnet
