#pragma once

#include <functional>
#include <map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gsnet/mask.hpp"
#include "gsnet/model.hpp"

namespace gsnet {

struct TrainConfig {
    double lr_backbone = 2e-6;
    double lr_head = 2e-4;
    int iterations = 30000;  // toy runs use 200
    int batch_size = 4;      // toy runs use 1
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct BceLoss {
    Var<T> loss;                        // scalar, shape {1}
    std::vector<std::uint8_t> labeled;  // 1 where the pixel contributes
    std::int64_t labeled_pixels = 0;
};

/// Per-pixel multi-label BCE of H x W x N logits against one-hot targets,
/// averaged over labeled pixels and channels. Pixels equal to `unlabeled`
/// contribute neither loss nor gradient.
template <typename T>
BceLoss<T> bce_loss(const Var<T>& logits, const SegmentationMask& target, std::uint8_t unlabeled = kUnlabeled);

/// Adam moments with decoupled weight decay. Parameters of the Head group use
/// lr_head; both backbone groups use lr_backbone. Frozen parameters are
/// skipped entirely.
template <typename T>
class AdamW {
public:
    explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
    void step(ParameterStore<T>& store);
    std::int64_t steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    TrainConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

template <typename T>
struct Sample {
    Tensor<T> image;  // 3 x H x W
    SegmentationMask mask;
};

/// One optimizer step on a batch; the loss is the batch mean. Throws
/// NumericError (with the step's loss) if the loss is not finite.
template <typename T>
double train_step(GSNet<T>& model, AdamW<T>& opt, const std::vector<const Sample<T>*>& batch,
                  const QuerySet& queries);

struct PatchPlan {
    int resize_to = 0;  // R
    int patch = 0;      // P
    int stride = 0;     // S
    std::vector<std::pair<int, int>> origins;  // (row, col), row-major

    std::vector<int> axis_origins() const;
    /// Throws ContractError if some canvas pixel is not covered.
    void validate() const;
};

/// Origins {0, S, 2S, ...} per axis plus a final R - P. With stride 0 the
/// smallest patch count that covers the canvas is chosen and S spreads the
/// patches evenly.
PatchPlan make_plan(int resize_to, int patch, int stride = 0);

/// Predicts 3 x P x P patches into P x P x N logits.
template <typename T>
using PatchPredictor = std::function<Tensor<T>(const Tensor<T>& patch)>;

/// Resize to R x R, predict every patch, average logits on overlaps, resize
/// back to H x W. Returns H x W x N.
template <typename T>
Tensor<T> patch_inference(const Tensor<T>& image, const PatchPredictor<T>& predictor, const PatchPlan& plan);

/// Bilinear resize of a 3 x H x W image or an H x W x N logit volume.
template <typename T>
Tensor<T> resize_image(const Tensor<T>& image, std::int64_t h, std::int64_t w);
template <typename T>
Tensor<T> resize_logits(const Tensor<T>& logits, std::int64_t h, std::int64_t w);

/// Nearest-neighbour resize for masks.
SegmentationMask resize_mask(const SegmentationMask& mask, std::int64_t h, std::int64_t w);

/// Per-pixel argmax over the query axis; ties go to the lowest index.
template <typename T>
SegmentationMask predict_labels(const Tensor<T>& logits);

}  // namespace gsnet
