#pragma once

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gsnet/mask.hpp"
#include "gsnet/text_embed.hpp"

namespace gsnet {

class MetricError : public Error {
public:
    using Error::Error;
};

/// counts[g * n + p]: pixels with ground truth g predicted as p.
struct ConfusionMatrix {
    std::int64_t classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(std::int64_t n = 0) : classes(n), counts(static_cast<std::size_t>(n * n), 0) {}
    std::int64_t at(std::int64_t gt, std::int64_t pred) const { return counts[static_cast<std::size_t>(gt * classes + pred)]; }
    std::int64_t total() const;
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

/// Adds every pixel whose ground truth is not kUnlabeled.
void accumulate(const SegmentationMask& pred, const SegmentationMask& gt, ConfusionMatrix& cm);

struct MiouResult {
    double miou = 0;
    std::vector<std::optional<double>> per_class;  // empty when excluded or zero union
};

/// IoU_c = tp / (tp + fp + fn). Classes in `exclude` and classes with zero
/// union are left out of the mean; throws MetricError if none remain.
MiouResult miou(const ConfusionMatrix& cm, const std::set<std::int64_t>& exclude = {});

/// Symmetric Hausdorff distance between the two sets of embedding rows, with
/// cosine distance 1 - cos on L2-normalized rows.
double hausdorff_label_similarity(const QuerySet& a, const QuerySet& b);

/// Rows of (dataset, mIoU) in the order given. Columns follow that order and
/// end with "Avg.", the arithmetic mean.
std::string format_report_text(const std::vector<std::pair<std::string, double>>& results,
                               const std::string& method = "GSNet");
std::string format_report_csv(const std::vector<std::pair<std::string, double>>& results,
                              const std::string& method = "GSNet");

}  // namespace gsnet
