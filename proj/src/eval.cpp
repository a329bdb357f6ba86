#include "gsnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gsnet {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (auto c : counts) {
        s += c;
    }
    return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    if (o.classes != classes) {
        throw ContractError("cannot add confusion matrices of " + std::to_string(classes) + " and " +
                            std::to_string(o.classes) + " classes");
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i] += o.counts[i];
    }
    return *this;
}

void accumulate(const SegmentationMask& pred, const SegmentationMask& gt, ConfusionMatrix& cm) {
    check_same_extent(pred, gt, "accumulate");
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::int64_t g = gt.indices[i];
        if (g == kUnlabeled) {
            continue;
        }
        const std::int64_t p = pred.indices[i];
        if (g >= cm.classes || p >= cm.classes) {
            throw ContractError("class index " + std::to_string(std::max(g, p)) + " outside a " +
                                std::to_string(cm.classes) + "-class confusion matrix");
        }
        ++cm.counts[static_cast<std::size_t>(g * cm.classes + p)];
    }
}

MiouResult miou(const ConfusionMatrix& cm, const std::set<std::int64_t>& exclude) {
    MiouResult r;
    r.per_class.resize(static_cast<std::size_t>(cm.classes));
    double sum = 0;
    int used = 0;
    for (std::int64_t c = 0; c < cm.classes; ++c) {
        if (exclude.count(c)) {
            continue;
        }
        std::int64_t row = 0, col = 0;
        for (std::int64_t k = 0; k < cm.classes; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        const std::int64_t tp = cm.at(c, c);
        const std::int64_t uni = row + col - tp;
        if (uni == 0) {
            continue;
        }
        const double iou = static_cast<double>(tp) / static_cast<double>(uni);
        r.per_class[static_cast<std::size_t>(c)] = iou;
        sum += iou;
        ++used;
    }
    if (used == 0) {
        throw MetricError("mIoU undefined: every class is excluded or absent");
    }
    r.miou = sum / used;
    return r;
}

double hausdorff_label_similarity(const QuerySet& a, const QuerySet& b) {
    if (a.size() == 0 || b.size() == 0) {
        throw ContractError("label-set similarity needs two nonempty sets");
    }
    if (a.dim() != b.dim()) {
        throw ContractError("embedding dims differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    const auto d = static_cast<std::size_t>(a.dim());
    auto normalized = [d](const Tensor<double>& e) {
        std::vector<double> out(e.storage());
        for (std::size_t r = 0; r * d < out.size(); ++r) {
            double ss = 0;
            for (std::size_t j = 0; j < d; ++j) {
                ss += out[r * d + j] * out[r * d + j];
            }
            const double n = std::sqrt(ss);
            if (n == 0) {
                throw ContractError("label-set similarity: zero embedding row");
            }
            for (std::size_t j = 0; j < d; ++j) {
                out[r * d + j] /= n;
            }
        }
        return out;
    };
    const auto na = normalized(a.embeddings), nb = normalized(b.embeddings);
    const auto ra = static_cast<std::size_t>(a.size()), rb = static_cast<std::size_t>(b.size());
    std::vector<double> dist(ra * rb);
    for (std::size_t i = 0; i < ra; ++i) {
        for (std::size_t j = 0; j < rb; ++j) {
            double dot = 0;
            bool same = true;
            for (std::size_t k = 0; k < d; ++k) {
                dot += na[i * d + k] * nb[j * d + k];
                same = same && na[i * d + k] == nb[j * d + k];
            }
            // Identical rows are at distance exactly 0, not a rounding residue.
            dist[i * rb + j] = same ? 0.0 : std::max(0.0, 1.0 - dot);
        }
    }
    auto directed = [&](std::size_t n_outer, std::size_t n_inner, bool rows) {
        double worst = 0;
        for (std::size_t i = 0; i < n_outer; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n_inner; ++j) {
                best = std::min(best, rows ? dist[i * rb + j] : dist[j * rb + i]);
            }
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(ra, rb, true), directed(rb, ra, false));
}

namespace {

double average(const std::vector<std::pair<std::string, double>>& results) {
    if (results.empty()) {
        throw ContractError("report needs at least one result");
    }
    double s = 0;
    for (const auto& [name, v] : results) {
        s += v;
    }
    return s / static_cast<double>(results.size());
}

std::string pct(double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(2) << 100.0 * v;
    return o.str();
}

}  // namespace

std::string format_report_text(const std::vector<std::pair<std::string, double>>& results, const std::string& method) {
    const double avg = average(results);
    std::vector<std::string> head{"Method"}, row{method};
    for (const auto& [name, v] : results) {
        head.push_back(name);
        row.push_back(pct(v));
    }
    head.emplace_back("Avg.");
    row.push_back(pct(avg));
    std::ostringstream o;
    for (const auto* line : {&head, &row}) {
        for (std::size_t i = 0; i < head.size(); ++i) {
            const std::size_t w = std::max(head[i].size(), row[i].size());
            o << (i ? "  " : "") << (i ? std::right : std::left) << std::setw(static_cast<int>(w)) << (*line)[i];
        }
        o << "\n";
    }
    return o.str();
}

std::string format_report_csv(const std::vector<std::pair<std::string, double>>& results, const std::string& method) {
    const double avg = average(results);
    std::ostringstream head, row;
    head << "method";
    row << method;
    for (const auto& [name, v] : results) {
        head << "," << name;
        row << "," << pct(v);
    }
    head << ",Avg.\n";
    row << "," << pct(avg) << "\n";
    return head.str() + row.str();
}

}  // namespace gsnet
