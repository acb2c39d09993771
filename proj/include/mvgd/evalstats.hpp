#ifndef MVGD_EVALSTATS_HPP
#define MVGD_EVALSTATS_HPP

#include <vector>

#include "mvgd/image.hpp"

namespace mvgd {

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    int64_t total() const { return tp + fp + tn + fn; }
};

struct MetricsReport {
    double iou = 0, f_beta = 0, mae = 0, ber = 0, acc = 0;
    int n_frames = 0;
    // global pixel-pooled variants for comparison
    double iou_pooled = 0, f_beta_pooled = 0, ber_pooled = 0, acc_pooled = 0;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt, double tau = 0.5);

MetricsReport metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                      double tau = 0.5, double beta_sq = 0.3);

// pixelwise mean of binary masks (where-do-masks-land heatmap)
Mask location_distribution(const std::vector<Mask>& masks);

// mean over channels of half the chi-squared distance between the normalized
// 256-bin color histograms of glass vs non-glass pixels; in [0,1]
double chi2_contrast(const Image& frame, const Mask& mask, double tau = 0.5);

}  // namespace mvgd

#endif
