#ifndef MVGD_LOSSES_HPP
#define MVGD_LOSSES_HPP

#include "mvgd/decoder.hpp"
#include "mvgd/image.hpp"

namespace mvgd {

struct LossReport {
    double l_p = 0.0;
    double l_m = 0.0;
    double total = 0.0;
    std::array<double, 3> per_frame{};
};

// mean over pixels of -[g ln p + (1-g) ln(1-p)], predictions clamped to [eps, 1-eps]
Tensor bce(const Tensor& pred, const Mask& gt, double eps = 1e-7);

// 1 - sum(p*g) / (sum p + sum g - sum(p*g)); empty pred and gt give 0
Tensor soft_iou(const Tensor& pred, const Mask& gt);

struct TotalLoss {
    Tensor total;  // alpha * l_p + l_m, scalar graph node
    LossReport report;
};

TotalLoss total_loss(const Tensor& primary, const std::array<Tensor, 3>& masks,
                     const std::array<Mask, 3>& gts, const Mask& gt_primary, double alpha);

std::string loss_log_line(int step, const LossReport& r);

}  // namespace mvgd

#endif
