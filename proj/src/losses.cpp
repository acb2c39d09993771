#include "mvgd/losses.hpp"

#include <sstream>

namespace mvgd {

namespace {
void check_shapes(const Tensor& pred, const Mask& gt, const char* op) {
    check(pred.ndim() == 2, std::string(op) + ": prediction must be [H,W]");
    check(pred.dim(0) == gt.h && pred.dim(1) == gt.w,
          std::string(op) + ": prediction/gt shape mismatch");
}
}  // namespace

Tensor bce(const Tensor& pred, const Mask& gt, double eps) {
    check_shapes(pred, gt, "bce");
    Tensor p = clamp(pred, eps, 1.0 - eps);
    Tensor g = Tensor::from_array(pred.shape(), gt.v);
    Tensor pos = mul(g, log_t(p));
    Tensor neg_term = mul(scalar_sub(1.0, g), log_t(scalar_sub(1.0, p)));
    return neg(mean(add(pos, neg_term)));
}

Tensor soft_iou(const Tensor& pred, const Mask& gt) {
    check_shapes(pred, gt, "soft_iou");
    if (pred.value().sum() == 0.0 && gt.v.sum() == 0.0) return Tensor::constant({1}, 0.0);
    Tensor g = Tensor::from_array(pred.shape(), gt.v);
    Tensor inter = sum(mul(pred, g));
    Tensor uni = sub(add(sum(pred), sum(g)), inter);
    return scalar_sub(1.0, div(inter, uni));
}

TotalLoss total_loss(const Tensor& primary, const std::array<Tensor, 3>& masks,
                     const std::array<Mask, 3>& gts, const Mask& gt_primary, double alpha) {
    check(alpha > 0.0, "total_loss: alpha must be positive");
    Tensor lp = add(bce(primary, gt_primary), soft_iou(primary, gt_primary));
    Tensor lm;
    TotalLoss out;
    for (int t = 0; t < 3; ++t) {
        Tensor lt = add(bce(masks[t], gts[t]), soft_iou(masks[t], gts[t]));
        out.report.per_frame[t] = lt.item();
        lm = t == 0 ? lt : add(lm, lt);
    }
    out.total = add(mul_scalar(lp, alpha), lm);
    out.report.l_p = lp.item();
    out.report.l_m = lm.item();
    out.report.total = out.total.item();
    return out;
}

std::string loss_log_line(int step, const LossReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "step=" << step << " l_p=" << r.l_p << " l_m=" << r.l_m << " total=" << r.total
       << " per_frame=" << r.per_frame[0] << "," << r.per_frame[1] << "," << r.per_frame[2];
    return os.str();
}

}  // namespace mvgd
