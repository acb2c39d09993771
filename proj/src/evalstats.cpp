#include "mvgd/evalstats.hpp"

namespace mvgd {

ConfusionCounts confusion(const Mask& pred, const Mask& gt, double tau) {
    check(pred.h == gt.h && pred.w == gt.w, "confusion: shape mismatch");
    check(tau > 0.0 && tau < 1.0, "confusion: tau must lie in (0,1)");
    ConfusionCounts c;
    for (int64_t i = 0; i < pred.size(); ++i) {
        bool p = pred.v[i] >= tau;
        bool g = gt.v[i] >= 0.5;
        if (p && g) ++c.tp;
        else if (p && !g) ++c.fp;
        else if (!p && g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {
struct FrameScores {
    double iou, f_beta, ber, acc;
};

FrameScores scores_from_counts(const ConfusionCounts& c, double beta_sq) {
    FrameScores s{};
    int64_t denom_iou = c.tp + c.fp + c.fn;
    s.iou = denom_iou == 0 ? 1.0 : double(c.tp) / double(denom_iou);
    double p = c.tp + c.fp == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fp);
    double r = c.tp + c.fn == 0 ? 0.0 : double(c.tp) / double(c.tp + c.fn);
    s.f_beta = (p == 0.0 && r == 0.0) ? 0.0 : (1 + beta_sq) * p * r / (beta_sq * p + r);
    double sens = c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
    double spec = c.tn + c.fp == 0 ? 1.0 : double(c.tn) / double(c.tn + c.fp);
    s.ber = 1.0 - 0.5 * (sens + spec);
    s.acc = double(c.tp + c.tn) / double(c.total());
    return s;
}
}  // namespace

MetricsReport metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts, double tau,
                      double beta_sq) {
    check(!preds.empty(), "metrics: empty sequence");
    check(preds.size() == gts.size(), "metrics: sequence length mismatch");
    MetricsReport rep;
    rep.n_frames = static_cast<int>(preds.size());
    ConfusionCounts pooled;
    double mae_sum = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) {
        ConfusionCounts c = confusion(preds[i], gts[i], tau);
        FrameScores s = scores_from_counts(c, beta_sq);
        rep.iou += s.iou;
        rep.f_beta += s.f_beta;
        rep.ber += s.ber;
        rep.acc += s.acc;
        mae_sum += (preds[i].v - gts[i].v).abs().mean();
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.tn += c.tn;
        pooled.fn += c.fn;
    }
    double n = double(preds.size());
    rep.iou /= n;
    rep.f_beta /= n;
    rep.ber /= n;
    rep.acc /= n;
    rep.mae = mae_sum / n;
    FrameScores g = scores_from_counts(pooled, beta_sq);
    rep.iou_pooled = g.iou;
    rep.f_beta_pooled = g.f_beta;
    rep.ber_pooled = g.ber;
    rep.acc_pooled = g.acc;
    return rep;
}

Mask location_distribution(const std::vector<Mask>& masks) {
    check(!masks.empty(), "location_distribution: empty sequence");
    Mask heat(masks[0].h, masks[0].w);
    for (const auto& m : masks) {
        check(m.h == heat.h && m.w == heat.w, "location_distribution: size mismatch");
        heat.v += m.v;
    }
    heat.v /= double(masks.size());
    return heat;
}

double chi2_contrast(const Image& frame, const Mask& mask, double tau) {
    check(frame.h == mask.h && frame.w == mask.w, "chi2_contrast: size mismatch");
    check(frame.c == 3, "chi2_contrast: expects RGB frame");
    int64_t n_glass = 0, n_bg = 0;
    for (int64_t i = 0; i < mask.size(); ++i) (mask.v[i] >= tau ? n_glass : n_bg)++;
    if (n_glass == 0 || n_bg == 0) throw std::runtime_error("chi2_contrast: degenerate mask");

    const double eps = 1e-12;
    double result = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        std::array<double, 256> hg{}, hn{};
        for (int y = 0; y < frame.h; ++y)
            for (int x = 0; x < frame.w; ++x) {
                int bin = std::min(255, (int)std::floor(std::clamp(frame.at(y, x, ch), 0.0, 1.0) *
                                                        256.0));
                (mask.at(y, x) >= tau ? hg : hn)[bin] += 1.0;
            }
        double chi2 = 0.0;
        for (int b = 0; b < 256; ++b) {
            double a = hg[b] / double(n_glass), c = hn[b] / double(n_bg);
            chi2 += (a - c) * (a - c) / (a + c + eps);
        }
        result += 0.5 * chi2;
    }
    return result / 3.0;
}

}  // namespace mvgd
