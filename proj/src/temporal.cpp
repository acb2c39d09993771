#include "mvgd/temporal.hpp"

namespace mvgd {

namespace {
nn::Linear make_lin(nn::ParamStore& ps, const std::string& name, int c, nn::Rng& rng) {
    return nn::Linear(ps, name, c, c, rng);
}

Tensor as_tokens(const Tensor& x, int& h, int& w, int& c) {
    check(x.ndim() == 3, "temporal: expected [H,W,C] features");
    h = x.dim(0);
    w = x.dim(1);
    c = x.dim(2);
    return reshape(x, {h * w, c});
}
}  // namespace

TemporalAttention::TemporalAttention(nn::ParamStore& ps, const std::string& name,
                                     const ModelConfig& cfg, nn::Rng& rng)
    : channels_(cfg.backbone_channels) {
    for (int i = 0; i < 4; ++i) {
        int c = channels_[i];
        std::string lv = ".l" + std::to_string(i + 1);
        hgam_[i] = {make_lin(ps, name + ".hgam" + lv + ".wq", c, rng),
                    make_lin(ps, name + ".hgam" + lv + ".wk", c, rng),
                    make_lin(ps, name + ".hgam" + lv + ".wv", c, rng)};
        tcam_prev_[i] = {make_lin(ps, name + ".tcam_prev" + lv + ".wq", c, rng),
                         make_lin(ps, name + ".tcam_prev" + lv + ".wk", c, rng),
                         make_lin(ps, name + ".tcam_prev" + lv + ".wv", c, rng)};
        tcam_old_[i] = {make_lin(ps, name + ".tcam_old" + lv + ".wq", c, rng),
                        make_lin(ps, name + ".tcam_old" + lv + ".wk", c, rng),
                        make_lin(ps, name + ".tcam_old" + lv + ".wv", c, rng)};
    }
}

Tensor TemporalAttention::hgam(int level, const Tensor& g_n2, const Tensor& g_n1,
                               const Tensor& g_n) const {
    check(g_n2.shape() == g_n1.shape() && g_n1.shape() == g_n.shape(),
          "hgam: frame feature shape mismatch");
    int h, w, c;
    Tensor xn = as_tokens(g_n, h, w, c);
    check(c == channels_[level], "hgam: channel width mismatch at level");
    int h2, w2, c2;
    Tensor x2 = as_tokens(g_n2, h2, w2, c2);
    Tensor x1 = as_tokens(g_n1, h2, w2, c2);
    const Proj& p = hgam_[level];
    Tensor q = p.wq.forward(xn);
    // history keys/values gated by the elementwise product of the two past frames
    Tensor k_hist = mul(p.wk.forward(x2), p.wk.forward(x1));
    Tensor v_hist = mul(p.wv.forward(x2), p.wv.forward(x1));
    Tensor k = concat({k_hist, p.wk.forward(xn)}, 0);  // 2*HW keys
    Tensor v = concat({v_hist, p.wv.forward(xn)}, 0);
    Tensor y = nn::scaled_dot_attention(q, k, v);
    return reshape(y, {h, w, c});
}

Tensor TemporalAttention::tcam(int level, TcamRole role, const Tensor& query_feats,
                               const Tensor& memory_feats) const {
    check(query_feats.shape() == memory_feats.shape(), "tcam: shape mismatch");
    int h, w, c;
    Tensor q_tok = as_tokens(query_feats, h, w, c);
    check(c == channels_[level], "tcam: channel width mismatch at level");
    int hm, wm, cm;
    Tensor m_tok = as_tokens(memory_feats, hm, wm, cm);
    const Proj& p = role == TcamRole::Prev ? tcam_prev_[level] : tcam_old_[level];
    Tensor y = nn::scaled_dot_attention(p.wq.forward(q_tok), p.wk.forward(m_tok),
                                        p.wv.forward(m_tok));
    return add(query_feats, reshape(y, {h, w, c}));
}

TemporalFeatures TemporalAttention::run(const FeaturePyramid& g_n2, const FeaturePyramid& g_n1,
                                        const FeaturePyramid& g_n, bool enabled) const {
    TemporalFeatures out;
    if (!enabled) {
        out.oldest = g_n2;
        out.prev = g_n1;
        out.cur = g_n;
        return out;
    }
    for (int i = 0; i < 4; ++i) {
        out.cur[i] = hgam(i, g_n2[i], g_n1[i], g_n[i]);
        out.prev[i] = tcam(i, TcamRole::Prev, g_n1[i], g_n2[i]);
        out.oldest[i] = tcam(i, TcamRole::Oldest, g_n2[i], g_n[i]);
    }
    return out;
}

}  // namespace mvgd
