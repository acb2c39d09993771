#include "mvgd/decoder.hpp"

namespace mvgd {

namespace {
Tensor squeeze_last(const Tensor& x) {
    check(x.ndim() == 3 && x.dim(2) == 1, "squeeze_last: expects [H,W,1]");
    return reshape(x, {x.dim(0), x.dim(1)});
}
}  // namespace

Tensor upsample_mask_logits(const Tensor& logits, int out_h, int out_w) {
    Tensor l3 = reshape(logits, {logits.dim(0), logits.dim(1), 1});
    return squeeze_last(bilinear_resize(l3, out_h, out_w));
}

PrimaryDecoder::PrimaryDecoder(nn::ParamStore& ps, const std::string& name,
                               const ModelConfig& cfg, nn::Rng& rng)
    : c1_(cfg.proj_channels) {
    for (int i = 0; i < 4; ++i)
        lateral_[i] = nn::Conv2d(ps, name + ".lateral" + std::to_string(i + 1), 1, 1,
                                 cfg.backbone_channels[i], c1_, 1, 0, rng);
    conv1_ = nn::Conv2d(ps, name + ".conv1", 3, 3, 4 * c1_, c1_, 1, 1, rng);
    bn1_ = nn::BatchNorm2d(ps, name + ".bn1", c1_);
    conv2_ = nn::Conv2d(ps, name + ".conv2", 3, 3, c1_, c1_, 1, 1, rng);
    bn2_ = nn::BatchNorm2d(ps, name + ".bn2", c1_);
    head_ = nn::Conv2d(ps, name + ".head", 1, 1, c1_, 1, 1, 0, rng);
}

ProbMaskT PrimaryDecoder::decode(const FeaturePyramid& g) const {
    int h1 = g[0].dim(0), w1 = g[0].dim(1);
    std::vector<Tensor> ups;
    for (int i = 0; i < 4; ++i)
        ups.push_back(bilinear_resize(lateral_[i].forward(g[i]), h1, w1));
    Tensor x = concat(ups, 2);
    x = relu(bn1_.forward(conv1_.forward(x)));
    x = relu(bn2_.forward(conv2_.forward(x)));
    Tensor logits_q = squeeze_last(head_.forward(x));  // at stride 4
    Tensor logits = upsample_mask_logits(logits_q, h1 * 4, w1 * 4);
    return {sigmoid(logits), logits};
}

TsdDecoder::TsdDecoder(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                       bool gated, nn::Rng& rng)
    : gated_(gated), c1_(cfg.proj_channels), channels_(cfg.backbone_channels) {
    for (int i = 0; i < 4; ++i) {
        std::string ln = name + ".fuse" + std::to_string(i + 1);
        if (gated_) {
            fuse_[i].ca_t = nn::ChannelAttention(ps, ln + ".ca_t", channels_[i], c1_, rng);
            fuse_[i].ca_s = nn::ChannelAttention(ps, ln + ".ca_s", c1_, c1_, rng);
            fuse_[i].sa_t = nn::SpatialAttention(ps, ln + ".sa_t", rng);
            fuse_[i].sa_s = nn::SpatialAttention(ps, ln + ".sa_s", rng);
        } else {
            fuse_[i].simple =
                nn::Conv2d(ps, ln + ".simple", 1, 1, channels_[i] + c1_, c1_, 1, 0, rng);
        }
    }
    for (int i = 0; i < 3; ++i) {
        std::string ln = name + ".cb" + std::to_string(i + 1);
        cb_conv_[i] = nn::Conv2d(ps, ln + ".conv", 3, 3, 2 * c1_, c1_, 1, 1, rng);
        cb_bn_[i] = nn::BatchNorm2d(ps, ln + ".bn", c1_);
    }
    head_ = nn::Conv2d(ps, name + ".head", 1, 1, c1_, 1, 1, 0, rng);
}

Tensor TsdDecoder::fuse_level(int level, const Tensor& t_i, const Tensor& s_i) const {
    check(t_i.ndim() == 3 && s_i.ndim() == 3 && t_i.dim(0) == s_i.dim(0) &&
              t_i.dim(1) == s_i.dim(1),
          "tsd fuse: spatial size mismatch");
    check(t_i.dim(2) == channels_[level] && s_i.dim(2) == c1_,
          "tsd fuse: channel width mismatch at level " + std::to_string(level + 1));
    const FuseLevel& f = fuse_[level];
    if (!gated_) return f.simple.forward(concat({t_i, s_i}, 2));

    Tensor t_proj = f.ca_t.project(t_i);  // T'_i: 1x1 projection to C_1
    Tensor cat = f.ca_t.attend(t_proj);
    Tensor cas = f.ca_s.forward(s_i);
    Tensor gate_from_s = sigmoid(mean_over_channels(s_i));     // [H,W]
    Tensor gate_from_t = sigmoid(mean_over_channels(t_proj));  // [H,W]
    Tensor ft = f.sa_t.forward(add(mul_pixelwise(cat, gate_from_s), cat));
    Tensor fs = f.sa_s.forward(add(mul_pixelwise(cas, gate_from_t), cas));
    Tensor fcat = concat({ft, fs}, 2);  // [H,W,2*C1]
    Tensor h1 = slice_axis(fcat, 2, 0, c1_);
    Tensor h2 = slice_axis(fcat, 2, c1_, 2 * c1_);
    return mul(h1, h2);  // simple gate
}

Tensor TsdDecoder::decode_logits(const std::array<Tensor, 4>& gated) const {
    Tensor d = gated[3];  // D_4
    for (int i = 2; i >= 0; --i) {
        int h = gated[i].dim(0), w = gated[i].dim(1);
        check(h == 2 * d.dim(0) && w == 2 * d.dim(1),
              "tsd decode: level ordering violates the x2 upsampling chain");
        Tensor up = bilinear_resize(d, h, w);
        d = relu(cb_bn_[i].forward(cb_conv_[i].forward(concat({gated[i], up}, 2))));
    }
    Tensor l = head_.forward(d);
    return reshape(l, {l.dim(0), l.dim(1)});
}

ProbMaskT TsdDecoder::decode(const FeaturePyramid& t, const SpatialFeatures& s, int out_h,
                             int out_w) const {
    std::array<Tensor, 4> gated;
    for (int i = 0; i < 4; ++i) gated[i] = fuse_level(i, t[i], s[i]);
    Tensor logits1 = decode_logits(gated);
    Tensor logits = upsample_mask_logits(logits1, out_h, out_w);
    return {sigmoid(logits), logits};
}

}  // namespace mvgd
