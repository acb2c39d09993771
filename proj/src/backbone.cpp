#include "mvgd/backbone.hpp"

namespace mvgd {

void check_pyramid(const FeaturePyramid& p, int h, int w, const ModelConfig& cfg) {
    for (int i = 0; i < 4; ++i) {
        int s = cfg.pyramid_strides[i];
        check(p[i].ndim() == 3 && p[i].dim(0) == h / s && p[i].dim(1) == w / s &&
                  p[i].dim(2) == cfg.backbone_channels[i],
              "pyramid level " + std::to_string(i + 1) + " has shape " + shape_str(p[i].shape()));
    }
}

Backbone::Backbone(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                   int in_channels, nn::Rng& rng)
    : channels_(cfg.backbone_channels), in_channels_(in_channels) {
    for (int s = 0; s < 4; ++s) {
        int cin = s == 0 ? in_channels : channels_[s - 1];
        int k = s == 0 ? 4 : 2;
        std::string sn = name + ".stage" + std::to_string(s + 1);
        stages_[s].patch = nn::Conv2d(ps, sn + ".patch", k, k, cin, channels_[s], k, 0, rng);
        for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
            std::string bn = sn + ".block" + std::to_string(b + 1);
            Block blk;
            blk.ln1 = nn::LayerNorm(ps, bn + ".ln1", channels_[s]);
            blk.ln2 = nn::LayerNorm(ps, bn + ".ln2", channels_[s]);
            blk.wq = nn::Linear(ps, bn + ".wq", channels_[s], channels_[s], rng);
            blk.wk = nn::Linear(ps, bn + ".wk", channels_[s], channels_[s], rng);
            blk.wv = nn::Linear(ps, bn + ".wv", channels_[s], channels_[s], rng);
            blk.wo = nn::Linear(ps, bn + ".wo", channels_[s], channels_[s], rng);
            blk.mlp = nn::Mlp(ps, bn + ".mlp", channels_[s], 4 * channels_[s], rng);
            stages_[s].blocks.push_back(std::move(blk));
        }
    }
}

Tensor Backbone::run_stage(const Stage& s, const Tensor& x) const {
    Tensor h = s.patch.forward(x);
    int hh = h.dim(0), ww = h.dim(1), c = h.dim(2);
    Tensor tokens = reshape(h, {hh * ww, c});
    for (const auto& b : s.blocks) {
        Tensor n1 = b.ln1.forward(tokens);
        Tensor att = nn::scaled_dot_attention(b.wq.forward(n1), b.wk.forward(n1),
                                              b.wv.forward(n1));
        tokens = add(tokens, b.wo.forward(att));
        tokens = add(tokens, b.mlp.forward(b.ln2.forward(tokens)));
    }
    return reshape(tokens, {hh, ww, c});
}

FeaturePyramid Backbone::encode(const Tensor& image) const {
    check(image.ndim() == 3 && image.dim(2) == in_channels_,
          "backbone: expected [H,W," + std::to_string(in_channels_) + "] input, got " +
              shape_str(image.shape()));
    check(image.dim(0) % 32 == 0 && image.dim(1) % 32 == 0,
          "backbone: input size must be divisible by 32, got " + shape_str(image.shape()));
    FeaturePyramid out;
    Tensor x = image;
    for (int s = 0; s < 4; ++s) {
        x = run_stage(stages_[s], x);
        out[s] = x;
    }
    return out;
}

std::vector<FeaturePyramid> Backbone::encode_shared(const std::vector<Tensor>& images) const {
    for (size_t i = 1; i < images.size(); ++i)
        check(images[i].shape() == images[0].shape(), "encode_shared: mixed input sizes");
    std::vector<FeaturePyramid> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(encode(img));
    return out;
}

}  // namespace mvgd
