#ifndef MVGD_DECODER_HPP
#define MVGD_DECODER_HPP

#include "mvgd/cmfm.hpp"
#include "mvgd/temporal.hpp"

namespace mvgd {

// Per-pixel glass probability with its pre-sigmoid logits.
struct ProbMaskT {
    Tensor values;  // [H,W] in [0,1]
    Tensor logits;  // [H,W]
};

// Coarse mask P from the frame-(N-1) RGB pyramid alone.
class PrimaryDecoder {
public:
    PrimaryDecoder() = default;
    PrimaryDecoder(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                   nn::Rng& rng);
    ProbMaskT decode(const FeaturePyramid& g) const;

private:
    std::array<nn::Conv2d, 4> lateral_;
    nn::Conv2d conv1_, conv2_, head_;
    nn::BatchNorm2d bn1_, bn2_;
    int c1_ = 0;
};

// Temporal-spatial decoder: per-level gated fusion followed by top-down decoding.
// `gated=false` selects the simple concat+conv fusion used by the decoder ablation.
class TsdDecoder {
public:
    TsdDecoder() = default;
    TsdDecoder(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg, bool gated,
               nn::Rng& rng);

    // Eqs. of the gated fusion at one level: T_i [H,W,C_i], S_i [H,W,C_1] -> [H,W,C_1].
    Tensor fuse_level(int level, const Tensor& t_i, const Tensor& s_i) const;

    Tensor decode_logits(const std::array<Tensor, 4>& gated) const;  // level-1 logits [H1,W1]

    ProbMaskT decode(const FeaturePyramid& t, const SpatialFeatures& s, int out_h,
                     int out_w) const;

    bool gated() const { return gated_; }

private:
    struct FuseLevel {
        nn::ChannelAttention ca_t;  // includes the C_i -> C_1 projection
        nn::ChannelAttention ca_s;
        nn::SpatialAttention sa_t, sa_s;
        nn::Conv2d simple;  // ungated path
    };
    std::array<FuseLevel, 4> fuse_;
    std::array<nn::Conv2d, 3> cb_conv_;  // decode levels 3,2,1
    std::array<nn::BatchNorm2d, 3> cb_bn_;
    nn::Conv2d head_;
    bool gated_ = true;
    int c1_ = 0;
    std::array<int, 4> channels_{};
};

Tensor upsample_mask_logits(const Tensor& logits, int out_h, int out_w);

}  // namespace mvgd

#endif
