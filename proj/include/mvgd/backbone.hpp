#ifndef MVGD_BACKBONE_HPP
#define MVGD_BACKBONE_HPP

#include "mvgd/config.hpp"
#include "mvgd/nn.hpp"

namespace mvgd {

// 4-level multi-scale feature stack; level i: [H/stride_i, W/stride_i, C_i].
using FeaturePyramid = std::array<Tensor, 4>;

void check_pyramid(const FeaturePyramid& p, int h, int w, const ModelConfig& cfg);

// 4-stage hierarchical encoder: strided patch embedding per stage followed by
// pre-norm transformer blocks with full attention. One parameter set; every
// call through the same instance shares weights.
class Backbone {
public:
    Backbone() = default;
    Backbone(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg, int in_channels,
             nn::Rng& rng);

    FeaturePyramid encode(const Tensor& image) const;  // [H,W,in_channels]
    std::vector<FeaturePyramid> encode_shared(const std::vector<Tensor>& images) const;

private:
    struct Block {
        nn::LayerNorm ln1, ln2;
        nn::Linear wq, wk, wv, wo;
        nn::Mlp mlp;
    };
    struct Stage {
        nn::Conv2d patch;
        std::vector<Block> blocks;
    };
    Tensor run_stage(const Stage& s, const Tensor& x) const;

    std::array<Stage, 4> stages_;
    std::array<int, 4> channels_{};
    int in_channels_ = 3;
};

}  // namespace mvgd

#endif
