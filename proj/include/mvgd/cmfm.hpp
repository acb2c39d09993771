#ifndef MVGD_CMFM_HPP
#define MVGD_CMFM_HPP

#include "mvgd/backbone.hpp"

namespace mvgd {

// Token-major projected pyramid: level i is [H_i*W_i, C_1].
struct ProjectedPyramid {
    std::array<Tensor, 4> levels;
    std::array<int, 4> heights{}, widths{};
};

// Fused spatial features {S_i}: level i is [H_i, W_i, C_1].
using SpatialFeatures = std::array<Tensor, 4>;

struct CmfmDiagnostics {
    // consumption count of the 8 projected maps (G1..G4 then O1..O4)
    std::array<int, 8> consumed{};
    std::array<Tensor, 7> blocks_out;  // F_1..F_7
};

class Cmfm {
public:
    Cmfm() = default;
    Cmfm(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg, nn::Rng& rng);

    std::pair<ProjectedPyramid, ProjectedPyramid> project_inputs(const FeaturePyramid& g,
                                                                 const FeaturePyramid& o) const;

    // One cross-scale cross-attention block (1-based index into the seven).
    Tensor attention_block(int block_index, const Tensor& q_src, const Tensor& kv_src) const;

    SpatialFeatures run(const ProjectedPyramid& xg, const ProjectedPyramid& xo,
                        CmfmDiagnostics* diag = nullptr) const;

    SpatialFeatures forward(const FeaturePyramid& g, const FeaturePyramid& o,
                            CmfmDiagnostics* diag = nullptr) const;

    void set_cbam_bypass(bool on);  // test hook

private:
    struct Projection {
        nn::Cbam cbam;
        nn::Conv2d conv;
    };
    struct Block {
        nn::Linear wq, wk, wv;
        nn::LayerNorm ln;
        nn::Mlp mlp;
    };
    std::array<Projection, 4> proj_g_, proj_o_;
    std::array<Block, 7> blocks_;
    int c1_ = 0;
};

}  // namespace mvgd

#endif
