#include "mvgd/cmfm.hpp"

namespace mvgd {

Cmfm::Cmfm(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg, nn::Rng& rng)
    : c1_(cfg.proj_channels) {
    for (int i = 0; i < 4; ++i) {
        int ci = cfg.backbone_channels[i];
        std::string gn = name + ".proj_g" + std::to_string(i + 1);
        std::string on = name + ".proj_o" + std::to_string(i + 1);
        proj_g_[i].cbam = nn::Cbam(ps, gn + ".cbam", ci, rng);
        proj_g_[i].conv = nn::Conv2d(ps, gn + ".conv", 1, 1, ci, c1_, 1, 0, rng);
        proj_o_[i].cbam = nn::Cbam(ps, on + ".cbam", ci, rng);
        proj_o_[i].conv = nn::Conv2d(ps, on + ".conv", 1, 1, ci, c1_, 1, 0, rng);
    }
    for (int k = 0; k < 7; ++k) {
        std::string bn = name + ".block" + std::to_string(k + 1);
        blocks_[k].wq = nn::Linear(ps, bn + ".wq", c1_, c1_, rng);
        blocks_[k].wk = nn::Linear(ps, bn + ".wk", c1_, c1_, rng);
        blocks_[k].wv = nn::Linear(ps, bn + ".wv", c1_, c1_, rng);
        blocks_[k].ln = nn::LayerNorm(ps, bn + ".ln", c1_);
        blocks_[k].mlp = nn::Mlp(ps, bn + ".mlp", c1_, 4 * c1_, rng);
    }
}

void Cmfm::set_cbam_bypass(bool on) {
    for (int i = 0; i < 4; ++i) {
        proj_g_[i].cbam.bypass = on;
        proj_o_[i].cbam.bypass = on;
    }
}

std::pair<ProjectedPyramid, ProjectedPyramid> Cmfm::project_inputs(
    const FeaturePyramid& g, const FeaturePyramid& o) const {
    ProjectedPyramid xg, xo;
    for (int i = 0; i < 4; ++i) {
        check(g[i].shape() == o[i].shape(),
              "cmfm: RGB/flow pyramid shape mismatch at level " + std::to_string(i + 1));
        int h = g[i].dim(0), w = g[i].dim(1);
        Tensor pg = proj_g_[i].conv.forward(proj_g_[i].cbam.forward(g[i]));
        Tensor po = proj_o_[i].conv.forward(proj_o_[i].cbam.forward(o[i]));
        xg.levels[i] = reshape(pg, {h * w, c1_});
        xo.levels[i] = reshape(po, {h * w, c1_});
        xg.heights[i] = xo.heights[i] = h;
        xg.widths[i] = xo.widths[i] = w;
    }
    return {xg, xo};
}

Tensor Cmfm::attention_block(int block_index, const Tensor& q_src, const Tensor& kv_src) const {
    check(block_index >= 1 && block_index <= 7, "cmfm: block index out of range");
    check(q_src.ndim() == 2 && kv_src.ndim() == 2 && q_src.dim(1) == c1_ &&
              kv_src.dim(1) == c1_,
          "cmfm block: channel width mismatch");
    const Block& b = blocks_[block_index - 1];
    Tensor q = b.wq.forward(q_src);
    Tensor k = b.wk.forward(kv_src);
    Tensor v = b.wv.forward(kv_src);
    Tensor y = nn::scaled_dot_attention(q, k, v);
    return add(b.mlp.forward(b.ln.forward(y)), q);
}

SpatialFeatures Cmfm::run(const ProjectedPyramid& xg, const ProjectedPyramid& xo,
                          CmfmDiagnostics* diag) const {
    auto g = [&](int i) { return xg.levels[i - 1]; };
    auto o = [&](int i) { return xo.levels[i - 1]; };
    auto note = [&](int slot) {
        if (diag) diag->consumed[slot]++;
    };

    // top branch: progressive downsampling, then the scale-4 connection block
    Tensor f1 = attention_block(1, o(2), g(1));
    note(4 + 1);
    note(0);
    Tensor f2 = attention_block(2, g(3), f1);
    note(2);
    Tensor f3 = attention_block(3, o(4), f2);
    note(4 + 3);
    Tensor f4 = attention_block(4, g(4), f3);
    note(3);
    // bottom branch: progressive upsampling back to scale 1
    Tensor f5 = attention_block(5, o(3), f4);
    note(4 + 2);
    Tensor f6 = attention_block(6, g(2), f5);
    note(1);
    Tensor f7 = attention_block(7, o(1), f6);
    note(4 + 0);

    if (diag) diag->blocks_out = {f1, f2, f3, f4, f5, f6, f7};

    SpatialFeatures s;
    auto to_map = [&](const Tensor& t, int lvl) {
        return reshape(t, {xg.heights[lvl - 1], xg.widths[lvl - 1], c1_});
    };
    s[0] = to_map(f7, 1);
    s[1] = to_map(mul(f1, f6), 2);
    s[2] = to_map(mul(f2, f5), 3);
    s[3] = to_map(mul(f3, f4), 4);
    return s;
}

SpatialFeatures Cmfm::forward(const FeaturePyramid& g, const FeaturePyramid& o,
                              CmfmDiagnostics* diag) const {
    auto [xg, xo] = project_inputs(g, o);
    return run(xg, xo, diag);
}

}  // namespace mvgd
