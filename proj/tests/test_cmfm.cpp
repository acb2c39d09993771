#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "grad_check.hpp"
#include "mvgd/cmfm.hpp"

using namespace mvgd;
using namespace mvgd::testing;

namespace {
ModelConfig micro_cfg() {
    ModelConfig c = ModelConfig::tiny();
    c.input_size = 32;
    c.backbone_channels = {4, 8, 16, 32};
    c.proj_channels = 4;
    return c;
}

FeaturePyramid random_pyramid(const ModelConfig& cfg, std::mt19937_64& eng, bool rg = false) {
    FeaturePyramid p;
    for (int i = 0; i < 4; ++i) {
        int s = cfg.pyramid_strides[i];
        int h = cfg.input_size / s, c = cfg.backbone_channels[i];
        p[i] = Tensor::from_array({h, h, c}, random_array(int64_t(h) * h * c, eng, 0.5), rg);
    }
    return p;
}
}  // namespace

TEST_CASE("fused feature shapes and consumption accounting") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(1);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(2);
    FeaturePyramid g = random_pyramid(cfg, eng), o = random_pyramid(cfg, eng);

    CmfmDiagnostics diag;
    SpatialFeatures s = cm.forward(g, o, &diag);
    CHECK(s[0].shape() == Shape{8, 8, 4});
    CHECK(s[1].shape() == Shape{4, 4, 4});
    CHECK(s[2].shape() == Shape{2, 2, 4});
    CHECK(s[3].shape() == Shape{1, 1, 4});

    // every projected map enters exactly one attention block
    for (int i = 0; i < 8; ++i) CHECK(diag.consumed[i] == 1);

    // block outputs carry the token counts of their query sources
    std::array<int, 7> rows = {16, 4, 1, 1, 4, 16, 64};
    for (int k = 0; k < 7; ++k) CHECK(diag.blocks_out[k].dim(0) == rows[k]);
}

TEST_CASE("fused maps are the scheduled products of block outputs") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(3);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(4);
    FeaturePyramid g = random_pyramid(cfg, eng), o = random_pyramid(cfg, eng);
    CmfmDiagnostics diag;
    SpatialFeatures s = cm.forward(g, o, &diag);
    auto flat = [](const Tensor& t) { return t.value(); };
    CHECK((flat(s[0]) == flat(diag.blocks_out[6])).all());
    CHECK((flat(s[1]) == Arr(flat(diag.blocks_out[0]) * flat(diag.blocks_out[5]))).all());
    CHECK((flat(s[2]) == Arr(flat(diag.blocks_out[1]) * flat(diag.blocks_out[4]))).all());
    CHECK((flat(s[3]) == Arr(flat(diag.blocks_out[2]) * flat(diag.blocks_out[3]))).all());
}

TEST_CASE("blocks own disjoint parameters") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(5);
    Cmfm cm(ps, "cmfm", cfg, rng);

    // name partition: each block prefix owns parameters no other block touches
    for (int a = 1; a <= 7; ++a) {
        auto pa = ps.with_prefix("cmfm.block" + std::to_string(a) + ".");
        CHECK(pa.size() == 12);  // wq,wk,wv (w+b), ln (g+b), mlp fc1/fc2 (w+b)
    }

    // graph separation: block 1 output ignores perturbations of block 2
    std::mt19937_64 eng(6);
    Tensor q = Tensor::from_array({5, 4}, random_array(20, eng));
    Tensor kv = Tensor::from_array({3, 4}, random_array(12, eng));
    Arr before = cm.attention_block(1, q, kv).value();
    Tensor w2 = ps.find("cmfm.block2.wq.W");
    w2.value() += 1.0;
    CHECK((cm.attention_block(1, q, kv).value() == before).all());
    Tensor w1 = ps.find("cmfm.block1.wq.W");
    w1.value() += 1.0;
    CHECK_FALSE((cm.attention_block(1, q, kv).value() == before).all());
}

TEST_CASE("perturbing the last block only moves the level-1 output") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(7);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(8);
    FeaturePyramid g = random_pyramid(cfg, eng), o = random_pyramid(cfg, eng);
    SpatialFeatures base = cm.forward(g, o);
    ps.find("cmfm.block7.wv.W").value() += 0.5;
    SpatialFeatures moved = cm.forward(g, o);
    CHECK_FALSE((moved[0].value() == base[0].value()).all());
    for (int i = 1; i < 4; ++i) CHECK((moved[i].value() == base[i].value()).all());
}

TEST_CASE("residual identity when the mixing MLP is silenced") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(9);
    Cmfm cm(ps, "cmfm", cfg, rng);
    ps.find("cmfm.block1.mlp.fc2.W").value().setZero();
    ps.find("cmfm.block1.mlp.fc2.b").value().setZero();

    std::mt19937_64 eng(10);
    Tensor q = Tensor::from_array({6, 4}, random_array(24, eng));
    Tensor kv = Tensor::from_array({3, 4}, random_array(12, eng));
    Tensor out = cm.attention_block(1, q, kv);

    // manual oracle for the residual path: q W_q + b_q
    Arr w = ps.find("cmfm.block1.wq.W").value();
    Arr b = ps.find("cmfm.block1.wq.b").value();
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 4; ++c) {
            double expect = b[c];
            for (int k = 0; k < 4; ++k) expect += q.value()[r * 4 + k] * w[k * 4 + c];
            CHECK(out.value()[r * 4 + c] == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("single key/value collapses attention to a constant row") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(11);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(12);
    Tensor q = Tensor::from_array({5, 4}, random_array(20, eng));
    Tensor kv = Tensor::from_array({1, 4}, random_array(4, eng));
    Tensor out = cm.attention_block(3, q, kv);

    // out - W_Q q must be row-constant: the attended value is the same everywhere
    Arr w = ps.find("cmfm.block3.wq.W").value();
    Arr b = ps.find("cmfm.block3.wq.b").value();
    Arr resid(20);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c) {
            double wq = b[c];
            for (int k = 0; k < 4; ++k) wq += q.value()[r * 4 + k] * w[k * 4 + c];
            resid[r * 4 + c] = out.value()[r * 4 + c] - wq;
        }
    for (int r = 1; r < 5; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(resid[r * 4 + c] == doctest::Approx(resid[c]).epsilon(1e-10));
}

TEST_CASE("attention rows are probability distributions") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(13);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(14);
    FeaturePyramid g = random_pyramid(cfg, eng), o = random_pyramid(cfg, eng);
    SoftmaxProbe::enable();
    cm.forward(g, o);
    CHECK(SoftmaxProbe::count() > 0);
    CHECK(SoftmaxProbe::min_sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(SoftmaxProbe::max_sum() == doctest::Approx(1.0).epsilon(1e-9));
    SoftmaxProbe::disable();
}

TEST_CASE("input gating bypass hook changes the projection") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(15);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(16);
    FeaturePyramid g = random_pyramid(cfg, eng), o = random_pyramid(cfg, eng);
    auto [xg1, xo1] = cm.project_inputs(g, o);
    cm.set_cbam_bypass(true);
    auto [xg2, xo2] = cm.project_inputs(g, o);
    CHECK_FALSE((xg1.levels[0].value() == xg2.levels[0].value()).all());

    // with the gates forced open the projection is a plain 1x1 convolution
    Arr w = ps.find("cmfm.proj_g1.conv.W").value();
    Arr b = ps.find("cmfm.proj_g1.conv.b").value();
    const Arr& gv = g[0].value();
    for (int p = 0; p < 64; ++p)
        for (int co = 0; co < 4; ++co) {
            double expect = b[co];
            for (int ci = 0; ci < 4; ++ci) expect += gv[p * 4 + ci] * w[ci * 4 + co];
            CHECK(xg2.levels[0].value()[p * 4 + co] == doctest::Approx(expect).epsilon(1e-10));
        }
    cm.set_cbam_bypass(false);
    auto [xg3, xo3] = cm.project_inputs(g, o);
    CHECK((xg3.levels[0].value() == xg1.levels[0].value()).all());
}

TEST_CASE("gradients through the fusion match finite differences") {
    ModelConfig cfg = micro_cfg();
    nn::ParamStore ps;
    nn::Rng rng(17);
    Cmfm cm(ps, "cmfm", cfg, rng);
    std::mt19937_64 eng(18);
    FeaturePyramid g = random_pyramid(cfg, eng, true), o = random_pyramid(cfg, eng);
    auto scalar = [&]() {
        SpatialFeatures s = cm.forward(g, o);
        std::mt19937_64 r2(19);
        Tensor sum_s = readout(s[0], r2);
        for (int i = 1; i < 4; ++i) sum_s = add(sum_s, readout(s[i], r2));
        return sum_s;
    };
    backward(scalar());

    Arr gx = g[1].grad();
    Arr x0 = g[1].value();
    auto eval = [&](const Arr& v) {
        NoGradGuard ng;
        g[1].value() = v;
        double out = scalar().item();
        g[1].value() = x0;
        return out;
    };
    CHECK(grad_check(eval, x0, gx) < 1e-4);

    Tensor w = ps.find("cmfm.block4.wk.W");
    Arr gw = w.grad();
    Arr w0 = w.value();
    auto eval_w = [&](const Arr& v) {
        NoGradGuard ng;
        w.value() = v;
        double out = scalar().item();
        w.value() = w0;
        return out;
    };
    CHECK(grad_check(eval_w, w0, gw) < 1e-4);
}
