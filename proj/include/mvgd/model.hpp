#ifndef MVGD_MODEL_HPP
#define MVGD_MODEL_HPP

#include <optional>
#include <set>

#include "mvgd/decoder.hpp"
#include "mvgd/flow.hpp"
#include "mvgd/losses.hpp"

namespace mvgd {

// Ordered 3-frame clip with optional ground truth.
struct ClipWindow {
    std::array<Image, 3> frames;
    std::optional<std::array<Mask, 3>> gt_masks;
    std::array<int, 3> indices = {0, 1, 2};
};

void validate_clip(const ClipWindow& clip);

struct ClipOutput {
    ProbMaskT primary;              // P_{N-1}
    std::array<ProbMaskT, 3> masks;  // M_{N-2}, M_{N-1}, M_N
};

// Per-level fusion fallback for the CMFM ablation: 1x1 projections + concat + 1x1 conv.
class BasicFusion {
public:
    BasicFusion() = default;
    BasicFusion(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                nn::Rng& rng);
    SpatialFeatures forward(const FeaturePyramid& g, const FeaturePyramid& o) const;

private:
    std::array<nn::Conv2d, 4> proj_g_, proj_o_, mix_;
};

class MvgdNet {
public:
    explicit MvgdNet(const ModelConfig& cfg);

    ClipOutput forward_clip(const ClipWindow& clip, FlowProvider& provider,
                            CmfmDiagnostics* diag = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }

    const Backbone& rgb_backbone() const { return rgb_backbone_; }
    const Backbone& flow_backbone() const { return flow_backbone_; }
    const PrimaryDecoder& primary_decoder() const { return primary_; }
    Cmfm& cmfm() { return cmfm_; }
    const TemporalAttention& temporal() const { return tam_; }
    const TsdDecoder& decoder() const { return tsd_; }

    // Names of the submodules present in this configuration's graph.
    std::set<std::string> active_modules() const;

    Tensor prepare_rgb(const Image& img) const;
    Tensor prepare_flow_input(const FlowField& flow, double max_mag) const;

private:
    ModelConfig cfg_;
    nn::ParamStore store_;
    Backbone rgb_backbone_, flow_backbone_;
    PrimaryDecoder primary_;
    Cmfm cmfm_;
    BasicFusion basic_fusion_;
    TemporalAttention tam_;
    TsdDecoder tsd_;
    nn::Conv2d flow_lift_;  // raw (u,v) -> 3 channels when flow_encoding=raw
};

// Versioned weight container with a manifest (config hash, level shapes)
// validated on load. Optimizer state rides along when provided.
struct OptimizerBlob {
    int64_t step = 0;
    Arr m, v;  // flattened moments over trainable parameters, in store order
};

void save_checkpoint(const MvgdNet& net, const std::string& path,
                     const OptimizerBlob* optim = nullptr);
// Returns the optimizer blob when the file carries one and `optim` is non-null.
bool load_checkpoint(MvgdNet& net, const std::string& path, OptimizerBlob* optim = nullptr);

}  // namespace mvgd

#endif
