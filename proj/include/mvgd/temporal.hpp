#ifndef MVGD_TEMPORAL_HPP
#define MVGD_TEMPORAL_HPP

#include "mvgd/backbone.hpp"

namespace mvgd {

// Temporal pyramids for the three frames of a clip, backbone channel widths.
struct TemporalFeatures {
    FeaturePyramid oldest;  // T^{N-2}
    FeaturePyramid prev;    // T^{N-1}
    FeaturePyramid cur;     // T^N
};

class TemporalAttention {
public:
    TemporalAttention() = default;
    TemporalAttention(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                      nn::Rng& rng);

    // History-guided attention for the current frame at one pyramid level.
    Tensor hgam(int level, const Tensor& g_n2, const Tensor& g_n1, const Tensor& g_n) const;

    // Residual cross-attention; role selects the (N-1,N-2) or (N-2,N) parameter set.
    enum class TcamRole { Prev, Oldest };
    Tensor tcam(int level, TcamRole role, const Tensor& query_feats,
                const Tensor& memory_feats) const;

    TemporalFeatures run(const FeaturePyramid& g_n2, const FeaturePyramid& g_n1,
                         const FeaturePyramid& g_n, bool enabled = true) const;

private:
    struct Proj {
        nn::Linear wq, wk, wv;
    };
    std::array<Proj, 4> hgam_, tcam_prev_, tcam_old_;
    std::array<int, 4> channels_{};
};

}  // namespace mvgd

#endif
