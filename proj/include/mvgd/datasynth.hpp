#ifndef MVGD_DATASYNTH_HPP
#define MVGD_DATASYNTH_HPP

#include <optional>
#include <string>
#include <vector>

#include "mvgd/flow.hpp"
#include "mvgd/image.hpp"

namespace mvgd {

struct SynthSpec {
    int h = 64, w = 64;
    int n_frames = 3;
    double bg_u = 4.0, bg_v = 0.0;  // background velocity, px/frame
    double kappa = 0.5;             // slowdown ratio of the in-glass layer
    int rect_y = 16, rect_x = 16, rect_h = 32, rect_w = 32;
    double blend = 1.0;  // alpha of the moving layer over the static glass plane
    uint64_t seed = 0;
};

struct SynthClip {
    std::vector<Image> frames;
    std::vector<Mask> gt_masks;
    std::vector<FlowField> gt_flows;  // flow from frame t to t+1
};

// Deterministic in spec (seed included). Background texture translates at
// bg velocity; inside the glass rect a second texture translates at kappa
// times that, alpha-blended over a static plane texture. Frames are
// quantized to the 8-bit grid so PNG persistence round-trips exactly.
SynthClip synth_clip(const SynthSpec& spec);

// Motion-inconsistency sanity oracle: Otsu threshold on the flow magnitude
// histogram; glass = pixels slower than the threshold.
Mask baseline_flow_threshold(const FlowField& flow);

struct VideoData {
    std::string id;
    std::vector<Image> frames;
    std::vector<Mask> masks;
    std::vector<std::optional<FlowField>> flows;  // flows[t]: frame t-1 -> t (t >= 1)
};

// Layout: root/<video_id>/frames/NNNNNN.png, masks/NNNNNN.png, optional flow/NNNNNN.flo.
std::vector<VideoData> load_dataset(const std::string& root);

void persist_clip(const SynthClip& clip, const std::string& video_dir);

}  // namespace mvgd

#endif
