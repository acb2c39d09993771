#ifndef MVGD_TRAINER_HPP
#define MVGD_TRAINER_HPP

#include <ostream>

#include "mvgd/datasynth.hpp"
#include "mvgd/evalstats.hpp"
#include "mvgd/model.hpp"

namespace mvgd {

struct OptimConfig {
    double lr = 1e-4;
    double weight_decay = 1e-2;
    double clip_norm = 1.0;  // global gradient norm ceiling
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Decoupled weight decay Adam over the trainable entries of a parameter store.
class AdamW {
public:
    AdamW(nn::ParamStore& store, OptimConfig cfg);

    void zero_grad();
    double step();  // applies one update, returns the pre-clip gradient norm
    int64_t step_count() const { return t_; }

    OptimizerBlob blob() const;
    void restore(const OptimizerBlob& b);

private:
    nn::ParamStore* store_;
    OptimConfig cfg_;
    int64_t t_ = 0;
    Arr m_, v_;  // moments flattened over trainable parameters, store order
};

// Thrown when a non-finite value surfaces during training.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    int epochs = 1;
    uint64_t seed = 42;
    int64_t max_steps = -1;  // stop after this many optimizer steps when >= 0
    std::ostream* log = nullptr;
};

struct TrainResult {
    int64_t steps = 0;
    double last_loss = 0.0;
    std::vector<double> losses;  // loss of every executed step
};

// One clip per optimizer step. The visit order is a per-epoch shuffle seeded by
// (seed, epoch), so a run resumed from `optimizer.step_count()` replays the
// remaining schedule exactly. Steps already counted by the optimizer are
// skipped without computing anything.
TrainResult train_model(MvgdNet& net, const std::vector<ClipWindow>& clips,
                        FlowProvider& provider, AdamW& optimizer, const TrainOptions& opts);

// Sliding-window inference over a full video (>= 3 frames). Frame i >= 2 takes
// the last mask of the window ending at i; frames 0 and 1 take the first
// window's leading masks. Output masks match the input frame resolution.
std::vector<Mask> infer_video(const MvgdNet& net, const std::vector<Image>& frames,
                              FlowProvider& provider);

struct VideoEval {
    std::string id;
    MetricsReport report;
    std::vector<Mask> preds;
};

VideoEval evaluate_video(const MvgdNet& net, const VideoData& video, FlowProvider& provider);

// Builds training windows (with ground truth) from loaded videos.
std::vector<ClipWindow> windows_from_videos(const std::vector<VideoData>& videos);

// Oracle provider fed from the per-video ground-truth flow files.
SyntheticOracleProvider oracle_from_videos(const std::vector<VideoData>& videos);

}  // namespace mvgd

#endif
