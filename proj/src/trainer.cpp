#include "mvgd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mvgd {

AdamW::AdamW(nn::ParamStore& store, OptimConfig cfg) : store_(&store), cfg_(cfg) {
    int64_t n = 0;
    for (const auto& it : store.items())
        if (it.trainable) n += it.tensor.size();
    m_ = Arr::Zero(n);
    v_ = Arr::Zero(n);
}

void AdamW::zero_grad() {
    for (auto& it : store_->items()) mvgd::zero_grad(it.tensor);
}

double AdamW::step() {
    double sq = 0.0;
    for (const auto& it : store_->items()) {
        if (!it.trainable || it.tensor.grad().size() == 0) continue;
        sq += it.tensor.grad().square().sum();
    }
    double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("optimizer: non-finite gradient norm");
    double scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    int64_t off = 0;
    for (auto& it : store_->items()) {
        if (!it.trainable) continue;
        int64_t n = it.tensor.size();
        Arr g = it.tensor.grad().size() == n ? Arr(it.tensor.grad() * scale) : Arr(Arr::Zero(n));
        auto m = m_.segment(off, n);
        auto v = v_.segment(off, n);
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
        Arr update = (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
        it.tensor.value() -= cfg_.lr * (update + cfg_.weight_decay * it.tensor.value());
        off += n;
    }
    return norm;
}

OptimizerBlob AdamW::blob() const { return {t_, m_, v_}; }

void AdamW::restore(const OptimizerBlob& b) {
    check(b.m.size() == m_.size() && b.v.size() == v_.size(),
          "optimizer: restored state size mismatch");
    t_ = b.step;
    m_ = b.m;
    v_ = b.v;
}

TrainResult train_model(MvgdNet& net, const std::vector<ClipWindow>& clips,
                        FlowProvider& provider, AdamW& optimizer, const TrainOptions& opts) {
    check(!clips.empty(), "train: no clips");
    for (const auto& c : clips) check(c.gt_masks.has_value(), "train: clip without ground truth");

    nn::set_train_mode(true);
    TrainResult res;
    int64_t done = optimizer.step_count();
    int64_t global = 0;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::vector<size_t> order(clips.size());
        std::iota(order.begin(), order.end(), size_t(0));
        std::mt19937_64 eng(opts.seed * 0x9e3779b97f4a7c15ull + uint64_t(epoch));
        std::shuffle(order.begin(), order.end(), eng);
        for (size_t k = 0; k < order.size(); ++k, ++global) {
            if (opts.max_steps >= 0 && optimizer.step_count() >= opts.max_steps) {
                nn::set_train_mode(false);
                return res;
            }
            if (global < done) continue;  // resume: schedule already consumed
            const ClipWindow& clip = clips[order[k]];

            optimizer.zero_grad();
            ClipOutput out = net.forward_clip(clip, provider);
            std::array<Mask, 3> gts;
            for (int t = 0; t < 3; ++t) {
                gts[t] = (*clip.gt_masks)[t];
                if (gts[t].h != net.config().input_size || gts[t].w != net.config().input_size)
                    gts[t] = resize_mask(gts[t], net.config().input_size, net.config().input_size);
            }
            std::array<Tensor, 3> masks = {out.masks[0].values, out.masks[1].values,
                                           out.masks[2].values};
            TotalLoss loss = total_loss(out.primary.values, masks, gts, gts[1],
                                        net.config().alpha);
            if (!std::isfinite(loss.report.total))
                throw NumericError("train: non-finite loss at step " +
                                   std::to_string(optimizer.step_count()));
            backward(loss.total);
            optimizer.step();

            res.losses.push_back(loss.report.total);
            res.last_loss = loss.report.total;
            ++res.steps;
            if (opts.log)
                *opts.log << loss_log_line(int(optimizer.step_count()), loss.report) << "\n";
        }
    }
    nn::set_train_mode(false);
    return res;
}

std::vector<Mask> infer_video(const MvgdNet& net, const std::vector<Image>& frames,
                              FlowProvider& provider) {
    check(frames.size() >= 3, "infer: need at least 3 frames");
    NoGradGuard ng;
    nn::set_train_mode(false);
    int H = frames[0].h, W = frames[0].w;
    std::vector<Mask> out(frames.size());
    auto windows = make_windows(int(frames.size()), 3, 1);
    for (const auto& w : windows) {
        ClipWindow clip;
        clip.frames = {frames[w[0]], frames[w[1]], frames[w[2]]};
        clip.indices = {w[0], w[1], w[2]};
        ClipOutput co = net.forward_clip(clip, provider);
        if (w[0] == 0) {
            out[0] = resize_mask(tensor_to_mask(co.masks[0].values), H, W);
            out[1] = resize_mask(tensor_to_mask(co.masks[1].values), H, W);
        }
        out[w[2]] = resize_mask(tensor_to_mask(co.masks[2].values), H, W);
    }
    return out;
}

VideoEval evaluate_video(const MvgdNet& net, const VideoData& video, FlowProvider& provider) {
    VideoEval ev;
    ev.id = video.id;
    ev.preds = infer_video(net, video.frames, provider);
    std::vector<Mask> bin(ev.preds.size());
    double tau = net.config().binarize_threshold;
    for (size_t i = 0; i < ev.preds.size(); ++i) {
        bin[i] = ev.preds[i];
        for (int64_t j = 0; j < bin[i].size(); ++j) bin[i].v[j] = bin[i].v[j] >= tau ? 1.0 : 0.0;
    }
    ev.report = metrics(bin, video.masks, 0.5, net.config().fbeta_beta_sq);
    return ev;
}

std::vector<ClipWindow> windows_from_videos(const std::vector<VideoData>& videos) {
    std::vector<ClipWindow> clips;
    for (const auto& v : videos) {
        for (const auto& w : make_windows(int(v.frames.size()), 3, 1)) {
            ClipWindow c;
            c.frames = {v.frames[w[0]], v.frames[w[1]], v.frames[w[2]]};
            c.gt_masks = std::array<Mask, 3>{v.masks[w[0]], v.masks[w[1]], v.masks[w[2]]};
            c.indices = {w[0], w[1], w[2]};
            clips.push_back(std::move(c));
        }
    }
    return clips;
}

SyntheticOracleProvider oracle_from_videos(const std::vector<VideoData>& videos) {
    SyntheticOracleProvider p;
    for (const auto& v : videos)
        for (size_t t = 1; t < v.frames.size(); ++t) {
            check(v.flows[t].has_value(),
                  "oracle_from_videos: video " + v.id + " lacks ground-truth flow");
            p.register_pair(v.frames[t - 1], v.frames[t], *v.flows[t]);
        }
    return p;
}

}  // namespace mvgd
