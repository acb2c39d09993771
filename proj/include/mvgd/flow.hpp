#ifndef MVGD_FLOW_HPP
#define MVGD_FLOW_HPP

#include <map>
#include <memory>
#include <string>

#include "mvgd/image.hpp"

namespace mvgd {

// Dense per-pixel displacement in pixels/frame; interleaved (u,v).
struct FlowField {
    int h = 0, w = 0;
    Arr uv;

    FlowField() = default;
    FlowField(int h_, int w_) : h(h_), w(w_), uv(Arr::Zero(int64_t(h_) * w_ * 2)) {}

    double& u(int y, int x) { return uv[(int64_t(y) * w + x) * 2]; }
    double& v(int y, int x) { return uv[(int64_t(y) * w + x) * 2 + 1]; }
    double u(int y, int x) const { return uv[(int64_t(y) * w + x) * 2]; }
    double v(int y, int x) const { return uv[(int64_t(y) * w + x) * 2 + 1]; }
    double magnitude(int y, int x) const { return std::hypot(u(y, x), v(y, x)); }
    bool finite() const { return uv.isFinite().all(); }
};

class FlowProvider {
public:
    virtual ~FlowProvider() = default;
    // prev_idx/next_idx are the absolute frame indices when known (-1 otherwise).
    virtual FlowField estimate(const Image& prev, const Image& next, int prev_idx,
                               int next_idx) = 0;
    virtual std::string name() const = 0;
};

// Oracle backed by generator ground truth: serves registered frame pairs by
// content hash and zero flow for identical frames.
class SyntheticOracleProvider : public FlowProvider {
public:
    void register_pair(const Image& prev, const Image& next, FlowField flow);
    FlowField estimate(const Image& prev, const Image& next, int prev_idx, int next_idx) override;
    std::string name() const override { return "synthetic"; }

private:
    std::map<std::pair<uint64_t, uint64_t>, FlowField> table_;
};

// Reads precomputed fields from <dir>/NNNNNN.flo keyed by the target frame index.
class PrecomputedFlowProvider : public FlowProvider {
public:
    explicit PrecomputedFlowProvider(std::string dir) : dir_(std::move(dir)) {}
    FlowField estimate(const Image& prev, const Image& next, int prev_idx, int next_idx) override;
    std::string name() const override { return "files"; }

private:
    std::string dir_;
};

// Adapter for an external estimator: `cmd <prev.png> <next.png> <out.flo>`.
class ExternalCommandProvider : public FlowProvider {
public:
    explicit ExternalCommandProvider(std::string command) : command_(std::move(command)) {}
    FlowField estimate(const Image& prev, const Image& next, int prev_idx, int next_idx) override;
    std::string name() const override { return "external"; }

private:
    std::string command_;
};

std::unique_ptr<FlowProvider> make_flow_provider(const std::string& kind,
                                                 const std::string& arg);

FlowField compute_flow(const Image& prev, const Image& next, FlowProvider& provider,
                       int prev_idx = -1, int next_idx = -1);

// Soft suppression: flow scaled pointwise by the (resampled) primary mask.
// threshold < 0 keeps the soft probability; otherwise the mask is binarized first.
FlowField refine_flow(const FlowField& flow, const Mask& primary, double threshold = -1.0);

// Color-wheel encoding: hue = atan2(v,u), saturation = |f|/max_mag clipped, zero flow -> white.
Image flow_to_color(const FlowField& flow, double max_mag);

// 95th percentile of flow magnitudes across a clip (floored away from zero).
double auto_max_mag(const std::vector<FlowField>& flows);

FlowField read_flo(const std::string& path);
void write_flo(const FlowField& flow, const std::string& path);

}  // namespace mvgd

#endif
