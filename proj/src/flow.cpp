#include "mvgd/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <vector>

namespace mvgd {

namespace fs = std::filesystem;

static constexpr float kFloMagic = 202021.25f;

void SyntheticOracleProvider::register_pair(const Image& prev, const Image& next,
                                            FlowField flow) {
    check(flow.h == prev.h && flow.w == prev.w, "oracle: flow/frame size mismatch");
    table_[{content_hash(prev.data), content_hash(next.data)}] = std::move(flow);
}

FlowField SyntheticOracleProvider::estimate(const Image& prev, const Image& next, int, int) {
    uint64_t hp = content_hash(prev.data), hn = content_hash(next.data);
    if (hp == hn && (prev.data == next.data).all()) return FlowField(prev.h, prev.w);
    auto it = table_.find({hp, hn});
    if (it == table_.end())
        throw std::runtime_error("synthetic flow oracle: unregistered frame pair");
    return it->second;
}

FlowField PrecomputedFlowProvider::estimate(const Image& prev, const Image&, int, int next_idx) {
    check(next_idx >= 0, "files flow provider: target frame index required");
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.flo", next_idx);
    fs::path p = fs::path(dir_) / name;
    FlowField f = read_flo(p.string());
    check(f.h == prev.h && f.w == prev.w,
          "files flow provider: stored field size mismatch for " + p.string());
    return f;
}

FlowField ExternalCommandProvider::estimate(const Image& prev, const Image& next, int, int) {
    fs::path tmp = fs::temp_directory_path() / ("mvgd_flow_" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    fs::path pa = tmp / "prev.png", pb = tmp / "next.png", po = tmp / "out.flo";
    save_image(prev, pa.string());
    save_image(next, pb.string());
    std::string cmd = command_ + " " + pa.string() + " " + pb.string() + " " + po.string();
    int rc = std::system(cmd.c_str());
    if (rc != 0)
        throw std::runtime_error("external flow provider failed (exit " + std::to_string(rc) +
                                 "): " + cmd);
    FlowField f = read_flo(po.string());
    check(f.h == prev.h && f.w == prev.w, "external flow provider: field size mismatch");
    return f;
}

std::unique_ptr<FlowProvider> make_flow_provider(const std::string& kind,
                                                 const std::string& arg) {
    if (kind == "synthetic") return std::make_unique<SyntheticOracleProvider>();
    if (kind == "files") {
        check(!arg.empty(), "files flow provider requires a directory argument");
        return std::make_unique<PrecomputedFlowProvider>(arg);
    }
    if (kind == "external") {
        check(!arg.empty(), "external flow provider requires a command argument");
        return std::make_unique<ExternalCommandProvider>(arg);
    }
    throw std::runtime_error("unknown flow provider: " + kind);
}

FlowField compute_flow(const Image& prev, const Image& next, FlowProvider& provider,
                       int prev_idx, int next_idx) {
    check(prev.same_size(next), "compute_flow: frame size mismatch");
    FlowField f = provider.estimate(prev, next, prev_idx, next_idx);
    check(f.h == prev.h && f.w == prev.w, "compute_flow: provider returned wrong size");
    check(f.finite(), "compute_flow: provider returned non-finite values");
    return f;
}

FlowField refine_flow(const FlowField& flow, const Mask& primary, double threshold) {
    check((primary.v >= 0.0).all() && (primary.v <= 1.0).all(),
          "refine_flow: primary mask values must lie in [0,1]");
    Mask m = (primary.h == flow.h && primary.w == flow.w)
                 ? primary
                 : resize_mask(primary, flow.h, flow.w);
    check(m.h == flow.h && m.w == flow.w, "refine_flow: size mismatch after resampling");
    FlowField out(flow.h, flow.w);
    for (int y = 0; y < flow.h; ++y)
        for (int x = 0; x < flow.w; ++x) {
            double g = m.at(y, x);
            if (threshold >= 0.0) g = g >= threshold ? 1.0 : 0.0;
            out.u(y, x) = flow.u(y, x) * g;
            out.v(y, x) = flow.v(y, x) * g;
        }
    return out;
}

static void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
    int i = (int)std::floor(h) % 6;
    double f = h - std::floor(h);
    double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

Image flow_to_color(const FlowField& flow, double max_mag) {
    check(max_mag > 0.0, "flow_to_color: max_mag must be positive");
    check(flow.finite(), "flow_to_color: flow must be finite");
    Image img(flow.h, flow.w, 3);
    for (int y = 0; y < flow.h; ++y)
        for (int x = 0; x < flow.w; ++x) {
            double u = flow.u(y, x), v = flow.v(y, x);
            double mag = std::hypot(u, v);
            double sat = std::min(mag / max_mag, 1.0);
            double hue = std::atan2(v, u) * 180.0 / M_PI;
            double r, g, b;
            hsv_to_rgb(hue, sat, 1.0, r, g, b);
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

double auto_max_mag(const std::vector<FlowField>& flows) {
    std::vector<double> mags;
    for (const auto& f : flows)
        for (int y = 0; y < f.h; ++y)
            for (int x = 0; x < f.w; ++x) mags.push_back(f.magnitude(y, x));
    check(!mags.empty(), "auto_max_mag: no flow samples");
    size_t k = static_cast<size_t>(0.95 * (mags.size() - 1));
    std::nth_element(mags.begin(), mags.begin() + k, mags.end());
    return std::max(mags[k], 1e-6);
}

FlowField read_flo(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("flo read: cannot open " + path);
    float magic = 0;
    int32_t w = 0, h = 0;
    if (!f.read(reinterpret_cast<char*>(&magic), 4))
        throw std::runtime_error("flo read: truncated header in " + path);
    if (magic != kFloMagic)
        throw std::runtime_error("flo read: bad magic in " + path);
    if (!f.read(reinterpret_cast<char*>(&w), 4) || !f.read(reinterpret_cast<char*>(&h), 4))
        throw std::runtime_error("flo read: truncated header in " + path);
    if (w <= 0 || h <= 0 || int64_t(w) * h > (int64_t(1) << 30))
        throw std::runtime_error("flo read: size overflow in " + path);
    int64_t n = int64_t(w) * h * 2;
    std::vector<float> buf(n);
    if (!f.read(reinterpret_cast<char*>(buf.data()), n * 4))
        throw std::runtime_error("flo read: truncated payload in " + path);
    FlowField out(h, w);
    for (int64_t i = 0; i < n; ++i) out.uv[i] = buf[i];
    return out;
}

void write_flo(const FlowField& flow, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("flo write: cannot open " + path);
    float magic = kFloMagic;
    int32_t w = flow.w, h = flow.h;
    f.write(reinterpret_cast<const char*>(&magic), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> buf(flow.uv.size());
    for (int64_t i = 0; i < flow.uv.size(); ++i) buf[i] = static_cast<float>(flow.uv[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), buf.size() * 4);
    if (!f) throw std::runtime_error("flo write: failed writing " + path);
}

}  // namespace mvgd
