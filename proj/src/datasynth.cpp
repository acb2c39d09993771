#include "mvgd/datasynth.hpp"

#include <algorithm>
#include <filesystem>
#include <random>

namespace mvgd {

namespace fs = std::filesystem;

namespace {

// Band-limited periodic texture: low-resolution random grid sampled with
// bilinear interpolation and toroidal wrap.
class NoiseTexture {
public:
    NoiseTexture(int gh, int gw, uint64_t seed) : gh_(gh), gw_(gw), grid_(gh * gw * 3) {
        std::mt19937_64 eng(seed);
        std::uniform_real_distribution<double> d(0.0, 1.0);
        for (auto& v : grid_) v = d(eng);
    }

    void sample(double y, double x, double* rgb) const {
        double gy = wrap(y / 8.0, gh_), gx = wrap(x / 8.0, gw_);
        int y0 = (int)std::floor(gy), x0 = (int)std::floor(gx);
        double ty = gy - y0, tx = gx - x0;
        int y1 = (y0 + 1) % gh_, x1 = (x0 + 1) % gw_;
        for (int c = 0; c < 3; ++c) {
            double a = grid_[(y0 * gw_ + x0) * 3 + c], b = grid_[(y0 * gw_ + x1) * 3 + c];
            double d2 = grid_[(y1 * gw_ + x0) * 3 + c], e = grid_[(y1 * gw_ + x1) * 3 + c];
            rgb[c] = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * d2 + tx * e);
        }
    }

private:
    static double wrap(double v, int n) {
        double m = std::fmod(v, double(n));
        return m < 0 ? m + n : m;
    }
    int gh_, gw_;
    std::vector<double> grid_;
};

double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace

SynthClip synth_clip(const SynthSpec& spec) {
    check(spec.n_frames >= 3, "synth_clip: n_frames must be >= 3");
    check(spec.kappa >= 0.0 && spec.kappa <= 1.0, "synth_clip: kappa must lie in [0,1]");
    check(spec.blend >= 0.0 && spec.blend <= 1.0, "synth_clip: blend must lie in [0,1]");
    check(spec.rect_y >= 0 && spec.rect_x >= 0 && spec.rect_h > 0 && spec.rect_w > 0 &&
              spec.rect_y + spec.rect_h <= spec.h && spec.rect_x + spec.rect_w <= spec.w,
          "synth_clip: glass rect must lie inside the frame");

    int gh = std::max(2, spec.h / 8), gw = std::max(2, spec.w / 8);
    NoiseTexture bg_tex(gh, gw, spec.seed * 3 + 1);
    NoiseTexture inner_tex(gh, gw, spec.seed * 3 + 2);
    NoiseTexture plane_tex(gh, gw, spec.seed * 3 + 3);

    auto in_rect = [&](int y, int x) {
        return y >= spec.rect_y && y < spec.rect_y + spec.rect_h && x >= spec.rect_x &&
               x < spec.rect_x + spec.rect_w;
    };

    SynthClip clip;
    for (int t = 0; t < spec.n_frames; ++t) {
        Image frame(spec.h, spec.w, 3);
        Mask mask(spec.h, spec.w);
        for (int y = 0; y < spec.h; ++y)
            for (int x = 0; x < spec.w; ++x) {
                double rgb[3];
                if (in_rect(y, x)) {
                    double inner[3], plane[3];
                    inner_tex.sample(y - t * spec.kappa * spec.bg_v,
                                     x - t * spec.kappa * spec.bg_u, inner);
                    plane_tex.sample(y, x, plane);
                    // the stationary plane reads as a bright haze, the way a
                    // pane washes out whatever is seen through it
                    for (int c = 0; c < 3; ++c)
                        rgb[c] = spec.blend * inner[c] +
                                 (1 - spec.blend) * (0.6 + 0.4 * plane[c]);
                    mask.at(y, x) = 1.0;
                } else {
                    bg_tex.sample(y - t * spec.bg_v, x - t * spec.bg_u, rgb);
                }
                for (int c = 0; c < 3; ++c) frame.at(y, x, c) = quantize8(rgb[c]);
            }
        clip.frames.push_back(std::move(frame));
        clip.gt_masks.push_back(std::move(mask));
        if (t > 0) {
            FlowField f(spec.h, spec.w);
            for (int y = 0; y < spec.h; ++y)
                for (int x = 0; x < spec.w; ++x) {
                    double k = in_rect(y, x) ? spec.kappa : 1.0;
                    f.u(y, x) = k * spec.bg_u;
                    f.v(y, x) = k * spec.bg_v;
                }
            clip.gt_flows.push_back(std::move(f));
        }
    }
    return clip;
}

Mask baseline_flow_threshold(const FlowField& flow) {
    int64_t n = int64_t(flow.h) * flow.w;
    Arr mags(n);
    for (int y = 0; y < flow.h; ++y)
        for (int x = 0; x < flow.w; ++x) mags[int64_t(y) * flow.w + x] = flow.magnitude(y, x);
    double lo = mags.minCoeff(), hi = mags.maxCoeff();
    if (hi - lo < 1e-9) throw std::runtime_error("baseline_flow_threshold: no contrast");

    constexpr int kBins = 256;
    std::array<int64_t, kBins> hist{};
    for (int64_t i = 0; i < n; ++i) {
        int b = std::min(kBins - 1, (int)((mags[i] - lo) / (hi - lo) * kBins));
        ++hist[b];
    }
    // Otsu: maximize between-class variance
    double sum_all = 0;
    for (int b = 0; b < kBins; ++b) sum_all += double(b) * hist[b];
    double best_var = -1.0;
    int best_b = 0;
    int64_t w0 = 0;
    double sum0 = 0;
    for (int b = 0; b < kBins - 1; ++b) {
        w0 += hist[b];
        sum0 += double(b) * hist[b];
        int64_t w1 = n - w0;
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
        double var = double(w0) * double(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_b = b;
        }
    }
    double thresh = lo + (best_b + 1) * (hi - lo) / kBins;
    Mask out(flow.h, flow.w);
    for (int64_t i = 0; i < n; ++i) out.v[i] = mags[i] < thresh ? 1.0 : 0.0;
    return out;
}

std::vector<VideoData> load_dataset(const std::string& root) {
    if (!fs::exists(root)) throw std::runtime_error("load_dataset: missing root " + root);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());

    std::vector<VideoData> videos;
    for (const auto& id : ids) {
        fs::path vdir = fs::path(root) / id;
        fs::path fdir = vdir / "frames", mdir = vdir / "masks", odir = vdir / "flow";
        if (!fs::exists(fdir)) throw std::runtime_error("load_dataset: missing frames/ in " + id);
        if (!fs::exists(mdir)) throw std::runtime_error("load_dataset: missing masks/ in " + id);

        auto list_pngs = [](const fs::path& dir) {
            std::vector<fs::path> out;
            for (const auto& e : fs::directory_iterator(dir))
                if (e.path().extension() == ".png") out.push_back(e.path());
            std::sort(out.begin(), out.end());
            return out;
        };
        auto frame_paths = list_pngs(fdir);
        auto mask_paths = list_pngs(mdir);
        if (frame_paths.size() != mask_paths.size())
            throw std::runtime_error("load_dataset: mask count mismatch in video " + id);
        if (frame_paths.empty())
            throw std::runtime_error("load_dataset: empty video " + id);

        VideoData v;
        v.id = id;
        for (size_t t = 0; t < frame_paths.size(); ++t) {
            char expect[32];
            std::snprintf(expect, sizeof(expect), "%06zu.png", t);
            if (frame_paths[t].filename() != expect || mask_paths[t].filename() != expect)
                throw std::runtime_error("load_dataset: non-contiguous numbering in video " + id +
                                         " at index " + std::to_string(t));
            Image frame = load_image(frame_paths[t].string());
            Mask mask = load_mask(mask_paths[t].string());
            if (frame.h != mask.h || frame.w != mask.w)
                throw std::runtime_error("load_dataset: frame/mask size mismatch in video " + id);
            if (t > 0 && (frame.h != v.frames[0].h || frame.w != v.frames[0].w))
                throw std::runtime_error("load_dataset: frame size varies in video " + id);
            v.frames.push_back(std::move(frame));
            v.masks.push_back(std::move(mask));
        }
        v.flows.assign(v.frames.size(), std::nullopt);
        if (fs::exists(odir)) {
            for (size_t t = 1; t < v.frames.size(); ++t) {
                char name[32];
                std::snprintf(name, sizeof(name), "%06zu.flo", t);
                fs::path p = odir / name;
                if (fs::exists(p)) v.flows[t] = read_flo(p.string());
            }
        }
        videos.push_back(std::move(v));
    }
    return videos;
}

void persist_clip(const SynthClip& clip, const std::string& video_dir) {
    fs::path vdir(video_dir);
    fs::create_directories(vdir / "frames");
    fs::create_directories(vdir / "masks");
    fs::create_directories(vdir / "flow");
    for (size_t t = 0; t < clip.frames.size(); ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", t);
        save_image(clip.frames[t], (vdir / "frames" / name).string());
        save_mask(clip.gt_masks[t], (vdir / "masks" / name).string());
        if (t >= 1 && t - 1 < clip.gt_flows.size()) {
            char fname[32];
            std::snprintf(fname, sizeof(fname), "%06zu.flo", t);
            write_flo(clip.gt_flows[t - 1], (vdir / "flow" / fname).string());
        }
    }
}

}  // namespace mvgd
