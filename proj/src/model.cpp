#include "mvgd/model.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace mvgd {

void validate_clip(const ClipWindow& clip) {
    const Image& f0 = clip.frames[0];
    check(f0.h > 0 && f0.w > 0 && f0.c == 3, "clip: frames must be RGB");
    for (int t = 1; t < 3; ++t)
        check(clip.frames[t].same_size(f0), "clip: frame sizes differ");
    check(clip.indices[0] < clip.indices[1] && clip.indices[1] < clip.indices[2],
          "clip: frame indices must increase");
    if (clip.gt_masks) {
        for (int t = 0; t < 3; ++t)
            check((*clip.gt_masks)[t].h == f0.h && (*clip.gt_masks)[t].w == f0.w,
                  "clip: gt mask size mismatch");
    }
}

BasicFusion::BasicFusion(nn::ParamStore& ps, const std::string& name, const ModelConfig& cfg,
                         nn::Rng& rng) {
    int c1 = cfg.proj_channels;
    for (int i = 0; i < 4; ++i) {
        std::string lvl = name + ".l" + std::to_string(i + 1);
        proj_g_[i] = nn::Conv2d(ps, lvl + ".pg", 1, 1, cfg.backbone_channels[i], c1, 1, 0, rng);
        proj_o_[i] = nn::Conv2d(ps, lvl + ".po", 1, 1, cfg.backbone_channels[i], c1, 1, 0, rng);
        mix_[i] = nn::Conv2d(ps, lvl + ".mix", 1, 1, 2 * c1, c1, 1, 0, rng);
    }
}

SpatialFeatures BasicFusion::forward(const FeaturePyramid& g, const FeaturePyramid& o) const {
    SpatialFeatures s;
    for (int i = 0; i < 4; ++i) {
        Tensor a = proj_g_[i].forward(g[i]);
        Tensor b = proj_o_[i].forward(o[i]);
        s[i] = mix_[i].forward(concat({a, b}, 2));
    }
    return s;
}

MvgdNet::MvgdNet(const ModelConfig& cfg) : cfg_(validate_config(cfg)) {
    nn::Rng rng(cfg_.init_seed);
    const AblationSwitches& ab = cfg_.ablation;
    // Construction order fixes the parameter layout; checkpoints depend on it.
    rgb_backbone_ = Backbone(store_, "rgb", cfg_, 3, rng);
    primary_ = PrimaryDecoder(store_, "primary", cfg_, rng);
    if (ab.use_flow) {
        if (cfg_.flow_encoding == FlowEncoding::RawLift)
            flow_lift_ = nn::Conv2d(store_, "flowlift", 1, 1, 2, 3, 1, 0, rng);
        flow_backbone_ = Backbone(store_, "flowenc", cfg_, 3, rng);
        if (ab.use_cmfm)
            cmfm_ = Cmfm(store_, "cmfm", cfg_, rng);
        else
            basic_fusion_ = BasicFusion(store_, "bfuse", cfg_, rng);
        if (ab.use_tam) tam_ = TemporalAttention(store_, "tam", cfg_, rng);
        tsd_ = TsdDecoder(store_, "tsd", cfg_, ab.use_tsd, rng);
    }
}

std::set<std::string> MvgdNet::active_modules() const {
    std::set<std::string> m = {"rgb_backbone", "primary_decoder"};
    const AblationSwitches& ab = cfg_.ablation;
    if (ab.use_flow) {
        m.insert("flow_backbone");
        m.insert(ab.use_cmfm ? "cmfm" : "basic_fusion");
        m.insert(ab.use_tam ? "temporal_attention" : "temporal_passthrough");
        m.insert(ab.use_tsd ? "tsd_gated" : "tsd_simple");
        if (ab.use_primary_mask) m.insert("flow_refine");
        if (cfg_.flow_encoding == FlowEncoding::RawLift) m.insert("flow_lift");
    }
    return m;
}

Tensor MvgdNet::prepare_rgb(const Image& img) const {
    check(img.c == 3, "prepare_rgb: expects RGB");
    Arr data = img.data;
    if (cfg_.standardize) {
        for (int64_t i = 0; i < data.size(); ++i) {
            int ch = int(i % 3);
            data[i] = (data[i] - cfg_.norm_mean[ch]) / cfg_.norm_std[ch];
        }
    }
    return Tensor::from_array({img.h, img.w, 3}, std::move(data));
}

Tensor MvgdNet::prepare_flow_input(const FlowField& flow, double max_mag) const {
    if (cfg_.flow_encoding == FlowEncoding::Color) {
        Image color = flow_to_color(flow, max_mag);
        return image_to_tensor(color);
    }
    Tensor raw = Tensor::from_array({flow.h, flow.w, 2}, flow.uv);
    return flow_lift_.forward(raw);
}

ClipOutput MvgdNet::forward_clip(const ClipWindow& clip, FlowProvider& provider,
                                 CmfmDiagnostics* diag) const {
    validate_clip(clip);
    std::array<Image, 3> frames = clip.frames;
    if (frames[0].h != cfg_.input_size || frames[0].w != cfg_.input_size)
        for (auto& f : frames) f = resize_image(f, cfg_.input_size, cfg_.input_size);
    int H = cfg_.input_size, W = cfg_.input_size;

    std::vector<Tensor> rgb;
    for (const auto& f : frames) rgb.push_back(prepare_rgb(f));
    std::vector<FeaturePyramid> g = rgb_backbone_.encode_shared(rgb);

    ClipOutput out;
    out.primary = primary_.decode(g[1]);

    const AblationSwitches& ab = cfg_.ablation;
    if (!ab.use_flow) {
        for (int t = 0; t < 3; ++t) out.masks[t] = primary_.decode(g[t]);
        return out;
    }

    FlowField f_prev = compute_flow(frames[0], frames[1], provider, clip.indices[0],
                                    clip.indices[1]);
    FlowField f_cur = compute_flow(frames[1], frames[2], provider, clip.indices[1],
                                   clip.indices[2]);
    if (ab.use_primary_mask) {
        // The coarse mask enters flow refinement as data, not as a graph node;
        // its gradient arrives through its own loss term instead.
        Mask p = tensor_to_mask(out.primary.values);
        f_prev = refine_flow(f_prev, p, cfg_.refine_threshold);
        f_cur = refine_flow(f_cur, p, cfg_.refine_threshold);
    }

    double max_mag = auto_max_mag({f_prev, f_cur});
    std::vector<Tensor> flow_in = {prepare_flow_input(f_prev, max_mag),
                                   prepare_flow_input(f_cur, max_mag)};
    std::vector<FeaturePyramid> o = flow_backbone_.encode_shared(flow_in);

    SpatialFeatures s_prev, s_cur;
    if (ab.use_cmfm) {
        s_prev = cmfm_.forward(g[1], o[0]);
        s_cur = cmfm_.forward(g[2], o[1], diag);
    } else {
        s_prev = basic_fusion_.forward(g[1], o[0]);
        s_cur = basic_fusion_.forward(g[2], o[1]);
    }

    TemporalFeatures t = tam_.run(g[0], g[1], g[2], ab.use_tam);

    out.masks[0] = tsd_.decode(t.oldest, s_prev, H, W);  // S^{N-1} reused
    out.masks[1] = tsd_.decode(t.prev, s_prev, H, W);
    out.masks[2] = tsd_.decode(t.cur, s_cur, H, W);
    return out;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'M', 'V', 'G', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_raw(std::ofstream& f, const void* p, size_t n) {
    f.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}
void read_raw(std::ifstream& f, void* p, size_t n) {
    f.read(reinterpret_cast<char*>(p), std::streamsize(n));
    check(bool(f), "checkpoint: truncated file");
}

}  // namespace

void save_checkpoint(const MvgdNet& net, const std::string& path, const OptimizerBlob* optim) {
    const auto& items = net.params().items();
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = net.config().serialize();
    manifest["config_hash"] = net.config().hash();
    int64_t trainable = 0;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& it : items) {
        plist.push_back({{"name", it.name},
                         {"shape", it.tensor.shape()},
                         {"trainable", it.trainable}});
        if (it.trainable) trainable += it.tensor.size();
    }
    manifest["params"] = plist;
    manifest["trainable_count"] = trainable;
    manifest["optim_present"] = optim != nullptr;
    if (optim) {
        check(optim->m.size() == trainable && optim->v.size() == trainable,
              "checkpoint: optimizer state size mismatch");
        manifest["optim_step"] = optim->step;
    }
    std::string mtext = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    check(bool(f), "checkpoint: cannot open for writing: " + path);
    write_raw(f, kMagic, 8);
    write_raw(f, &kVersion, 4);
    uint64_t mlen = mtext.size();
    write_raw(f, &mlen, 8);
    write_raw(f, mtext.data(), mtext.size());
    for (const auto& it : items)
        write_raw(f, it.tensor.value().data(), size_t(it.tensor.size()) * 8);
    if (optim) {
        write_raw(f, &optim->step, 8);
        write_raw(f, optim->m.data(), size_t(optim->m.size()) * 8);
        write_raw(f, optim->v.data(), size_t(optim->v.size()) * 8);
    }
    check(bool(f), "checkpoint: write failed: " + path);
}

bool load_checkpoint(MvgdNet& net, const std::string& path, OptimizerBlob* optim) {
    std::ifstream f(path, std::ios::binary);
    check(bool(f), "checkpoint: cannot open: " + path);
    char magic[8];
    read_raw(f, magic, 8);
    check(std::memcmp(magic, kMagic, 8) == 0, "checkpoint: bad magic");
    uint32_t version;
    read_raw(f, &version, 4);
    check(version == kVersion, "checkpoint: unsupported version");
    uint64_t mlen;
    read_raw(f, &mlen, 8);
    check(mlen < (1ull << 30), "checkpoint: manifest length overflow");
    std::string mtext(mlen, '\0');
    read_raw(f, mtext.data(), mlen);
    nlohmann::json manifest = nlohmann::json::parse(mtext);

    check(manifest.at("config_hash").get<uint64_t>() == net.config().hash(),
          "checkpoint: config hash mismatch");
    auto& items = net.params().items();
    const auto& plist = manifest.at("params");
    check(plist.size() == items.size(), "checkpoint: parameter count mismatch");
    for (size_t i = 0; i < items.size(); ++i) {
        check(plist[i].at("name").get<std::string>() == items[i].name,
              "checkpoint: parameter name mismatch at " + items[i].name);
        check(plist[i].at("shape").get<Shape>() == items[i].tensor.shape(),
              "checkpoint: parameter shape mismatch at " + items[i].name);
    }
    for (auto& it : items)
        read_raw(f, it.tensor.value().data(), size_t(it.tensor.size()) * 8);

    bool has_optim = manifest.at("optim_present").get<bool>();
    if (has_optim && optim) {
        int64_t trainable = manifest.at("trainable_count").get<int64_t>();
        read_raw(f, &optim->step, 8);
        optim->m.resize(trainable);
        optim->v.resize(trainable);
        read_raw(f, optim->m.data(), size_t(trainable) * 8);
        read_raw(f, optim->v.data(), size_t(trainable) * 8);
        return true;
    }
    return false;
}

}  // namespace mvgd
