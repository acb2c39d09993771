#ifndef MVGD_CONFIG_HPP
#define MVGD_CONFIG_HPP

#include <array>
#include <string>
#include <tuple>
#include <vector>

namespace mvgd {

struct AblationSwitches {
    bool use_flow = true;
    bool use_cmfm = true;
    bool use_tam = true;
    bool use_tsd = true;
    bool use_primary_mask = true;
};

// Table-3-style variant letters mapped onto the ablation switches.
AblationSwitches ablation_variant(char letter);

enum class FlowEncoding { Color, RawLift };

struct ModelConfig {
    int input_size = 384;
    std::array<int, 4> pyramid_strides = {4, 8, 16, 32};
    std::array<int, 4> backbone_channels = {128, 256, 512, 1024};
    std::array<int, 4> blocks_per_stage = {2, 2, 2, 2};
    int proj_channels = 128;  // C_1
    double alpha = 1.0 / 8.0;
    int window = 3;
    AblationSwitches ablation;
    double fbeta_beta_sq = 0.3;
    double binarize_threshold = 0.5;
    bool standardize = true;
    std::array<double, 3> norm_mean = {0.485, 0.456, 0.406};
    std::array<double, 3> norm_std = {0.229, 0.224, 0.225};
    FlowEncoding flow_encoding = FlowEncoding::Color;
    double refine_threshold = -1.0;  // <0: soft probability; otherwise hard threshold
    uint64_t init_seed = 1234;

    static ModelConfig tiny();

    std::string serialize() const;       // flat key=value text
    uint64_t hash() const;               // fingerprint of serialize()
};

// Returns cfg unchanged when all invariants hold; throws naming the first violation.
ModelConfig validate_config(const ModelConfig& cfg);

ModelConfig load_config_file(const std::string& path);
ModelConfig parse_config_text(const std::string& text);
void save_config_file(const ModelConfig& cfg, const std::string& path);

using WindowIndices = std::array<int, 3>;
std::vector<WindowIndices> make_windows(int video_len, int window = 3, int stride = 1);

}  // namespace mvgd

#endif
