#include "mvgd/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mvgd {

namespace {
std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("config: bad boolean for key '" + key + "': " + v);
}

template <size_t N>
std::array<int, N> parse_int_list(const std::string& v, const std::string& key) {
    std::array<int, N> out{};
    std::stringstream ss(v);
    std::string tok;
    size_t i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i >= N) throw std::runtime_error("config: too many values for key '" + key + "'");
        out[i++] = std::stoi(tok);
    }
    if (i != N) throw std::runtime_error("config: expected " + std::to_string(N) +
                                         " values for key '" + key + "'");
    return out;
}

template <size_t N>
std::string join(const std::array<int, N>& a) {
    std::string s;
    for (size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
    return s;
}
}  // namespace

AblationSwitches ablation_variant(char letter) {
    AblationSwitches s;
    switch (letter) {
        case 'A':  // backbone + simple decoder only
            s = {false, false, false, false, false};
            break;
        case 'B':  // flow with basic fusion, simple decoder
            s = {true, false, false, false, true};
            break;
        case 'C':  // CMFM, basic temporal, TSD
            s = {true, true, false, true, true};
            break;
        case 'D':  // basic fusion, TAM, TSD
            s = {true, false, true, true, true};
            break;
        case 'E':  // CMFM, TAM, simple decoder
            s = {true, true, true, false, true};
            break;
        case 'F':  // full minus primary-mask flow refinement
            s = {true, true, true, true, false};
            break;
        case 'G':  // full model
            s = {true, true, true, true, true};
            break;
        default:
            throw std::runtime_error(std::string("unknown ablation variant '") + letter + "'");
    }
    return s;
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.input_size = 64;
    c.backbone_channels = {16, 32, 64, 128};
    c.blocks_per_stage = {1, 1, 1, 1};
    c.proj_channels = 16;
    return c;
}

ModelConfig validate_config(const ModelConfig& cfg) {
    if (cfg.pyramid_strides != std::array<int, 4>{4, 8, 16, 32})
        throw std::runtime_error("config invalid: pyramid strides must be {4,8,16,32}");
    for (int i = 1; i < 4; ++i)
        if (cfg.backbone_channels[i] != 2 * cfg.backbone_channels[i - 1])
            throw std::runtime_error("config invalid: channel doubling law violated at level " +
                                     std::to_string(i + 1));
    if (cfg.backbone_channels[0] <= 0)
        throw std::runtime_error("config invalid: backbone_channels must be positive");
    if (cfg.input_size <= 0 || cfg.input_size % 32 != 0)
        throw std::runtime_error("config invalid: input_size fails divisibility by 32");
    if (cfg.proj_channels <= 0 || cfg.proj_channels % 2 != 0)
        throw std::runtime_error("config invalid: proj_channels must be even");
    if (!(cfg.alpha > 0.0)) throw std::runtime_error("config invalid: alpha must be positive");
    if (cfg.window != 3) throw std::runtime_error("config invalid: window must be 3");
    if (!(cfg.fbeta_beta_sq > 0.0))
        throw std::runtime_error("config invalid: fbeta_beta_sq must be positive");
    if (!(cfg.binarize_threshold > 0.0 && cfg.binarize_threshold < 1.0))
        throw std::runtime_error("config invalid: binarize_threshold must lie in (0,1)");
    for (int b : cfg.blocks_per_stage)
        if (b < 0) throw std::runtime_error("config invalid: blocks_per_stage must be >= 0");
    return cfg;
}

std::string ModelConfig::serialize() const {
    std::ostringstream os;
    os << "input_size=" << input_size << "\n";
    os << "backbone_channels=" << join(backbone_channels) << "\n";
    os << "blocks_per_stage=" << join(blocks_per_stage) << "\n";
    os << "proj_channels=" << proj_channels << "\n";
    os << "alpha=" << alpha << "\n";
    os << "window=" << window << "\n";
    os << "use_flow=" << bool_str(ablation.use_flow) << "\n";
    os << "use_cmfm=" << bool_str(ablation.use_cmfm) << "\n";
    os << "use_tam=" << bool_str(ablation.use_tam) << "\n";
    os << "use_tsd=" << bool_str(ablation.use_tsd) << "\n";
    os << "use_primary_mask=" << bool_str(ablation.use_primary_mask) << "\n";
    os << "fbeta_beta_sq=" << fbeta_beta_sq << "\n";
    os << "binarize_threshold=" << binarize_threshold << "\n";
    os << "standardize=" << bool_str(standardize) << "\n";
    os << "flow_encoding=" << (flow_encoding == FlowEncoding::Color ? "color" : "raw") << "\n";
    os << "refine_threshold=" << refine_threshold << "\n";
    os << "init_seed=" << init_seed << "\n";
    return os.str();
}

uint64_t ModelConfig::hash() const {
    // FNV-1a over the serialized text
    uint64_t h = 1469598103934665603ull;
    for (char c : serialize()) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

ModelConfig parse_config_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: malformed line " + std::to_string(lineno));
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "input_size") cfg.input_size = std::stoi(val);
        else if (key == "backbone_channels") cfg.backbone_channels = parse_int_list<4>(val, key);
        else if (key == "blocks_per_stage") cfg.blocks_per_stage = parse_int_list<4>(val, key);
        else if (key == "proj_channels") cfg.proj_channels = std::stoi(val);
        else if (key == "alpha") cfg.alpha = std::stod(val);
        else if (key == "window") cfg.window = std::stoi(val);
        else if (key == "use_flow") cfg.ablation.use_flow = parse_bool(val, key);
        else if (key == "use_cmfm") cfg.ablation.use_cmfm = parse_bool(val, key);
        else if (key == "use_tam") cfg.ablation.use_tam = parse_bool(val, key);
        else if (key == "use_tsd") cfg.ablation.use_tsd = parse_bool(val, key);
        else if (key == "use_primary_mask") cfg.ablation.use_primary_mask = parse_bool(val, key);
        else if (key == "fbeta_beta_sq") cfg.fbeta_beta_sq = std::stod(val);
        else if (key == "binarize_threshold") cfg.binarize_threshold = std::stod(val);
        else if (key == "standardize") cfg.standardize = parse_bool(val, key);
        else if (key == "flow_encoding") {
            if (val == "color") cfg.flow_encoding = FlowEncoding::Color;
            else if (val == "raw") cfg.flow_encoding = FlowEncoding::RawLift;
            else throw std::runtime_error("config: unknown flow_encoding '" + val + "'");
        } else if (key == "refine_threshold") cfg.refine_threshold = std::stod(val);
        else if (key == "init_seed") cfg.init_seed = std::stoull(val);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    return validate_config(cfg);
}

ModelConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

void save_config_file(const ModelConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot write " + path);
    f << cfg.serialize();
}

std::vector<WindowIndices> make_windows(int video_len, int window, int stride) {
    if (window != 3) throw std::runtime_error("make_windows: window must be 3");
    if (stride < 1) throw std::runtime_error("make_windows: stride must be >= 1");
    if (video_len < window) throw std::runtime_error("clip too short: video has " +
                                                     std::to_string(video_len) + " frames");
    std::vector<WindowIndices> out;
    for (int s = 0; s + window <= video_len; s += stride) {
        WindowIndices w{};
        for (int i = 0; i < window; ++i) w[i] = s + i;
        out.push_back(w);
    }
    return out;
}

}  // namespace mvgd
