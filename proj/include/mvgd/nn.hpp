#ifndef MVGD_NN_HPP
#define MVGD_NN_HPP

#include <random>

#include "mvgd/tensor.hpp"

namespace mvgd::nn {

struct Rng {
    explicit Rng(uint64_t seed) : eng(seed) {}
    double normal(double stddev) { return std::normal_distribution<double>(0.0, stddev)(eng); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng); }
    std::mt19937_64 eng;
};

// Global training/eval switch (affects batch-norm statistics).
bool train_mode();
void set_train_mode(bool on);

// Named parameter registry; ownership of all learnable state of a model.
class ParamStore {
public:
    Tensor add(const std::string& name, Shape shape, double init_stddev, Rng& rng,
               bool trainable = true);
    Tensor add_constant(const std::string& name, Shape shape, double value,
                        bool trainable = true);

    struct Item {
        std::string name;
        Tensor tensor;
        bool trainable;
    };
    const std::vector<Item>& items() const { return items_; }
    std::vector<Item>& items() { return items_; }
    Tensor find(const std::string& name) const;
    std::vector<Tensor> with_prefix(const std::string& prefix) const;
    int64_t total_size() const;

private:
    std::vector<Item> items_;
};

struct Linear {
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng,
           bool bias = true, double init_stddev = 0.02);
    Tensor forward(const Tensor& x) const;  // [n,in] -> [n,out]
    Tensor weight, bias_;
    bool has_bias = false;
};

struct Conv2d {
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int kh, int kw, int cin, int cout,
           int stride, int pad, Rng& rng, bool bias = true);
    Tensor forward(const Tensor& x) const;  // [H,W,cin] -> [Ho,Wo,cout]
    Tensor weight, bias_;
    int kh = 0, kw = 0, cin = 0, cout = 0, stride = 1, pad = 0;
    bool has_bias = false;
};

struct LayerNorm {
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int dim);
    Tensor forward(const Tensor& x) const;  // rows normalized
    Tensor gamma, beta;
};

struct BatchNorm2d {
    BatchNorm2d() = default;
    BatchNorm2d(ParamStore& ps, const std::string& name, int channels);
    Tensor forward(const Tensor& x) const;  // [H,W,C]; stats over H*W per channel
    Tensor gamma, beta;
    Tensor running_mean, running_var;  // non-trainable, checkpointed
    double momentum = 0.1;
    double eps = 1e-5;
};

struct Mlp {
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng);
    Tensor forward(const Tensor& x) const;
    Linear fc1, fc2;
};

// Squeeze-excitation channel attention; optional 1x1 input projection when
// the incoming channel width differs from the working width.
struct ChannelAttention {
    ChannelAttention() = default;
    ChannelAttention(ParamStore& ps, const std::string& name, int in_channels,
                     int channels, Rng& rng, int reduction = 4);
    Tensor forward(const Tensor& x) const;  // [H,W,in] -> [H,W,channels]
    Tensor project(const Tensor& x) const;  // projection only
    Tensor attend(const Tensor& h) const;   // SE gating on already-projected features
    Conv2d proj;
    Linear fc1, fc2;
    bool has_proj = false;
};

// CBAM-style spatial attention: channel mean/max maps -> 7x7 conv -> sigmoid gate.
struct SpatialAttention {
    SpatialAttention() = default;
    SpatialAttention(ParamStore& ps, const std::string& name, Rng& rng, int kernel = 7);
    Tensor forward(const Tensor& x) const;
    Conv2d conv;
};

// Channel attention followed by spatial attention.
struct Cbam {
    Cbam() = default;
    Cbam(ParamStore& ps, const std::string& name, int channels, Rng& rng, int reduction = 4);
    Tensor forward(const Tensor& x) const;
    Linear fc1, fc2;  // shared MLP for avg- and max-pooled descriptors
    SpatialAttention spatial;
    bool bypass = false;  // test hook: force all attention weights to 1
};

// softmax(q kᵀ / sqrt(d)) v
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

}  // namespace mvgd::nn

#endif
