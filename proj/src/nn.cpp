#include "mvgd/nn.hpp"

#include <cmath>

namespace mvgd::nn {

namespace {
thread_local bool g_train_mode = false;
}

bool train_mode() { return g_train_mode; }
void set_train_mode(bool on) { g_train_mode = on; }

Tensor ParamStore::add(const std::string& name, Shape shape, double init_stddev, Rng& rng,
                       bool trainable) {
    Arr data(numel(shape));
    for (int64_t i = 0; i < data.size(); ++i)
        data[i] = init_stddev > 0.0 ? rng.normal(init_stddev) : 0.0;
    Tensor t = Tensor::from_array(std::move(shape), std::move(data), trainable);
    items_.push_back({name, t, trainable});
    return t;
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, double value,
                                bool trainable) {
    Tensor t = Tensor::constant(std::move(shape), value);
    t.set_requires_grad(trainable);
    items_.push_back({name, t, trainable});
    return t;
}

Tensor ParamStore::find(const std::string& name) const {
    for (const auto& it : items_)
        if (it.name == name) return it.tensor;
    throw std::runtime_error("parameter not found: " + name);
}

std::vector<Tensor> ParamStore::with_prefix(const std::string& prefix) const {
    std::vector<Tensor> out;
    for (const auto& it : items_)
        if (it.name.rfind(prefix, 0) == 0) out.push_back(it.tensor);
    return out;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.tensor.size();
    return n;
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng, bool bias,
               double init_stddev)
    : has_bias(bias) {
    weight = ps.add(name + ".W", {in, out}, init_stddev, rng);
    if (bias) bias_ = ps.add(name + ".b", {out}, 0.0, rng);
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    if (has_bias) y = add_rowvector(y, bias_);
    return y;
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int kh_, int kw_, int cin_, int cout_,
               int stride_, int pad_, Rng& rng, bool bias)
    : kh(kh_), kw(kw_), cin(cin_), cout(cout_), stride(stride_), pad(pad_), has_bias(bias) {
    double fan_in = double(kh) * kw * cin;
    weight = ps.add(name + ".W", {kh * kw * cin, cout}, std::sqrt(2.0 / fan_in), rng);
    if (bias) bias_ = ps.add(name + ".b", {cout}, 0.0, rng);
}

Tensor Conv2d::forward(const Tensor& x) const {
    check(x.ndim() == 3 && x.dim(2) == cin,
          "conv2d: expected [H,W," + std::to_string(cin) + "], got " + shape_str(x.shape()));
    int ho = (x.dim(0) + 2 * pad - kh) / stride + 1;
    int wo = (x.dim(1) + 2 * pad - kw) / stride + 1;
    Tensor col = im2col(x, kh, kw, stride, pad);
    Tensor y = matmul(col, weight);
    if (has_bias) y = add_rowvector(y, bias_);
    return reshape(y, {ho, wo, cout});
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
    gamma = ps.add_constant(name + ".gamma", {dim}, 1.0);
    beta = ps.add_constant(name + ".beta", {dim}, 0.0);
}

Tensor LayerNorm::forward(const Tensor& x) const { return layernorm_rows(x, gamma, beta); }

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& name, int channels) {
    gamma = ps.add_constant(name + ".gamma", {channels}, 1.0);
    beta = ps.add_constant(name + ".beta", {channels}, 0.0);
    running_mean = ps.add_constant(name + ".running_mean", {channels}, 0.0, false);
    running_var = ps.add_constant(name + ".running_var", {channels}, 1.0, false);
}

Tensor BatchNorm2d::forward(const Tensor& x) const {
    int c = x.shape().back();
    check(c == (int)gamma.size(), "batchnorm: channel mismatch");
    int rows = (int)(x.size() / c);
    // Per-sample channel statistics in both modes. With a batch of one, frozen
    // running averages shift the normalization per clip and wreck inference,
    // so inference reuses the same statistics the step was trained under.
    // Running averages are still tracked so checkpoints carry them.
    Tensor mu = spatial_mean(x);  // [C]
    Tensor xc = reshape(add_rowvector(reshape(x, {rows, c}), mul_scalar(mu, -1.0)),
                        x.shape());
    Tensor var = spatial_mean(mul(xc, xc));  // [C]
    if (train_mode()) {
        int64_t hw = x.size() / c;
        double unbias = hw > 1 ? double(hw) / double(hw - 1) : 1.0;
        running_mean.node()->value =
            (1.0 - momentum) * running_mean.value() + momentum * mu.value();
        running_var.node()->value =
            (1.0 - momentum) * running_var.value() + momentum * (var.value() * unbias);
    }
    Tensor rstd = rsqrt(add_scalar(var, eps));
    Tensor xn = mul_channelwise(xc, rstd);
    Tensor y = add_rowvector(reshape(mul_channelwise(xn, gamma), {rows, c}), beta);
    return reshape(y, x.shape());
}

Mlp::Mlp(ParamStore& ps, const std::string& name, int dim, int hidden, Rng& rng)
    : fc1(ps, name + ".fc1", dim, hidden, rng), fc2(ps, name + ".fc2", hidden, dim, rng) {}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

ChannelAttention::ChannelAttention(ParamStore& ps, const std::string& name, int in_channels,
                                   int channels, Rng& rng, int reduction) {
    if (in_channels != channels) {
        proj = Conv2d(ps, name + ".proj", 1, 1, in_channels, channels, 1, 0, rng);
        has_proj = true;
    }
    int hidden = std::max(1, channels / reduction);
    fc1 = Linear(ps, name + ".fc1", channels, hidden, rng);
    fc2 = Linear(ps, name + ".fc2", hidden, channels, rng);
}

Tensor ChannelAttention::project(const Tensor& x) const {
    return has_proj ? proj.forward(x) : x;
}

Tensor ChannelAttention::attend(const Tensor& h) const {
    int c = h.shape().back();
    Tensor desc = reshape(spatial_mean(h), {1, c});
    Tensor w = sigmoid(fc2.forward(relu(fc1.forward(desc))));
    return mul_channelwise(h, reshape(w, {c}));
}

Tensor ChannelAttention::forward(const Tensor& x) const { return attend(project(x)); }

SpatialAttention::SpatialAttention(ParamStore& ps, const std::string& name, Rng& rng, int kernel)
    : conv(ps, name + ".conv", kernel, kernel, 2, 1, 1, kernel / 2, rng) {}

Tensor SpatialAttention::forward(const Tensor& x) const {
    int h = x.dim(0), w = x.dim(1);
    Tensor avg = reshape(mean_over_channels(x), {h, w, 1});
    Tensor mx = reshape(max_over_channels(x), {h, w, 1});
    Tensor m = sigmoid(conv.forward(concat({avg, mx}, 2)));
    return mul_pixelwise(x, reshape(m, {h, w}));
}

Cbam::Cbam(ParamStore& ps, const std::string& name, int channels, Rng& rng, int reduction)
    : spatial(ps, name + ".sa", rng) {
    int hidden = std::max(1, channels / reduction);
    fc1 = Linear(ps, name + ".ca.fc1", channels, hidden, rng);
    fc2 = Linear(ps, name + ".ca.fc2", hidden, channels, rng);
}

Tensor Cbam::forward(const Tensor& x) const {
    if (bypass) return x;
    int c = x.shape().back();
    Tensor avg = reshape(spatial_mean(x), {1, c});
    Tensor mx = reshape(spatial_max(x), {1, c});
    Tensor w = sigmoid(add(fc2.forward(relu(fc1.forward(avg))),
                           fc2.forward(relu(fc1.forward(mx)))));
    Tensor y = mul_channelwise(x, reshape(w, {c}));
    return spatial.forward(y);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    double scale = 1.0 / std::sqrt(double(q.shape().back()));
    Tensor logits = mul_scalar(matmul(q, transpose(k)), scale);
    return matmul(softmax_rows(logits), v);
}

}  // namespace mvgd::nn
