#ifndef MVGD_TENSOR_HPP
#define MVGD_TENSOR_HPP

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvgd {

using Arr = Eigen::ArrayXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<int>;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    Arr value;
    Arr grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
};
using NodePtr = std::shared_ptr<Node>;

// Thread-local switch; inference paths disable graph construction.
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool prev;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor constant(Shape shape, double v = 0.0);
    static Tensor from_array(Shape shape, Arr data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape.at(i); }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t size() const { return node_->value.size(); }
    Arr& value() { return node_->value; }
    const Arr& value() const { return node_->value; }
    Arr& grad() { return node_->grad; }
    const Arr& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    const NodePtr& node() const { return node_; }

    double item() const {
        check(size() == 1, "item() requires a scalar tensor");
        return node_->value[0];
    }

private:
    NodePtr node_;
};

void backward(const Tensor& scalar);
void zero_grad(Tensor& t);

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor scalar_sub(double c, const Tensor& a);  // c - a
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor rsqrt(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);  // pass-through gradient inside the band

// broadcast: w over the last axis (per-channel), m over all-but-last (per-pixel)
Tensor mul_channelwise(const Tensor& x, const Tensor& w);
Tensor mul_pixelwise(const Tensor& x, const Tensor& m);
Tensor add_rowvector(const Tensor& x, const Tensor& b);  // x: [n,d], b: [d]

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice_axis(const Tensor& x, int axis, int start, int end);
Tensor transpose(const Tensor& x);  // 2-D

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mean_over_channels(const Tensor& x);  // [..,C] -> [..]
Tensor max_over_channels(const Tensor& x);
Tensor spatial_mean(const Tensor& x);  // [H,W,C] -> [C]
Tensor spatial_max(const Tensor& x);

// ---- linear algebra / nn primitives ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad);  // [H,W,C] -> [Ho*Wo, kh*kw*C]
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);        // [H,W,C]

// Records row-sum extrema of every softmax evaluated while enabled.
struct SoftmaxProbe {
    static void enable();
    static void disable();
    static bool enabled();
    static void record(double min_sum, double max_sum);
    static double min_sum();
    static double max_sum();
    static int64_t count();
};

}  // namespace mvgd

#endif
