#include "mvgd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace mvgd {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;

thread_local bool g_probe_enabled = false;
thread_local double g_probe_min = std::numeric_limits<double>::infinity();
thread_local double g_probe_max = -std::numeric_limits<double>::infinity();
thread_local int64_t g_probe_count = 0;

void accum(Node& n, const Arr& g) {
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Arr::Zero(n.value.size());
    n.grad += g;
}

NodePtr make_node(Shape shape, Arr value) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

bool wants_grad(std::initializer_list<const Tensor*> parents) {
    if (!g_grad_enabled) return false;
    for (auto* p : parents)
        if (p->requires_grad()) return true;
    return false;
}

void attach(NodePtr& n, std::initializer_list<const Tensor*> parents,
            std::function<void(Node&)> fn) {
    if (!wants_grad(parents)) return;
    n->requires_grad = true;
    for (auto* p : parents) n->parents.push_back(p->node());
    n->backprop = std::move(fn);
}

Eigen::Map<MatRM> as_mat(Arr& a, int rows, int cols) {
    return Eigen::Map<MatRM>(a.data(), rows, cols);
}
Eigen::Map<const MatRM> as_mat(const Arr& a, int rows, int cols) {
    return Eigen::Map<const MatRM>(a.data(), rows, cols);
}

// shape as [outer, axis_dim, inner] around `axis`
void split_shape(const Shape& s, int axis, int64_t& outer, int64_t& ax, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    ax = s[axis];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

void SoftmaxProbe::enable() {
    g_probe_enabled = true;
    g_probe_min = std::numeric_limits<double>::infinity();
    g_probe_max = -std::numeric_limits<double>::infinity();
    g_probe_count = 0;
}
void SoftmaxProbe::disable() { g_probe_enabled = false; }
bool SoftmaxProbe::enabled() { return g_probe_enabled; }
void SoftmaxProbe::record(double mn, double mx) {
    g_probe_min = std::min(g_probe_min, mn);
    g_probe_max = std::max(g_probe_max, mx);
    ++g_probe_count;
}
double SoftmaxProbe::min_sum() { return g_probe_min; }
double SoftmaxProbe::max_sum() { return g_probe_max; }
int64_t SoftmaxProbe::count() { return g_probe_count; }

Tensor Tensor::constant(Shape shape, double v) {
    auto n = make_node(shape, Arr::Constant(numel(shape), v));
    return Tensor(n);
}

Tensor Tensor::from_array(Shape shape, Arr data, bool requires_grad) {
    check(numel(shape) == data.size(), "from_array: shape/data size mismatch");
    auto n = make_node(std::move(shape), std::move(data));
    n->requires_grad = requires_grad && g_grad_enabled;
    return Tensor(n);
}

void backward(const Tensor& scalar) {
    check(scalar.size() == 1, "backward: loss must be scalar");
    Node* root = scalar.node().get();
    if (!root->requires_grad) return;

    // iterative post-order DFS over grad-requiring subgraph
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    struct Frame {
        Node* n;
        size_t i;
    };
    std::vector<Frame> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.i < f.n->parents.size()) {
            Node* p = f.n->parents[f.i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }
    root->grad = Arr::Ones(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.size() > 0) n->backprop(*n);
    }
}

void zero_grad(Tensor& t) { t.grad().resize(0); }

// ---------- elementwise ----------

static void check_same(const Tensor& a, const Tensor& b, const char* op) {
    check(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same(a, b, "add");
    auto n = make_node(a.shape(), a.value() + b.value());
    auto pa = a.node(), pb = b.node();
    attach(n, {&a, &b}, [pa, pb](Node& self) {
        accum(*pa, self.grad);
        accum(*pb, self.grad);
    });
    return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same(a, b, "sub");
    auto n = make_node(a.shape(), a.value() - b.value());
    auto pa = a.node(), pb = b.node();
    attach(n, {&a, &b}, [pa, pb](Node& self) {
        accum(*pa, self.grad);
        accum(*pb, -self.grad);
    });
    return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same(a, b, "mul");
    auto n = make_node(a.shape(), a.value() * b.value());
    auto pa = a.node(), pb = b.node();
    attach(n, {&a, &b}, [pa, pb](Node& self) {
        accum(*pa, self.grad * pb->value);
        accum(*pb, self.grad * pa->value);
    });
    return Tensor(n);
}

Tensor div(const Tensor& a, const Tensor& b) {
    check_same(a, b, "div");
    auto n = make_node(a.shape(), a.value() / b.value());
    auto pa = a.node(), pb = b.node();
    attach(n, {&a, &b}, [pa, pb](Node& self) {
        accum(*pa, self.grad / pb->value);
        accum(*pb, -self.grad * pa->value / (pb->value * pb->value));
    });
    return Tensor(n);
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
    auto n = make_node(a.shape(), a.value() + c);
    auto pa = a.node();
    attach(n, {&a}, [pa](Node& self) { accum(*pa, self.grad); });
    return Tensor(n);
}

Tensor mul_scalar(const Tensor& a, double c) {
    auto n = make_node(a.shape(), a.value() * c);
    auto pa = a.node();
    attach(n, {&a}, [pa, c](Node& self) { accum(*pa, self.grad * c); });
    return Tensor(n);
}

Tensor scalar_sub(double c, const Tensor& a) {
    auto n = make_node(a.shape(), c - a.value());
    auto pa = a.node();
    attach(n, {&a}, [pa](Node& self) { accum(*pa, -self.grad); });
    return Tensor(n);
}

Tensor relu(const Tensor& a) {
    auto n = make_node(a.shape(), a.value().max(0.0));
    auto pa = a.node();
    attach(n, {&a}, [pa](Node& self) {
        accum(*pa, self.grad * (pa->value > 0.0).cast<double>());
    });
    return Tensor(n);
}

Tensor gelu(const Tensor& a) {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Arr cdf = a.value().unaryExpr(
        [inv_sqrt2](double x) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)); });
    auto n = make_node(a.shape(), a.value() * cdf);
    auto pa = a.node();
    attach(n, {&a}, [pa, cdf](Node& self) {
        const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
        Arr pdf = (-0.5 * pa->value.square()).exp() * inv_sqrt2pi;
        accum(*pa, self.grad * (cdf + pa->value * pdf));
    });
    return Tensor(n);
}

Tensor sigmoid(const Tensor& a) {
    Arr s = 1.0 / (1.0 + (-a.value()).exp());
    auto n = make_node(a.shape(), s);
    auto pa = a.node();
    attach(n, {&a}, [pa, s](Node& self) { accum(*pa, self.grad * s * (1.0 - s)); });
    return Tensor(n);
}

Tensor log_t(const Tensor& a) {
    auto n = make_node(a.shape(), a.value().log());
    auto pa = a.node();
    attach(n, {&a}, [pa](Node& self) { accum(*pa, self.grad / pa->value); });
    return Tensor(n);
}

Tensor rsqrt(const Tensor& a) {
    Arr y = a.value().rsqrt();
    auto n = make_node(a.shape(), y);
    auto pa = a.node();
    attach(n, {&a}, [pa, y](Node& self) {
        accum(*pa, self.grad * (-0.5 * y * y * y));
    });
    return Tensor(n);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    auto n = make_node(a.shape(), a.value().max(lo).min(hi));
    auto pa = a.node();
    attach(n, {&a}, [pa, lo, hi](Node& self) {
        Arr inside = ((pa->value >= lo) && (pa->value <= hi)).cast<double>();
        accum(*pa, self.grad * inside);
    });
    return Tensor(n);
}

// ---------- broadcast ----------

Tensor mul_channelwise(const Tensor& x, const Tensor& w) {
    int c = x.shape().back();
    check(w.size() == c, "mul_channelwise: weight size must equal channel count");
    int64_t rows = x.size() / c;
    Arr out(x.size());
    as_mat(out, rows, c) =
        as_mat(x.value(), rows, c).array().rowwise() *
        Eigen::Map<const Eigen::RowVectorXd>(w.value().data(), c).array();
    auto n = make_node(x.shape(), std::move(out));
    auto px = x.node(), pw = w.node();
    attach(n, {&x, &w}, [px, pw, rows, c](Node& self) {
        if (px->requires_grad) {
            Arr gx(px->value.size());
            as_mat(gx, rows, c) =
                as_mat(self.grad, rows, c).array().rowwise() *
                Eigen::Map<const Eigen::RowVectorXd>(pw->value.data(), c).array();
            accum(*px, gx);
        }
        if (pw->requires_grad) {
            Arr gw(c);
            Eigen::Map<Eigen::RowVectorXd>(gw.data(), c) =
                (as_mat(self.grad, rows, c).array() * as_mat(px->value, rows, c).array())
                    .colwise()
                    .sum();
            accum(*pw, gw);
        }
    });
    return Tensor(n);
}

Tensor mul_pixelwise(const Tensor& x, const Tensor& m) {
    int c = x.shape().back();
    int64_t rows = x.size() / c;
    check(m.size() == rows, "mul_pixelwise: mask size must equal pixel count");
    Arr out(x.size());
    as_mat(out, rows, c) =
        as_mat(x.value(), rows, c).array().colwise() *
        Eigen::Map<const Eigen::VectorXd>(m.value().data(), rows).array();
    auto n = make_node(x.shape(), std::move(out));
    auto px = x.node(), pm = m.node();
    attach(n, {&x, &m}, [px, pm, rows, c](Node& self) {
        if (px->requires_grad) {
            Arr gx(px->value.size());
            as_mat(gx, rows, c) =
                as_mat(self.grad, rows, c).array().colwise() *
                Eigen::Map<const Eigen::VectorXd>(pm->value.data(), rows).array();
            accum(*px, gx);
        }
        if (pm->requires_grad) {
            Arr gm(rows);
            Eigen::Map<Eigen::VectorXd>(gm.data(), rows) =
                (as_mat(self.grad, rows, c).array() * as_mat(px->value, rows, c).array())
                    .rowwise()
                    .sum();
            accum(*pm, gm);
        }
    });
    return Tensor(n);
}

Tensor add_rowvector(const Tensor& x, const Tensor& b) {
    int d = x.shape().back();
    check(b.size() == d, "add_rowvector: bias size must equal last dim");
    int64_t rows = x.size() / d;
    Arr out(x.size());
    as_mat(out, rows, d) = as_mat(x.value(), rows, d).array().rowwise() +
                           Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), d).array();
    auto n = make_node(x.shape(), std::move(out));
    auto px = x.node(), pb = b.node();
    attach(n, {&x, &b}, [px, pb, rows, d](Node& self) {
        accum(*px, self.grad);
        if (pb->requires_grad) {
            Arr gb(d);
            Eigen::Map<Eigen::RowVectorXd>(gb.data(), d) =
                as_mat(self.grad, rows, d).colwise().sum();
            accum(*pb, gb);
        }
    });
    return Tensor(n);
}

// ---------- shape ----------

Tensor reshape(const Tensor& x, Shape shape) {
    check(numel(shape) == x.size(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    auto n = make_node(std::move(shape), x.value());
    auto px = x.node();
    attach(n, {&x}, [px](Node& self) { accum(*px, self.grad); });
    return Tensor(n);
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    check(!xs.empty(), "concat: empty input");
    if (axis < 0) axis += xs[0].ndim();
    const Shape& s0 = xs[0].shape();
    check(axis >= 0 && axis < (int)s0.size(), "concat: bad axis");
    int64_t total_ax = 0;
    for (const auto& x : xs) {
        check(x.ndim() == (int)s0.size(), "concat: rank mismatch");
        for (int i = 0; i < (int)s0.size(); ++i)
            if (i != axis) check(x.shape()[i] == s0[i], "concat: non-axis dim mismatch");
        total_ax += x.shape()[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = static_cast<int>(total_ax);
    int64_t outer, ax0, inner;
    split_shape(out_shape, axis, outer, ax0, inner);

    Arr out(numel(out_shape));
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const auto& x : xs) {
        offsets.push_back(off);
        int64_t xa = x.shape()[axis];
        for (int64_t o = 0; o < outer; ++o)
            out.segment(o * total_ax * inner + off * inner, xa * inner) =
                x.value().segment(o * xa * inner, xa * inner);
        off += xa;
    }
    auto n = make_node(out_shape, std::move(out));

    bool any = false;
    for (const auto& x : xs) any = any || x.requires_grad();
    if (g_grad_enabled && any) {
        n->requires_grad = true;
        std::vector<NodePtr> ps;
        std::vector<int64_t> sizes;
        for (const auto& x : xs) {
            n->parents.push_back(x.node());
            ps.push_back(x.node());
            sizes.push_back(x.shape()[axis]);
        }
        int64_t ta = total_ax, in = inner, ou = outer;
        std::vector<int64_t> offs = offsets;
        n->backprop = [ps, sizes, offs, ta, in, ou](Node& self) {
            for (size_t k = 0; k < ps.size(); ++k) {
                if (!ps[k]->requires_grad) continue;
                Arr g(ps[k]->value.size());
                for (int64_t o = 0; o < ou; ++o)
                    g.segment(o * sizes[k] * in, sizes[k] * in) =
                        self.grad.segment(o * ta * in + offs[k] * in, sizes[k] * in);
                accum(*ps[k], g);
            }
        };
    }
    return Tensor(n);
}

Tensor slice_axis(const Tensor& x, int axis, int start, int end) {
    if (axis < 0) axis += x.ndim();
    check(axis >= 0 && axis < x.ndim(), "slice_axis: bad axis");
    check(0 <= start && start < end && end <= x.shape()[axis], "slice_axis: bad range");
    int64_t outer, ax, inner;
    split_shape(x.shape(), axis, outer, ax, inner);
    int64_t len = end - start;
    Shape out_shape = x.shape();
    out_shape[axis] = static_cast<int>(len);
    Arr out(numel(out_shape));
    for (int64_t o = 0; o < outer; ++o)
        out.segment(o * len * inner, len * inner) =
            x.value().segment(o * ax * inner + start * inner, len * inner);
    auto n = make_node(out_shape, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, outer, ax, inner, start, len](Node& self) {
        Arr g = Arr::Zero(px->value.size());
        for (int64_t o = 0; o < outer; ++o)
            g.segment(o * ax * inner + start * inner, len * inner) =
                self.grad.segment(o * len * inner, len * inner);
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor transpose(const Tensor& x) {
    check(x.ndim() == 2, "transpose: expects 2-D");
    int r = x.dim(0), c = x.dim(1);
    Arr out(x.size());
    as_mat(out, c, r) = as_mat(x.value(), r, c).transpose();
    auto n = make_node({c, r}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, r, c](Node& self) {
        Arr g(px->value.size());
        as_mat(g, r, c) = as_mat(self.grad, c, r).transpose();
        accum(*px, g);
    });
    return Tensor(n);
}

// ---------- reductions ----------

Tensor sum(const Tensor& x) {
    auto n = make_node({1}, Arr::Constant(1, x.value().sum()));
    auto px = x.node();
    attach(n, {&x}, [px](Node& self) {
        accum(*px, Arr::Constant(px->value.size(), self.grad[0]));
    });
    return Tensor(n);
}

Tensor mean(const Tensor& x) {
    double inv = 1.0 / static_cast<double>(x.size());
    auto n = make_node({1}, Arr::Constant(1, x.value().sum() * inv));
    auto px = x.node();
    attach(n, {&x}, [px, inv](Node& self) {
        accum(*px, Arr::Constant(px->value.size(), self.grad[0] * inv));
    });
    return Tensor(n);
}

Tensor mean_over_channels(const Tensor& x) {
    check(x.ndim() >= 2, "mean_over_channels: rank >= 2 required");
    int c = x.shape().back();
    int64_t rows = x.size() / c;
    Arr out(rows);
    Eigen::Map<Eigen::VectorXd>(out.data(), rows) =
        as_mat(x.value(), rows, c).rowwise().mean();
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    auto n = make_node(out_shape, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, rows, c](Node& self) {
        Arr g(px->value.size());
        as_mat(g, rows, c) =
            (Eigen::Map<const Eigen::VectorXd>(self.grad.data(), rows) / double(c)) *
            Eigen::RowVectorXd::Ones(c);
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor max_over_channels(const Tensor& x) {
    int c = x.shape().back();
    int64_t rows = x.size() / c;
    Arr out(rows);
    auto idx = std::make_shared<std::vector<int>>(rows);
    auto m = as_mat(x.value(), rows, c);
    for (int64_t r = 0; r < rows; ++r) {
        int j;
        out[r] = m.row(r).maxCoeff(&j);
        (*idx)[r] = j;
    }
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    auto n = make_node(out_shape, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, idx, rows, c](Node& self) {
        Arr g = Arr::Zero(px->value.size());
        for (int64_t r = 0; r < rows; ++r) g[r * c + (*idx)[r]] += self.grad[r];
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor spatial_mean(const Tensor& x) {
    int c = x.shape().back();
    int64_t rows = x.size() / c;
    Arr out(c);
    Eigen::Map<Eigen::RowVectorXd>(out.data(), c) =
        as_mat(x.value(), rows, c).colwise().mean();
    auto n = make_node({c}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, rows, c](Node& self) {
        Arr g(px->value.size());
        as_mat(g, rows, c) = Eigen::VectorXd::Ones(rows) *
                             (Eigen::Map<const Eigen::RowVectorXd>(self.grad.data(), c) /
                              double(rows));
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor spatial_max(const Tensor& x) {
    int c = x.shape().back();
    int64_t rows = x.size() / c;
    Arr out(c);
    auto idx = std::make_shared<std::vector<int64_t>>(c);
    auto m = as_mat(x.value(), rows, c);
    for (int j = 0; j < c; ++j) {
        int64_t r = 0;
        out[j] = m.col(j).maxCoeff(&r);
        (*idx)[j] = r;
    }
    auto n = make_node({c}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, idx, c](Node& self) {
        Arr g = Arr::Zero(px->value.size());
        for (int j = 0; j < c; ++j) g[(*idx)[j] * c + j] += self.grad[j];
        accum(*px, g);
    });
    return Tensor(n);
}

// ---------- linear algebra / nn ----------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.ndim() == 2 && b.ndim() == 2, "matmul: expects 2-D operands");
    check(a.dim(1) == b.dim(0), "matmul: inner dims mismatch " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    int m = a.dim(0), k = a.dim(1), p = b.dim(1);
    Arr out(int64_t(m) * p);
    as_mat(out, m, p).noalias() = as_mat(a.value(), m, k) * as_mat(b.value(), k, p);
    auto n = make_node({m, p}, std::move(out));
    auto pa = a.node(), pb = b.node();
    attach(n, {&a, &b}, [pa, pb, m, k, p](Node& self) {
        auto gy = as_mat(self.grad, m, p);
        if (pa->requires_grad) {
            Arr ga(int64_t(m) * k);
            as_mat(ga, m, k).noalias() = gy * as_mat(pb->value, k, p).transpose();
            accum(*pa, ga);
        }
        if (pb->requires_grad) {
            Arr gb(int64_t(k) * p);
            as_mat(gb, k, p).noalias() = as_mat(pa->value, m, k).transpose() * gy;
            accum(*pb, gb);
        }
    });
    return Tensor(n);
}

Tensor softmax_rows(const Tensor& x) {
    check(x.ndim() == 2, "softmax_rows: expects 2-D");
    int r = x.dim(0), c = x.dim(1);
    Arr out(x.size());
    auto xin = as_mat(x.value(), r, c);
    auto y = as_mat(out, r, c);
    for (int i = 0; i < r; ++i) {
        Eigen::RowVectorXd row = (xin.row(i).array() - xin.row(i).maxCoeff()).exp();
        y.row(i) = row / row.sum();
    }
    if (g_probe_enabled) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (int i = 0; i < r; ++i) {
            double s = y.row(i).sum();
            mn = std::min(mn, s);
            mx = std::max(mx, s);
        }
        SoftmaxProbe::record(mn, mx);
    }
    auto n = make_node({r, c}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, r, c](Node& self) {
        Arr g(px->value.size());
        auto y = as_mat(self.value, r, c);
        auto gy = as_mat(self.grad, r, c);
        auto gx = as_mat(g, r, c);
        for (int i = 0; i < r; ++i) {
            double dot = y.row(i).dot(gy.row(i));
            gx.row(i) = y.row(i).array() * (gy.row(i).array() - dot);
        }
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor layernorm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    check(x.ndim() == 2, "layernorm_rows: expects 2-D");
    int r = x.dim(0), d = x.dim(1);
    check(gamma.size() == d && beta.size() == d, "layernorm_rows: affine dims mismatch");
    Arr xhat(x.size()), inv_std(r);
    auto xin = as_mat(x.value(), r, d);
    auto xh = as_mat(xhat, r, d);
    for (int i = 0; i < r; ++i) {
        double mu = xin.row(i).mean();
        double var = (xin.row(i).array() - mu).square().mean();
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        xh.row(i) = (xin.row(i).array() - mu) * inv_std[i];
    }
    Arr out(x.size());
    as_mat(out, r, d) =
        (xh.array().rowwise() * Eigen::Map<const Eigen::RowVectorXd>(gamma.value().data(), d).array())
            .rowwise() +
        Eigen::Map<const Eigen::RowVectorXd>(beta.value().data(), d).array();
    auto n = make_node({r, d}, std::move(out));
    auto px = x.node(), pg = gamma.node(), pb = beta.node();
    auto xh_keep = std::make_shared<Arr>(std::move(xhat));
    auto is_keep = std::make_shared<Arr>(std::move(inv_std));
    attach(n, {&x, &gamma, &beta}, [px, pg, pb, xh_keep, is_keep, r, d](Node& self) {
        auto gy = as_mat(self.grad, r, d);
        auto xh = as_mat(*xh_keep, r, d);
        if (pg->requires_grad) {
            Arr gg(d);
            Eigen::Map<Eigen::RowVectorXd>(gg.data(), d) =
                (gy.array() * xh.array()).colwise().sum();
            accum(*pg, gg);
        }
        if (pb->requires_grad) {
            Arr gb(d);
            Eigen::Map<Eigen::RowVectorXd>(gb.data(), d) = gy.colwise().sum();
            accum(*pb, gb);
        }
        if (px->requires_grad) {
            Arr g(px->value.size());
            auto gx = as_mat(g, r, d);
            auto gw = Eigen::Map<const Eigen::RowVectorXd>(pg->value.data(), d);
            for (int i = 0; i < r; ++i) {
                Eigen::RowVectorXd gyw = gy.row(i).array() * gw.array();
                double m1 = gyw.mean();
                double m2 = (gyw.array() * xh.row(i).array()).mean();
                gx.row(i) =
                    ((gyw.array() - m1) - xh.row(i).array() * m2) * (*is_keep)[i];
            }
            accum(*px, g);
        }
    });
    return Tensor(n);
}

Tensor im2col(const Tensor& x, int kh, int kw, int stride, int pad) {
    check(x.ndim() == 3, "im2col: expects [H,W,C]");
    int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (w + 2 * pad - kw) / stride + 1;
    check(ho > 0 && wo > 0, "im2col: kernel larger than padded input");
    int64_t rows = int64_t(ho) * wo, cols = int64_t(kh) * kw * c;
    auto idx = std::make_shared<std::vector<int64_t>>(rows * cols);
    Arr out(rows * cols);
    const double* xv = x.value().data();
    int64_t p = 0;
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    int sy = oy * stride - pad + ky;
                    int sx = ox * stride - pad + kx;
                    bool in = sy >= 0 && sy < h && sx >= 0 && sx < w;
                    int64_t base = in ? (int64_t(sy) * w + sx) * c : -1;
                    for (int ch = 0; ch < c; ++ch, ++p) {
                        (*idx)[p] = in ? base + ch : -1;
                        out[p] = in ? xv[base + ch] : 0.0;
                    }
                }
    auto n = make_node({(int)rows, (int)cols}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, idx](Node& self) {
        Arr g = Arr::Zero(px->value.size());
        for (int64_t p = 0; p < (int64_t)idx->size(); ++p)
            if ((*idx)[p] >= 0) g[(*idx)[p]] += self.grad[p];
        accum(*px, g);
    });
    return Tensor(n);
}

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    check(x.ndim() == 3, "bilinear_resize: expects [H,W,C]");
    int h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (out_h == h && out_w == w) return x;
    struct Tap {
        int64_t src;
        double wgt;
    };
    auto taps = std::make_shared<std::vector<std::array<Tap, 4>>>(int64_t(out_h) * out_w);
    double sy = double(h) / out_h, sx = double(w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        int y0 = (int)std::floor(fy);
        double ty = fy - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            int x0 = (int)std::floor(fx);
            double tx = fx - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            auto& t = (*taps)[int64_t(oy) * out_w + ox];
            t[0] = {(int64_t(y0c) * w + x0c), (1 - ty) * (1 - tx)};
            t[1] = {(int64_t(y0c) * w + x1c), (1 - ty) * tx};
            t[2] = {(int64_t(y1c) * w + x0c), ty * (1 - tx)};
            t[3] = {(int64_t(y1c) * w + x1c), ty * tx};
        }
    }
    Arr out(int64_t(out_h) * out_w * c);
    const double* xv = x.value().data();
    for (int64_t pix = 0; pix < int64_t(out_h) * out_w; ++pix) {
        const auto& t = (*taps)[pix];
        for (int ch = 0; ch < c; ++ch)
            out[pix * c + ch] = t[0].wgt * xv[t[0].src * c + ch] + t[1].wgt * xv[t[1].src * c + ch] +
                                t[2].wgt * xv[t[2].src * c + ch] + t[3].wgt * xv[t[3].src * c + ch];
    }
    auto n = make_node({out_h, out_w, c}, std::move(out));
    auto px = x.node();
    attach(n, {&x}, [px, taps, out_h, out_w, c](Node& self) {
        Arr g = Arr::Zero(px->value.size());
        for (int64_t pix = 0; pix < int64_t(out_h) * out_w; ++pix) {
            const auto& t = (*taps)[pix];
            for (int ch = 0; ch < c; ++ch) {
                double gy = self.grad[pix * c + ch];
                for (int k = 0; k < 4; ++k) g[t[k].src * c + ch] += t[k].wgt * gy;
            }
        }
        accum(*px, g);
    });
    return Tensor(n);
}

}  // namespace mvgd
