#ifndef MVGD_IMAGE_HPP
#define MVGD_IMAGE_HPP

#include <string>

#include "mvgd/tensor.hpp"

namespace mvgd {

// Plain dense image, HWC layout, values in [0,1].
struct Image {
    int h = 0, w = 0, c = 0;
    Arr data;

    Image() = default;
    Image(int h_, int w_, int c_) : h(h_), w(w_), c(c_), data(Arr::Zero(int64_t(h_) * w_ * c_)) {}

    double& at(int y, int x, int ch) { return data[(int64_t(y) * w + x) * c + ch]; }
    double at(int y, int x, int ch) const { return data[(int64_t(y) * w + x) * c + ch]; }
    int64_t size() const { return data.size(); }
    bool same_size(const Image& o) const { return h == o.h && w == o.w && c == o.c; }
};

// Single-channel map in [0,1] (probability masks, heat maps).
struct Mask {
    int h = 0, w = 0;
    Arr v;

    Mask() = default;
    Mask(int h_, int w_, double fill = 0.0)
        : h(h_), w(w_), v(Arr::Constant(int64_t(h_) * w_, fill)) {}

    double& at(int y, int x) { return v[int64_t(y) * w + x]; }
    double at(int y, int x) const { return v[int64_t(y) * w + x]; }
    int64_t size() const { return v.size(); }
};

Image load_image(const std::string& path);             // RGB, [0,1]
void save_image(const Image& img, const std::string& path);
Mask load_mask(const std::string& path);               // 8-bit grayscale / 255
void save_mask(const Mask& m, const std::string& path);  // probability * 255

Image resize_image(const Image& img, int out_h, int out_w);
Mask resize_mask(const Mask& m, int out_h, int out_w);

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);
Mask tensor_to_mask(const Tensor& t);

uint64_t content_hash(const Arr& data);

}  // namespace mvgd

#endif
