#include "mvgd/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace mvgd {

Image load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot read image: " + path);
    Image img(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) {
            auto px = m.at<cv::Vec3b>(y, x);  // BGR
            img.at(y, x, 0) = px[2] / 255.0;
            img.at(y, x, 1) = px[1] / 255.0;
            img.at(y, x, 2) = px[0] / 255.0;
        }
    return img;
}

void save_image(const Image& img, const std::string& path) {
    check(img.c == 3 || img.c == 1, "save_image: expects 1 or 3 channels");
    cv::Mat m(img.h, img.w, CV_8UC3);
    auto q = [](double v) {
        return static_cast<uchar>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double r = img.at(y, x, 0);
            double g = img.c == 3 ? img.at(y, x, 1) : r;
            double b = img.c == 3 ? img.at(y, x, 2) : r;
            m.at<cv::Vec3b>(y, x) = cv::Vec3b(q(b), q(g), q(r));
        }
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write image: " + path);
}

Mask load_mask(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read mask: " + path);
    Mask out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<uchar>(y, x) / 255.0;
    return out;
}

void save_mask(const Mask& mask, const std::string& path) {
    cv::Mat m(mask.h, mask.w, CV_8UC1);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x)
            m.at<uchar>(y, x) =
                static_cast<uchar>(std::lround(std::clamp(mask.at(y, x), 0.0, 1.0) * 255.0));
    if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write mask: " + path);
}

Image resize_image(const Image& img, int out_h, int out_w) {
    NoGradGuard ng;
    Tensor t = Tensor::from_array({img.h, img.w, img.c}, img.data);
    Tensor r = bilinear_resize(t, out_h, out_w);
    Image out(out_h, out_w, img.c);
    out.data = r.value();
    return out;
}

Mask resize_mask(const Mask& m, int out_h, int out_w) {
    NoGradGuard ng;
    Tensor t = Tensor::from_array({m.h, m.w, 1}, m.v);
    Tensor r = bilinear_resize(t, out_h, out_w);
    Mask out(out_h, out_w);
    out.v = r.value();
    return out;
}

Tensor image_to_tensor(const Image& img) {
    return Tensor::from_array({img.h, img.w, img.c}, img.data);
}

Image tensor_to_image(const Tensor& t) {
    check(t.ndim() == 3, "tensor_to_image: expects [H,W,C]");
    Image img(t.dim(0), t.dim(1), t.dim(2));
    img.data = t.value();
    return img;
}

Mask tensor_to_mask(const Tensor& t) {
    check(t.ndim() == 2 || (t.ndim() == 3 && t.dim(2) == 1), "tensor_to_mask: expects [H,W]");
    Mask m(t.dim(0), t.dim(1));
    m.v = t.value();
    return m;
}

uint64_t content_hash(const Arr& data) {
    uint64_t h = 1469598103934665603ull;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    for (int64_t i = 0; i < data.size() * (int64_t)sizeof(double); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace mvgd
