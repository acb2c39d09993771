#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <opencv2/imgproc.hpp>
#include <random>

#include "mvgd/flow.hpp"

using namespace mvgd;
namespace fs = std::filesystem;

namespace {
fs::path tmp_file(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "mvgd_flow_tests";
    fs::create_directories(dir);
    return dir / name;
}

FlowField random_flow(int h, int w, std::mt19937_64& eng, double scale = 5.0) {
    FlowField f(h, w);
    std::uniform_real_distribution<double> d(-scale, scale);
    // values pass through float32 storage, so keep them on the float grid
    for (int64_t i = 0; i < f.uv.size(); ++i) f.uv[i] = double(float(d(eng)));
    return f;
}
}  // namespace

TEST_CASE("flo round trip is bit exact") {
    std::mt19937_64 eng(11);
    FlowField f = random_flow(13, 9, eng);
    auto p = tmp_file("rt.flo");
    write_flo(f, p.string());
    FlowField g = read_flo(p.string());
    CHECK(g.h == 13);
    CHECK(g.w == 9);
    CHECK((g.uv == f.uv).all());
    // second round trip produces identical bytes
    auto p2 = tmp_file("rt2.flo");
    write_flo(g, p2.string());
    std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
}

TEST_CASE("flo reader rejects malformed files") {
    auto good = tmp_file("good.flo");
    std::mt19937_64 eng(3);
    write_flo(random_flow(4, 5, eng), good.string());
    std::ifstream in(good, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});

    auto bad = tmp_file("badmagic.flo");
    {
        std::string b = bytes;
        b[0] = 'x';
        std::ofstream o(bad, std::ios::binary);
        o << b;
    }
    CHECK_THROWS_WITH_AS(read_flo(bad.string()), doctest::Contains("bad magic"),
                         std::runtime_error);

    auto trunc_h = tmp_file("trunch.flo");
    {
        std::ofstream o(trunc_h, std::ios::binary);
        o << bytes.substr(0, 6);
    }
    CHECK_THROWS_WITH_AS(read_flo(trunc_h.string()), doctest::Contains("truncated header"),
                         std::runtime_error);

    auto trunc_p = tmp_file("truncp.flo");
    {
        std::ofstream o(trunc_p, std::ios::binary);
        o << bytes.substr(0, bytes.size() - 7);
    }
    CHECK_THROWS_WITH_AS(read_flo(trunc_p.string()), doctest::Contains("truncated payload"),
                         std::runtime_error);

    CHECK_THROWS(read_flo(tmp_file("missing.flo").string()));
}

TEST_CASE("refine identity, annihilation and a hand oracle") {
    std::mt19937_64 eng(5);
    FlowField f = random_flow(4, 4, eng);

    Mask ones(4, 4, 1.0);
    FlowField id = refine_flow(f, ones);
    CHECK((id.uv == f.uv).all());

    Mask zeros(4, 4, 0.0);
    FlowField z = refine_flow(f, zeros);
    CHECK((z.uv == 0.0).all());

    Mask soft(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) soft.at(y, x) = (y * 4 + x) / 15.0;
    FlowField s = refine_flow(f, soft);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            CHECK(s.u(y, x) == doctest::Approx(f.u(y, x) * soft.at(y, x)).epsilon(1e-15));
            CHECK(s.v(y, x) == doctest::Approx(f.v(y, x) * soft.at(y, x)).epsilon(1e-15));
        }

    FlowField hard = refine_flow(f, soft, 0.5);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double g = soft.at(y, x) >= 0.5 ? 1.0 : 0.0;
            CHECK(hard.u(y, x) == f.u(y, x) * g);
        }
}

TEST_CASE("refinement never increases magnitude") {
    std::mt19937_64 eng(17);
    for (int trial = 0; trial < 20; ++trial) {
        FlowField f = random_flow(8, 8, eng);
        Mask m(8, 8);
        std::uniform_real_distribution<double> d(0.0, 1.0);
        for (int64_t i = 0; i < m.size(); ++i) m.v[i] = d(eng);
        FlowField r = refine_flow(f, m);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(r.magnitude(y, x) <= f.magnitude(y, x) + 1e-12);
    }
}

TEST_CASE("refine resamples a mask of different resolution") {
    std::mt19937_64 eng(23);
    FlowField f = random_flow(8, 8, eng);
    Mask m(4, 4, 1.0);
    FlowField r = refine_flow(f, m);
    CHECK((r.uv == f.uv).all());  // constant mask resamples to itself
    CHECK_THROWS(refine_flow(f, Mask(4, 4, 2.0)));
}

TEST_CASE("color coding: zero flow is white, random flows match an HSV oracle") {
    FlowField z(3, 3);
    Image white = flow_to_color(z, 1.0);
    CHECK((white.data == 1.0).all());

    std::mt19937_64 eng(29);
    for (int trial = 0; trial < 5; ++trial) {
        FlowField f = random_flow(6, 7, eng);
        double mm = auto_max_mag({f});
        Image img = flow_to_color(f, mm);
        // independent oracle via OpenCV HSV -> RGB
        cv::Mat hsv(6, 7, CV_32FC3);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 7; ++x) {
                double u = f.u(y, x), v = f.v(y, x);
                double hue = std::atan2(v, u) * 180.0 / M_PI;
                hue = std::fmod(std::fmod(hue, 360.0) + 360.0, 360.0);
                double sat = std::min(std::hypot(u, v) / mm, 1.0);
                hsv.at<cv::Vec3f>(y, x) = cv::Vec3f(float(hue), float(sat), 1.0f);
            }
        cv::Mat rgb;
        cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 7; ++x)
                for (int c = 0; c < 3; ++c)
                    CHECK(img.at(y, x, c) ==
                          doctest::Approx(double(rgb.at<cv::Vec3f>(y, x)[c])).epsilon(1e-5));
    }
}

TEST_CASE("auto_max_mag takes the 95th percentile with a floor") {
    FlowField f(10, 10);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) f.u(y, x) = y * 10 + x;  // magnitudes 0..99
    CHECK(auto_max_mag({f}) == doctest::Approx(94.0));
    FlowField z(4, 4);
    CHECK(auto_max_mag({z}) == 1e-6);
}

TEST_CASE("synthetic oracle provider") {
    Image a(4, 4, 3), b(4, 4, 3);
    a.data.setRandom();
    a.data = a.data.abs();
    b.data = 1.0 - a.data * 0.5;
    FlowField f(4, 4);
    f.u(1, 1) = 2.5;

    SyntheticOracleProvider p;
    p.register_pair(a, b, f);
    FlowField got = compute_flow(a, b, p);
    CHECK((got.uv == f.uv).all());
    FlowField self = compute_flow(a, a, p);  // identical frames: zero field
    CHECK((self.uv == 0.0).all());
    CHECK_THROWS_WITH_AS(compute_flow(b, a, p), doctest::Contains("unregistered"),
                         std::runtime_error);
}

TEST_CASE("precomputed provider reads by target index") {
    fs::path dir = fs::temp_directory_path() / "mvgd_flow_tests" / "flo_dir";
    fs::create_directories(dir);
    std::mt19937_64 eng(31);
    FlowField f = random_flow(4, 4, eng);
    write_flo(f, (dir / "000002.flo").string());
    PrecomputedFlowProvider p(dir.string());
    Image a(4, 4, 3), b(4, 4, 3);
    FlowField got = p.estimate(a, b, 1, 2);
    CHECK((got.uv == f.uv).all());
    CHECK_THROWS(p.estimate(a, b, 2, 3));
}

TEST_CASE("provider factory") {
    CHECK(make_flow_provider("synthetic", "")->name() == "synthetic");
    CHECK(make_flow_provider("files", "/tmp")->name() == "files");
    CHECK(make_flow_provider("external", "true")->name() == "external");
    CHECK_THROWS(make_flow_provider("files", ""));
    CHECK_THROWS(make_flow_provider("nope", ""));
}

TEST_CASE("compute_flow rejects non-finite and wrong-size fields") {
    struct BadProvider : FlowProvider {
        FlowField field;
        FlowField estimate(const Image&, const Image&, int, int) override { return field; }
        std::string name() const override { return "bad"; }
    } p;
    Image a(4, 4, 3), b(4, 4, 3);
    p.field = FlowField(4, 4);
    p.field.u(0, 0) = std::nan("");
    CHECK_THROWS_WITH_AS(compute_flow(a, b, p), doctest::Contains("non-finite"),
                         std::runtime_error);
    p.field = FlowField(3, 4);
    CHECK_THROWS_WITH_AS(compute_flow(a, b, p), doctest::Contains("wrong size"),
                         std::runtime_error);
}
