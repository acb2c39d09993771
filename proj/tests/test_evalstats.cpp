#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mvgd/evalstats.hpp"

using namespace mvgd;

namespace {

// Independent pixel-loop oracle, written without touching the library's counts.
struct OracleScores {
    double iou, f_beta, mae, ber, acc;
};

OracleScores oracle_frame(const Mask& pred, const Mask& gt, double tau, double beta_sq) {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double abs_err = 0.0;
    for (int y = 0; y < pred.h; ++y)
        for (int x = 0; x < pred.w; ++x) {
            bool p = pred.at(y, x) >= tau, g = gt.at(y, x) >= 0.5;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
            tn += !p && !g;
            abs_err += std::abs(pred.at(y, x) - gt.at(y, x));
        }
    OracleScores s{};
    s.iou = (tp + fp + fn) == 0 ? 1.0 : double(tp) / double(tp + fp + fn);
    double prec = (tp + fp) == 0 ? 0.0 : double(tp) / double(tp + fp);
    double rec = (tp + fn) == 0 ? 0.0 : double(tp) / double(tp + fn);
    s.f_beta = (prec == 0.0 && rec == 0.0)
                   ? 0.0
                   : (1.0 + beta_sq) * prec * rec / (beta_sq * prec + rec);
    double sens = (tp + fn) == 0 ? 1.0 : double(tp) / double(tp + fn);
    double spec = (tn + fp) == 0 ? 1.0 : double(tn) / double(tn + fp);
    s.ber = 1.0 - 0.5 * (sens + spec);
    s.acc = double(tp + tn) / double(pred.h * pred.w);
    s.mae = abs_err / double(pred.h * pred.w);
    return s;
}

Mask random_mask(int h, int w, std::mt19937_64& eng, double p_one) {
    Mask m(h, w);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (int64_t i = 0; i < m.size(); ++i) m.v[i] = d(eng) < p_one ? 1.0 : 0.0;
    return m;
}
}  // namespace

TEST_CASE("metrics match the pixel-loop oracle exactly on random pairs") {
    std::mt19937_64 eng(101);
    std::uniform_real_distribution<double> dp(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        double p1 = dp(eng), p2 = dp(eng);
        Mask pred = random_mask(16, 16, eng, p1);
        Mask gt = random_mask(16, 16, eng, p2);
        OracleScores o = oracle_frame(pred, gt, 0.5, 0.3);
        MetricsReport r = metrics({pred}, {gt});
        CHECK(r.iou == o.iou);
        CHECK(r.f_beta == o.f_beta);
        CHECK(r.mae == o.mae);
        CHECK(r.ber == o.ber);
        CHECK(r.acc == o.acc);
    }
}

TEST_CASE("multi-frame averaging matches the per-frame oracle mean") {
    std::mt19937_64 eng(55);
    std::vector<Mask> preds, gts;
    double iou = 0, f = 0, mae = 0, ber = 0, acc = 0;
    for (int i = 0; i < 7; ++i) {
        preds.push_back(random_mask(12, 10, eng, 0.4));
        gts.push_back(random_mask(12, 10, eng, 0.3));
        OracleScores o = oracle_frame(preds.back(), gts.back(), 0.5, 0.3);
        iou += o.iou;
        f += o.f_beta;
        mae += o.mae;
        ber += o.ber;
        acc += o.acc;
    }
    MetricsReport r = metrics(preds, gts);
    CHECK(r.n_frames == 7);
    CHECK(r.iou == doctest::Approx(iou / 7).epsilon(1e-14));
    CHECK(r.f_beta == doctest::Approx(f / 7).epsilon(1e-14));
    CHECK(r.mae == doctest::Approx(mae / 7).epsilon(1e-14));
    CHECK(r.ber == doctest::Approx(ber / 7).epsilon(1e-14));
    CHECK(r.acc == doctest::Approx(acc / 7).epsilon(1e-14));
}

TEST_CASE("hand-computed case") {
    // 2x2: tp=1, fp=1, fn=0, tn=2
    Mask pred(2, 2), gt(2, 2);
    pred.at(0, 0) = 1.0;
    pred.at(0, 1) = 1.0;
    gt.at(0, 0) = 1.0;
    MetricsReport r = metrics({pred}, {gt});
    CHECK(r.iou == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.f_beta == doctest::Approx(0.5652).epsilon(2e-4));
    CHECK(r.f_beta == doctest::Approx(13.0 / 23.0).epsilon(1e-12));
    CHECK(r.ber == doctest::Approx(0.1667).epsilon(2e-4));
    CHECK(r.acc == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.mae == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("edge conventions") {
    Mask empty(4, 4);
    MetricsReport r = metrics({empty}, {empty});
    CHECK(r.iou == 1.0);    // no pixels claimed, none missed
    CHECK(r.f_beta == 0.0);  // precision and recall both undefined -> 0
    CHECK(r.ber == 0.0);
    CHECK(r.acc == 1.0);
    CHECK(r.mae == 0.0);

    Mask full(4, 4, 1.0);
    MetricsReport r2 = metrics({full}, {empty});
    CHECK(r2.iou == 0.0);
    CHECK(r2.acc == 0.0);
    CHECK(r2.ber == 0.5);  // sens=1 (vacuous), spec=0

    CHECK_THROWS(metrics({}, {}));
    CHECK_THROWS(metrics({empty}, {empty, empty}));
    CHECK_THROWS(metrics({empty}, {Mask(3, 3)}));
}

TEST_CASE("all scores stay in range and pooled variants exist") {
    std::mt19937_64 eng(77);
    std::vector<Mask> preds, gts;
    for (int i = 0; i < 5; ++i) {
        preds.push_back(random_mask(9, 9, eng, 0.5));
        gts.push_back(random_mask(9, 9, eng, 0.5));
    }
    MetricsReport r = metrics(preds, gts);
    for (double v : {r.iou, r.f_beta, r.mae, r.ber, r.acc, r.iou_pooled, r.f_beta_pooled,
                     r.ber_pooled, r.acc_pooled}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("location distribution is the pixelwise mean") {
    Mask a(2, 2), b(2, 2);
    a.at(0, 0) = 1.0;
    b.at(0, 0) = 1.0;
    b.at(1, 1) = 1.0;
    Mask h = location_distribution({a, b});
    CHECK(h.at(0, 0) == 1.0);
    CHECK(h.at(1, 1) == 0.5);
    CHECK(h.at(0, 1) == 0.0);
    CHECK_THROWS(location_distribution({}));
}

TEST_CASE("histogram contrast extremes") {
    // identical appearance inside and outside: zero contrast
    Image flat(8, 8, 3);
    flat.data.setConstant(0.42);
    Mask half(8, 8);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) half.at(y, x) = 1.0;
    CHECK(chi2_contrast(flat, half) == doctest::Approx(0.0).epsilon(1e-9));

    // disjoint intensities: maximal contrast 1
    Image split(8, 8, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) split.at(y, x, c) = y < 4 ? 0.1 : 0.9;
    CHECK(chi2_contrast(split, half) == doctest::Approx(1.0).epsilon(1e-9));

    // degenerate masks rejected
    CHECK_THROWS_WITH_AS(chi2_contrast(flat, Mask(8, 8)), doctest::Contains("degenerate"),
                         std::runtime_error);
    CHECK_THROWS(chi2_contrast(flat, Mask(8, 8, 1.0)));

    // swapping the mask polarity leaves the distance unchanged
    std::mt19937_64 eng(13);
    Image noisy(8, 8, 3);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    for (auto& v : noisy.data.reshaped()) v = d(eng);
    Mask inv(8, 8);
    for (int64_t i = 0; i < inv.size(); ++i) inv.v[i] = 1.0 - half.v[i];
    CHECK(chi2_contrast(noisy, half) == doctest::Approx(chi2_contrast(noisy, inv)).epsilon(1e-12));
}
