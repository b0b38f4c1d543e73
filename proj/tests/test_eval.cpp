#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "skinseg/error.hpp"
#include "skinseg/eval.hpp"

using namespace skinseg;
using namespace skinseg::eval;

namespace {

BinaryMask bm(std::vector<std::uint8_t> v)
{
    const int n = int(v.size());
    return BinaryMask(1, n, std::move(v));
}

BinaryMask random_mask(std::mt19937_64& rng, int h, int w)
{
    std::vector<std::uint8_t> v(std::size_t(h) * std::size_t(w));
    for (auto& b : v)
        b = rng() % 2;
    return BinaryMask(h, w, std::move(v));
}

ProbMap random_map(std::mt19937_64& rng, int h, int w)
{
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(std::size_t(h) * std::size_t(w));
    for (auto& x : v)
        x = u(rng);
    return ProbMap(h, w, std::move(v));
}

BinaryMask at_threshold(const ProbMap& m, double t)
{
    std::vector<std::uint8_t> v(m.size());
    for (std::size_t i = 0; i < m.size(); ++i)
        v[i] = m[i] >= t;
    return BinaryMask(m.height(), m.width(), std::move(v));
}

/// Scores whose differences are nonzero multiples of 0.25, so tied magnitudes are common.
std::pair<std::vector<double>, std::vector<double>> tied_pairs(std::mt19937_64& rng, std::size_t n)
{
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = double(rng() % 100) / 100.0;
        const double step = 0.25 * double(1 + rng() % 4);
        a[i] = b[i] + (rng() % 2 ? step : -step);
    }
    return {a, b};
}

}  // namespace

TEST_CASE("confusion tallies")
{
    const auto t = bm({1, 0, 1, 0});
    const auto c = confusion(bm({1, 1, 0, 0}), t);
    CHECK(c == Confusion{1, 1, 1, 1});
    const auto same = confusion(t, t);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    const auto inv = confusion(t.complement(), t);
    CHECK(inv.tp == 0);
    CHECK(inv.tn == 0);
    CHECK(c.total() == 4);
    CHECK_THROWS_AS(confusion(bm({1, 0}), t), ContractError);
}

TEST_CASE("precision, recall and F-score")
{
    const double f = f_score(0.7504, 0.7288);
    CHECK(std::abs(f - 0.7394) <= 0.0005);
    const auto perfect = prf(Confusion{5, 0, 0, 7});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f_score == 1.0);
    const auto q = prf(Confusion{3, 1, 1, 0});
    CHECK(q.precision == 0.75);
    CHECK(q.recall == 0.75);
    CHECK(q.f_score == doctest::Approx(0.75).epsilon(1e-15));

    const auto none = prf(Confusion{0, 0, 0, 9});
    CHECK(none.precision_undefined);
    CHECK(none.recall_undefined);
    CHECK(none.f_score == 0.0);
    const auto no_pred = prf(Confusion{0, 0, 4, 2});
    CHECK(no_pred.precision_undefined);
    CHECK_FALSE(no_pred.recall_undefined);
    CHECK(no_pred.recall == 0.0);
}

TEST_CASE("F-score is the harmonic mean and lies between precision and recall")
{
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 500; ++trial) {
        const Confusion c{1 + rng() % 50, rng() % 50, rng() % 50, rng() % 50};
        const auto r = prf(c);
        CHECK(r.f_score == 2 * r.precision * r.recall / (r.precision + r.recall));
        CHECK(r.f_score >= std::min(r.precision, r.recall) - 1e-15);
        CHECK(r.f_score <= std::max(r.precision, r.recall) + 1e-15);
        CHECK(r.f_score >= 0.0);
        CHECK(r.f_score <= 1.0);
    }
}

TEST_CASE("micro-averaging is associative")
{
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p1 = random_mask(rng, 5, 7), t1 = random_mask(rng, 5, 7);
        const auto p2 = random_mask(rng, 3, 7), t2 = random_mask(rng, 3, 7);
        // Stack the two images vertically into one.
        std::vector<std::uint8_t> pc(p1.bits().begin(), p1.bits().end()), tc(t1.bits().begin(), t1.bits().end());
        pc.insert(pc.end(), p2.bits().begin(), p2.bits().end());
        tc.insert(tc.end(), t2.bits().begin(), t2.bits().end());
        auto summed = confusion(p1, t1);
        summed += confusion(p2, t2);
        CHECK(confusion(BinaryMask(8, 7, pc), BinaryMask(8, 7, tc)) == summed);
    }
}

TEST_CASE("PR curve matches a brute-force recount")
{
    std::mt19937_64 rng(33);
    std::vector<ProbMap> preds;
    std::vector<BinaryMask> truths;
    for (int k = 0; k < 3; ++k) {
        preds.push_back(random_map(rng, 8, 8));
        truths.push_back(random_mask(rng, 8, 8));
    }
    const auto curve = pr_curve(preds, truths, 33);
    REQUIRE(curve.size() == 33);
    for (std::size_t s = 0; s < curve.size(); ++s) {
        const double t = double(s) / 32.0;
        CHECK(curve[s].threshold == doctest::Approx(t).epsilon(1e-15));
        std::uint64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t k = 0; k < preds.size(); ++k)
            for (std::size_t i = 0; i < preds[k].size(); ++i) {
                const bool p = preds[k][i] >= curve[s].threshold, g = truths[k][i];
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
            }
        const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
        const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
        CHECK(curve[s].precision == prec);
        CHECK(curve[s].recall == rec);
        if (s > 0) {
            CHECK(curve[s].threshold > curve[s - 1].threshold);
            CHECK(curve[s].recall <= curve[s - 1].recall);
        }
    }
    CHECK(curve.front().threshold == 0.0);
    CHECK(curve.front().recall == 1.0);
    CHECK(curve.back().threshold == 1.0);
}

TEST_CASE("PR curve of a perfect binary map")
{
    std::mt19937_64 rng(34);
    const auto t = random_mask(rng, 8, 8);
    std::vector<double> v(t.bits().begin(), t.bits().end());
    const std::vector<ProbMap> preds{ProbMap(8, 8, v)};
    const std::vector<BinaryMask> truths{t};
    for (const auto& pt : pr_curve(preds, truths, 256))
        if (pt.threshold > 0.0) {
            CHECK(pt.precision == 1.0);
            CHECK(pt.recall == 1.0);
        }
    CHECK_THROWS_AS(pr_curve(std::vector<ProbMap>{}, std::vector<BinaryMask>{}), ContractError);
    CHECK_THROWS_AS(pr_curve(preds, std::vector<BinaryMask>{t, t}), ContractError);
}

TEST_CASE("Wilcoxon hand case")
{
    const std::vector<double> a{1, 2, 3, 4, 5, 6}, b(6, 0.0);
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.exact);
    CHECK(r.w_minus == 0.0);
    CHECK(r.w_plus == 21.0);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_two_tailed == 0.03125);
    CHECK(wilcoxon_signed_rank(b, a).p_two_tailed == 0.03125);
}

TEST_CASE("Wilcoxon with identical samples gives no evidence")
{
    const std::vector<double> a{0.3, 0.5, 0.7, 0.9, 0.1, 0.2};
    const auto r = wilcoxon_signed_rank(a, a);
    CHECK(r.p_two_tailed == 1.0);
    CHECK(r.n_used == 0);
}

TEST_CASE("Wilcoxon exact branch equals enumeration")
{
    std::mt19937_64 rng(35);
    for (std::size_t n = 5; n <= 10; ++n)
        for (int trial = 0; trial < 20; ++trial) {
            const auto [a, b] = tied_pairs(rng, n);
            const auto r = wilcoxon_exact(a, b);
            const auto o = oracle::wilcoxon_enumerate(a, b);
            CHECK(r.n_used == o.n);
            CHECK(r.w_plus == o.w_plus);
            CHECK(r.w_minus == o.w_minus);
            CHECK(r.statistic == std::min(o.w_plus, o.w_minus));
            CHECK(std::abs(r.p_two_tailed - o.p) <= 1e-12);
        }
}

TEST_CASE("Wilcoxon drops zero differences before ranking")
{
    const std::vector<double> a{1, 2, 3, 4, 5, 6, 7, 8}, b{0, 0, 0, 0, 0, 0, 7, 8};
    const auto r = wilcoxon_signed_rank(a, b);
    CHECK(r.n_used == 6);
    CHECK(r.p_two_tailed == 0.03125);
}

namespace {

/// Twelve tie-free differences 1..12 whose positive ranks sum to `w_plus`.
std::vector<double> differences_with_w_plus(int w_plus)
{
    std::vector<double> d(12);
    int left = w_plus;
    for (int r = 12; r >= 1; --r) {
        const bool positive = r <= left;
        if (positive)
            left -= r;
        d[std::size_t(r - 1)] = positive ? double(r) : -double(r);
    }
    return d;
}

}  // namespace

TEST_CASE("Wilcoxon branches agree at the boundary")
{
    // Every attainable W+ at n = 12, so the comparison does not depend on sampling.
    const std::vector<double> zeros(12, 0.0);
    for (int w = 0; w <= 78; ++w) {
        const auto d = differences_with_w_plus(w);
        const auto auto_r = wilcoxon_signed_rank(d, zeros);
        const auto ex = wilcoxon_exact(d, zeros), nm = wilcoxon_normal(d, zeros);
        INFO("W+ = ", w, " exact ", ex.p_two_tailed, " normal ", nm.p_two_tailed);
        REQUIRE(ex.w_plus == double(w));
        CHECK(auto_r.exact);
        CHECK_FALSE(nm.exact);
        CHECK(auto_r.p_two_tailed == ex.p_two_tailed);
        CHECK(std::abs(ex.p_two_tailed - nm.p_two_tailed) <= 0.01);
    }
}

TEST_CASE("Wilcoxon branches agree in the tail at n = 12")
{
    const std::vector<double> zeros(12, 0.0);
    for (int w = 0; w <= 78; ++w) {
        const auto d = differences_with_w_plus(w);
        const auto ex = wilcoxon_exact(d, zeros), nm = wilcoxon_normal(d, zeros);
        if (ex.p_two_tailed > 0.2)
            continue;
        INFO("W+ = ", w, " exact ", ex.p_two_tailed, " normal ", nm.p_two_tailed);
        CHECK(std::abs(ex.p_two_tailed - nm.p_two_tailed) <= 0.01);
    }
}

TEST_CASE("Wilcoxon input contracts")
{
    const std::vector<double> four{1, 2, 3, 4}, five{1, 2, 3, 4, 5}, six{1, 2, 3, 4, 5, 6};
    CHECK_THROWS_AS(wilcoxon_signed_rank(four, four), ContractError);
    CHECK_THROWS_AS(wilcoxon_signed_rank(five, six), ContractError);
    std::vector<double> big(13, 0.0), other(13);
    for (int i = 0; i < 13; ++i)
        other[std::size_t(i)] = double(i + 1);
    CHECK_FALSE(wilcoxon_signed_rank(other, big).exact);
}

TEST_CASE("overlay colours errors and dims everything else")
{
    std::mt19937_64 rng(37);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> px(8 * 8 * 3);
    for (auto& x : px)
        x = u(rng);
    const Image img(8, 8, 3, px);
    const auto pred = random_mask(rng, 8, 8), truth = random_mask(rng, 8, 8);
    const Image o = render_overlay(img, pred, truth);
    const Image gray = to_grayscale(img);
    REQUIRE(o.channels() == 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const bool p = pred.at(y, x), t = truth.at(y, x);
            const double r = o.at(y, x, 0), g = o.at(y, x, 1), b = o.at(y, x, 2);
            if (p && !t) {
                CHECK((r == 1.0 && g == 0.0 && b == 0.0));
            } else if (!p && t) {
                CHECK((r == 0.0 && g == 0.0 && b == 1.0));
            } else {
                CHECK(r == g);
                CHECK(g == b);
                CHECK(r < gray.at(y, x, 0) + 1e-15);
            }
        }
    CHECK(render_overlay(img, pred, truth) == o);

    const Image same = render_overlay(img, truth, truth);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            CHECK(same.at(y, x, 0) == same.at(y, x, 2));
    const Image red = render_overlay(img, BinaryMask(8, 8, true), BinaryMask(8, 8, false));
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            CHECK((red.at(y, x, 0) == 1.0 && red.at(y, x, 1) == 0.0 && red.at(y, x, 2) == 0.0));
    CHECK_THROWS_AS(render_overlay(img, BinaryMask(4, 4, true), BinaryMask(4, 4, true)), ContractError);
}

TEST_CASE("evaluate pools pixels and keeps per-image scores")
{
    std::mt19937_64 rng(38);
    std::vector<ProbMap> preds;
    std::vector<BinaryMask> truths;
    const std::vector<std::string> ids{"a", "b", "c"};
    Confusion pooled;
    for (int k = 0; k < 3; ++k) {
        preds.push_back(random_map(rng, 6, 6));
        truths.push_back(random_mask(rng, 6, 6));
        pooled += confusion(at_threshold(preds.back(), 0.5), truths.back());
    }
    const auto r = evaluate(preds, truths, ids, 0.5, 16);
    CHECK(r.confusion == pooled);
    CHECK(r.f_score == prf(pooled).f_score);
    REQUIRE(r.per_image.size() == 3);
    CHECK(r.per_image[1].id == "b");
    CHECK(r.per_image[1].f_score == prf(confusion(at_threshold(preds[1], 0.5), truths[1])).f_score);
    CHECK(r.pr_curve.size() == 16);

    const auto back = report_from_json(report_to_json(r));
    CHECK(back.confusion == r.confusion);
    CHECK(back.f_score == r.f_score);
    CHECK(back.per_image.size() == 3);
    CHECK(back.per_image[2].f_score == r.per_image[2].f_score);
    CHECK(back.pr_curve.size() == r.pr_curve.size());
    CHECK(back.pr_curve[5].recall == r.pr_curve[5].recall);

    const auto path = std::filesystem::temp_directory_path() / "skinseg_test_report.json";
    save_report(path, r);
    CHECK(load_report(path).f_score == r.f_score);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(report_from_json("[1,2"), ParseError);

    const auto [x, y] = paired_scores(r, back);
    CHECK(x == y);
}

TEST_CASE("table CSV")
{
    EvalReport bc;
    bc.f_score = 0.73944;
    bc.precision = 0.7504;
    bc.recall = 0.7288;
    const std::string csv = table_csv({{"BC", bc}});
    CHECK(csv == "Method,F-score,Precision,Recall\nBC,0.7394,0.7504,0.7288\n");
}
