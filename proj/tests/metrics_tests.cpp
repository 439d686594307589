#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ablate/metrics.hpp"

using namespace ablate;

namespace {

// Independent O(n^2) oracle: unbiased MMD^2 by direct double sums.
double poly_kernel(const Point& x, const Point& y) {
    double d = (x[0] * y[0] + x[1] * y[1]) / 2.0 + 1.0;
    return d * d * d;
}

double mmd_bruteforce(const std::vector<Point>& a, const std::vector<Point>& b) {
    double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < a.size(); ++j)
            if (i != j) aa += poly_kernel(a[i], a[j]);
    for (size_t i = 0; i < b.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j)
            if (i != j) bb += poly_kernel(b[i], b[j]);
    for (const Point& x : a)
        for (const Point& y : b) ab += poly_kernel(x, y);
    return aa / (n * (n - 1.0)) + bb / (m * (m - 1.0)) - 2.0 * ab / (n * m);
}

std::vector<Point> random_points(size_t n, RngStream& rng, Point shift = {0.0, 0.0}) {
    std::vector<Point> out;
    for (size_t i = 0; i < n; ++i)
        out.push_back({shift[0] + rng.normal(), shift[1] + rng.normal()});
    return out;
}

Mixture2 iso(Point mean, double sigma) {
    Mixture2 m;
    m.weights = {1.0};
    m.comps = {Gauss2::isotropic(mean, sigma)};
    return m;
}

}  // namespace

TEST_CASE("mmd feature map reproduces the kernel") {
    RngStream rng(1, 0);
    for (int i = 0; i < 50; ++i) {
        Point x{3.0 * rng.normal(), 3.0 * rng.normal()};
        Point y{3.0 * rng.normal(), 3.0 * rng.normal()};
        // phi(x).phi(y) == k(x,y) is what makes the O(n) estimator exact
        std::vector<Point> a{x, x}, b{y, y};
        double est = mmd_poly(a, b);
        double expect = poly_kernel(x, x) + poly_kernel(y, y) - 2.0 * poly_kernel(x, y);
        CHECK(est == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("mmd_poly matches the brute-force double sum") {
    RngStream rng(2, 0);
    std::vector<Point> a = random_points(50, rng);
    std::vector<Point> b = random_points(37, rng, {0.5, -0.3});
    CHECK(std::abs(mmd_poly(a, b) - mmd_bruteforce(a, b)) < 1e-10);
}

TEST_CASE("mmd of identical sets matches the degenerate oracle value") {
    RngStream rng(3, 0);
    std::vector<Point> a = random_points(30, rng);
    CHECK(std::abs(mmd_poly(a, a) - mmd_bruteforce(a, a)) < 1e-10);
}

TEST_CASE("mmd is invariant under permuting a set") {
    RngStream rng(4, 0);
    std::vector<Point> a = random_points(20, rng);
    std::vector<Point> b = random_points(20, rng, {1.0, 0.0});
    std::vector<Point> a_perm(a.rbegin(), a.rend());
    CHECK(mmd_poly(a, b) == doctest::Approx(mmd_poly(a_perm, b)).epsilon(1e-12));
    CHECK_THROWS(mmd_poly({a[0]}, b));
}

TEST_CASE("well-separated clusters blow past the permutation null") {
    RngStream rng(5, 0);
    std::vector<Point> a = random_points(100, rng);
    std::vector<Point> b = random_points(100, rng, {10.0, 0.0});
    RngStream perm(5, 1);
    MmdTest t = mmd_permutation_test(a, b, perm, 200);
    CHECK(t.observed > 10.0 * t.null_q95);
    CHECK_FALSE(t.within_null);
}

TEST_CASE("same-distribution samples sit inside the null band") {
    RngStream rng(6, 0);
    std::vector<Point> a = random_points(100, rng);
    std::vector<Point> b = random_points(100, rng);
    RngStream perm(6, 1);
    MmdTest t = mmd_permutation_test(a, b, perm, 200);
    CHECK(t.within_null);
}

TEST_CASE("concept_accuracy behaves like a Bayes classifier") {
    Mixture2 a = iso({0.0, 0.0}, 0.15);
    Mixture2 b = iso({1.0, 1.0}, 0.15);
    RngStream rng(7, 0);
    std::vector<Point> xs;
    for (int i = 0; i < 500; ++i) xs.push_back(a.sample(rng));
    double acc = concept_accuracy(xs, a, b);
    CHECK(acc >= 0.97);
    CHECK(concept_accuracy(xs, b, a) == 1.0 - acc);  // complement identity, exact
    CHECK(concept_accuracy({{0.0, 0.0}}, a, b) == 1.0);
    CHECK(concept_accuracy({{0.0, 0.0}}, a, a) == 0.5);  // tie split
    CHECK_THROWS(concept_accuracy({}, a, b));
    Mixture2 degenerate = a;
    degenerate.comps[0].cov = {0.0, 0.0, 0.0, 0.0};
    CHECK_THROWS(concept_accuracy(xs, degenerate, b));
}

TEST_CASE("concept_score closed form at the component mean") {
    Mixture2 a = iso({0.3, -0.2}, 0.15);
    double s = concept_score({{0.3, -0.2}}, a);
    CHECK(s == doctest::Approx(-std::log(2.0 * M_PI * 0.0225)).epsilon(1e-12));
    CHECK(concept_score({{50.0, 50.0}}, a) < -1000.0);
}

TEST_CASE("score prefers the generating concept on average") {
    ConceptMap map = default_concept_map();
    RngStream rng(8, 0);
    auto xs = sample_truth(map, "grumpy", 500, rng);
    double own = concept_score(xs, map.density("grumpy"));
    for (const std::string& other : {"tabby", "persian", "siamese", "cat"})
        CHECK(own > concept_score(xs, map.density(other)));
}

TEST_CASE("similarity kernel") {
    Point m{1.5, 1.5};
    CHECK(similarity(m, m, 0.05) == 1.0);
    double r = 0.05 * std::sqrt(2.0 * std::log(2.0));
    CHECK(similarity({1.5 + r, 1.5}, m, 0.05) == doctest::Approx(0.5).epsilon(1e-12));
    double prev = 1.0;
    for (double d = 0.01; d < 0.2; d += 0.01) {
        double s = similarity({1.5 + d, 1.5}, m, 0.05);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("metric config json round trip and validation") {
    MetricConfig cfg;
    MetricConfig back = MetricConfig::from_json(cfg.to_json());
    CHECK(back.to_json().dump() == cfg.to_json().dump());
    auto j = cfg.to_json();
    j["sim_threshold"] = 1.5;
    CHECK_THROWS(MetricConfig::from_json(j));
    j = cfg.to_json();
    j["samples_per_concept"] = 1;
    CHECK_THROWS(MetricConfig::from_json(j));
}

TEST_CASE("full_report on a self-comparison") {
    ConceptMap map = default_concept_map();
    PretrainConfig pcfg;
    pcfg.steps = 400;
    pcfg.batch = 32;
    Checkpoint ckpt = pretrain(map, pcfg, 55);

    MetricConfig cfg;
    cfg.samples_per_concept = 40;
    cfg.sampler_steps = 20;
    cfg.mmd_permutations = 50;
    TaskSpec task{TaskKind::Instance, "grumpy", "cat"};

    EvalReport rep = full_report(ckpt, ckpt, map, task, cfg, 3);
    CHECK(rep.concepts.size() == 5);  // target, anchor, 3 surrounding
    for (const auto& c : rep.concepts) {
        INFO(c.name);
        // identical checkpoints under common random numbers: identical samples
        // (the unbiased estimator is slightly negative on duplicate sets, so
        // only the null-band check is meaningful for the value itself)
        CHECK(c.accuracy == c.accuracy_pretrained);
        CHECK(c.score == c.score_pretrained);
        CHECK(c.mmd2 <= 0.0);
        CHECK(c.mmd_within_null);
    }

    // determinism: byte-identical reports across repeated runs
    EvalReport rep2 = full_report(ckpt, ckpt, map, task, cfg, 3);
    CHECK(rep.to_json().dump() == rep2.to_json().dump());

    EvalReport back = EvalReport::from_json(rep.to_json());
    CHECK(back.to_json().dump() == rep.to_json().dump());

    std::string csv = rep.to_csv();
    CHECK(csv.find("concept,metric,value\n") == 0);
    CHECK(csv.find("grumpy,accuracy,") != std::string::npos);

    // unrelated checkpoints are rejected
    Checkpoint other = pretrain(map, pcfg, 56);
    CHECK_THROWS(full_report(other, ckpt, map, task, cfg, 3));
}

TEST_CASE("robustness curve input validation") {
    ConceptMap map = default_concept_map();
    PretrainConfig pcfg;
    pcfg.steps = 300;
    pcfg.batch = 32;
    Checkpoint ckpt = pretrain(map, pcfg, 57);
    TaskSpec task{TaskKind::Instance, "grumpy", "cat"};
    RngStream rng(9, 0);
    CHECK_THROWS(robustness_eval(ckpt, map, task, {0.1, 0.2}, 10, 10, rng));
    CHECK_THROWS(robustness_eval(ckpt, map, task, {0.0, 0.3, 0.2}, 10, 10, rng));

    auto curve = robustness_eval(ckpt, map, task, {0.0, 0.1}, 20, 10, rng);
    CHECK(curve.size() == 2);
    CHECK(curve[0].level == 0.0);
    CHECK(curve[0].accuracy >= 0.0);
    CHECK(curve[0].accuracy <= 1.0);
}
