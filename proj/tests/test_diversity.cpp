#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "drift/diversity.hpp"
#include "drift/rng.hpp"

using namespace drift;

namespace {

std::vector<Vec> random_points(uint64_t seed, int n, int dim, double scale = 1.0) {
    Rng rng(stream_key({seed}));
    std::vector<Vec> pts(n, Vec(dim));
    for (auto& p : pts)
        for (double& x : p) x = scale * rng.normal();
    return pts;
}

// Brute-force recall: full sort per row, explicit double loop.
double recall_oracle(const std::vector<Vec>& ref, const std::vector<Vec>& gen, int k) {
    auto dist = [](const Vec& a, const Vec& b) {
        double acc = 0.0;
        for (size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(acc);
    };
    std::vector<double> radius(gen.size());
    for (size_t j = 0; j < gen.size(); ++j) {
        std::vector<double> ds;
        for (size_t l = 0; l < gen.size(); ++l)
            if (l != j) ds.push_back(dist(gen[j], gen[l]));
        std::sort(ds.begin(), ds.end());
        radius[j] = ds[k - 1];
    }
    int covered = 0;
    for (const Vec& r : ref) {
        bool inside = false;
        for (size_t j = 0; j < gen.size(); ++j)
            if (dist(r, gen[j]) <= radius[j]) inside = true;
        if (inside) ++covered;
    }
    return static_cast<double>(covered) / ref.size();
}

}  // namespace

TEST_CASE("two identical vectors give a zero matrix") {
    const std::vector<Vec> samples = {{1.0, 2.0}, {1.0, 2.0}};
    const auto m = pairwise_diversity(samples, Encoder::identity());
    CHECK(m.at(0, 1) == 0.0);
    CHECK(m.at(1, 0) == 0.0);
    CHECK(m.per_sample[0] == 0.0);
    CHECK(m.per_sample[1] == 0.0);
}

TEST_CASE("1-D pair at distance 2 has squared distance 4") {
    const std::vector<Vec> samples = {{0.0}, {2.0}};
    const auto m = pairwise_diversity(samples, Encoder::identity());
    CHECK(m.at(0, 1) == doctest::Approx(4.0));
    CHECK(m.per_sample[0] == doctest::Approx(4.0));
    CHECK(m.per_sample[1] == doctest::Approx(4.0));
}

TEST_CASE("matrix is symmetric with zero diagonal and scales quadratically") {
    auto samples = random_points(3, 6, 3);
    const auto m = pairwise_diversity(samples, Encoder::identity());
    for (int i = 0; i < 6; ++i) {
        CHECK(m.at(i, i) == 0.0);
        for (int j = 0; j < 6; ++j) {
            CHECK(m.at(i, j) == m.at(j, i));
            CHECK(m.at(i, j) >= 0.0);
        }
    }
    for (auto& p : samples)
        for (double& x : p) x *= 3.0;
    const auto scaled = pairwise_diversity(samples, Encoder::identity());
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j)
            CHECK(scaled.at(i, j) == doctest::Approx(9.0 * m.at(i, j)).epsilon(1e-12));
}

TEST_CASE("per-sample averages reproduce the set diversity exactly") {
    const auto samples = random_points(7, 9, 2);
    const auto m = pairwise_diversity(samples, Encoder::identity());
    double mean_per_sample = 0.0;
    for (double v : m.per_sample) mean_per_sample += v;
    mean_per_sample /= m.per_sample.size();
    const double sd = set_diversity({samples}, Encoder::identity());
    CHECK(mean_per_sample == doctest::Approx(sd).epsilon(1e-12));
}

TEST_CASE("set diversity closed-form cases") {
    CHECK(set_diversity({{{0.0}, {2.0}}}, Encoder::identity()) == doctest::Approx(4.0));
    CHECK(set_diversity({{{1.0, 1.0}, {1.0, 1.0}}, {{2.0}, {2.0}}}, Encoder::identity()) ==
          doctest::Approx(0.0));
    // two prompts with per-prompt values 4 and 0 average to 2
    CHECK(set_diversity({{{0.0}, {2.0}}, {{5.0}, {5.0}}}, Encoder::identity()) ==
          doctest::Approx(2.0));
}

TEST_CASE("set diversity is translation invariant under identity encoder") {
    auto samples = random_points(11, 8, 2);
    const double before = set_diversity({samples}, Encoder::identity());
    for (auto& p : samples) {
        p[0] += 13.5;
        p[1] -= 2.25;
    }
    CHECK(set_diversity({samples}, Encoder::identity()) ==
          doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("ragged buckets are rejected") {
    CHECK_THROWS_AS(set_diversity({{{0.0}, {1.0}}, {{0.0}}}, Encoder::identity()),
                    std::invalid_argument);
}

TEST_CASE("recall is 1 on identical sets and 0 on far sets") {
    const auto pts = random_points(13, 20, 2);
    CHECK(generalized_recall(pts, pts, 3) == doctest::Approx(1.0));

    auto far = pts;
    for (auto& p : far)
        for (double& x : p) x += 1e6;
    CHECK(generalized_recall(pts, far, 3) == doctest::Approx(0.0));
}

TEST_CASE("recall matches the brute-force oracle") {
    for (uint64_t trial = 0; trial < 12; ++trial) {
        const auto ref = random_points(1000 + trial, 20, 2);
        auto gen = random_points(2000 + trial, 20, 2);
        // half of the generated set duplicates reference points
        for (int i = 0; i < 10; ++i) gen[i] = ref[i];
        for (int k : {3, 10}) {
            CHECK(generalized_recall(ref, gen, k) == recall_oracle(ref, gen, k));
        }
    }
}

TEST_CASE("recall is monotone non-decreasing in k") {
    const auto ref = random_points(17, 30, 2);
    const auto gen = random_points(18, 30, 2);
    double prev = 0.0;
    for (int k = 1; k < 12; ++k) {
        const double r = generalized_recall(ref, gen, k);
        CHECK(r >= prev);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        prev = r;
    }
}

TEST_CASE("recall rejects sets not larger than k") {
    const auto pts = random_points(19, 5, 2);
    CHECK_THROWS_AS(generalized_recall(pts, pts, 5), std::invalid_argument);
}

TEST_CASE("vendi of identical samples is 1") {
    const std::vector<Vec> samples(12, Vec{1.5, -0.5});
    CHECK(vendi_score(samples, Encoder::identity(), 1.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("vendi with the identity kernel equals n") {
    const auto samples = random_points(23, 9, 2);
    CHECK(vendi_score(samples, Encoder::identity(), 1.0, VendiKernel::identity_test) ==
          doctest::Approx(9.0).epsilon(1e-9));
}

TEST_CASE("two tight clusters give an effective mode count of 2") {
    Rng rng(stream_key({29}));
    std::vector<Vec> samples;
    for (int cluster = 0; cluster < 2; ++cluster)
        for (int i = 0; i < 3; ++i)
            samples.push_back({cluster * 1000.0 + 1e-3 * rng.normal(),
                               1e-3 * rng.normal()});
    CHECK(vendi_score(samples, Encoder::identity(), 1.0) == doctest::Approx(2.0).epsilon(0.025));
}

TEST_CASE("vendi stays in [1, n] and is invariant to duplicating the set") {
    const auto samples = random_points(31, 10, 2);
    const double v = vendi_score(samples, Encoder::identity(), 1.0);
    CHECK(v >= 1.0);
    CHECK(v <= 10.0);
    std::vector<Vec> doubled = samples;
    doubled.insert(doubled.end(), samples.begin(), samples.end());
    CHECK(vendi_score(doubled, Encoder::identity(), 1.0) == doctest::Approx(v).epsilon(1e-6));
}

TEST_CASE("clip-style diversity equals set diversity under the same encoder") {
    const auto samples = random_points(37, 8, 2);
    CHECK(clip_style_diversity({samples}, Encoder::identity()) ==
          doctest::Approx(set_diversity({samples}, Encoder::identity())));
}

TEST_CASE("projection encoder matches the manual two-step computation") {
    const Encoder proj = Encoder::random_projection(3, 2, 99);
    const auto samples = random_points(41, 5, 3);
    // manual: encode then pair distances
    std::vector<Vec> encoded;
    for (size_t i = 0; i < samples.size(); ++i) encoded.push_back(proj.encode(samples[i]));
    double acc = 0.0;
    for (size_t i = 0; i < encoded.size(); ++i)
        for (size_t j = i + 1; j < encoded.size(); ++j) {
            double d = 0.0;
            for (size_t l = 0; l < encoded[i].size(); ++l)
                d += (encoded[i][l] - encoded[j][l]) * (encoded[i][l] - encoded[j][l]);
            acc += d;
        }
    const double expected = 2.0 * acc / (5.0 * 4.0);
    CHECK(clip_style_diversity({samples}, proj) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("encoders are deterministic") {
    const Encoder a = Encoder::random_projection(2, 2, 7);
    const Encoder b = Encoder::random_projection(2, 2, 7);
    const Vec x{0.3, -1.2};
    CHECK(a.encode(x) == b.encode(x));
}

TEST_CASE("external table encoder substitutes rows by index") {
    const Encoder table = Encoder::external_table({{1.0, 0.0}, {0.0, 1.0}});
    const Vec ignored{9.0, 9.0};
    CHECK(table.encode(ignored, 0) == Vec{1.0, 0.0});
    CHECK(table.encode(ignored, 1) == Vec{0.0, 1.0});
    CHECK_THROWS_AS(table.encode(ignored, 2), std::out_of_range);
}

TEST_CASE("non-finite embeddings are rejected") {
    std::vector<Vec> samples = {{0.0, 1.0}, {std::nan(""), 0.0}};
    CHECK_THROWS_AS(pairwise_diversity(samples, Encoder::identity()), std::invalid_argument);
}
