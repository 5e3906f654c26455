#include <doctest.h>

#include <cmath>
#include <random>

#include "../common/oracles.hpp"
#include "helpers.hpp"
#include "ihcc/metrics.hpp"

using namespace ihcc;

namespace {

MatD rows(std::initializer_list<std::initializer_list<double>> v) {
    MatD m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : v) {
        Eigen::Index j = 0;
        for (double x : r) m(i, j++) = x;
        ++i;
    }
    return m;
}

// Random rotation via QR of a Gaussian matrix.
MatD random_rotation(std::mt19937_64& rng, Eigen::Index d) {
    const Eigen::HouseholderQR<MatD> qr(test::random_matrix(rng, d, d));
    return qr.householderQ();
}

} // namespace

TEST_CASE("nmi examples") {
    CHECK(nmi(std::vector<int>{0, 0, 1, 1}, std::vector<int>{1, 1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nmi(std::vector<int>{0, 1, 2, 0, 1, 2}, std::vector<int>{4, 5, 6, 4, 5, 6}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nmi(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 1, 0, 1}) == 0.0);
    CHECK(nmi(std::vector<int>{3, 3, 3}, std::vector<int>{1, 1, 1}) == 0.0);
    CHECK(std::abs(nmi(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1})) <= 1e-15);
    CHECK(nmi(std::vector<int>{7}, std::vector<int>{2}) == 0.0);
    CHECK(nmi(std::vector<std::string>{"a", "a", "b"}, std::vector<std::string>{"x", "x", "y"}) ==
          doctest::Approx(1.0));
    CHECK_THROWS_AS(nmi(std::vector<int>{0, 1}, std::vector<int>{0}), ConfigError);
    CHECK_THROWS_AS(nmi(std::vector<int>{}, std::vector<int>{}), ConfigError);
}

TEST_CASE("metrics agree with brute-force oracles on random instances") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 100; ++t) {
        const auto inst = oracle::random_instance(rng);
        CAPTURE(t);
        CHECK(std::abs(nmi(inst.labels, inst.other) - oracle::nmi(inst.labels, inst.other)) <= 1e-9);
        CHECK(std::abs(silhouette(inst.points, inst.labels) - oracle::silhouette(inst.points, inst.labels)) <= 1e-9);
        const double d = dunn_index(inst.points, inst.labels), od = oracle::dunn(inst.points, inst.labels);
        if (std::isinf(od)) {
            CHECK(d == kDunnInfinity);
        } else {
            CHECK(std::abs(d - od) <= 1e-9);
        }
    }
}

TEST_CASE("nmi is symmetric and invariant under relabeling") {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 100; ++t) {
        const auto inst = oracle::random_instance(rng);
        CHECK(std::abs(nmi(inst.labels, inst.other) - nmi(inst.other, inst.labels)) <= 1e-12);
        std::vector<int> renamed;
        for (int l : inst.labels) renamed.push_back(100 - 3 * l);
        CHECK(std::abs(nmi(renamed, inst.other) - nmi(inst.labels, inst.other)) <= 1e-12);
        CHECK(nmi(inst.labels, inst.other) >= 0.0);
        CHECK(nmi(inst.labels, inst.other) <= 1.0);
    }
}

TEST_CASE("silhouette and dunn are invariant under rigid motion and uniform scaling") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 50; ++t) {
        const auto inst = oracle::random_instance(rng);
        const auto d = inst.points.cols();
        const MatD r = random_rotation(rng, d);
        const Eigen::RowVectorXd shift = test::random_matrix(rng, 1, d, 5.0);
        const MatD moved = ((inst.points * r).rowwise() + shift) * 3.5;
        CHECK(std::abs(silhouette(moved, inst.labels) - silhouette(inst.points, inst.labels)) <= 1e-9);
        const double a = dunn_index(moved, inst.labels), b = dunn_index(inst.points, inst.labels);
        if (std::isinf(b)) {
            CHECK(std::isinf(a));
        } else {
            CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, b));
        }
    }
}

TEST_CASE("silhouette examples") {
    const MatD line = rows({{0}, {1}, {10}, {11}});
    CHECK(silhouette(line, {0, 0, 1, 1}) == doctest::Approx((9.5 / 10.5 + 8.5 / 9.5) / 2).epsilon(1e-12));
    CHECK(silhouette(rows({{0}, {1}}), {0, 1}) == 0.0);
    const MatD tight = rows({{0, 0}, {1e-6, 0}, {0, 1e-6}, {100, 100}, {100, 100 + 1e-6}, {100 + 1e-6, 100}});
    CHECK(silhouette(tight, {0, 0, 0, 1, 1, 1}) >= 1 - 1e-3);
    // Hand-placed six points: a triangle and a pair plus a singleton.
    const MatD six = rows({{0, 0}, {3, 0}, {0, 4}, {10, 0}, {10, 2}, {20, 20}});
    const std::vector<int> lab = {0, 0, 0, 1, 1, 2};
    CHECK(std::abs(silhouette(six, lab) - oracle::silhouette(six, lab)) <= 1e-9);
    CHECK_THROWS_AS(silhouette(line, {0, 0, 0, 0}), ConfigError);
    CHECK_THROWS_AS(silhouette(line, {0, 1}), ConfigError);
}

TEST_CASE("dunn examples") {
    CHECK(dunn_index(rows({{0, 0}, {0, 1}, {5, 0}, {5, 1}}), {0, 0, 1, 1}) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(dunn_index(rows({{0}, {5}}), {0, 1}) == kDunnInfinity);
    CHECK(dunn_index(rows({{0}, {1}, {10}, {11}}), {0, 0, 1, 1}) == doctest::Approx(9.0));
    CHECK_THROWS_AS(dunn_index(rows({{0}, {1}}), {4, 4}), ConfigError);
}

TEST_CASE("acc and median") {
    CHECK(acc({"kitchen", "porch", "porch"}, {"kitchen", "porch", "bedroom"}) == doctest::Approx(2.0 / 3));
    CHECK(acc({kMiscellaneous, kMiscellaneous}, {"kitchen", "porch"}) == 0.0);
    CHECK(acc({kMiscellaneous}, {kMiscellaneous}) == 0.0);
    CHECK_THROWS_AS(acc(std::vector<std::string>{}, std::vector<std::string>{}), ConfigError);
    CHECK_THROWS_AS(acc({"a"}, {"a", "b"}), ConfigError);
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    CHECK_THROWS_AS(median({}), ConfigError);
}

TEST_CASE("acc of pure, correctly labelled clusters is one") {
    auto [m, a] = test::make_dataset({{"p0", "e0", "kitchen", 0},
                                      {"p0", "e0", "kitchen", 0},
                                      {"p0", "e1", "porch", 1},
                                      {"p1", "e2", "porch", 1},
                                      {"p1", "e3", "bedroom", 2}},
                                     3);
    CHECK(acc(auto_label_clusters(a, m), m) == 1.0);
}

TEST_CASE("subcluster quality scores clusters shared by participants") {
    auto [m, a] = test::make_dataset({{"p0", "e0", "kitchen", 0},
                                      {"p0", "e0", "kitchen", 0},
                                      {"p1", "e1", "kitchen", 0},
                                      {"p1", "e1", "kitchen", 0},
                                      {"p0", "e2", "porch", 1},
                                      {"p0", "e2", "porch", 1}},
                                     2);
    // Participants sit in opposite directions; row scale must not matter after normalization.
    const MatD f = rows({{1, 0}, {2, 0.001}, {0, 1}, {0.001, 3}, {1, 1}, {2, 2}});
    const auto q = subcluster_quality(f, a);
    REQUIRE(q.scored.size() == 1);
    CHECK(q.scored[0].cluster_id == 0);
    CHECK(q.scored[0].n_participants == 2);
    CHECK(q.scored[0].silhouette >= 0.99);
    CHECK(q.skipped == std::vector<int>{1});
    CHECK(q.median_silhouette() == q.scored[0].silhouette);

    MatD scaled = f;
    for (Eigen::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= 1.0 + static_cast<double>(i);
    CHECK(subcluster_quality(scaled, a).scored[0].silhouette == doctest::Approx(q.scored[0].silhouette));
    CHECK_THROWS_AS(subcluster_quality(f.topRows(3), a), ConfigError);
}

TEST_CASE("per-participant nmi against environment ids") {
    auto [m, a] = test::make_dataset({{"p0", "e0", "kitchen", 3},
                                      {"p0", "e0", "kitchen", 3},
                                      {"p0", "e1", "porch", 1},
                                      {"p1", "e2", "porch", 1},
                                      {"p1", "e3", "bedroom", 1}},
                                     4);
    const auto v = per_participant_nmi(a, m);
    CHECK(v.at("p0") == doctest::Approx(1.0));
    CHECK(v.at("p1") == 0.0);
}
