#include <doctest.h>

#include <fstream>
#include <limits>

#include "helpers.hpp"
#include "ihcc/plots.hpp"

using namespace ihcc;

TEST_CASE("box statistics") {
    const auto s = box_stats({5, 1, 4, 2, 3});
    CHECK(s.min == 1);
    CHECK(s.q1 == 2);
    CHECK(s.median == 3);
    CHECK(s.q3 == 4);
    CHECK(s.max == 5);
    CHECK(box_stats({1, 2}).median == 1.5);
    CHECK_THROWS_AS(box_stats({}), ConfigError);
}

namespace {
double kInf() { return std::numeric_limits<double>::infinity(); }
} // namespace

TEST_CASE("box plot raster") {
    const auto img = box_plot({{"with", {0.2, 0.4, 0.6}}, {"without", {0.1, kInf(), 0.3}}}, 0.0, 1.0, 100);
    CHECK(img.height == 100);
    CHECK(img.width == 160);
    bool inked = false;
    for (float v : img.data) inked = inked || v < 0.2f;
    CHECK(inked);
    CHECK_THROWS_AS(box_plot({}, 0, 1), ConfigError);
    CHECK_THROWS_AS(box_plot({{"a", {1}}}, 1, 1), ConfigError);
}

TEST_CASE("montages lay out one row per group") {
    CorpusSpec spec;
    spec.n_participants = 2;
    spec.n_env_types = 2;
    spec.envs_per_participant = 2;
    spec.captures_per_env = 3;
    spec.image_size = 16;
    const auto m = generate_corpus(spec);
    ClusterAssignment a;
    a.n_clusters = 3;
    for (const auto& r : m.records) {
        a.image_ids.push_back(r.image_id);
        a.participant_ids.push_back(r.participant_id);
        a.cluster_ids.push_back(r.environment_type == m.records[0].environment_type ? 0 : 2);
        a.max_probs.push_back(1.0);
    }
    const auto p = participant_montage(a, m, m.records[0].participant_id, 8, 4);
    CHECK(p.height == 2 * 10 + 2);
    CHECK(p.width == 3 * 10 + 2);
    const auto c = cluster_montage(a, m, 0, 8, 2);
    CHECK(c.height == 2 * 10 + 2);
    CHECK(c.width == 2 * 10 + 2);
    CHECK_THROWS_AS(cluster_montage(a, m, 1), ConfigError);
}

TEST_CASE("box csv") {
    const auto path = std::filesystem::temp_directory_path() / "ihcc_test_box" / "b.csv";
    write_box_csv(path, {{"x", {1, 2, 3}}, {"empty", {}}});
    std::ifstream f(path);
    std::string h, r1, r2;
    std::getline(f, h);
    std::getline(f, r1);
    std::getline(f, r2);
    CHECK(h == "group,n,min,q1,median,q3,max");
    CHECK(r1 == "x,3,1,1.5,2,2.5,3");
    CHECK(r2 == "empty,0,,,,,");
    std::filesystem::remove_all(path.parent_path());
}
