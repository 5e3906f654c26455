#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "ihcc/clusters.hpp"

using namespace ihcc;

namespace {

MatD probs(std::initializer_list<std::initializer_list<double>> v) {
    MatD m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : v) {
        Eigen::Index j = 0;
        for (double x : r) m(i, j++) = x;
        ++i;
    }
    return m;
}

Manifest bare_manifest(int n, int n_participants) {
    Manifest m;
    for (int i = 0; i < n; ++i) {
        ImageRecord r;
        r.image_id = "i" + std::to_string(i);
        r.participant_id = "p" + std::to_string(i % n_participants);
        r.environment_id = r.participant_id + "_e" + std::to_string(i % 3);
        r.environment_type = "t" + std::to_string(i % 3);
        m.records.push_back(r);
    }
    return m;
}

} // namespace

TEST_CASE("argmax assignment and ties") {
    CHECK(argmax_rows(probs({{0.1, 0.7, 0.2}})) == std::vector<int>{1});
    CHECK(argmax_rows(probs({{0.5, 0.5}})) == std::vector<int>{0});
    CHECK(argmax_rows(probs({{0.2, 0.4, 0.4}})) == std::vector<int>{1});
    const auto a = assign_from_probs(probs({{0.1, 0.9}, {0.6, 0.4}, {0.5, 0.5}}), bare_manifest(3, 2));
    CHECK(a.cluster_ids == std::vector<int>{1, 0, 0});
    CHECK(a.n_clusters == 2);
    CHECK(a.max_probs[0] == 0.9);
    CHECK(a.participant_ids[1] == "p1");
    CHECK_THROWS_AS(assign_from_probs(probs({{1.0, 0.0}}), bare_manifest(2, 1)), ConfigError);
}

TEST_CASE("every image receives one cluster in range") {
    std::mt19937_64 rng(31);
    const MatD p = test::softmax(test::random_matrix(rng, 200, 7));
    const auto a = assign_from_probs(p, bare_manifest(200, 5));
    REQUIRE(a.size() == 200);
    for (int c : a.cluster_ids) {
        CHECK(c >= 0);
        CHECK(c < 7);
    }
    CHECK(assign_from_probs(p, bare_manifest(200, 5)).cluster_ids == a.cluster_ids);
}

TEST_CASE("effective cluster count") {
    CHECK(count_effective_clusters(std::vector<int>{0, 0, 0}) == 1);
    CHECK(count_effective_clusters(std::vector<int>{0, 3, 7, 3, 0}) == 3);
    CHECK(count_effective_clusters(std::vector<int>{}) == 0);
}

TEST_CASE("per-sample truncation diagnostic") {
    const auto k = per_sample_truncation(probs({{1.0, 0.0, 0.0}, {0.5, 0.495, 0.005}, {0.0, 0.0, 1.0}}));
    CHECK(k == std::vector<int>{1, 2, 3});
    CHECK_THROWS_AS(per_sample_truncation(probs({{1.0}}), 0.0), ConfigError);
}

TEST_CASE("participant subclusters partition the participant's images") {
    std::mt19937_64 rng(32);
    const MatD p = test::softmax(test::random_matrix(rng, 60, 5));
    const auto a = assign_from_probs(p, bare_manifest(60, 4));
    int sum_counts = 0;
    for (int q = 0; q < 4; ++q) {
        const std::string pid = "p" + std::to_string(q);
        const auto sub = participant_subclusters(a, pid);
        std::set<std::size_t> seen;
        for (const auto& [cid, rows] : sub) {
            for (auto r : rows) {
                CHECK(a.participant_ids[r] == pid);
                CHECK(a.cluster_ids[r] == cid);
                CHECK(seen.insert(r).second);
            }
        }
        CHECK(seen.size() == 15);
        sum_counts += static_cast<int>(sub.size());
    }
    CHECK(sum_counts >= count_effective_clusters(a));
    CHECK(mean_clusters_per_participant(a) == doctest::Approx(sum_counts / 4.0));
    CHECK_THROWS_AS(participant_subclusters(a, "nobody"), ConfigError);

    auto [m, single] = test::make_dataset({{"p0", "e0", "porch", 2}, {"p0", "e1", "porch", 2}}, 3);
    CHECK(participant_subclusters(single, "p0").size() == 1);
}

TEST_CASE("majority labels") {
    CHECK(majority_label({{"bedroom", 5}}, 0.5) == "bedroom");
    CHECK(majority_label({{"kitchen", 2}, {"porch", 2}}, 0.6) == kMiscellaneous);
    CHECK(majority_label({{"kitchen", 5}, {"porch", 3}, {"bedroom", 2}}, 0.5) == "kitchen");
}

TEST_CASE("auto labels are per participant and cluster") {
    auto [m, a] = test::make_dataset({{"p0", "e0", "kitchen", 0},
                                      {"p0", "e0", "kitchen", 0},
                                      {"p0", "e1", "porch", 0},
                                      {"p1", "e2", "porch", 0},
                                      {"p1", "e3", "bedroom", 1}},
                                     2);
    const auto l = auto_label_clusters(a, m);
    CHECK(l.by_group.at({"p0", 0}) == "kitchen");
    CHECK(l.by_group.at({"p1", 0}) == "porch");
    CHECK(l.by_group.at({"p1", 1}) == "bedroom");
    CHECK(l.per_image == std::vector<std::string>{"kitchen", "kitchen", "kitchen", "porch", "bedroom"});
    CHECK(auto_label_clusters(a, m, 0.9).by_group.at({"p0", 0}) == kMiscellaneous);

    m.records[1].environment_type.clear();
    CHECK_THROWS_AS(auto_label_clusters(a, m), DataError);
}

TEST_CASE("assignment csv") {
    auto [m, a] = test::make_dataset({{"p0", "e0", "kitchen", 1}, {"p1", "e1", "porch", 0}}, 2);
    const auto labels = auto_label_clusters(a, m);
    const auto path = std::filesystem::temp_directory_path() / "ihcc_test_assign" / "a.csv";
    write_assignments_csv(path, a, &labels);
    std::ifstream f(path);
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    CHECK(header == "image_id,cluster_id,max_prob,label");
    CHECK(row.rfind("img0,1,", 0) == 0);
    CHECK(row.find("kitchen") != std::string::npos);
    f.close();

    const auto back = read_assignments_csv(path, m, 2);
    CHECK(back.cluster_ids == a.cluster_ids);
    CHECK(back.participant_ids == a.participant_ids);
    CHECK(back.n_clusters == 2);
    CHECK(read_assignments_csv(path, m).n_clusters == 2);
    auto [m3, a3] = test::make_dataset({{"p0", "e0", "kitchen", 1}, {"p1", "e1", "porch", 0}, {"p1", "e1", "porch", 0}}, 2);
    CHECK_THROWS_AS(read_assignments_csv(path, m3), DataError);
    {
        std::ofstream bad(path);
        bad << "image_id,cluster_id,max_prob,label\nimg0,x,0.5,\nimg1,0,1,\n";
    }
    CHECK_THROWS_AS(read_assignments_csv(path, m), DataError);
    std::filesystem::remove_all(path.parent_path());
}
