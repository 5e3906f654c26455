#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ihcc/common.hpp"
#include "ihcc/corpus.hpp"
#include "ihcc/model.hpp"

namespace ihcc {

inline const std::string kMiscellaneous = "Miscellaneous";

struct ClusterAssignment {
    int n_clusters = 0;              // K of the cluster head
    std::vector<std::string> image_ids;
    std::vector<std::string> participant_ids;
    std::vector<int> cluster_ids;    // in [0, n_clusters)
    std::vector<double> max_probs;

    std::size_t size() const { return cluster_ids.size(); }
};

// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const MatD& probs);

// Assigns every record of manifest from its cluster-probability row.
ClusterAssignment assign_from_probs(const MatD& cluster_probs, const Manifest& manifest);

// Eval-mode forward on center views of every record, then assign_from_probs.
ClusterAssignment assign_clusters(const ModelState<float>& model, const Manifest& manifest);

// Number of distinct cluster ids with at least one image.
int count_effective_clusters(const ClusterAssignment& assignment);
int count_effective_clusters(const std::vector<int>& cluster_ids);

// Per-sample number of leading clusters whose cumulative mass exceeds 1 - eps
// (diagnostic; the effective count above is the primary definition).
std::vector<int> per_sample_truncation(const MatD& cluster_probs, double eps = 0.01);

// cluster_id -> row indices of the participant's images.
std::map<int, std::vector<std::size_t>> participant_subclusters(const ClusterAssignment& assignment,
                                                                const std::string& participant_id);

double mean_clusters_per_participant(const ClusterAssignment& assignment);

// Majority environment type of each (participant, cluster) group when its
// share reaches purity_threshold, else Miscellaneous.
struct ClusterLabels {
    std::map<std::pair<std::string, int>, std::string> by_group;
    // Label of each assigned image, aligned with the assignment rows.
    std::vector<std::string> per_image;
};

// Label for one group given its environment-type counts.
std::string majority_label(const std::map<std::string, int>& type_counts, double purity_threshold);

ClusterLabels auto_label_clusters(const ClusterAssignment& assignment, const Manifest& manifest,
                                  double purity_threshold = 0.5);

// Columns image_id, cluster_id, max_prob, label.
void write_assignments_csv(const std::filesystem::path& path, const ClusterAssignment& assignment,
                           const ClusterLabels* labels);

// Reads a file written by write_assignments_csv, reordered to follow manifest.
// n_clusters 0 takes the largest id + 1. Throws DataError on missing or
// unknown image ids.
ClusterAssignment read_assignments_csv(const std::filesystem::path& path, const Manifest& manifest,
                                       int n_clusters = 0);

} // namespace ihcc
