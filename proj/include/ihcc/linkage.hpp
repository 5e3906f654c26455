#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ihcc/clusters.hpp"
#include "ihcc/corpus.hpp"

namespace ihcc {

struct OutcomeRow {
    int cluster_id = 0;
    std::string label;
    int count = 0;
    std::vector<double> means; // aligned with OutcomeTable::outcome_names
};

struct OutcomeTable {
    std::vector<std::string> outcome_names;
    std::string sorted_by;
    std::vector<OutcomeRow> rows; // descending by sorted_by, then ascending cluster id
};

// Per-cluster outcome means over clusters with more than min_cluster_size
// images. Labels come from cluster_labels when given, else the global majority
// environment type of the cluster (purity 0.5).
OutcomeTable cluster_outcome_table(const ClusterAssignment& assignment, const Manifest& manifest,
                                   int min_cluster_size, const std::string& sort_outcome,
                                   const std::map<int, std::string>* cluster_labels = nullptr);

// Majority environment type of every cluster across all participants.
std::map<int, std::string> global_cluster_labels(const ClusterAssignment& assignment, const Manifest& manifest,
                                                 double purity_threshold = 0.5);

// Per participant: NMI between cluster ids and the outcome values of their
// images. Participants with fewer than 2 images are left out.
std::map<std::string, double> participant_outcome_nmi(const ClusterAssignment& assignment, const Manifest& manifest,
                                                      const std::string& outcome_name);

void write_outcome_table_csv(const std::filesystem::path& path, const OutcomeTable& table);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

} // namespace ihcc
