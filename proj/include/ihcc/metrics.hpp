#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ihcc/clusters.hpp"
#include "ihcc/common.hpp"
#include "ihcc/corpus.hpp"
#include "ihcc/model.hpp"

namespace ihcc {

// Mutual information over the arithmetic mean of the two entropies (natural
// log). Both partitions trivial gives 0.
double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b);
double nmi(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b);

// Maps categorical strings to dense integer codes in first-appearance order.
std::vector<int> encode_labels(const std::vector<std::string>& labels);

// Fraction of images whose cluster label equals their true type;
// Miscellaneous never matches.
double acc(const std::vector<std::string>& predicted_labels, const std::vector<std::string>& true_labels);
double acc(const ClusterLabels& labels, const Manifest& manifest);

// Mean Euclidean silhouette; points in singleton clusters score 0.
double silhouette(const MatD& points, const std::vector<int>& labels);

inline constexpr double kDunnInfinity = std::numeric_limits<double>::infinity();

// Minimum inter-cluster point distance over maximum cluster diameter;
// kDunnInfinity when every diameter is 0.
double dunn_index(const MatD& points, const std::vector<int>& labels);

struct ClusterQuality {
    int cluster_id = 0;
    int n_images = 0;
    int n_participants = 0;
    double silhouette = 0.0;
    double dunn = 0.0;
};

struct SubclusterQuality {
    std::vector<ClusterQuality> scored;
    std::vector<int> skipped; // clusters holding a single participant

    double median_silhouette() const;
    double median_dunn() const;
};

// Participant separation inside each cluster, measured on L2-normalized
// backbone features with participant ids as labels.
SubclusterQuality subcluster_quality(const MatD& features, const ClusterAssignment& assignment);
SubclusterQuality subcluster_quality(const ModelState<float>& model, const ClusterAssignment& assignment,
                                     const Manifest& manifest);

// Per participant: NMI between cluster ids and distinct environment ids.
std::map<std::string, double> per_participant_nmi(const ClusterAssignment& assignment, const Manifest& manifest);

// Median of a nonempty sample (mean of the middle pair for even sizes).
double median(std::vector<double> values);

} // namespace ihcc
