#include "ihcc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "ihcc/training.hpp"

namespace ihcc {

namespace {

double entropy_of(const std::vector<double>& counts, double n) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

std::vector<int> dense(const std::vector<int>& labels, int& n_classes) {
    std::unordered_map<int, int> index;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(index.emplace(l, static_cast<int>(index.size())).first->second);
    n_classes = static_cast<int>(index.size());
    return out;
}

void check_points(const MatD& points, const std::vector<int>& labels, const char* what) {
    if (static_cast<std::size_t>(points.rows()) != labels.size()) {
        throw ConfigError(std::string(what) + ": points and labels differ in length");
    }
    if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
        throw ConfigError(std::string(what) + ": at least two labels are required");
    }
}

MatD pairwise_distances(const MatD& x) {
    const Eigen::Index n = x.rows();
    MatD d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).norm();
    }
    return d;
}

} // namespace

std::vector<int> encode_labels(const std::vector<std::string>& labels) {
    std::unordered_map<std::string, int> index;
    std::vector<int> out;
    out.reserve(labels.size());
    for (const auto& l : labels) out.push_back(index.emplace(l, static_cast<int>(index.size())).first->second);
    return out;
}

double nmi(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
    if (labels_a.size() != labels_b.size()) throw ConfigError("nmi: label vectors differ in length");
    if (labels_a.empty()) throw ConfigError("nmi: empty label vectors");
    int ka = 0, kb = 0;
    const auto a = dense(labels_a, ka), b = dense(labels_b, kb);
    const double n = static_cast<double>(a.size());
    std::vector<double> joint(static_cast<std::size_t>(ka) * kb, 0.0), ca(ka, 0.0), cb(kb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[static_cast<std::size_t>(a[i]) * kb + b[i]] += 1;
        ca[a[i]] += 1;
        cb[b[i]] += 1;
    }
    const double ha = entropy_of(ca, n), hb = entropy_of(cb, n);
    if (ha + hb == 0.0) return 0.0;
    double mi = 0.0;
    for (int i = 0; i < ka; ++i) {
        for (int j = 0; j < kb; ++j) {
            const double c = joint[static_cast<std::size_t>(i) * kb + j];
            if (c > 0) mi += (c / n) * std::log(c * n / (ca[i] * cb[j]));
        }
    }
    return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double nmi(const std::vector<std::string>& labels_a, const std::vector<std::string>& labels_b) {
    return nmi(encode_labels(labels_a), encode_labels(labels_b));
}

double acc(const std::vector<std::string>& predicted_labels, const std::vector<std::string>& true_labels) {
    if (predicted_labels.size() != true_labels.size()) throw ConfigError("acc: label vectors differ in length");
    if (predicted_labels.empty()) throw ConfigError("acc: missing labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted_labels.size(); ++i) {
        if (predicted_labels[i] != kMiscellaneous && predicted_labels[i] == true_labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted_labels.size());
}

double acc(const ClusterLabels& labels, const Manifest& manifest) {
    std::vector<std::string> truth;
    for (const auto& r : manifest.records) truth.push_back(r.environment_type);
    return acc(labels.per_image, truth);
}

double silhouette(const MatD& points, const std::vector<int>& labels) {
    check_points(points, labels, "silhouette");
    int k = 0;
    const auto lab = dense(labels, k);
    const Eigen::Index n = points.rows();
    const MatD d = pairwise_distances(points);
    std::vector<double> size(k, 0.0);
    for (int l : lab) size[l] += 1;
    double total = 0.0;
    std::vector<double> sums(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = lab[i];
        if (size[own] <= 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (Eigen::Index j = 0; j < n; ++j) sums[lab[j]] += d(i, j);
        const double a = sums[own] / (size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c != own) b = std::min(b, sums[c] / size[c]);
        }
        const double m = std::max(a, b);
        if (m > 0) total += (b - a) / m;
    }
    return total / static_cast<double>(n);
}

double dunn_index(const MatD& points, const std::vector<int>& labels) {
    check_points(points, labels, "dunn_index");
    const Eigen::Index n = points.rows();
    double min_inter = std::numeric_limits<double>::infinity(), max_diam = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double dist = (points.row(i) - points.row(j)).norm();
            if (labels[i] == labels[j]) {
                max_diam = std::max(max_diam, dist);
            } else {
                min_inter = std::min(min_inter, dist);
            }
        }
    }
    if (max_diam == 0.0) return kDunnInfinity;
    return min_inter / max_diam;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ConfigError("median of an empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size() / 2;
    if (values.size() % 2 == 1) return values[m];
    return 0.5 * (values[m - 1] + values[m]);
}

double SubclusterQuality::median_silhouette() const {
    std::vector<double> v;
    for (const auto& q : scored) v.push_back(q.silhouette);
    return median(v);
}

double SubclusterQuality::median_dunn() const {
    std::vector<double> v;
    for (const auto& q : scored) v.push_back(q.dunn);
    return median(v);
}

SubclusterQuality subcluster_quality(const MatD& features, const ClusterAssignment& assignment) {
    if (static_cast<std::size_t>(features.rows()) != assignment.size()) {
        throw ConfigError("subcluster_quality: features do not match the assignment");
    }
    MatD unit = features;
    for (Eigen::Index i = 0; i < unit.rows(); ++i) {
        const double norm = unit.row(i).norm();
        if (norm > 0) unit.row(i) /= norm;
    }
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < assignment.size(); ++i) members[assignment.cluster_ids[i]].push_back(i);

    SubclusterQuality out;
    for (const auto& [cid, rows] : members) {
        std::vector<std::string> pids;
        for (auto r : rows) pids.push_back(assignment.participant_ids[r]);
        const auto labels = encode_labels(pids);
        const int n_participants = 1 + *std::max_element(labels.begin(), labels.end());
        if (n_participants < 2) {
            out.skipped.push_back(cid);
            continue;
        }
        MatD pts(static_cast<Eigen::Index>(rows.size()), unit.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = unit.row(rows[i]);
        out.scored.push_back({cid, static_cast<int>(rows.size()), n_participants, silhouette(pts, labels),
                              dunn_index(pts, labels)});
    }
    return out;
}

SubclusterQuality subcluster_quality(const ModelState<float>& model, const ClusterAssignment& assignment,
                                     const Manifest& manifest) {
    const auto out = predict(model, manifest);
    return subcluster_quality(out.features.cast<double>(), assignment);
}

std::map<std::string, double> per_participant_nmi(const ClusterAssignment& assignment, const Manifest& manifest) {
    if (assignment.size() != manifest.size()) throw ConfigError("per_participant_nmi: assignment does not match manifest");
    std::map<std::string, std::pair<std::vector<int>, std::vector<std::string>>> groups;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        auto& g = groups[assignment.participant_ids[i]];
        g.first.push_back(assignment.cluster_ids[i]);
        g.second.push_back(manifest.records[i].environment_id);
    }
    std::map<std::string, double> out;
    for (const auto& [pid, g] : groups) out[pid] = nmi(g.first, encode_labels(g.second));
    return out;
}

} // namespace ihcc
