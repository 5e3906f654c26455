#include "ihcc/clusters.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ihcc/training.hpp"

namespace ihcc {

std::vector<int> argmax_rows(const MatD& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < probs.cols(); ++j) {
            if (probs(i, j) > probs(i, best)) best = j;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

ClusterAssignment assign_from_probs(const MatD& cluster_probs, const Manifest& manifest) {
    if (static_cast<std::size_t>(cluster_probs.rows()) != manifest.size()) {
        throw ConfigError("assign: " + std::to_string(cluster_probs.rows()) + " probability rows for " +
                          std::to_string(manifest.size()) + " records");
    }
    if (cluster_probs.cols() < 1) throw ConfigError("assign: no clusters");
    ClusterAssignment a;
    a.n_clusters = static_cast<int>(cluster_probs.cols());
    a.cluster_ids = argmax_rows(cluster_probs);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        a.image_ids.push_back(manifest.records[i].image_id);
        a.participant_ids.push_back(manifest.records[i].participant_id);
        a.max_probs.push_back(cluster_probs(static_cast<Eigen::Index>(i), a.cluster_ids[i]));
    }
    return a;
}

ClusterAssignment assign_clusters(const ModelState<float>& model, const Manifest& manifest) {
    const auto out = predict(model, manifest);
    return assign_from_probs(out.cluster_probs.cast<double>(), manifest);
}

int count_effective_clusters(const std::vector<int>& cluster_ids) {
    return static_cast<int>(std::set<int>(cluster_ids.begin(), cluster_ids.end()).size());
}

int count_effective_clusters(const ClusterAssignment& assignment) {
    return count_effective_clusters(assignment.cluster_ids);
}

std::vector<int> per_sample_truncation(const MatD& cluster_probs, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("per_sample_truncation: eps must lie in (0, 1)");
    std::vector<int> out;
    for (Eigen::Index i = 0; i < cluster_probs.rows(); ++i) {
        double mass = 0.0;
        int k = 0;
        while (k < cluster_probs.cols() && mass <= 1.0 - eps) mass += cluster_probs(i, k++);
        out.push_back(k);
    }
    return out;
}

std::map<int, std::vector<std::size_t>> participant_subclusters(const ClusterAssignment& assignment,
                                                                const std::string& participant_id) {
    std::map<int, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        if (assignment.participant_ids[i] == participant_id) out[assignment.cluster_ids[i]].push_back(i);
    }
    if (out.empty()) throw ConfigError("unknown participant " + participant_id);
    return out;
}

double mean_clusters_per_participant(const ClusterAssignment& assignment) {
    std::map<std::string, std::set<int>> per;
    for (std::size_t i = 0; i < assignment.size(); ++i) per[assignment.participant_ids[i]].insert(assignment.cluster_ids[i]);
    if (per.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [p, ids] : per) total += static_cast<double>(ids.size());
    return total / static_cast<double>(per.size());
}

std::string majority_label(const std::map<std::string, int>& type_counts, double purity_threshold) {
    int total = 0, best = -1;
    std::string label;
    for (const auto& [type, count] : type_counts) {
        total += count;
        if (count > best) {
            best = count;
            label = type;
        }
    }
    if (total == 0) return kMiscellaneous;
    return static_cast<double>(best) / total >= purity_threshold ? label : kMiscellaneous;
}

ClusterLabels auto_label_clusters(const ClusterAssignment& assignment, const Manifest& manifest,
                                  double purity_threshold) {
    if (!(purity_threshold >= 0.0 && purity_threshold <= 1.0)) {
        throw ConfigError("purity_threshold must lie in [0, 1]");
    }
    if (assignment.size() != manifest.size()) throw ConfigError("auto_label: assignment does not match manifest");
    std::map<std::pair<std::string, int>, std::map<std::string, int>> counts;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        const auto& type = manifest.records[i].environment_type;
        if (type.empty()) throw DataError("auto_label: record " + manifest.records[i].image_id + " has no environment_type");
        counts[{assignment.participant_ids[i], assignment.cluster_ids[i]}][type] += 1;
    }
    ClusterLabels out;
    for (const auto& [group, c] : counts) out.by_group[group] = majority_label(c, purity_threshold);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        out.per_image.push_back(out.by_group.at({assignment.participant_ids[i], assignment.cluster_ids[i]}));
    }
    return out;
}

void write_assignments_csv(const std::filesystem::path& path, const ClusterAssignment& assignment,
                           const ClusterLabels* labels) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "image_id,cluster_id,max_prob,label\n";
    f.precision(6);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        f << assignment.image_ids[i] << ',' << assignment.cluster_ids[i] << ',' << assignment.max_probs[i] << ','
          << (labels ? labels->per_image[i] : std::string()) << '\n';
    }
}

ClusterAssignment read_assignments_csv(const std::filesystem::path& path, const Manifest& manifest, int n_clusters) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open assignments " + path.string());
    std::string line;
    if (!std::getline(f, line) || line.rfind("image_id,cluster_id,max_prob", 0) != 0) {
        throw DataError(path.string() + ": missing assignments header");
    }
    std::map<std::string, std::pair<int, double>> rows;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        const std::string where = path.string() + " row " + std::to_string(line_no);
        if (cells.size() < 3) throw DataError(where + ": expected at least 3 columns");
        try {
            std::size_t used = 0;
            const int cid = std::stoi(cells[1], &used);
            if (used != cells[1].size() || cid < 0) throw std::invalid_argument("cluster id");
            const double p = std::stod(cells[2]);
            if (!rows.emplace(cells[0], std::make_pair(cid, p)).second) throw DataError(where + ": duplicate image id");
        } catch (const std::logic_error&) {
            throw DataError(where + ": malformed cluster id or probability");
        }
    }
    ClusterAssignment a;
    int max_id = -1;
    for (const auto& r : manifest.records) {
        auto it = rows.find(r.image_id);
        if (it == rows.end()) throw DataError(path.string() + ": no assignment for image " + r.image_id);
        a.image_ids.push_back(r.image_id);
        a.participant_ids.push_back(r.participant_id);
        a.cluster_ids.push_back(it->second.first);
        a.max_probs.push_back(it->second.second);
        max_id = std::max(max_id, it->second.first);
        rows.erase(it);
    }
    if (!rows.empty()) throw DataError(path.string() + ": image " + rows.begin()->first + " is not in the manifest");
    a.n_clusters = n_clusters > 0 ? n_clusters : max_id + 1;
    if (max_id >= a.n_clusters) throw DataError(path.string() + ": cluster id exceeds the cluster count");
    return a;
}

} // namespace ihcc
