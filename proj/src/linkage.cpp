#include "ihcc/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ihcc/metrics.hpp"

namespace ihcc {

namespace {

std::size_t require_outcome(const Manifest& manifest, const std::string& name) {
    const auto idx = manifest.outcome_index(name);
    if (!idx) throw ConfigError("unknown outcome '" + name + "'");
    return *idx;
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

std::map<int, std::string> global_cluster_labels(const ClusterAssignment& assignment, const Manifest& manifest,
                                                 double purity_threshold) {
    if (assignment.size() != manifest.size()) throw ConfigError("assignment does not match manifest");
    std::map<int, std::map<std::string, int>> counts;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        counts[assignment.cluster_ids[i]][manifest.records[i].environment_type] += 1;
    }
    std::map<int, std::string> out;
    for (const auto& [cid, c] : counts) out[cid] = majority_label(c, purity_threshold);
    return out;
}

OutcomeTable cluster_outcome_table(const ClusterAssignment& assignment, const Manifest& manifest,
                                   int min_cluster_size, const std::string& sort_outcome,
                                   const std::map<int, std::string>* cluster_labels) {
    if (assignment.size() != manifest.size()) throw ConfigError("assignment does not match manifest");
    if (min_cluster_size < 0) throw ConfigError("min_cluster_size must be nonnegative");
    const std::size_t sort_idx = require_outcome(manifest, sort_outcome);
    const std::size_t n_out = manifest.outcome_names.size();

    std::map<int, OutcomeRow> acc_rows;
    bool non_binary = false;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        auto& row = acc_rows[assignment.cluster_ids[i]];
        row.cluster_id = assignment.cluster_ids[i];
        row.means.resize(n_out, 0.0);
        row.count += 1;
        const auto& vals = manifest.records[i].outcomes;
        for (std::size_t k = 0; k < n_out; ++k) {
            if (vals[k] != 0.0 && vals[k] != 1.0) non_binary = true;
            row.means[k] += vals[k];
        }
    }
    if (non_binary) log_warning("outcome table: non-binary outcome values are averaged as-is");

    const auto labels = cluster_labels ? *cluster_labels : global_cluster_labels(assignment, manifest);
    OutcomeTable table{manifest.outcome_names, sort_outcome, {}};
    for (auto& [cid, row] : acc_rows) {
        if (row.count <= min_cluster_size) continue;
        for (auto& m : row.means) m /= row.count;
        const auto it = labels.find(cid);
        row.label = it == labels.end() ? std::string() : it->second;
        table.rows.push_back(std::move(row));
    }
    std::stable_sort(table.rows.begin(), table.rows.end(), [&](const OutcomeRow& a, const OutcomeRow& b) {
        if (a.means[sort_idx] != b.means[sort_idx]) return a.means[sort_idx] > b.means[sort_idx];
        return a.cluster_id < b.cluster_id;
    });
    return table;
}

std::map<std::string, double> participant_outcome_nmi(const ClusterAssignment& assignment, const Manifest& manifest,
                                                      const std::string& outcome_name) {
    if (assignment.size() != manifest.size()) throw ConfigError("assignment does not match manifest");
    const std::size_t idx = require_outcome(manifest, outcome_name);
    std::map<std::string, std::pair<std::vector<int>, std::vector<int>>> groups;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        auto& g = groups[assignment.participant_ids[i]];
        g.first.push_back(assignment.cluster_ids[i]);
        g.second.push_back(static_cast<int>(std::lround(manifest.records[i].outcomes[idx] * 1000.0)));
    }
    std::map<std::string, double> out;
    for (const auto& [pid, g] : groups) {
        if (g.first.size() < 2) continue;
        out[pid] = nmi(g.first, g.second);
    }
    return out;
}

void write_outcome_table_csv(const std::filesystem::path& path, const OutcomeTable& table) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path.string());
    f << "cluster_id,label,count";
    for (const auto& n : table.outcome_names) f << ',' << n;
    f << '\n';
    f.precision(6);
    for (const auto& r : table.rows) {
        f << r.cluster_id << ',' << r.label << ',' << r.count;
        for (double m : r.means) f << ',' << m;
        f << '\n';
    }
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman: need two equal-length samples of size >= 2");
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace ihcc
