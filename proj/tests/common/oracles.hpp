#pragma once

// Deliberately naive reference implementations, written without sharing code
// with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "ihcc/common.hpp"

namespace ihcc::oracle {

inline double dist(const MatD& x, Eigen::Index i, Eigen::Index j) {
    double s = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
    return std::sqrt(s);
}

// Mutual information from the joint table, normalized by the mean entropy.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> pj;
    std::map<int, double> pa, pb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        pj[{a[i], b[i]}] += 1 / n;
        pa[a[i]] += 1 / n;
        pb[b[i]] += 1 / n;
    }
    double ha = 0, hb = 0, mi = 0;
    for (auto [k, p] : pa) ha -= p * std::log(p);
    for (auto [k, p] : pb) hb -= p * std::log(p);
    for (auto [k, p] : pj) mi += p * (std::log(p) - std::log(pa[k.first]) - std::log(pb[k.second]));
    if (ha + hb == 0) return 0.0;
    return 2 * mi / (ha + hb);
}

inline double silhouette(const MatD& x, const std::vector<int>& labels) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    const std::set<int> clusters(labels.begin(), labels.end());
    double total = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double own_sum = 0;
        int own_n = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && labels[j] == labels[i]) {
                own_sum += dist(x, i, j);
                ++own_n;
            }
        }
        if (own_n == 0) continue;
        const double a = own_sum / own_n;
        double b = std::numeric_limits<double>::max();
        for (int c : clusters) {
            if (c == labels[i]) continue;
            double s = 0;
            int m = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (labels[j] == c) {
                    s += dist(x, i, j);
                    ++m;
                }
            }
            b = std::min(b, s / m);
        }
        if (std::max(a, b) > 0) total += (b - a) / std::max(a, b);
    }
    return total / n;
}

// Smallest between-cluster gap over the largest diameter, cluster by cluster.
inline double dunn(const MatD& x, const std::vector<int>& labels) {
    std::map<int, std::vector<Eigen::Index>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Eigen::Index>(i));
    double diam = 0;
    for (const auto& [c, m] : members) {
        for (auto i : m) {
            for (auto j : m) diam = std::max(diam, dist(x, i, j));
        }
    }
    double gap = std::numeric_limits<double>::infinity();
    for (const auto& [c1, m1] : members) {
        for (const auto& [c2, m2] : members) {
            if (c1 >= c2) continue;
            for (auto i : m1) {
                for (auto j : m2) gap = std::min(gap, dist(x, i, j));
            }
        }
    }
    if (diam == 0) return std::numeric_limits<double>::infinity();
    return gap / diam;
}

// Random labelled point set with N <= 20 and at least two distinct labels.
struct Instance {
    MatD points;
    std::vector<int> labels;
    std::vector<int> other; // an independent partition of the same points
};

inline Instance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> nd(2, 20), dd(1, 5), kd(2, 6);
    const int n = nd(rng), d = dd(rng);
    const int k = std::min(kd(rng), n);
    Instance inst;
    inst.points = MatD(n, d);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < inst.points.size(); ++i) inst.points.data()[i] = g(rng);
    std::uniform_int_distribution<int> ld(0, k - 1);
    for (int i = 0; i < n; ++i) {
        inst.labels.push_back(i < 2 ? i : ld(rng));
        inst.other.push_back(ld(rng) * 7 - 3);
    }
    return inst;
}

} // namespace ihcc::oracle
