#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "ihcc/clusters.hpp"
#include "ihcc/common.hpp"
#include "ihcc/corpus.hpp"

namespace ihcc::test {

inline MatD random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    MatD m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
    return m;
}

inline MatD softmax(const MatD& z) {
    MatD p(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mx = z.row(i).maxCoeff();
        double s = 0;
        for (Eigen::Index j = 0; j < z.cols(); ++j) s += (p(i, j) = std::exp(z(i, j) - mx));
        p.row(i) /= s;
    }
    return p;
}

inline MatD unit_rows(const MatD& x) {
    MatD y = x;
    for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) /= y.row(i).norm();
    return y;
}

// Central differences of f at x, one coordinate at a time.
inline MatD central_difference(const std::function<double(const MatD&)>& f, const MatD& x, double h = 1e-5) {
    MatD g(x.rows(), x.cols());
    MatD xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = xp.data()[i];
        xp.data()[i] = orig + h;
        const double fp = f(xp);
        xp.data()[i] = orig - h;
        const double fm = f(xp);
        xp.data()[i] = orig;
        g.data()[i] = (fp - fm) / (2 * h);
    }
    return g;
}

inline double relative_error(const MatD& a, const MatD& b) {
    const double denom = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / denom;
}

// Chain rule through a row softmax: dL/dz from dL/dp.
inline MatD softmax_chain(const MatD& p, const MatD& gp) {
    MatD gz(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double dot = p.row(i).dot(gp.row(i));
        gz.row(i) = p.row(i).array() * (gp.row(i).array() - dot);
    }
    return gz;
}

struct Row {
    std::string participant, environment, type;
    int cluster = 0;
    std::vector<double> outcomes = {};
};

// Pixel-free manifest and the matching assignment, one record per row.
inline std::pair<Manifest, ClusterAssignment> make_dataset(const std::vector<Row>& rows, int n_clusters,
                                                           std::vector<std::string> outcome_names = {"smoking"}) {
    Manifest m;
    m.outcome_names = std::move(outcome_names);
    ClusterAssignment a;
    a.n_clusters = n_clusters;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ImageRecord r;
        r.image_id = "img" + std::to_string(i);
        r.participant_id = rows[i].participant;
        r.environment_id = rows[i].environment;
        r.environment_type = rows[i].type;
        r.outcomes = rows[i].outcomes;
        r.outcomes.resize(m.outcome_names.size(), 0.0);
        m.records.push_back(r);
        a.image_ids.push_back(r.image_id);
        a.participant_ids.push_back(r.participant_id);
        a.cluster_ids.push_back(rows[i].cluster);
        a.max_probs.push_back(1.0);
    }
    return {m, a};
}

} // namespace ihcc::test
