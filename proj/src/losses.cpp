#include "ihcc/losses.hpp"

#include "ihcc/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

namespace ihcc {

namespace {

constexpr double kSimplexTol = 1e-5;

void check_simplex_row(const double* p, Eigen::Index k, Eigen::Index row) {
    double s = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (!(p[i] >= -kSimplexTol)) {
            throw ConfigError("row " + std::to_string(row) + " is not on the probability simplex (negative entry)");
        }
        s += p[i];
    }
    if (!(std::abs(s - 1.0) <= kSimplexTol)) {
        throw ConfigError("row " + std::to_string(row) + " is not on the probability simplex (sums to " +
                          std::to_string(s) + ")");
    }
}

// Negative log prior of one row and, optionally, its gradient.
double sb_row(const double* pi, Eigen::Index k, const SBPriorConfig& cfg, double* grad) {
    const double eps = cfg.eps_clamp;
    const Eigen::Index retained = cfg.include_last_break ? k : k - 1;
    const double log_alpha = std::log(cfg.alpha);
    double value = 0.0;
    double prefix = 0.0;
    // g_i = dL/draw_i, remaining_i = 1 - sum_{j<i} pi_j
    thread_local std::vector<double> g, remaining, den;
    g.assign(k, 0.0);
    remaining.assign(k, 0.0);
    den.assign(k, 0.0);
    for (Eigen::Index i = 0; i < k; ++i) {
        remaining[i] = 1.0 - prefix;
        den[i] = std::max(remaining[i], eps);
        prefix += pi[i];
        if (i >= retained) continue;
        const double raw = pi[i] / den[i];
        const double beta = std::clamp(raw, eps, 1.0 - eps);
        value -= log_alpha + (cfg.alpha - 1.0) * std::log1p(-beta);
        if (grad && raw > eps && raw < 1.0 - eps) g[i] = (cfg.alpha - 1.0) / (1.0 - beta);
    }
    if (grad) {
        double acc = 0.0;
        for (Eigen::Index i = k; i-- > 0;) {
            grad[i] = g[i] / den[i] + acc;
            if (remaining[i] > eps) acc += g[i] * pi[i] / (remaining[i] * remaining[i]);
        }
    }
    return value;
}

// NT-Xent over the rows of z = [a; b]; returns the loss and writes dL/dz.
double nt_xent(const MatD& z, double tau, MatD* grad) {
    const Eigen::Index m = z.rows();
    const Eigen::Index n = m / 2;
    const MatD sim = (z * z.transpose()) / tau;
    double loss = 0.0;
    MatD g;
    if (grad) g = MatD::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index pos = i < n ? i + n : i - n;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j != i) mx = std::max(mx, sim(i, j));
        }
        double denom = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (j != i) denom += std::exp(sim(i, j) - mx);
        }
        loss += -sim(i, pos) + mx + std::log(denom);
        if (grad) {
            for (Eigen::Index j = 0; j < m; ++j) {
                if (j != i) g(i, j) = std::exp(sim(i, j) - mx) / denom / static_cast<double>(m);
            }
            g(i, pos) -= 1.0 / static_cast<double>(m);
        }
    }
    if (grad) *grad = ((g + g.transpose()) * z) / tau;
    return loss / static_cast<double>(m);
}

double marginal_entropy(const MatD& probs, MatD* grad) {
    const Eigen::RowVectorXd col = probs.colwise().sum();
    const double total = col.sum();
    const Eigen::RowVectorXd p = col / total;
    double h = 0.0;
    Eigen::RowVectorXd dh(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0) h -= p(i) * std::log(p(i));
        dh(i) = -(std::log(std::max(p(i), 1e-300)) + 1.0);
    }
    if (grad) {
        const double mean = p.dot(dh);
        const Eigen::RowVectorXd row = (dh.array() - mean) / total;
        *grad = row.replicate(probs.rows(), 1);
    }
    return h;
}

std::atomic<bool> warned_small_batch{false};

void require_same_shape(const MatD& a, const MatD& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ConfigError(std::string(what) + ": views have different shapes");
    }
}

} // namespace

void SBPriorConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!(lambda_sb >= 0.0)) throw ConfigError("lambda_sb must be nonnegative");
    if (!(eps_clamp > 0.0 && eps_clamp < 0.5)) throw ConfigError("eps_clamp must lie in (0, 0.5)");
}

std::vector<double> pi_to_beta(std::span<const double> pi, double eps_clamp, bool include_last_break) {
    if (pi.empty()) throw ConfigError("pi_to_beta: empty vector");
    if (!(eps_clamp >= 0.0 && eps_clamp < 0.5)) throw ConfigError("pi_to_beta: eps_clamp must lie in [0, 0.5)");
    check_simplex_row(pi.data(), static_cast<Eigen::Index>(pi.size()), 0);
    const std::size_t k = include_last_break ? pi.size() : pi.size() - 1;
    std::vector<double> beta(k);
    double prefix = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double remaining = 1.0 - prefix;
        if (eps_clamp > 0.0) {
            beta[i] = std::clamp(pi[i] / std::max(remaining, eps_clamp), eps_clamp, 1.0 - eps_clamp);
        } else {
            beta[i] = remaining > 0.0 ? std::clamp(pi[i] / remaining, 0.0, 1.0) : 1.0;
        }
        prefix += pi[i];
    }
    return beta;
}

StickWeights beta_to_pi(std::span<const double> beta) {
    StickWeights out;
    out.pi.resize(beta.size());
    double remaining = 1.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        if (!(beta[i] >= 0.0 && beta[i] <= 1.0)) {
            throw ConfigError("beta_to_pi: break fraction " + std::to_string(i) + " outside [0,1]");
        }
        out.pi[i] = beta[i] * remaining;
        remaining *= 1.0 - beta[i];
    }
    out.leftover = remaining;
    return out;
}

double beta1_log_pdf(double beta, double alpha) { return std::log(alpha) + (alpha - 1.0) * std::log1p(-beta); }

double sb_log_prior(const MatD& cluster_probs, const SBPriorConfig& config, MatD* grad) {
    config.validate();
    const Eigen::Index n = cluster_probs.rows(), k = cluster_probs.cols();
    if (n == 0 || k == 0) throw ConfigError("sb_log_prior: empty probability matrix");
    if (grad) grad->setZero(n, k);
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) {
        const double* row = cluster_probs.data() + r * k;
        check_simplex_row(row, k, r);
        total += sb_row(row, k, config, grad ? grad->data() + r * k : nullptr);
    }
    if (grad) *grad /= static_cast<double>(n);
    return total / static_cast<double>(n);
}

double instance_contrastive_loss(const MatD& embed_a, const MatD& embed_b, double tau, MatD* grad_a, MatD* grad_b) {
    require_same_shape(embed_a, embed_b, "instance_contrastive_loss");
    if (embed_a.rows() == 0) throw ConfigError("instance_contrastive_loss: N must be at least 1");
    if (!(tau > 0)) throw ConfigError("instance_contrastive_loss: temperature must be positive");
    const Eigen::Index n = embed_a.rows();
    MatD z(2 * n, embed_a.cols());
    z << embed_a, embed_b;
    MatD g;
    const bool want = grad_a || grad_b;
    const double loss = nt_xent(z, tau, want ? &g : nullptr);
    if (grad_a) *grad_a = g.topRows(n);
    if (grad_b) *grad_b = g.bottomRows(n);
    return loss;
}

ClusterLoss cluster_contrastive_loss(const MatD& probs_a, const MatD& probs_b, double tau, MatD* grad_a,
                                     MatD* grad_b) {
    require_same_shape(probs_a, probs_b, "cluster_contrastive_loss");
    const Eigen::Index n = probs_a.rows(), k = probs_a.cols();
    if (k < 2) throw ConfigError("cluster_contrastive_loss: K must be at least 2");
    if (n == 0) throw ConfigError("cluster_contrastive_loss: empty batch");
    if (!(tau > 0)) throw ConfigError("cluster_contrastive_loss: temperature must be positive");
    if (n < k && !warned_small_batch.exchange(true)) {
        log_warning("cluster_contrastive_loss: batch size " + std::to_string(n) + " is smaller than K = " +
                    std::to_string(k));
    }
    const bool want = grad_a || grad_b;
    const MatD cols_a = probs_a.transpose(), cols_b = probs_b.transpose();
    const MatD na = l2_normalize_rows<double>(cols_a), nb = l2_normalize_rows<double>(cols_b);
    MatD z(2 * k, n);
    z << na, nb;
    MatD gz;
    ClusterLoss out;
    out.contrastive = nt_xent(z, tau, want ? &gz : nullptr);
    MatD ga_ent, gb_ent;
    const double ha = marginal_entropy(probs_a, want ? &ga_ent : nullptr);
    const double hb = marginal_entropy(probs_b, want ? &gb_ent : nullptr);
    out.entropy = 0.5 * (ha + hb);
    if (want) {
        const MatD dcols_a = l2_normalize_backward<double>(cols_a, gz.topRows(k));
        const MatD dcols_b = l2_normalize_backward<double>(cols_b, gz.bottomRows(k));
        if (grad_a) *grad_a = dcols_a.transpose() - 0.5 * ga_ent;
        if (grad_b) *grad_b = dcols_b.transpose() - 0.5 * gb_ent;
    }
    return out;
}

double participant_loss(const MatD& participant_probs, std::span<const int> labels, MatD* grad) {
    const Eigen::Index n = participant_probs.rows(), p = participant_probs.cols();
    if (static_cast<std::size_t>(n) != labels.size()) throw ConfigError("participant_loss: label count mismatch");
    if (n == 0) throw ConfigError("participant_loss: empty batch");
    if (grad) grad->setZero(n, p);
    // Running mean, so a batch of identical terms returns that term exactly.
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || y >= p) throw ConfigError("participant_loss: label " + std::to_string(y) + " out of range");
        const double prob = participant_probs(i, y);
        constexpr double floor = 1e-12;
        loss += (-std::log(std::max(prob, floor)) - loss) / static_cast<double>(i + 1);
        if (grad && prob > floor) (*grad)(i, y) = -1.0 / (prob * static_cast<double>(n));
    }
    return loss;
}

TotalLoss total_loss(const ViewOutputs& a, const ViewOutputs& b, std::span<const int> labels, const LossConfig& config,
                     bool with_grad) {
    require_same_shape(a.instance_embed, b.instance_embed, "total_loss");
    require_same_shape(a.cluster_probs, b.cluster_probs, "total_loss");
    if (a.instance_embed.rows() != a.cluster_probs.rows()) throw ConfigError("total_loss: inconsistent batch sizes");
    config.sb.validate();
    TotalLoss out;
    auto& lb = out.breakdown;
    MatD* ga = with_grad ? &out.grad_a.instance_embed : nullptr;
    MatD* gb = with_grad ? &out.grad_b.instance_embed : nullptr;
    lb.l_ins = instance_contrastive_loss(a.instance_embed, b.instance_embed, config.tau_instance, ga, gb);

    lb.l_clu = cluster_contrastive_loss(a.cluster_probs, b.cluster_probs, config.tau_cluster,
                                        with_grad ? &out.grad_a.cluster_probs : nullptr,
                                        with_grad ? &out.grad_b.cluster_probs : nullptr)
                   .value();

    MatD sa, sb;
    lb.l_sb = 0.5 * (sb_log_prior(a.cluster_probs, config.sb, with_grad ? &sa : nullptr) +
                     sb_log_prior(b.cluster_probs, config.sb, with_grad ? &sb : nullptr));
    if (with_grad && config.sb.lambda_sb != 0.0) {
        out.grad_a.cluster_probs += (0.5 * config.sb.lambda_sb) * sa;
        out.grad_b.cluster_probs += (0.5 * config.sb.lambda_sb) * sb;
    }

    if (config.use_participant_loss) {
        require_same_shape(a.participant_probs, b.participant_probs, "total_loss");
        MatD pa, pb;
        lb.l_ps = 0.5 * (participant_loss(a.participant_probs, labels, with_grad ? &pa : nullptr) +
                         participant_loss(b.participant_probs, labels, with_grad ? &pb : nullptr));
        if (with_grad) {
            out.grad_a.participant_probs = 0.5 * pa;
            out.grad_b.participant_probs = 0.5 * pb;
        }
    }
    lb.total = lb.l_ins + lb.l_clu + lb.l_ps + config.sb.lambda_sb * lb.l_sb;
    return out;
}

} // namespace ihcc
