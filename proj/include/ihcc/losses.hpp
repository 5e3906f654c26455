#pragma once

#include <span>
#include <vector>

#include "ihcc/common.hpp"

namespace ihcc {

// Beta(1, alpha) stick-breaking prior over predicted cluster probabilities.
struct SBPriorConfig {
    double alpha = 1.5;
    double lambda_sb = 0.1; // 1.0 drives everything into the last cluster at desk scale
    double eps_clamp = 1e-6;
    bool include_last_break = false;

    void validate() const;
};

// Break fractions from stick weights: beta_i = pi_i / (1 - sum_{j<i} pi_j).
// With eps_clamp > 0 the denominator is floored at eps_clamp and each beta is
// clamped to [eps_clamp, 1 - eps_clamp]; eps_clamp == 0 disables clamping (an
// exhausted stick then yields beta = 1). The final break is dropped unless
// include_last_break. Throws ConfigError if pi is not on the simplex (1e-5).
std::vector<double> pi_to_beta(std::span<const double> pi, double eps_clamp, bool include_last_break = true);

struct StickWeights {
    std::vector<double> pi;
    double leftover = 0.0; // mass not assigned to the given breaks
};

// pi_i = beta_i * prod_{j<i} (1 - beta_j). Throws ConfigError for beta outside [0,1].
StickWeights beta_to_pi(std::span<const double> beta);

// log density of Beta(1, alpha) at beta: log(alpha) + (alpha - 1) log(1 - beta).
double beta1_log_pdf(double beta, double alpha);

// Negative log stick-breaking prior averaged over rows of an N x K
// probability matrix. When grad is non-null it receives dL/dprobs.
double sb_log_prior(const MatD& cluster_probs, const SBPriorConfig& config, MatD* grad = nullptr);

// Normalized-temperature cross-entropy over the 2N rows of [a; b]; the
// positive of row i of a is row i of b and vice versa. Rows must be unit norm.
double instance_contrastive_loss(const MatD& embed_a, const MatD& embed_b, double tau, MatD* grad_a = nullptr,
                                 MatD* grad_b = nullptr);

struct ClusterLoss {
    double contrastive = 0.0; // NT-Xent over the 2K normalized columns
    double entropy = 0.0;     // mean over both views of H(marginal cluster distribution)
    double value() const { return contrastive - entropy; }
};

ClusterLoss cluster_contrastive_loss(const MatD& probs_a, const MatD& probs_b, double tau, MatD* grad_a = nullptr,
                                     MatD* grad_b = nullptr);

// Mean cross-entropy of the true participant, probabilities floored at 1e-12.
double participant_loss(const MatD& participant_probs, std::span<const int> labels, MatD* grad = nullptr);

struct LossBreakdown {
    double l_ins = 0.0, l_clu = 0.0, l_ps = 0.0, l_sb = 0.0, total = 0.0;
};

struct LossConfig {
    double tau_instance = 0.5;
    double tau_cluster = 1.0;
    SBPriorConfig sb;
    bool use_participant_loss = true;
};

// Head outputs of one augmented view.
struct ViewOutputs {
    MatD instance_embed;
    MatD cluster_probs;
    MatD participant_probs;
};

struct ViewGrads {
    MatD instance_embed, cluster_probs, participant_probs;
};

struct TotalLoss {
    LossBreakdown breakdown;
    ViewGrads grad_a, grad_b;
};

// total = l_ins + l_clu + l_ps + lambda_sb * l_sb. l_ps and l_sb are averaged
// over the two views; l_ps is 0 when the participant loss is disabled.
TotalLoss total_loss(const ViewOutputs& a, const ViewOutputs& b, std::span<const int> labels, const LossConfig& config,
                     bool with_grad = true);

} // namespace ihcc
