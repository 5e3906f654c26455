#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ihcc/common.hpp"
#include "ihcc/image.hpp"
#include "ihcc/nn.hpp"

namespace ihcc {

enum class EncoderKind { small_conv, resnet34 };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& s);

struct ModelConfig {
    EncoderKind encoder_kind = EncoderKind::small_conv;
    int image_size = 64;
    // Backbone output width. small_conv uses channel widths d/8, d/4, d/2, d;
    // resnet34 uses stage widths d/8 .. d (d = 512 is the standard network).
    int feature_dim = 256;
    int instance_dim = 128;
    int cch_size = 20; // truncation level K of the cluster head
    int n_participants = 6;
    int head_hidden_dim = 256;

    void validate() const;
    // Human-readable list of differing fields; empty when equal.
    std::string diff(const ModelConfig& other) const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Per-batch model outputs; rows index samples.
template <typename T>
struct ForwardOutput {
    Mat<T> features;          // N x feature_dim backbone output
    Mat<T> instance_embed;    // N x instance_dim, unit rows
    Mat<T> cluster_probs;     // N x K, rows on the simplex
    Mat<T> participant_probs; // N x P, rows on the simplex
};

// Gradients of a scalar objective with respect to ForwardOutput fields.
// Empty matrices mean "no gradient".
template <typename T>
struct OutputGrads {
    Mat<T> features;
    Mat<T> instance_embed;
    Mat<T> cluster_probs;
    Mat<T> participant_probs;
};

template <typename T>
struct Architecture;

// Everything backward needs from one forward pass.
template <typename T>
struct Tape {
    std::unique_ptr<nn::LayerCache<T>> encoder;
    int feat_h = 0, feat_w = 0;
    Mat<T> features;
    Mat<T> ich_hidden_pre, ich_out, cch_hidden_pre, cch_logits, psh_hidden_pre, psh_logits;
    Mat<T> instance_embed, cluster_probs, participant_probs;
};

enum class Mode { train, eval };

// Architecture (immutable, shared between copies) plus parameter values.
template <typename T>
class ModelState {
public:
    ModelState() = default;
    explicit ModelState(const ModelConfig& config); // parameters are zero until initialized

    const ModelConfig& config() const { return config_; }
    nn::ParamSet<T>& params() { return params_; }
    const nn::ParamSet<T>& params() const { return params_; }

    ForwardOutput<T> forward(const nn::Tensor4<T>& batch, Mode mode = Mode::eval, Tape<T>* tape = nullptr) const;
    // Accumulates parameter gradients into grads (same layout as params()).
    void backward(const Tape<T>& tape, const OutputGrads<T>& grads_out, nn::ParamSet<T>& grads) const;
    // Folds batch normalization statistics from a training-mode tape.
    void update_running_stats(const Tape<T>& tape, T momentum = T(0.1));

    template <typename U>
    ModelState<U> cast() const {
        ModelState<U> out(config_);
        out.params() = params_.template cast<U>();
        return out;
    }

private:
    ModelConfig config_;
    std::shared_ptr<const Architecture<T>> arch_;
    nn::ParamSet<T> params_;
};

// Builds and initializes a model deterministically from seed.
template <typename T = float>
ModelState<T> init_model(const ModelConfig& config, std::uint64_t seed);

// Packs images (each image_size x image_size RGB) into a (3, N, H, W) batch.
template <typename T = float>
nn::Tensor4<T> make_batch(std::span<const Image* const> images);
template <typename T = float>
nn::Tensor4<T> make_batch(std::span<const Image> images);

// Row-wise softmax and its backward pass.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits);
template <typename T>
Mat<T> softmax_backward(const Mat<T>& probs, const Mat<T>& grad_probs);

// Row-wise L2 normalization and its backward pass.
template <typename T>
Mat<T> l2_normalize_rows(const Mat<T>& x);
template <typename T>
Mat<T> l2_normalize_backward(const Mat<T>& x, const Mat<T>& grad_y);

} // namespace ihcc
