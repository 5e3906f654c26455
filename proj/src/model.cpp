#include "ihcc/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ihcc {

std::string to_string(EncoderKind kind) { return kind == EncoderKind::small_conv ? "small_conv" : "resnet34"; }

EncoderKind parse_encoder_kind(const std::string& s) {
    if (s == "small_conv") return EncoderKind::small_conv;
    if (s == "resnet34") return EncoderKind::resnet34;
    throw ConfigError("unknown encoder_kind '" + s + "' (expected small_conv or resnet34)");
}

void ModelConfig::validate() const {
    auto at_least = [](int v, int lo, const char* name) {
        if (v < lo) throw ConfigError(std::string(name) + " must be at least " + std::to_string(lo));
    };
    at_least(image_size, 4, "image_size");
    at_least(feature_dim, 1, "feature_dim");
    at_least(instance_dim, 1, "instance_dim");
    at_least(cch_size, 2, "cch_size");
    at_least(n_participants, 1, "n_participants");
    at_least(head_hidden_dim, 1, "head_hidden_dim");
    if (feature_dim % 8 != 0) throw ConfigError("feature_dim must be a multiple of 8");
}

std::string ModelConfig::diff(const ModelConfig& o) const {
    std::ostringstream s;
    auto field = [&](const char* name, const auto& a, const auto& b) {
        if (a != b) s << name << ": " << a << " != " << b << "; ";
    };
    field("encoder_kind", to_string(encoder_kind), to_string(o.encoder_kind));
    field("image_size", image_size, o.image_size);
    field("feature_dim", feature_dim, o.feature_dim);
    field("instance_dim", instance_dim, o.instance_dim);
    field("cch_size", cch_size, o.cch_size);
    field("n_participants", n_participants, o.n_participants);
    field("head_hidden_dim", head_hidden_dim, o.head_hidden_dim);
    std::string out = s.str();
    if (out.size() >= 2) out.resize(out.size() - 2);
    return out;
}

template <typename T>
struct Architecture {
    nn::Sequential<T> encoder;
    nn::Linear<T> ich1, ich2, cch1, cch2, psh1, psh2;
};

namespace {

template <typename T>
std::shared_ptr<Architecture<T>> build(const ModelConfig& cfg, nn::ParamSet<T>& params) {
    auto arch = std::make_shared<Architecture<T>>();
    const int d = cfg.feature_dim;
    if (cfg.encoder_kind == EncoderKind::small_conv) {
        const int widths[4] = {std::max(1, d / 8), std::max(1, d / 4), std::max(1, d / 2), d};
        int in = 3;
        for (int i = 0; i < 4; ++i) {
            arch->encoder.push(nn::make_conv<T>(params, "encoder.conv" + std::to_string(i), in, widths[i], 3, 2, 1, true));
            arch->encoder.push(nn::make_relu<T>());
            in = widths[i];
        }
    } else {
        const int base = std::max(1, d / 8);
        arch->encoder.push(nn::make_conv<T>(params, "encoder.stem", 3, base, 7, 2, 3, false));
        arch->encoder.push(nn::make_batchnorm<T>(params, "encoder.stem_bn", base));
        arch->encoder.push(nn::make_relu<T>());
        arch->encoder.push(nn::make_maxpool<T>(3, 2, 1));
        const int blocks[4] = {3, 4, 6, 3};
        int in = base;
        for (int stage = 0; stage < 4; ++stage) {
            const int width = base << stage;
            for (int b = 0; b < blocks[stage]; ++b) {
                const int stride = (stage > 0 && b == 0) ? 2 : 1;
                arch->encoder.push(nn::make_basic_block<T>(
                    params, "encoder.layer" + std::to_string(stage + 1) + "." + std::to_string(b), in, width, stride));
                in = width;
            }
        }
    }
    const int h = cfg.head_hidden_dim;
    arch->ich1 = nn::Linear<T>::create(params, "ich.fc1", d, h);
    arch->ich2 = nn::Linear<T>::create(params, "ich.fc2", h, cfg.instance_dim);
    arch->cch1 = nn::Linear<T>::create(params, "cch.fc1", d, h);
    arch->cch2 = nn::Linear<T>::create(params, "cch.fc2", h, cfg.cch_size);
    arch->psh1 = nn::Linear<T>::create(params, "psh.fc1", d, h);
    arch->psh2 = nn::Linear<T>::create(params, "psh.fc2", h, cfg.n_participants);
    return arch;
}

template <typename T>
Mat<T> relu(const Mat<T>& x) {
    return x.cwiseMax(T(0));
}

template <typename T>
Mat<T> relu_backward(const Mat<T>& pre, const Mat<T>& dy) {
    return (pre.array() > T(0)).select(dy, Mat<T>::Zero(dy.rows(), dy.cols()));
}

} // namespace

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
    Mat<T> p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const T m = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

template <typename T>
Mat<T> softmax_backward(const Mat<T>& probs, const Mat<T>& grad_probs) {
    Mat<T> g(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const T dot = probs.row(i).dot(grad_probs.row(i));
        g.row(i) = probs.row(i).array() * (grad_probs.row(i).array() - dot);
    }
    return g;
}

template <typename T>
Mat<T> l2_normalize_rows(const Mat<T>& x) {
    Mat<T> y = x;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T n = std::max(x.row(i).norm(), T(1e-12));
        y.row(i) /= n;
    }
    return y;
}

template <typename T>
Mat<T> l2_normalize_backward(const Mat<T>& x, const Mat<T>& grad_y) {
    Mat<T> g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T n = std::max(x.row(i).norm(), T(1e-12));
        const auto y = x.row(i) / n;
        g.row(i) = (grad_y.row(i) - y * y.dot(grad_y.row(i))) / n;
    }
    return g;
}

template <typename T>
ModelState<T>::ModelState(const ModelConfig& config) : config_(config) {
    config_.validate();
    arch_ = build<T>(config_, params_);
}

template <typename T>
ForwardOutput<T> ModelState<T>::forward(const nn::Tensor4<T>& batch, Mode mode, Tape<T>* tape) const {
    if (!arch_) throw ConfigError("model is not initialized");
    if (batch.n < 1) throw ConfigError("forward: empty batch");
    if (batch.c != 3 || batch.h != config_.image_size || batch.w != config_.image_size) {
        throw ConfigError("forward: batch shape " + std::to_string(batch.h) + "x" + std::to_string(batch.w) + "x" +
                          std::to_string(batch.c) + " does not match model image_size " +
                          std::to_string(config_.image_size));
    }
    const bool train = mode == Mode::train;
    std::unique_ptr<nn::LayerCache<T>> enc_cache;
    nn::Tensor4<T> fmap = arch_->encoder.forward(params_, batch, train, tape ? &enc_cache : nullptr);
    ForwardOutput<T> out;
    out.features = nn::global_avg_pool(fmap);

    const Mat<T> ich_pre = arch_->ich1.forward(params_, out.features);
    const Mat<T> ich_out = arch_->ich2.forward(params_, relu(ich_pre));
    out.instance_embed = l2_normalize_rows(ich_out);

    const Mat<T> cch_pre = arch_->cch1.forward(params_, out.features);
    const Mat<T> cch_logits = arch_->cch2.forward(params_, relu(cch_pre));
    out.cluster_probs = softmax_rows(cch_logits);

    const Mat<T> psh_pre = arch_->psh1.forward(params_, out.features);
    const Mat<T> psh_logits = arch_->psh2.forward(params_, relu(psh_pre));
    out.participant_probs = softmax_rows(psh_logits);

    if (tape) {
        tape->encoder = std::move(enc_cache);
        tape->feat_h = fmap.h;
        tape->feat_w = fmap.w;
        tape->features = out.features;
        tape->ich_hidden_pre = ich_pre;
        tape->ich_out = ich_out;
        tape->cch_hidden_pre = cch_pre;
        tape->cch_logits = cch_logits;
        tape->psh_hidden_pre = psh_pre;
        tape->psh_logits = psh_logits;
        tape->instance_embed = out.instance_embed;
        tape->cluster_probs = out.cluster_probs;
        tape->participant_probs = out.participant_probs;
    }
    return out;
}

template <typename T>
void ModelState<T>::backward(const Tape<T>& tape, const OutputGrads<T>& g, nn::ParamSet<T>& grads) const {
    if (!tape.encoder) throw ConfigError("backward: tape was recorded without caches");
    const Eigen::Index n = tape.features.rows();
    Mat<T> dfeat = g.features.size() ? g.features : Mat<T>::Zero(n, config_.feature_dim);

    auto head = [&](const nn::Linear<T>& fc1, const nn::Linear<T>& fc2, const Mat<T>& pre, const Mat<T>& dout) {
        const Mat<T> hidden = relu(pre);
        const Mat<T> dhidden = fc2.backward(params_, hidden, dout, grads);
        dfeat += fc1.backward(params_, tape.features, relu_backward(pre, dhidden), grads);
    };
    if (g.instance_embed.size()) {
        head(arch_->ich1, arch_->ich2, tape.ich_hidden_pre, l2_normalize_backward(tape.ich_out, g.instance_embed));
    }
    if (g.cluster_probs.size()) {
        head(arch_->cch1, arch_->cch2, tape.cch_hidden_pre, softmax_backward(tape.cluster_probs, g.cluster_probs));
    }
    if (g.participant_probs.size()) {
        head(arch_->psh1, arch_->psh2, tape.psh_hidden_pre,
             softmax_backward(tape.participant_probs, g.participant_probs));
    }
    const nn::Tensor4<T> dmap = nn::global_avg_pool_backward(dfeat, tape.feat_h, tape.feat_w);
    arch_->encoder.backward(params_, *tape.encoder, dmap, grads, false);
}

template <typename T>
void ModelState<T>::update_running_stats(const Tape<T>& tape, T momentum) {
    if (tape.encoder) arch_->encoder.update_running_stats(params_, *tape.encoder, momentum);
}

template <typename T>
ModelState<T> init_model(const ModelConfig& config, std::uint64_t seed) {
    ModelState<T> state(config);
    std::mt19937_64 rng(derive_seed(seed, 0x6d6f64656cULL));
    nn::init_fan_in(state.params(), rng);
    return state;
}

template <typename T>
nn::Tensor4<T> make_batch(std::span<const Image* const> images) {
    if (images.empty()) throw ConfigError("make_batch: no images");
    const int h = images[0]->height, w = images[0]->width;
    nn::Tensor4<T> t(3, static_cast<int>(images.size()), h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Image& img = *images[i];
        if (img.height != h || img.width != w) throw ConfigError("make_batch: images differ in size");
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) t.at(c, static_cast<int>(i), y, x) = static_cast<T>(img.at(y, x, c));
            }
        }
    }
    return t;
}

template <typename T>
nn::Tensor4<T> make_batch(std::span<const Image> images) {
    std::vector<const Image*> ptrs;
    ptrs.reserve(images.size());
    for (const auto& img : images) ptrs.push_back(&img);
    return make_batch<T>(std::span<const Image* const>(ptrs));
}

#define IHCC_MODEL_INSTANTIATE(T)                                                                                  \
    template class ModelState<T>;                                                                                  \
    template ModelState<T> init_model<T>(const ModelConfig&, std::uint64_t);                                       \
    template nn::Tensor4<T> make_batch<T>(std::span<const Image* const>);                                          \
    template nn::Tensor4<T> make_batch<T>(std::span<const Image>);                                                 \
    template Mat<T> softmax_rows<T>(const Mat<T>&);                                                                \
    template Mat<T> softmax_backward<T>(const Mat<T>&, const Mat<T>&);                                             \
    template Mat<T> l2_normalize_rows<T>(const Mat<T>&);                                                           \
    template Mat<T> l2_normalize_backward<T>(const Mat<T>&, const Mat<T>&);

IHCC_MODEL_INSTANTIATE(float)
IHCC_MODEL_INSTANTIATE(double)

} // namespace ihcc
