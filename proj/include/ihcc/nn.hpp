#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ihcc/common.hpp"

namespace ihcc::nn {

// Activation tensor in channel-major (C, N, H, W) layout, which lets one
// GEMM cover a whole batch of convolutions.
template <typename T>
struct Tensor4 {
    int c = 0, n = 0, h = 0, w = 0;
    // Aligned so Eigen's vectorized paths, and hence rounding, do not depend on
    // where the allocator placed the buffer.
    std::vector<T, Eigen::aligned_allocator<T>> data;

    Tensor4() = default;
    Tensor4(int c_, int n_, int h_, int w_, T fill = T(0))
        : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(n) * h * w; }
    T& at(int ci, int ni, int y, int x) { return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x]; }
    T at(int ci, int ni, int y, int x) const { return data[((static_cast<std::size_t>(ci) * n + ni) * h + y) * w + x]; }
};

// Named parameter tensors. Non-trainable entries (normalization running
// statistics) are stored alongside and skipped by the optimizer.
template <typename T>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Mat<T>> values;
    std::vector<bool> trainable;

    int add(std::string name, int rows, int cols, bool is_trainable = true) {
        names.push_back(std::move(name));
        values.emplace_back(Mat<T>::Zero(rows, cols));
        trainable.push_back(is_trainable);
        return static_cast<int>(values.size()) - 1;
    }
    std::size_t size() const { return values.size(); }
    std::size_t scalar_count() const;
    // Same layout, all zeros.
    ParamSet zeros_like() const;
    void set_zero();

    template <typename U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        out.names = names;
        out.trainable = trainable;
        for (const auto& v : values) out.values.push_back(v.template cast<U>());
        return out;
    }
};

template <typename T>
struct LayerCache {
    virtual ~LayerCache() = default;
};

// Layers are immutable descriptions; parameter values live in a ParamSet so
// forward/backward are reentrant for a fixed parameter set.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    // When cache is non-null the layer records what backward needs.
    virtual Tensor4<T> forward(const ParamSet<T>& params, const Tensor4<T>& x, bool train,
                               std::unique_ptr<LayerCache<T>>* cache) const = 0;
    virtual Tensor4<T> backward(const ParamSet<T>& params, const LayerCache<T>& cache, const Tensor4<T>& dy,
                                ParamSet<T>& grads, bool need_dx) const = 0;
    // Folds batch statistics recorded in cache into running statistics.
    virtual void update_running_stats(ParamSet<T>&, const LayerCache<T>&, T /*momentum*/) const {}
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
LayerPtr<T> make_conv(ParamSet<T>& params, const std::string& name, int in_c, int out_c, int kernel, int stride,
                      int pad, bool bias);
template <typename T>
LayerPtr<T> make_batchnorm(ParamSet<T>& params, const std::string& name, int channels);
template <typename T>
LayerPtr<T> make_relu();
template <typename T>
LayerPtr<T> make_maxpool(int kernel, int stride, int pad);
// Two 3x3 conv+BN stages with identity or projected shortcut, then ReLU.
template <typename T>
LayerPtr<T> make_basic_block(ParamSet<T>& params, const std::string& name, int in_c, int out_c, int stride);

template <typename T>
class Sequential final : public Layer<T> {
public:
    void push(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }
    Tensor4<T> forward(const ParamSet<T>& params, const Tensor4<T>& x, bool train,
                       std::unique_ptr<LayerCache<T>>* cache) const override;
    Tensor4<T> backward(const ParamSet<T>& params, const LayerCache<T>& cache, const Tensor4<T>& dy,
                        ParamSet<T>& grads, bool need_dx) const override;
    void update_running_stats(ParamSet<T>& params, const LayerCache<T>& cache, T momentum) const override;

private:
    std::vector<LayerPtr<T>> layers_;
};

// Global average pool: (C, N, H, W) -> N x C.
template <typename T>
Mat<T> global_avg_pool(const Tensor4<T>& x);
template <typename T>
Tensor4<T> global_avg_pool_backward(const Mat<T>& dy, int h, int w);

// Fully connected layer on row-major sample matrices: y = x W^T + b.
template <typename T>
struct Linear {
    int in = 0, out = 0;
    int weight = -1, bias = -1;

    static Linear create(ParamSet<T>& params, const std::string& name, int in_features, int out_features);
    Mat<T> forward(const ParamSet<T>& params, const Mat<T>& x) const;
    // Accumulates into grads; returns dx.
    Mat<T> backward(const ParamSet<T>& params, const Mat<T>& x, const Mat<T>& dy, ParamSet<T>& grads) const;
};

// Fan-in uniform initialization U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every
// trainable tensor; normalization scales start at 1 and running variances at 1.
template <typename T>
void init_fan_in(ParamSet<T>& params, std::mt19937_64& rng);

} // namespace ihcc::nn
