#include "ihcc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ihcc::nn {

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += static_cast<std::size_t>(v.size());
    return n;
}

template <typename T>
ParamSet<T> ParamSet<T>::zeros_like() const {
    ParamSet out;
    out.names = names;
    out.trainable = trainable;
    for (const auto& v : values) out.values.emplace_back(Mat<T>::Zero(v.rows(), v.cols()));
    return out;
}

template <typename T>
void ParamSet<T>::set_zero() {
    for (auto& v : values) v.setZero();
}

namespace {

template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const Mat<T>>;

// ---------------------------------------------------------------------------
// Convolution via im2col over the whole batch.

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in_c, int out_c, int k, int stride, int pad, int weight, int bias)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), weight_(weight), bias_(bias) {}

    struct Cache : LayerCache<T> {
        Mat<T> cols;
        int n = 0, h = 0, w = 0;
    };

    Tensor4<T> forward(const ParamSet<T>& params, const Tensor4<T>& x, bool, std::unique_ptr<LayerCache<T>>* cache) const override {
        if (x.c != in_c_) throw ConfigError("conv input channel mismatch");
        const int ho = (x.h + 2 * pad_ - k_) / stride_ + 1;
        const int wo = (x.w + 2 * pad_ - k_) / stride_ + 1;
        if (ho < 1 || wo < 1) throw ConfigError("conv input too small");
        Mat<T> cols = im2col(x, ho, wo);
        Tensor4<T> y(out_c_, x.n, ho, wo);
        MapMat<T> ym(y.data.data(), out_c_, static_cast<Eigen::Index>(x.n) * ho * wo);
        ym.noalias() = params.values[weight_] * cols;
        if (bias_ >= 0) {
            const auto& b = params.values[bias_];
            for (int o = 0; o < out_c_; ++o) ym.row(o).array() += b(0, o);
        }
        if (cache) {
            auto c = std::make_unique<Cache>();
            c->cols = std::move(cols);
            c->n = x.n;
            c->h = x.h;
            c->w = x.w;
            *cache = std::move(c);
        }
        return y;
    }

    Tensor4<T> backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor4<T>& dy, ParamSet<T>& grads,
                        bool need_dx) const override {
        const auto& c = static_cast<const Cache&>(base);
        ConstMapMat<T> dym(dy.data.data(), out_c_, static_cast<Eigen::Index>(dy.n) * dy.h * dy.w);
        grads.values[weight_].noalias() += dym * c.cols.transpose();
        if (bias_ >= 0) grads.values[bias_].row(0).noalias() += dym.rowwise().sum().transpose();
        if (!need_dx) return {};
        Mat<T> dcols = params.values[weight_].transpose() * dym;
        Tensor4<T> dx(in_c_, c.n, c.h, c.w);
        col2im(dcols, dx, dy.h, dy.w);
        return dx;
    }

private:
    Mat<T> im2col(const Tensor4<T>& x, int ho, int wo) const {
        const Eigen::Index ncols = static_cast<Eigen::Index>(x.n) * ho * wo;
        Mat<T> cols(static_cast<Eigen::Index>(in_c_) * k_ * k_, ncols);
        for (int ci = 0; ci < in_c_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    T* dst = cols.data() + ((static_cast<Eigen::Index>(ci) * k_ + ky) * k_ + kx) * ncols;
                    for (int ni = 0; ni < x.n; ++ni) {
                        const T* plane = x.data.data() + (static_cast<std::size_t>(ci) * x.n + ni) * x.h * x.w;
                        for (int oy = 0; oy < ho; ++oy) {
                            T* d = dst + (static_cast<Eigen::Index>(ni) * ho + oy) * wo;
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.h) {
                                std::fill(d, d + wo, T(0));
                                continue;
                            }
                            const T* src = plane + static_cast<std::size_t>(iy) * x.w;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                d[ox] = (ix >= 0 && ix < x.w) ? src[ix] : T(0);
                            }
                        }
                    }
                }
            }
        }
        return cols;
    }

    void col2im(const Mat<T>& cols, Tensor4<T>& dx, int ho, int wo) const {
        const Eigen::Index ncols = cols.cols();
        for (int ci = 0; ci < in_c_; ++ci) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const T* srcrow = cols.data() + ((static_cast<Eigen::Index>(ci) * k_ + ky) * k_ + kx) * ncols;
                    for (int ni = 0; ni < dx.n; ++ni) {
                        T* plane = dx.data.data() + (static_cast<std::size_t>(ci) * dx.n + ni) * dx.h * dx.w;
                        for (int oy = 0; oy < ho; ++oy) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= dx.h) continue;
                            const T* s = srcrow + (static_cast<Eigen::Index>(ni) * ho + oy) * wo;
                            T* d = plane + static_cast<std::size_t>(iy) * dx.w;
                            for (int ox = 0; ox < wo; ++ox) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix >= 0 && ix < dx.w) d[ix] += s[ox];
                            }
                        }
                    }
                }
            }
        }
    }

    int in_c_, out_c_, k_, stride_, pad_, weight_, bias_;
};

// ---------------------------------------------------------------------------

template <typename T>
class BatchNorm2d final : public Layer<T> {
public:
    BatchNorm2d(int channels, int gamma, int beta, int running_mean, int running_var)
        : channels_(channels), gamma_(gamma), beta_(beta), mean_(running_mean), var_(running_var) {}

    struct Cache : LayerCache<T> {
        bool train = false;
        std::vector<T> xhat, inv_std, batch_mean, batch_var;
    };

    Tensor4<T> forward(const ParamSet<T>& params, const Tensor4<T>& x, bool train,
                       std::unique_ptr<LayerCache<T>>* cache) const override {
        const std::size_t plane = x.plane();
        Tensor4<T> y(x.c, x.n, x.h, x.w);
        auto c = std::make_unique<Cache>();
        c->train = train;
        c->inv_std.resize(channels_);
        if (train) {
            c->batch_mean.resize(channels_);
            c->batch_var.resize(channels_);
        }
        if (cache) c->xhat.resize(x.size());
        for (int ch = 0; ch < channels_; ++ch) {
            const T* src = x.data.data() + ch * plane;
            T mean, var;
            if (train) {
                double s = 0, s2 = 0;
                for (std::size_t i = 0; i < plane; ++i) s += src[i];
                mean = static_cast<T>(s / plane);
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = src[i] - mean;
                    s2 += d * d;
                }
                var = static_cast<T>(s2 / plane);
                c->batch_mean[ch] = mean;
                c->batch_var[ch] = var;
            } else {
                mean = params.values[mean_](0, ch);
                var = params.values[var_](0, ch);
            }
            const T inv = T(1) / std::sqrt(var + T(1e-5));
            c->inv_std[ch] = inv;
            const T g = params.values[gamma_](0, ch), b = params.values[beta_](0, ch);
            T* dst = y.data.data() + ch * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const T xh = (src[i] - mean) * inv;
                if (cache) c->xhat[ch * plane + i] = xh;
                dst[i] = g * xh + b;
            }
        }
        if (cache) *cache = std::move(c);
        return y;
    }

    Tensor4<T> backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor4<T>& dy, ParamSet<T>& grads,
                        bool need_dx) const override {
        const auto& c = static_cast<const Cache&>(base);
        const std::size_t plane = dy.plane();
        Tensor4<T> dx;
        if (need_dx) dx = Tensor4<T>(dy.c, dy.n, dy.h, dy.w);
        for (int ch = 0; ch < channels_; ++ch) {
            const T* g = dy.data.data() + ch * plane;
            const T* xh = c.xhat.data() + ch * plane;
            double sum_g = 0, sum_gx = 0;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_g += g[i];
                sum_gx += static_cast<double>(g[i]) * xh[i];
            }
            grads.values[gamma_](0, ch) += static_cast<T>(sum_gx);
            grads.values[beta_](0, ch) += static_cast<T>(sum_g);
            if (!need_dx) continue;
            const T gamma = params.values[gamma_](0, ch);
            const T scale = gamma * c.inv_std[ch];
            T* d = dx.data.data() + ch * plane;
            if (c.train) {
                const T mg = static_cast<T>(sum_g / plane), mgx = static_cast<T>(sum_gx / plane);
                for (std::size_t i = 0; i < plane; ++i) d[i] = scale * (g[i] - mg - xh[i] * mgx);
            } else {
                for (std::size_t i = 0; i < plane; ++i) d[i] = scale * g[i];
            }
        }
        return dx;
    }

    void update_running_stats(ParamSet<T>& params, const LayerCache<T>& base, T momentum) const override {
        const auto& c = static_cast<const Cache&>(base);
        if (!c.train) return;
        for (int ch = 0; ch < channels_; ++ch) {
            auto& rm = params.values[mean_](0, ch);
            auto& rv = params.values[var_](0, ch);
            rm = (T(1) - momentum) * rm + momentum * c.batch_mean[ch];
            rv = (T(1) - momentum) * rv + momentum * c.batch_var[ch];
        }
    }

private:
    int channels_, gamma_, beta_, mean_, var_;
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU final : public Layer<T> {
public:
    struct Cache : LayerCache<T> {
        std::vector<bool> active;
    };

    Tensor4<T> forward(const ParamSet<T>&, const Tensor4<T>& x, bool, std::unique_ptr<LayerCache<T>>* cache) const override {
        Tensor4<T> y = x;
        for (T& v : y.data) v = v > T(0) ? v : T(0);
        if (cache) {
            auto c = std::make_unique<Cache>();
            c->active.resize(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) c->active[i] = x.data[i] > T(0);
            *cache = std::move(c);
        }
        return y;
    }

    Tensor4<T> backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor4<T>& dy, ParamSet<T>&,
                        bool) const override {
        const auto& c = static_cast<const Cache&>(base);
        Tensor4<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) {
            if (!c.active[i]) dx.data[i] = T(0);
        }
        return dx;
    }
};

// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2d final : public Layer<T> {
public:
    MaxPool2d(int k, int stride, int pad) : k_(k), stride_(stride), pad_(pad) {}

    struct Cache : LayerCache<T> {
        std::vector<std::size_t> argmax;
        int c = 0, n = 0, h = 0, w = 0;
    };

    Tensor4<T> forward(const ParamSet<T>&, const Tensor4<T>& x, bool, std::unique_ptr<LayerCache<T>>* cache) const override {
        const int ho = (x.h + 2 * pad_ - k_) / stride_ + 1;
        const int wo = (x.w + 2 * pad_ - k_) / stride_ + 1;
        Tensor4<T> y(x.c, x.n, ho, wo);
        std::vector<std::size_t> arg(y.size());
        std::size_t o = 0;
        for (int ci = 0; ci < x.c; ++ci) {
            for (int ni = 0; ni < x.n; ++ni) {
                const std::size_t base = (static_cast<std::size_t>(ci) * x.n + ni) * x.h * x.w;
                for (int oy = 0; oy < ho; ++oy) {
                    for (int ox = 0; ox < wo; ++ox, ++o) {
                        T best = -std::numeric_limits<T>::infinity();
                        std::size_t best_i = base;
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = oy * stride_ - pad_ + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = ox * stride_ - pad_ + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                const std::size_t idx = base + static_cast<std::size_t>(iy) * x.w + ix;
                                if (x.data[idx] > best) {
                                    best = x.data[idx];
                                    best_i = idx;
                                }
                            }
                        }
                        y.data[o] = best;
                        arg[o] = best_i;
                    }
                }
            }
        }
        if (cache) {
            auto c = std::make_unique<Cache>();
            c->argmax = std::move(arg);
            c->c = x.c;
            c->n = x.n;
            c->h = x.h;
            c->w = x.w;
            *cache = std::move(c);
        }
        return y;
    }

    Tensor4<T> backward(const ParamSet<T>&, const LayerCache<T>& base, const Tensor4<T>& dy, ParamSet<T>&,
                        bool) const override {
        const auto& c = static_cast<const Cache&>(base);
        Tensor4<T> dx(c.c, c.n, c.h, c.w);
        for (std::size_t i = 0; i < dy.size(); ++i) dx.data[c.argmax[i]] += dy.data[i];
        return dx;
    }

private:
    int k_, stride_, pad_;
};

// ---------------------------------------------------------------------------

template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
class BasicBlock final : public Layer<T> {
public:
    BasicBlock(ParamSet<T>& params, const std::string& name, int in_c, int out_c, int stride) {
        main_.push(make_conv<T>(params, name + ".conv1", in_c, out_c, 3, stride, 1, false));
        main_.push(make_batchnorm<T>(params, name + ".bn1", out_c));
        main_.push(make_relu<T>());
        main_.push(make_conv<T>(params, name + ".conv2", out_c, out_c, 3, 1, 1, false));
        main_.push(make_batchnorm<T>(params, name + ".bn2", out_c));
        if (stride != 1 || in_c != out_c) {
            shortcut_ = std::make_unique<Sequential<T>>();
            shortcut_->push(make_conv<T>(params, name + ".down", in_c, out_c, 1, stride, 0, false));
            shortcut_->push(make_batchnorm<T>(params, name + ".down_bn", out_c));
        }
    }

    struct Cache : LayerCache<T> {
        std::unique_ptr<LayerCache<T>> main, shortcut, relu;
    };

    Tensor4<T> forward(const ParamSet<T>& params, const Tensor4<T>& x, bool train,
                       std::unique_ptr<LayerCache<T>>* cache) const override {
        auto c = cache ? std::make_unique<Cache>() : nullptr;
        Tensor4<T> y = main_.forward(params, x, train, c ? &c->main : nullptr);
        if (shortcut_) {
            add_inplace(y, shortcut_->forward(params, x, train, c ? &c->shortcut : nullptr));
        } else {
            add_inplace(y, x);
        }
        Tensor4<T> out = relu_.forward(params, y, train, c ? &c->relu : nullptr);
        if (cache) *cache = std::move(c);
        return out;
    }

    Tensor4<T> backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor4<T>& dy, ParamSet<T>& grads,
                        bool need_dx) const override {
        const auto& c = static_cast<const Cache&>(base);
        Tensor4<T> dsum = relu_.backward(params, *c.relu, dy, grads, true);
        Tensor4<T> dx = main_.backward(params, *c.main, dsum, grads, need_dx);
        if (shortcut_) {
            Tensor4<T> ds = shortcut_->backward(params, *c.shortcut, dsum, grads, need_dx);
            if (need_dx) add_inplace(dx, ds);
        } else if (need_dx) {
            add_inplace(dx, dsum);
        }
        return dx;
    }

    void update_running_stats(ParamSet<T>& params, const LayerCache<T>& base, T momentum) const override {
        const auto& c = static_cast<const Cache&>(base);
        main_.update_running_stats(params, *c.main, momentum);
        if (shortcut_) shortcut_->update_running_stats(params, *c.shortcut, momentum);
    }

private:
    Sequential<T> main_;
    std::unique_ptr<Sequential<T>> shortcut_;
    ReLU<T> relu_;
};

template <typename T>
struct SequentialCache : LayerCache<T> {
    std::vector<std::unique_ptr<LayerCache<T>>> caches;
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

template <typename T>
Tensor4<T> Sequential<T>::forward(const ParamSet<T>& params, const Tensor4<T>& x, bool train,
                                  std::unique_ptr<LayerCache<T>>* cache) const {
    auto c = cache ? std::make_unique<SequentialCache<T>>() : nullptr;
    if (c) c->caches.resize(layers_.size());
    Tensor4<T> cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        cur = layers_[i]->forward(params, cur, train, c ? &c->caches[i] : nullptr);
    }
    if (cache) *cache = std::move(c);
    return cur;
}

template <typename T>
Tensor4<T> Sequential<T>::backward(const ParamSet<T>& params, const LayerCache<T>& base, const Tensor4<T>& dy,
                                   ParamSet<T>& grads, bool need_dx) const {
    const auto& c = static_cast<const SequentialCache<T>&>(base);
    Tensor4<T> cur = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        cur = layers_[i]->backward(params, *c.caches[i], cur, grads, need_dx || i > 0);
    }
    return cur;
}

template <typename T>
void Sequential<T>::update_running_stats(ParamSet<T>& params, const LayerCache<T>& base, T momentum) const {
    const auto& c = static_cast<const SequentialCache<T>&>(base);
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->update_running_stats(params, *c.caches[i], momentum);
}

template <typename T>
LayerPtr<T> make_conv(ParamSet<T>& params, const std::string& name, int in_c, int out_c, int kernel, int stride,
                      int pad, bool bias) {
    const int w = params.add(name + ".weight", out_c, in_c * kernel * kernel);
    const int b = bias ? params.add(name + ".bias", 1, out_c) : -1;
    return std::make_unique<Conv2d<T>>(in_c, out_c, kernel, stride, pad, w, b);
}

template <typename T>
LayerPtr<T> make_batchnorm(ParamSet<T>& params, const std::string& name, int channels) {
    const int g = params.add(name + ".gamma", 1, channels);
    const int b = params.add(name + ".beta", 1, channels);
    const int m = params.add(name + ".running_mean", 1, channels, false);
    const int v = params.add(name + ".running_var", 1, channels, false);
    return std::make_unique<BatchNorm2d<T>>(channels, g, b, m, v);
}

template <typename T>
LayerPtr<T> make_relu() {
    return std::make_unique<ReLU<T>>();
}

template <typename T>
LayerPtr<T> make_maxpool(int kernel, int stride, int pad) {
    return std::make_unique<MaxPool2d<T>>(kernel, stride, pad);
}

template <typename T>
LayerPtr<T> make_basic_block(ParamSet<T>& params, const std::string& name, int in_c, int out_c, int stride) {
    return std::make_unique<BasicBlock<T>>(params, name, in_c, out_c, stride);
}

template <typename T>
Mat<T> global_avg_pool(const Tensor4<T>& x) {
    Mat<T> out(x.n, x.c);
    const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
    for (int ci = 0; ci < x.c; ++ci) {
        for (int ni = 0; ni < x.n; ++ni) {
            const T* p = x.data.data() + (static_cast<std::size_t>(ci) * x.n + ni) * hw;
            T s = 0;
            for (std::size_t i = 0; i < hw; ++i) s += p[i];
            out(ni, ci) = s / static_cast<T>(hw);
        }
    }
    return out;
}

template <typename T>
Tensor4<T> global_avg_pool_backward(const Mat<T>& dy, int h, int w) {
    Tensor4<T> dx(static_cast<int>(dy.cols()), static_cast<int>(dy.rows()), h, w);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    for (int ci = 0; ci < dx.c; ++ci) {
        for (int ni = 0; ni < dx.n; ++ni) {
            T* p = dx.data.data() + (static_cast<std::size_t>(ci) * dx.n + ni) * hw;
            std::fill(p, p + hw, dy(ni, ci) / static_cast<T>(hw));
        }
    }
    return dx;
}

template <typename T>
Linear<T> Linear<T>::create(ParamSet<T>& params, const std::string& name, int in_features, int out_features) {
    Linear l;
    l.in = in_features;
    l.out = out_features;
    l.weight = params.add(name + ".weight", out_features, in_features);
    l.bias = params.add(name + ".bias", 1, out_features);
    return l;
}

template <typename T>
Mat<T> Linear<T>::forward(const ParamSet<T>& params, const Mat<T>& x) const {
    Mat<T> y = x * params.values[weight].transpose();
    y.rowwise() += params.values[bias].row(0);
    return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const ParamSet<T>& params, const Mat<T>& x, const Mat<T>& dy, ParamSet<T>& grads) const {
    grads.values[weight].noalias() += dy.transpose() * x;
    grads.values[bias].row(0).noalias() += dy.colwise().sum();
    return dy * params.values[weight];
}

template <typename T>
void init_fan_in(ParamSet<T>& params, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& name = params.names[i];
        Mat<T>& v = params.values[i];
        if (ends_with(name, ".gamma") || ends_with(name, ".running_var")) {
            v.setOnes();
            continue;
        }
        if (ends_with(name, ".beta") || ends_with(name, ".running_mean")) {
            v.setZero();
            continue;
        }
        Eigen::Index fan_in = v.cols();
        if (ends_with(name, ".bias")) {
            const std::string wname = name.substr(0, name.size() - 5) + ".weight";
            for (std::size_t j = 0; j < params.size(); ++j) {
                if (params.names[j] == wname) fan_in = params.values[j].cols();
            }
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = static_cast<T>(dist(rng));
    }
}

#define IHCC_NN_INSTANTIATE(T)                                                                                     \
    template struct ParamSet<T>;                                                                                   \
    template class Sequential<T>;                                                                                  \
    template struct Linear<T>;                                                                                     \
    template LayerPtr<T> make_conv<T>(ParamSet<T>&, const std::string&, int, int, int, int, int, bool);            \
    template LayerPtr<T> make_batchnorm<T>(ParamSet<T>&, const std::string&, int);                                 \
    template LayerPtr<T> make_relu<T>();                                                                           \
    template LayerPtr<T> make_maxpool<T>(int, int, int);                                                           \
    template LayerPtr<T> make_basic_block<T>(ParamSet<T>&, const std::string&, int, int, int);                     \
    template Mat<T> global_avg_pool<T>(const Tensor4<T>&);                                                         \
    template Tensor4<T> global_avg_pool_backward<T>(const Mat<T>&, int, int);                                      \
    template void init_fan_in<T>(ParamSet<T>&, std::mt19937_64&);

IHCC_NN_INSTANTIATE(float)
IHCC_NN_INSTANTIATE(double)

} // namespace ihcc::nn
