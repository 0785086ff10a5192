#pragma once

#include "ppgan/error.hpp"
#include "ppgan/nn/tensor.hpp"
#include "ppgan/rng.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace ppgan::nn {

enum class Mode {
    train,    ///< batch statistics, running averages updated
    inference ///< running averages, no state change
};

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// Every layer caches what its backward pass needs during forward; backward
/// must follow the matching forward and accumulates parameter gradients.
template <class T>
class Layer {
public:
    explicit Layer(std::string name) : name_(std::move(name)) {}
    virtual ~Layer() = default;

    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect(std::vector<Param<T>*>&) {}

    const std::string& name() const { return name_; }

protected:
    std::string name_;
};

namespace detail {

/// cols[(c*k + ky)*k + kx, oy*ow + ox] = img[c, oy*s - p + ky, ox*s - p + kx] (0 outside).
template <class T>
void im2col(const T* img, int channels, int height, int width, int k, int stride, int pad, int oh, int ow, T* cols)
{
    const int positions = oh * ow;
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * positions;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[oy * ow + ox] = (iy >= 0 && iy < height && ix >= 0 && ix < width)
                                                ? img[(static_cast<std::size_t>(c) * height + iy) * width + ix]
                                                : T(0);
                    }
                }
            }
}

/// Adjoint of im2col: scatters columns back onto the image (accumulating).
template <class T>
void col2im(const T* cols, int channels, int height, int width, int k, int stride, int pad, int oh, int ow, T* img)
{
    const int positions = oh * ow;
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * positions;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= width) continue;
                        img[(static_cast<std::size_t>(c) * height + iy) * width + ix] += row[oy * ow + ox];
                    }
                }
            }
}

template <class T>
void fill_normal(Param<T>& p, Pcg64& rng, double mean, double stddev)
{
    for (auto& v : p.value) v = static_cast<T>(mean + stddev * rng.normal());
}

} // namespace detail

/// y = x W^T + b over the flattened per-sample features.
template <class T>
class Linear final : public Layer<T> {
public:
    Linear(std::string name, int in, int out)
        : Layer<T>(std::move(name)), in_(in), out_(out), weight_(this->name_ + ".weight", {out, in}),
          bias_(this->name_ + ".bias", {out})
    {
    }

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (static_cast<int>(x.sample_size()) != in_)
            throw ValidationError(this->name_ + ": expected " + std::to_string(in_) + " input features, got " +
                                  std::to_string(x.sample_size()));
        input_ = x;
        Tensor<T> y(x.n(), out_, 1, 1);
        ConstMatrixMap<T> X(x.data.data(), x.n(), in_);
        ConstMatrixMap<T> W(weight_.value.data(), out_, in_);
        MatrixMap<T> Y(y.data.data(), x.n(), out_);
        Y.noalias() = X * W.transpose();
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.value.data(), out_);
        Y.rowwise() += b;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        const int n = input_.n();
        ConstMatrixMap<T> G(g.data.data(), n, out_);
        ConstMatrixMap<T> X(input_.data.data(), n, in_);
        ConstMatrixMap<T> W(weight_.value.data(), out_, in_);
        MatrixMap<T> dW(weight_.grad.data(), out_, in_);
        dW.noalias() += G.transpose() * X;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias_.grad.data(), out_);
        db += G.colwise().sum();
        Tensor<T> dx = input_;
        MatrixMap<T> dX(dx.data.data(), n, in_);
        dX.noalias() = G * W;
        return dx;
    }

    void collect(std::vector<Param<T>*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    void init(Pcg64& rng, double stddev)
    {
        detail::fill_normal(weight_, rng, 0.0, stddev);
        std::fill(bias_.value.begin(), bias_.value.end(), T(0));
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    int in_, out_;
    Param<T> weight_, bias_;
    Tensor<T> input_;
};

/// 2-D convolution, square kernel, via im2col + GEMM.
template <class T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad)
        : Layer<T>(std::move(name)), cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(pad),
          weight_(this->name_ + ".weight", {out_channels, in_channels, kernel, kernel}),
          bias_(this->name_ + ".bias", {out_channels})
    {
    }

    int output_side(int side) const { return (side + 2 * pad_ - k_) / stride_ + 1; }

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (x.c() != cin_)
            throw ValidationError(this->name_ + ": expected " + std::to_string(cin_) + " channels, got " +
                                  std::to_string(x.c()));
        in_shape_ = x.shape;
        oh_ = output_side(x.h());
        ow_ = output_side(x.w());
        if (oh_ < 1 || ow_ < 1) throw ValidationError(this->name_ + ": input too small");
        const int K = cin_ * k_ * k_;
        const int P = oh_ * ow_;
        cols_.assign(static_cast<std::size_t>(x.n()) * K * P, T(0));
        Tensor<T> y(x.n(), cout_, oh_, ow_);
        ConstMatrixMap<T> W(weight_.value.data(), cout_, K);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias_.value.data(), cout_);
        for (int i = 0; i < x.n(); ++i) {
            T* cols = cols_.data() + static_cast<std::size_t>(i) * K * P;
            detail::im2col(x.sample(i), cin_, x.h(), x.w(), k_, stride_, pad_, oh_, ow_, cols);
            MatrixMap<T> Y(y.sample(i), cout_, P);
            Y.noalias() = W * ConstMatrixMap<T>(cols, K, P);
            Y.colwise() += b;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        const int n = in_shape_[0];
        const int K = cin_ * k_ * k_;
        const int P = oh_ * ow_;
        Tensor<T> dx(n, in_shape_[1], in_shape_[2], in_shape_[3]);
        ConstMatrixMap<T> W(weight_.value.data(), cout_, K);
        MatrixMap<T> dW(weight_.grad.data(), cout_, K);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias_.grad.data(), cout_);
        RowMatrix<T> dcols(K, P);
        for (int i = 0; i < n; ++i) {
            ConstMatrixMap<T> G(g.sample(i), cout_, P);
            ConstMatrixMap<T> cols(cols_.data() + static_cast<std::size_t>(i) * K * P, K, P);
            dW.noalias() += G * cols.transpose();
            db += G.rowwise().sum();
            dcols.noalias() = W.transpose() * G;
            detail::col2im(dcols.data(), cin_, in_shape_[2], in_shape_[3], k_, stride_, pad_, oh_, ow_, dx.sample(i));
        }
        return dx;
    }

    void collect(std::vector<Param<T>*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    void init(Pcg64& rng, double stddev)
    {
        detail::fill_normal(weight_, rng, 0.0, stddev);
        std::fill(bias_.value.begin(), bias_.value.end(), T(0));
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    int cin_, cout_, k_, stride_, pad_;
    Param<T> weight_, bias_;
    std::array<int, 4> in_shape_{};
    int oh_ = 0, ow_ = 0;
    std::vector<T> cols_;
};

/// Transposed convolution (the adjoint of Conv2d with the same geometry):
/// output side = (in - 1) * stride - 2 * pad + kernel.
template <class T>
class ConvTranspose2d final : public Layer<T> {
public:
    ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad)
        : Layer<T>(std::move(name)), cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(pad),
          weight_(this->name_ + ".weight", {in_channels, out_channels, kernel, kernel}),
          bias_(this->name_ + ".bias", {out_channels})
    {
    }

    int output_side(int side) const { return (side - 1) * stride_ - 2 * pad_ + k_; }

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (x.c() != cin_)
            throw ValidationError(this->name_ + ": expected " + std::to_string(cin_) + " channels, got " +
                                  std::to_string(x.c()));
        input_ = x;
        oh_ = output_side(x.h());
        ow_ = output_side(x.w());
        const int K = cout_ * k_ * k_;
        const int P = x.h() * x.w();
        Tensor<T> y(x.n(), cout_, oh_, ow_);
        ConstMatrixMap<T> W(weight_.value.data(), cin_, K);
        RowMatrix<T> cols(K, P);
        const std::size_t plane = static_cast<std::size_t>(oh_) * ow_;
        for (int i = 0; i < x.n(); ++i) {
            cols.noalias() = W.transpose() * ConstMatrixMap<T>(x.sample(i), cin_, P);
            T* out = y.sample(i);
            detail::col2im(cols.data(), cout_, oh_, ow_, k_, stride_, pad_, x.h(), x.w(), out);
            for (int c = 0; c < cout_; ++c) {
                const T b = bias_.value[c];
                for (std::size_t p = 0; p < plane; ++p) out[c * plane + p] += b;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        const int n = input_.n();
        const int K = cout_ * k_ * k_;
        const int P = input_.h() * input_.w();
        const std::size_t plane = static_cast<std::size_t>(oh_) * ow_;
        Tensor<T> dx(n, cin_, input_.h(), input_.w());
        ConstMatrixMap<T> W(weight_.value.data(), cin_, K);
        MatrixMap<T> dW(weight_.grad.data(), cin_, K);
        RowMatrix<T> dcols(K, P);
        for (int i = 0; i < n; ++i) {
            const T* gi = g.sample(i);
            for (int c = 0; c < cout_; ++c) {
                T s = T(0);
                for (std::size_t p = 0; p < plane; ++p) s += gi[c * plane + p];
                bias_.grad[c] += s;
            }
            detail::im2col(gi, cout_, oh_, ow_, k_, stride_, pad_, input_.h(), input_.w(), dcols.data());
            ConstMatrixMap<T> X(input_.sample(i), cin_, P);
            dW.noalias() += X * dcols.transpose();
            MatrixMap<T>(dx.sample(i), cin_, P).noalias() = W * dcols;
        }
        return dx;
    }

    void collect(std::vector<Param<T>*>& out) override
    {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    void init(Pcg64& rng, double stddev)
    {
        detail::fill_normal(weight_, rng, 0.0, stddev);
        std::fill(bias_.value.begin(), bias_.value.end(), T(0));
    }

    Param<T>& weight() { return weight_; }

private:
    int cin_, cout_, k_, stride_, pad_;
    Param<T> weight_, bias_;
    Tensor<T> input_;
    int oh_ = 0, ow_ = 0;
};

/// Per-channel batch normalization over (n, h, w).
template <class T>
class BatchNorm final : public Layer<T> {
public:
    static constexpr double kEps = 1e-5;

    BatchNorm(std::string name, int channels, double momentum = 0.99)
        : Layer<T>(std::move(name)), channels_(channels), momentum_(momentum),
          gamma_(this->name_ + ".gamma", {channels}), beta_(this->name_ + ".beta", {channels}),
          running_mean_(this->name_ + ".running_mean", {channels}, false),
          running_var_(this->name_ + ".running_var", {channels}, false)
    {
        std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
        std::fill(running_var_.value.begin(), running_var_.value.end(), T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) override
    {
        if (x.c() != channels_)
            throw ValidationError(this->name_ + ": expected " + std::to_string(channels_) + " channels");
        mode_ = mode;
        const int n = x.n();
        const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
        const double count = static_cast<double>(n) * plane;
        xhat_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
        inv_std_.assign(channels_, 0.0);
        Tensor<T> y(x.n(), x.c(), x.h(), x.w());
        for (int c = 0; c < channels_; ++c) {
            double mean, var;
            if (mode == Mode::train) {
                double s = 0.0;
                for (int i = 0; i < n; ++i) {
                    const T* p = x.sample(i) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) s += p[k];
                }
                mean = s / count;
                double v = 0.0;
                for (int i = 0; i < n; ++i) {
                    const T* p = x.sample(i) + c * plane;
                    for (std::size_t k = 0; k < plane; ++k) v += (p[k] - mean) * (p[k] - mean);
                }
                var = v / count;
                running_mean_.value[c] =
                    static_cast<T>(momentum_ * running_mean_.value[c] + (1.0 - momentum_) * mean);
                running_var_.value[c] = static_cast<T>(momentum_ * running_var_.value[c] + (1.0 - momentum_) * var);
            } else {
                mean = running_mean_.value[c];
                var = running_var_.value[c];
            }
            const double inv = 1.0 / std::sqrt(var + kEps);
            inv_std_[c] = inv;
            for (int i = 0; i < n; ++i) {
                const T* p = x.sample(i) + c * plane;
                T* xh = xhat_.sample(i) + c * plane;
                T* out = y.sample(i) + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    xh[k] = static_cast<T>((p[k] - mean) * inv);
                    out[k] = gamma_.value[c] * xh[k] + beta_.value[c];
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        const int n = xhat_.n();
        const std::size_t plane = static_cast<std::size_t>(xhat_.h()) * xhat_.w();
        const double count = static_cast<double>(n) * plane;
        Tensor<T> dx(xhat_.n(), xhat_.c(), xhat_.h(), xhat_.w());
        for (int c = 0; c < channels_; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int i = 0; i < n; ++i) {
                const T* gp = g.sample(i) + c * plane;
                const T* xh = xhat_.sample(i) + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    sum_g += gp[k];
                    sum_gx += static_cast<double>(gp[k]) * xh[k];
                }
            }
            gamma_.grad[c] += static_cast<T>(sum_gx);
            beta_.grad[c] += static_cast<T>(sum_g);
            const double scale = gamma_.value[c] * inv_std_[c];
            for (int i = 0; i < n; ++i) {
                const T* gp = g.sample(i) + c * plane;
                const T* xh = xhat_.sample(i) + c * plane;
                T* d = dx.sample(i) + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    if (mode_ == Mode::train)
                        d[k] = static_cast<T>(scale * (gp[k] - sum_g / count - xh[k] * sum_gx / count));
                    else
                        d[k] = static_cast<T>(scale * gp[k]);
                }
            }
        }
        return dx;
    }

    void collect(std::vector<Param<T>*>& out) override
    {
        out.push_back(&gamma_);
        out.push_back(&beta_);
        out.push_back(&running_mean_);
        out.push_back(&running_var_);
    }

    void init(Pcg64& rng, double stddev)
    {
        detail::fill_normal(gamma_, rng, 1.0, stddev);
        std::fill(beta_.value.begin(), beta_.value.end(), T(0));
    }

private:
    int channels_;
    double momentum_;
    Param<T> gamma_, beta_, running_mean_, running_var_;
    Mode mode_ = Mode::train;
    Tensor<T> xhat_;
    std::vector<double> inv_std_;
};

template <class T>
class LeakyRelu final : public Layer<T> {
public:
    explicit LeakyRelu(std::string name, double slope = 0.2) : Layer<T>(std::move(name)), slope_(static_cast<T>(slope)) {}

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        input_ = x;
        Tensor<T> y = x;
        for (auto& v : y.data) v = v > T(0) ? v : slope_ * v;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        Tensor<T> dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(input_.data[i] > T(0))) dx.data[i] *= slope_;
        return dx;
    }

private:
    T slope_;
    Tensor<T> input_;
};

template <class T>
class Relu final : public Layer<T> {
public:
    explicit Relu(std::string name) : Layer<T>(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        input_ = x;
        Tensor<T> y = x;
        for (auto& v : y.data) v = v > T(0) ? v : T(0);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        Tensor<T> dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(input_.data[i] > T(0))) dx.data[i] = T(0);
        return dx;
    }

private:
    Tensor<T> input_;
};

template <class T>
class Sigmoid final : public Layer<T> {
public:
    explicit Sigmoid(std::string name) : Layer<T>(std::move(name)) {}

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        output_ = x;
        for (auto& v : output_.data) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
        return output_;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        Tensor<T> dx = g;
        for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= output_.data[i] * (T(1) - output_.data[i]);
        return dx;
    }

private:
    Tensor<T> output_;
};

/// Reinterprets each sample as (c, h, w) without moving data.
template <class T>
class Reshape final : public Layer<T> {
public:
    Reshape(std::string name, int c, int h, int w) : Layer<T>(std::move(name)), c_(c), h_(h), w_(w) {}

    Tensor<T> forward(const Tensor<T>& x, Mode) override
    {
        if (x.sample_size() != static_cast<std::size_t>(c_) * h_ * w_)
            throw ValidationError(this->name_ + ": element count mismatch");
        in_shape_ = x.shape;
        Tensor<T> y = x;
        y.shape = {x.n(), c_, h_, w_};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override
    {
        Tensor<T> dx = g;
        dx.shape = in_shape_;
        return dx;
    }

private:
    int c_, h_, w_;
    std::array<int, 4> in_shape_{};
};

/// Ordered chain of layers.
template <class T>
class Sequential {
public:
    Sequential() = default;
    Sequential(Sequential&&) noexcept = default;
    Sequential& operator=(Sequential&&) noexcept = default;

    template <class L, class... Args>
    L& add(Args&&... args)
    {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode)
    {
        Tensor<T> h = x;
        for (auto& l : layers_) h = l->forward(h, mode);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& g)
    {
        Tensor<T> d = g;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
        return d;
    }

    /// Parameters and buffers in construction order.
    std::vector<Param<T>*> params()
    {
        std::vector<Param<T>*> out;
        for (auto& l : layers_) l->collect(out);
        return out;
    }

    void zero_grad()
    {
        for (auto* p : params()) p->zero_grad();
    }

    std::size_t layer_count() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

} // namespace ppgan::nn
