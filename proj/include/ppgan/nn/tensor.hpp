#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ppgan::nn {

/// Dense NCHW tensor. Fully connected activations use h = w = 1.
template <class T>
struct Tensor {
    std::array<int, 4> shape{0, 0, 0, 0};
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n, int c, int h, int w, T fill = T(0))
        : shape{n, c, h, w}, data(static_cast<std::size_t>(n) * c * h * w, fill)
    {
    }

    int n() const { return shape[0]; }
    int c() const { return shape[1]; }
    int h() const { return shape[2]; }
    int w() const { return shape[3]; }
    std::size_t size() const { return data.size(); }
    std::size_t sample_size() const { return static_cast<std::size_t>(shape[1]) * shape[2] * shape[3]; }

    T* sample(int i) { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
    const T* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * sample_size(); }
    std::span<T> span() { return data; }
    std::span<const T> span() const { return data; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

/// A named parameter (or buffer) with its gradient.
template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, std::vector<int> s, bool is_trainable = true)
        : name(std::move(n)), shape(std::move(s)), trainable(is_trainable)
    {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        value.assign(count, T(0));
        grad.assign(count, T(0));
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

inline std::string shape_string(std::span<const int> shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}

} // namespace ppgan::nn
