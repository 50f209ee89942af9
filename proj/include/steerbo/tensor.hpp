#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace steerbo {

// Dense row-major double tensor with an optional gradient buffer of the
// same shape. Kept deliberately plain: layers own the layout conventions.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until ensure_grad()

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s);

    static size_t count(const std::vector<size_t>& s);

    size_t size() const { return data.size(); }
    size_t rank() const { return shape.size(); }
    size_t dim(size_t i) const { return shape[i]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
    double* gptr() { return grad.data(); }
    const double* gptr() const { return grad.data(); }

    void ensure_grad();
    void zero_grad();
    void fill(double v);
};

using Batch = std::vector<Tensor>;

std::string shape_str(const std::vector<size_t>& s);

// Throws ConfigError naming `what` when the shapes differ.
void require_shape(const Tensor& t, const std::vector<size_t>& expect,
                   const std::string& what);

} // namespace steerbo
