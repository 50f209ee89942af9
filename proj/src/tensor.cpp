#include "steerbo/tensor.hpp"

#include <algorithm>

#include "steerbo/errors.hpp"

namespace steerbo {

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)), data(count(shape), 0.0) {}

size_t Tensor::count(const std::vector<size_t>& s) {
    size_t n = 1;
    for (size_t e : s) n *= e;
    return n;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string shape_str(const std::vector<size_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void require_shape(const Tensor& t, const std::vector<size_t>& expect,
                   const std::string& what) {
    if (t.shape != expect)
        throw ConfigError(what + ": expected shape " + shape_str(expect) + ", got " +
                          shape_str(t.shape));
}

} // namespace steerbo
