#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "lmtl/error.hpp"

namespace lmtl {

// Dense row-major tensor. T is float for training, double for the
// verification mode used by the gradient checks.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> values;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
        if (element_count(shape) != values.size()) {
            throw DataError("tensor value count " + std::to_string(values.size()) +
                            " does not match shape " + shape_str());
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<T>(n, T(0)));
    }

    static Tensor full(std::vector<std::size_t> shape, T v) {
        std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<T>(n, v));
    }

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-D accessors (most ops treat tensors as [rows, cols]).
    std::size_t rows() const { return rank() == 0 ? 1 : shape[0]; }
    std::size_t cols() const {
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
        return c;
    }
    T& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.values.reserve(values.size());
        for (T v : values) out.values.push_back(static_cast<U>(v));
        return out;
    }
};

}  // namespace lmtl
