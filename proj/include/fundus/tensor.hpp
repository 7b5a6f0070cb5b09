#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus {

template <typename T>
class Tape;

inline std::int64_t numel_of(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ")";
    return os.str();
}

// Dense row-major tensor. Values are immutable once built; ops produce new
// tensors. `node >= 0` means the tensor is recorded on `tape` and gradients
// will reach it during backward().
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    Tape<T>* tape = nullptr;
    int node = -1;

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(static_cast<std::size_t>(numel_of(t.shape)), T(0));
        return t;
    }

    static Tensor from(std::vector<int> shape, std::vector<T> values) {
        if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
            throw std::invalid_argument("tensor: data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(shape));
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(std::move(values));
        return t;
    }

    static Tensor scalar(T v) { return from({1}, {v}); }

    // Wraps an external buffer without copying. The buffer must outlive the
    // tensor (used to bind parameter storage into a forward pass).
    static Tensor view(std::vector<int> shape, std::vector<T>* values) {
        if (numel_of(shape) != static_cast<std::int64_t>(values->size()))
            throw std::invalid_argument("tensor view: buffer length does not match shape " + shape_str(shape));
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::shared_ptr<std::vector<T>>(values, [](std::vector<T>*) {});
        return t;
    }

    std::int64_t numel() const { return numel_of(shape); }
    bool requires_grad() const { return node >= 0; }
    bool defined() const { return static_cast<bool>(data); }

    const T* ptr() const { return data->data(); }
    const std::vector<T>& values() const { return *data; }

    T item() const {
        if (numel() != 1)
            throw std::invalid_argument("item(): tensor " + shape_str(shape) + " is not scalar");
        return (*data)[0];
    }

    // 3-D CHW accessor, test convenience.
    T at(int c, int i, int j) const {
        return (*data)[(static_cast<std::size_t>(c) * shape[1] + i) * shape[2] + j];
    }
};

}  // namespace fundus
