#include "gsnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gsnet {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) {
            throw ContractError("tensor extents must be positive, got " + shape_str(shape));
        }
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(numel(shape_)), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
        throw ContractError("data length " + std::to_string(data_.size()) + " does not match shape " +
                            shape_str(shape_));
    }
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ContractError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::int64_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw ContractError("index rank mismatch for shape " + shape_str(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
        if (i < 0 || i >= shape_[axis]) {
            throw ContractError("index out of range for shape " + shape_str(shape_));
        }
        off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
        ++axis;
    }
    return off;
}

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::int64_t> idx) {
    return data_[offset(idx)];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> idx) const {
    return data_[offset(idx)];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
    if (numel(shape) != static_cast<std::int64_t>(data_.size())) {
        throw ContractError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void Tensor<T>::fill(T v) {
    std::fill(data_.begin(), data_.end(), v);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gsnet
