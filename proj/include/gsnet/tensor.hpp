#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A shape or precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// An API was used out of order (e.g. backward with nothing recorded).
class UsageError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf appeared where only finite values are allowed.
class NumericError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array. Value type: copying copies the data.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::initializer_list<std::int64_t> idx);
    T at(std::initializer_list<std::int64_t> idx) const;

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const;
    void fill(T v);

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

private:
    std::size_t offset(std::initializer_list<std::int64_t> idx) const;

    Shape shape_;
    std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gsnet
