#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscsa {

// Error taxonomy: shape mismatches, invalid configurations, numeric faults
// (NaN inputs), and API contract violations (e.g. non-scalar loss).
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major N-d array. Feature maps use NCHW: element (n,c,h,w) lives
// at ((n*C + c)*H + h)*W + w.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> dims) : dims_(std::move(dims)) {
        data_.assign(static_cast<std::size_t>(check_dims()), T(0));
    }

    Tensor(std::vector<int> dims, std::vector<T> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (check_dims() != static_cast<std::int64_t>(data_.size())) {
            throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                             " does not match dims " + dims_str());
        }
    }

    static Tensor full(std::vector<int> dims, T value) {
        Tensor t(std::move(dims));
        for (T& v : t.data_) v = value;
        return t;
    }

    int rank() const { return static_cast<int>(dims_.size()); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    const std::vector<int>& dims() const { return dims_; }

    int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at2(int i, int j) {
        return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * dims_[1] + j)];
    }
    const T& at2(int i, int j) const {
        return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * dims_[1] + j)];
    }

    T& at3(int b, int i, int j) {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(b) * dims_[1] + i) * dims_[2] + j)];
    }
    const T& at3(int b, int i, int j) const {
        return data_[static_cast<std::size_t>((static_cast<std::int64_t>(b) * dims_[1] + i) * dims_[2] + j)];
    }

    T& at4(int n, int c, int h, int w) {
        return data_[idx4(n, c, h, w)];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data_[idx4(n, c, h, w)];
    }

    Tensor reshaped(std::vector<int> new_dims) const {
        Tensor t;
        t.dims_ = std::move(new_dims);
        std::int64_t n = t.check_dims();
        if (n != numel()) {
            throw ShapeError("reshape: " + dims_str() + " has " + std::to_string(numel()) +
                             " elements, target " + t.dims_str() + " has " + std::to_string(n));
        }
        t.data_ = data_;
        return t;
    }

    bool same_dims(const Tensor& o) const { return dims_ == o.dims_; }

    std::string dims_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) os << "x";
            os << dims_[i];
        }
        os << "]";
        return os.str();
    }

private:
    std::size_t idx4(int n, int c, int h, int w) const {
        return static_cast<std::size_t>(
            ((static_cast<std::int64_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w);
    }

    std::int64_t check_dims() const {
        if (dims_.empty()) throw ShapeError("tensor: rank 0 not supported");
        std::int64_t n = 1;
        for (int d : dims_) {
            if (d < 1) throw ShapeError("tensor: non-positive dim in " + dims_str());
            n *= d;
        }
        return n;
    }

    std::vector<int> dims_;
    std::vector<T> data_;
};

// 2-d convolution geometry. groups == in-channels means depthwise.
struct ConvSpec {
    int kh = 1, kw = 1;
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;
    int groups = 1;

    int out_h(int h) const { return (h + 2 * ph - kh) / sh + 1; }
    int out_w(int w) const { return (w + 2 * pw - kw) / sw + 1; }

    static ConvSpec pointwise() { return ConvSpec{1, 1, 1, 1, 0, 0, 1}; }
    static ConvSpec depthwise3x3(int channels, int stride) {
        return ConvSpec{3, 3, stride, stride, 1, 1, channels};
    }
};

}  // namespace mscsa
