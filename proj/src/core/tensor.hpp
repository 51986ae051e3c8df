#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adrrec {

// Dense row-major tensor of doubles, rank 0..4. Rank 0 is a scalar with one
// element. All model math runs in double so gradient checks stay meaningful.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape) { reset(std::move(shape)); }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }
    static Tensor scalar(double v) {
        Tensor t(std::vector<int64_t>{});
        t.data_[0] = v;
        return t;
    }

    void reset(std::vector<int64_t> shape) {
        shape_ = std::move(shape);
        int64_t n = 1;
        for (int64_t d : shape_) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), 0.0);
    }

    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

// Integer tensor for item ids, timestamps and index maps.
struct ITensor {
    std::vector<int64_t> shape;
    std::vector<int64_t> data;

    ITensor() = default;
    ITensor(std::vector<int64_t> s) : shape(std::move(s)) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        data.assign(static_cast<size_t>(n), 0);
    }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    int64_t at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
};

// Byte mask tensor (1 = true).
struct BTensor {
    std::vector<int64_t> shape;
    std::vector<uint8_t> data;

    BTensor() = default;
    BTensor(std::vector<int64_t> s) : shape(std::move(s)) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        data.assign(static_cast<size_t>(n), 0);
    }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    uint8_t& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    uint8_t at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    uint8_t& at(int64_t i, int64_t j, int64_t k) {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    uint8_t at(int64_t i, int64_t j, int64_t k) const {
        return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
};

}  // namespace adrrec
