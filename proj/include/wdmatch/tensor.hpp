#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "wdmatch/errors.hpp"

namespace wdmatch {

// Dense row-major tensor of doubles. Values are validated to be finite at
// construction; graph operations re-validate after every op.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size()) {
            throw ShapeError("tensor: shape " + shape_string(shape_) + " does not cover " +
                             std::to_string(data_.size()) + " values");
        }
        ensure_finite("construction");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        t.ensure_finite("construction");
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? 1 : 0); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::span<const double> data() const { return data_; }
    std::span<double> mutable_data() { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void ensure_finite(const std::string& context) const {
        if (!all_finite()) {
            throw NumericError("non-finite value after " + context);
        }
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::fabs(v));
        return m;
    }

    static std::string shape_string(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << "]";
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("tensor: empty shape");
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(shape));
            n *= e;
        }
        return n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// FNV-1a over the raw bytes of the payload; used for parameter checksums and
// file integrity checks.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t checksum(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ULL) {
    h = fnv1a64(t.shape().data(), t.shape().size() * sizeof(std::size_t), h);
    return fnv1a64(t.data().data(), t.size() * sizeof(double), h);
}

} // namespace wdmatch
