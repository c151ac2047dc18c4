#pragma once

#include <cstring>
#include <initializer_list>
#include <memory>
#include <ostream>
#include <vector>

#include "tmnet/common.hpp"

namespace tmnet {

// Dense row-major N-d array, rank 1..4. Copies share immutable storage;
// kernels fill a tensor only while they uniquely own it.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, DType dt = DType::f32);
    static Tensor full(std::vector<std::int64_t> shape, double value, DType dt = DType::f32);
    static Tensor ones(std::vector<std::int64_t> shape, DType dt = DType::f32);
    static Tensor from(std::vector<std::int64_t> shape, const std::vector<double>& values,
                       DType dt = DType::f64);
    static Tensor scalar(double value, DType dt = DType::f64);

    bool defined() const { return storage_ != nullptr; }
    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t extent(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return numel_; }
    DType dtype() const { return dtype_; }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool on) {
        requires_grad_ = on;
        return *this;
    }

    template <typename T>
    const T* data() const {
        check_type<T>();
        return reinterpret_cast<const T*>(storage_->data());
    }

    // Raw write access; callers must hold the only reference (fresh tensors).
    template <typename T>
    T* raw() {
        check_type<T>();
        return reinterpret_cast<T*>(storage_->data());
    }

    // Identity of the underlying buffer; the tape keys nodes on it.
    const void* storage_id() const { return storage_.get(); }

    double item() const;
    // Linear-index element read (any dtype, widened to double).
    double value_at(std::int64_t linear) const;
    // Multi-index element read for tests.
    double at(std::initializer_list<std::int64_t> idx) const;

    Tensor astype(DType dt) const;
    Tensor clone() const;
    Tensor detached() const;  // same storage, requires_grad off

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool bit_equal(const Tensor& other) const;
    std::vector<double> to_vector() const;

  private:
    template <typename T>
    void check_type() const;

    std::shared_ptr<std::vector<std::byte>> storage_;
    std::vector<std::int64_t> shape_;
    std::int64_t numel_ = 0;
    DType dtype_ = DType::f32;
    bool requires_grad_ = false;
};

template <>
inline void Tensor::check_type<float>() const {
    if (!storage_) throw ShapeError("tensor is undefined");
    if (dtype_ != DType::f32) throw ShapeError("tensor dtype is f64, expected f32");
}

template <>
inline void Tensor::check_type<double>() const {
    if (!storage_) throw ShapeError("tensor is undefined");
    if (dtype_ != DType::f64) throw ShapeError("tensor dtype is f32, expected f64");
}

// Calls f with a value of the tensor's scalar type.
template <typename F>
decltype(auto) dispatch_dtype(DType dt, F&& f) {
    if (dt == DType::f32) return f(float{});
    return f(double{});
}

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);
std::string shape_str(const std::vector<std::int64_t>& shape);
std::ostream& operator<<(std::ostream& os, const Tensor& t);

// Deterministic RNG. Transforms are implemented here (not the stdlib
// distributions) so streams are identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64();
    double uniform(double lo = 0.0, double hi = 1.0);
    double normal(double mean = 0.0, double stddev = 1.0);
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive range
    std::uint64_t fork(std::uint64_t stream);  // derived seed for sub-generators

    Tensor uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi,
                          DType dt = DType::f64);
    Tensor normal_tensor(std::vector<std::int64_t> shape, double mean, double stddev,
                         DType dt = DType::f64);

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// "TNSR" binary format: magic 54 4E 53 52, version 1, dtype byte, rank byte,
// rank little-endian u32 extents, row-major little-endian payload.
void save_tnsr(std::ostream& os, const Tensor& t);
Tensor load_tnsr(std::istream& is);
void save_tnsr_file(const std::string& path, const Tensor& t);
Tensor load_tnsr_file(const std::string& path);

}  // namespace tmnet
