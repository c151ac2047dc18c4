#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tmnet {

// Element type of a Tensor. Values double as the TNSR dtype byte.
enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t dtype_size(DType dt) {
    return dt == DType::f32 ? sizeof(float) : sizeof(double);
}

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }

// Shape or dtype mismatch between operands.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration (bad hyper-parameter, indivisible extent, ...).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format or filesystem failure.
struct IOError : std::runtime_error {
    explicit IOError(const std::string& msg) : std::runtime_error(msg) {}
};

// Worker-thread cap. Reads TMNET_THREADS once; falls back to hardware
// parallelism. Results are bit-identical for any value by construction
// (fixed partitioning, fixed reduction order per output element).
int max_threads();

}  // namespace tmnet
