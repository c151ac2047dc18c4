#include "tmnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace tmnet {

int max_threads() {
    static const int cached = [] {
        if (const char* env = std::getenv("TMNET_THREADS")) {
            int n = std::atoi(env);
            if (n >= 1) return n;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc ? static_cast<int>(hc) : 1;
    }();
    return cached;
}

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void validate_shape(const std::vector<std::int64_t>& shape) {
    if (shape.empty() || shape.size() > 4)
        throw ShapeError("tensor rank must be 1..4, got " + shape_str(shape));
    for (std::int64_t e : shape)
        if (e < 1) throw ShapeError("tensor extents must be >= 1, got " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, DType dt) {
    validate_shape(shape);
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.dtype_ = dt;
    t.storage_ = std::make_shared<std::vector<std::byte>>(
        static_cast<std::size_t>(t.numel_) * dtype_size(dt), std::byte{0});
    return t;
}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        T* p = t.raw<T>();
        std::fill(p, p + t.numel_, static_cast<T>(value));
    });
    return t;
}

Tensor Tensor::ones(std::vector<std::int64_t> shape, DType dt) {
    return full(std::move(shape), 1.0, dt);
}

Tensor Tensor::from(std::vector<std::int64_t> shape, const std::vector<double>& values, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    if (static_cast<std::int64_t>(values.size()) != t.numel_)
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(t.shape_));
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        T* p = t.raw<T>();
        for (std::int64_t i = 0; i < t.numel_; ++i) p[i] = static_cast<T>(values[static_cast<std::size_t>(i)]);
    });
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

double Tensor::item() const {
    if (numel_ != 1) throw ShapeError("item() on tensor with " + std::to_string(numel_) + " elements");
    return value_at(0);
}

double Tensor::value_at(std::int64_t linear) const {
    return dispatch_dtype(dtype_, [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(data<T>()[linear]);
    });
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != rank()) throw ShapeError("index rank mismatch in at()");
    std::int64_t linear = 0;
    int axis = 0;
    for (std::int64_t i : idx) {
        if (i < 0 || i >= shape_[static_cast<std::size_t>(axis)])
            throw ShapeError("index out of range in at()");
        linear = linear * shape_[static_cast<std::size_t>(axis)] + i;
        ++axis;
    }
    return value_at(linear);
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype_) return *this;
    Tensor out = zeros(shape_, dt);
    for (std::int64_t i = 0; i < numel_; ++i) {
        double v = value_at(i);
        if (dt == DType::f32)
            out.raw<float>()[i] = static_cast<float>(v);
        else
            out.raw<double>()[i] = v;
    }
    out.requires_grad_ = requires_grad_;
    return out;
}

Tensor Tensor::clone() const {
    Tensor out = zeros(shape_, dtype_);
    std::memcpy(out.storage_->data(), storage_->data(), storage_->size());
    out.requires_grad_ = requires_grad_;
    return out;
}

Tensor Tensor::detached() const {
    Tensor out = *this;
    out.requires_grad_ = false;
    return out;
}

bool Tensor::bit_equal(const Tensor& other) const {
    if (!defined() || !other.defined()) return defined() == other.defined();
    return shape_ == other.shape_ && dtype_ == other.dtype_ &&
           std::memcmp(storage_->data(), other.storage_->data(), storage_->size()) == 0;
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<std::size_t>(numel_));
    for (std::int64_t i = 0; i < numel_; ++i) out[static_cast<std::size_t>(i)] = value_at(i);
    return out;
}

std::ostream& operator<<(std::ostream& os, const Tensor& t) {
    if (!t.defined()) return os << "Tensor(undefined)";
    os << "Tensor" << shape_str(t.shape()) << ' ' << dtype_name(t.dtype());
    if (t.numel() <= 16) {
        os << " {";
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            if (i) os << ", ";
            os << t.value_at(i);
        }
        os << '}';
    }
    return os;
}

// ---- RNG ----------------------------------------------------------------

std::uint64_t Rng::next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::uniform(double lo, double hi) {
    double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

double Rng::normal(double mean, double stddev) {
    if (have_spare_) {
        have_spare_ = false;
        return mean + stddev * spare_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return mean + stddev * r * std::cos(a);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) throw ConfigError("uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // modulo bias is < 2^-40 for desk-scale spans; acceptable and deterministic
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

std::uint64_t Rng::fork(std::uint64_t stream) {
    std::uint64_t z = state_ ^ (0x2545f4914f6cdd1dull * (stream + 1));
    z ^= z >> 33;
    z *= 0xff51afd7ed558ccdull;
    z ^= z >> 33;
    return z;
}

Tensor Rng::uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        T* p = t.raw<T>();
        for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(uniform(lo, hi));
    });
    return t;
}

Tensor Rng::normal_tensor(std::vector<std::int64_t> shape, double mean, double stddev, DType dt) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        T* p = t.raw<T>();
        for (std::int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(normal(mean, stddev));
    });
    return t;
}

// ---- TNSR serialization --------------------------------------------------

static void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

static std::uint32_t read_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IOError("TNSR: truncated stream");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little,
              "payload serialization assumes a little-endian host");

void save_tnsr(std::ostream& os, const Tensor& t) {
    if (!t.defined()) throw IOError("TNSR: cannot save undefined tensor");
    const unsigned char magic[4] = {0x54, 0x4E, 0x53, 0x52};
    os.write(reinterpret_cast<const char*>(magic), 4);
    os.put(1);  // version
    os.put(static_cast<char>(t.dtype()));
    os.put(static_cast<char>(t.rank()));
    for (std::int64_t e : t.shape()) write_u32_le(os, static_cast<std::uint32_t>(e));
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        os.write(reinterpret_cast<const char*>(t.data<T>()),
                 static_cast<std::streamsize>(t.numel() * sizeof(T)));
    });
    if (!os) throw IOError("TNSR: write failed");
}

Tensor load_tnsr(std::istream& is) {
    unsigned char magic[4];
    is.read(reinterpret_cast<char*>(magic), 4);
    if (!is || magic[0] != 0x54 || magic[1] != 0x4E || magic[2] != 0x53 || magic[3] != 0x52)
        throw IOError("TNSR: bad magic");
    int version = is.get();
    if (version != 1) throw IOError("TNSR: unsupported version " + std::to_string(version));
    int dt_byte = is.get();
    if (dt_byte != 0 && dt_byte != 1) throw IOError("TNSR: unknown dtype byte");
    int rank = is.get();
    if (rank < 1 || rank > 4) throw IOError("TNSR: rank out of range");
    std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
    for (auto& e : shape) e = static_cast<std::int64_t>(read_u32_le(is));
    Tensor t = Tensor::zeros(shape, static_cast<DType>(dt_byte));
    dispatch_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        is.read(reinterpret_cast<char*>(t.raw<T>()),
                static_cast<std::streamsize>(t.numel() * sizeof(T)));
    });
    if (!is) throw IOError("TNSR: truncated payload");
    return t;
}

void save_tnsr_file(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IOError("cannot open for write: " + path);
    save_tnsr(os, t);
}

Tensor load_tnsr_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IOError("cannot open for read: " + path);
    return load_tnsr(is);
}

}  // namespace tmnet
