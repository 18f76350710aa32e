#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace nst {

// Base class for all engine errors. Subclasses mirror the failure
// categories surfaced through the public API.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class GeometryError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class TapeError : public Error {
public:
    using Error::Error;
};

// Worker pool sizing for intra-kernel parallelism. 0 means "use
// hardware concurrency". Output is bit-identical for any setting.
int worker_count();
void set_worker_count(int n);

// Counts every tensor buffer allocation. The benchmark memory guard
// asserts that refused cells never touch this.
std::atomic<std::uint64_t>& tensor_alloc_count();

// Deterministic uniform generator. Wraps a fixed 64-bit engine and a
// fixed bits-to-real mapping so streams do not depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // xorshift* variant; period 2^64-1, plenty for seeding and noise.
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dull;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace nst
