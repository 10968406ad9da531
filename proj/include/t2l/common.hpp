#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2l {

// Row-major so that one row is one token / one channel, contiguous in memory.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Flat storage viewed through Eigen::Map. The fixed alignment keeps vectorized
// kernels on the same code path wherever the buffer lands on the heap.
template <class T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

// ----------------------------- errors -----------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class NumericalInstability : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class DegenerateLabels : public Error {
public:
    using Error::Error;
};

class IncompatibleArtifact : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ----------------------------- seeds -----------------------------

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Counter-based seed derivation: the same (master, stream, index) always maps
// to the same child seed, independent of evaluation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0) noexcept;

// ----------------------------- parallelism -----------------------------

// Worker cap from T2L_THREADS, defaulting to the hardware concurrency.
int worker_count();

// Runs body(i) for i in [0, n). Each index is executed exactly once; callers
// write results into pre-sized slots so output never depends on scheduling.
// The first exception (lowest index) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace t2l
