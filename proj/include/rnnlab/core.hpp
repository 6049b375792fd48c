#pragma once

// Shared numeric types, error classes and RNG helpers for rnnlab.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace rnnlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Number of piano keys in one piano-roll frame.
inline constexpr int kNotes = 88;

/// Raised when a caller violates an operation's preconditions (shapes, ranges).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised for malformed or out-of-range data (files, frames, empty sets).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a training step produces a non-finite loss or gradient.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what)
{
    if (!condition) throw ContractError(what);
}

/// Independent generator for one named stream of a master seed.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

// Stream ids used when splitting one experiment seed into independent generators.
namespace streams {
inline constexpr std::uint64_t w_hh = 1;
inline constexpr std::uint64_t w_ih = 2;
inline constexpr std::uint64_t w_ho = 3;
inline constexpr std::uint64_t shuffle = 10;
inline constexpr std::uint64_t perturbation = 11;
inline constexpr std::uint64_t search = 20;
} // namespace streams

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace rnnlab
