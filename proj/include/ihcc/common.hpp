#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace ihcc {

// Row-major dense matrix; rows index samples throughout the library.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatD = Mat<double>;
using MatF = Mat<float>;

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data, model files, or checkpoints.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training diverged (non-finite loss or parameters).
class TrainingError : public std::runtime_error {
public:
    TrainingError(std::string component, const std::string& what)
        : std::runtime_error(what), component_(std::move(component)) {}
    const std::string& component() const noexcept { return component_; }

private:
    std::string component_;
};

// SplitMix64 finalizer, used to derive independent stream seeds from
// (seed, counter...) tuples so every random draw is reproducible by index.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed) { return mix64(seed); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t next, Rest... rest) {
    return derive_seed(mix64(seed) ^ (next + 0x632be59bd9b4e019ULL), static_cast<std::uint64_t>(rest)...);
}

// Warnings go to stderr unless silenced (tests silence them).
void log_warning(std::string_view message);
void set_warnings_enabled(bool enabled);

} // namespace ihcc
