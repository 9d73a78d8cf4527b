#pragma once
#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gslogit {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Malformed or out-of-contract input supplied by a caller.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A quantity that the requested computation divides by turned out to be zero.
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exact computation was asked for beyond its enumeration/dimension caps.
class CapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reading or writing a file failed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw InputError(what);
}

} // namespace gslogit
