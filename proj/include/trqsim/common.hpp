#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trq {

using LevelMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;
using LevelVector = Eigen::Matrix<std::int32_t, Eigen::Dynamic, 1>;
using WideVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

// Error families. The CLI maps each family onto a distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) {
        throw ValidationError(what);
    }
}

inline void ensure(bool cond, const std::string& what) {
    if (!cond) {
        throw InvariantError(what);
    }
}

}  // namespace trq
