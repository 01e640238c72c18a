#ifndef PARAKERN_TYPES_HPP
#define PARAKERN_TYPES_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace parakern {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// thrown when inputs fail a contract (bad matrices, bad config values, ...)
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// thrown when a computation degenerates at runtime (overflow, lost ellipticity, ...)
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace parakern

#endif
