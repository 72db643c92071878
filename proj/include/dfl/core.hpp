// Shared dense types and the error hierarchy used across the toolkit.
#ifndef DFL_CORE_HPP
#define DFL_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dfl {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Row-stacked server models, one row per server (M x d).
template <typename Scalar>
using ServerMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

/// Base class for every error the toolkit raises. `exit_code` is the stable
/// CLI contract: 2 configuration/precondition, 3 bound violation, 4 numeric.
class Error : public std::runtime_error {
public:
    Error(const std::string& what, int exit_code) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const noexcept { return exit_code_; }

private:
    int exit_code_;
};

/// Malformed argument: dimension mismatch, empty input, bad index.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& what) : Error("invalid input: " + what, 2) {}
};

/// A modelling assumption (connectivity, strong convexity, full rank) fails.
class AssumptionViolation : public Error {
public:
    explicit AssumptionViolation(const std::string& what) : Error("assumption violated: " + what, 2) {}
};

/// A documented precondition of a bound or routine does not hold.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error("precondition failed: " + what, 2) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config error: " + what, 2) {}
};

/// Non-finite value produced during a run. Carries the coordinates where it
/// was first observed; negative coordinates mean "not applicable".
class NumericOverflow : public Error {
public:
    NumericOverflow(const std::string& what, long epoch, long server, long client)
        : Error("numeric overflow: " + what + " (epoch " + std::to_string(epoch) + ", server " +
                    std::to_string(server) + ", client " + std::to_string(client) + ")",
                4),
          epoch_(epoch), server_(server), client_(client) {}
    long epoch() const noexcept { return epoch_; }
    long server() const noexcept { return server_; }
    long client() const noexcept { return client_; }

private:
    long epoch_;
    long server_;
    long client_;
};

class BoundViolation : public Error {
public:
    explicit BoundViolation(const std::string& what) : Error("bound violation: " + what, 3) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error("i/o error: " + what, 2) {}
};

}  // namespace dfl

#endif  // DFL_CORE_HPP
