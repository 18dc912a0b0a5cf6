#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace orbitguard {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Flat layout of the full deputy state used for Lie derivatives and gradients.
//   [0,3)  position (Hill, m)      [3,6)  velocity (Hill, m/s)
//   [6,10) quaternion (x,y,z,w)    [10,13) body rate (rad/s)
//   13 battery  14 temperature  15 fuel_used  16 time
inline constexpr int kStateDim = 17;
inline constexpr int kControlDim = 6;

using StateVec = Eigen::Matrix<double, kStateDim, 1>;
using ControlVec = Eigen::Matrix<double, kControlDim, 1>;
using InputMatrix = Eigen::Matrix<double, kStateDim, kControlDim>;

namespace slot {
inline constexpr int kPosition = 0;
inline constexpr int kVelocity = 3;
inline constexpr int kQuaternion = 6;
inline constexpr int kBodyRate = 10;
inline constexpr int kBattery = 13;
inline constexpr int kTemperature = 14;
inline constexpr int kFuel = 15;
inline constexpr int kTime = 16;
}  // namespace slot

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Input outside the mathematical domain of an operation (non-finite, non-unit).
class DomainError : public Error {
  public:
    using Error::Error;
};

// Invalid configuration value (step size, gains, vehicle parameters).
class ConfigError : public Error {
  public:
    using Error::Error;
};

class CatalogError : public Error {
  public:
    using Error::Error;
};

// Operation called on a constraint whose enforcement mode or relative degree forbids it.
class ModeError : public Error {
  public:
    using Error::Error;
};

class PolicyError : public Error {
  public:
    using Error::Error;
};

// Invalid scenario or message field; path names the offending field ("deputies[0].policy.kind").
class ScenarioError : public Error {
  public:
    ScenarioError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

class SolverStallError : public Error {
  public:
    using Error::Error;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
    return m.allFinite();
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

}  // namespace orbitguard
