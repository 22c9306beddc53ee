#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sts {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat46 = Eigen::Matrix<double, 4, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat6x12 = Eigen::Matrix<double, 6, 12>;
using Mat4x12 = Eigen::Matrix<double, 4, 12>;

constexpr double kGravity = 9.81;
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Error hierarchy shared by all modules. The CLI maps the concrete types to
// distinct exit codes, so keep them as separate classes rather than message
// strings.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A state or derivative stopped being finite during integration.
struct NonFiniteState : Error {
  explicit NonFiniteState(const std::string& msg) : Error(msg) {}
};

// Equality-constrained QP has no solution inside the box.
struct Infeasible : Error {
  explicit Infeasible(const std::string& msg) : Error(msg) {}
};

// Interpolation query outside the stored time span.
struct OutOfDomain : Error {
  explicit OutOfDomain(const std::string& msg) : Error(msg) {}
};

// Geometric task-to-joint transformation left its valid branch.
struct SingularConfiguration : Error {
  explicit SingularConfiguration(const std::string& msg) : Error(msg) {}
};

// Backward Riccati sweep diverged.
struct RiccatiBlowup : Error {
  explicit RiccatiBlowup(const std::string& msg) : Error(msg) {}
};

// Metric calibration needs every baseline sum to be nonzero.
struct ZeroBaselineTerm : Error {
  explicit ZeroBaselineTerm(const std::string& msg) : Error(msg) {}
};

// Every probe of a derivative-free step aborted; the search region is hopeless.
struct AllInfinite : Error {
  explicit AllInfinite(const std::string& msg) : Error(msg) {}
};

}  // namespace sts
