#pragma once

#include "dkg/types.hpp"

namespace dkg {

// Squared-exponential kernel with ARD length scales, extended to the joint
// process over (f, grad f).
//
// Observation channels are written as linear functionals c in R^{d+1} of
// (f(x), grad f(x)): c = e_0 is the value, e_{i+1} the i-th partial, and
// (0, theta) a directional derivative. The covariance between two such
// functionals is c^T Ktilde(x, x') c'.
struct KernelSpec {
  double signal_variance = 1.0;
  Vector length_scales;
  /// Channel 0 is the function value, 1..d the partials.
  Vector noise_variances;

  KernelSpec() = default;
  KernelSpec(double alpha, Vector lengths, Vector noise);

  /// Isotropic convenience constructor.
  static KernelSpec isotropic(Index dim, double alpha, double length, double value_noise = 0.0,
                              double gradient_noise = 0.0);

  Index dim() const { return length_scales.size(); }

  /// Throws ContractViolation when any positivity/shape invariant fails.
  void validate() const;

  /// Noise variance of the functional c: sum_j c_j^2 sigma_j^2.
  double channel_noise(const Vector& functional) const;

  /// Plain SE value K(x, x').
  double value(const Vector& x, const Vector& xp) const;
};

/// The (d+1)x(d+1) block [[K, J(x,x')], [J(x',x)^T, H(x,x')]].
Matrix joint_covariance(const Vector& x, const Vector& xp, const KernelSpec& kernel);

/// c^T Ktilde(x, x') c'.
double functional_covariance(const Vector& x, const Vector& xp, const Vector& c, const Vector& cp,
                             const KernelSpec& kernel);

/// Gradient of functional_covariance with respect to x. The gradient with
/// respect to x' is the negative of this (the kernel is stationary).
Vector functional_covariance_grad(const Vector& x, const Vector& xp, const Vector& c,
                                  const Vector& cp, const KernelSpec& kernel);

/// Ktilde(x, x') c' as a (d+1)-vector: covariance of every channel at x with
/// the functional c' at x'. Entry 0 is the value covariance, entries 1..d are
/// its gradient with respect to x.
Vector kernel_column(const Vector& x, const Vector& xp, const Vector& cp, const KernelSpec& kernel);

/// Accumulate weight * kernel_column(x, xp, cp) into out without allocating.
void accumulate_kernel_column(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp,
                              const Eigen::Ref<const Vector>& cp, double weight, const KernelSpec& kernel,
                              Eigen::Ref<Vector> out);

/// d/d(log l_m) of functional_covariance for every m.
Vector functional_covariance_dloglength(const Vector& x, const Vector& xp, const Vector& c,
                                        const Vector& cp, const KernelSpec& kernel);

/// Unit functional e_k in R^{d+1}.
Vector unit_functional(Index dim, Index channel);

/// (0, theta).
Vector directional_functional(const Vector& theta);

}  // namespace dkg
