#include "dkg/kernel.hpp"

#include <cmath>
#include <sstream>

namespace dkg {

namespace {

void check_pair(const Vector& x, const Vector& xp, const KernelSpec& kernel) {
  if (x.size() != kernel.dim() || xp.size() != kernel.dim()) {
    std::ostringstream msg;
    msg << "kernel: point dimensions (" << x.size() << ", " << xp.size()
        << ") do not match kernel dimension " << kernel.dim();
    throw ContractViolation(msg.str());
  }
}

void check_functional(const Vector& c, const KernelSpec& kernel) {
  require(c.size() == kernel.dim() + 1, "kernel: functional must have d+1 entries");
}

}  // namespace

KernelSpec::KernelSpec(double alpha, Vector lengths, Vector noise)
    : signal_variance(alpha), length_scales(std::move(lengths)), noise_variances(std::move(noise)) {
  validate();
}

KernelSpec KernelSpec::isotropic(Index dim, double alpha, double length, double value_noise,
                                 double gradient_noise) {
  Vector noise = Vector::Constant(dim + 1, gradient_noise);
  noise[0] = value_noise;
  return KernelSpec(alpha, Vector::Constant(dim, length), std::move(noise));
}

void KernelSpec::validate() const {
  require(length_scales.size() > 0, "KernelSpec: no length scales");
  require(std::isfinite(signal_variance) && signal_variance > 0.0,
          "KernelSpec: signal variance must be positive");
  for (Index i = 0; i < length_scales.size(); ++i) {
    require(std::isfinite(length_scales[i]) && length_scales[i] > 0.0,
            "KernelSpec: length scales must be positive");
  }
  require(noise_variances.size() == length_scales.size() + 1,
          "KernelSpec: need d+1 noise variances");
  for (Index i = 0; i < noise_variances.size(); ++i) {
    require(std::isfinite(noise_variances[i]) && noise_variances[i] >= 0.0,
            "KernelSpec: noise variances must be nonnegative");
  }
}

double KernelSpec::channel_noise(const Vector& functional) const {
  return functional.cwiseAbs2().dot(noise_variances);
}

double KernelSpec::value(const Vector& x, const Vector& xp) const {
  check_pair(x, xp, *this);
  return signal_variance *
         std::exp(-0.5 * (x - xp).cwiseQuotient(length_scales).squaredNorm());
}

double functional_covariance(const Vector& x, const Vector& xp, const Vector& c, const Vector& cp,
                             const KernelSpec& kernel) {
  check_pair(x, xp, kernel);
  check_functional(c, kernel);
  check_functional(cp, kernel);
  const Index d = kernel.dim();
  double quad = 0.0, us = 0.0, vs = 0.0, uv = 0.0;
  for (Index i = 0; i < d; ++i) {
    const double lambda = 1.0 / (kernel.length_scales[i] * kernel.length_scales[i]);
    const double r = x[i] - xp[i];
    const double s = lambda * r;
    quad += r * s;
    us += c[i + 1] * s;
    vs += cp[i + 1] * s;
    uv += c[i + 1] * cp[i + 1] * lambda;
  }
  const double g = kernel.signal_variance * std::exp(-0.5 * quad);
  return g * (c[0] * cp[0] + c[0] * vs - cp[0] * us - us * vs + uv);
}

Vector functional_covariance_grad(const Vector& x, const Vector& xp, const Vector& c,
                                  const Vector& cp, const KernelSpec& kernel) {
  check_pair(x, xp, kernel);
  check_functional(c, kernel);
  check_functional(cp, kernel);
  const Index d = kernel.dim();
  Vector lambda(d), s(d);
  double quad = 0.0, us = 0.0, vs = 0.0, uv = 0.0;
  for (Index i = 0; i < d; ++i) {
    lambda[i] = 1.0 / (kernel.length_scales[i] * kernel.length_scales[i]);
    const double r = x[i] - xp[i];
    s[i] = lambda[i] * r;
    quad += r * s[i];
    us += c[i + 1] * s[i];
    vs += cp[i + 1] * s[i];
    uv += c[i + 1] * cp[i + 1] * lambda[i];
  }
  const double g = kernel.signal_variance * std::exp(-0.5 * quad);
  const double f = g * (c[0] * cp[0] + c[0] * vs - cp[0] * us - us * vs + uv);
  Vector grad(d);
  for (Index i = 0; i < d; ++i) {
    const double u = c[i + 1], v = cp[i + 1];
    grad[i] = -s[i] * f + g * lambda[i] * (c[0] * v - cp[0] * u - vs * u - us * v);
  }
  return grad;
}

void accumulate_kernel_column(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& xp,
                              const Eigen::Ref<const Vector>& cp, double weight, const KernelSpec& kernel,
                              Eigen::Ref<Vector> out) {
  const Index d = kernel.dim();
  double quad = 0.0, vs = 0.0;
  for (Index i = 0; i < d; ++i) {
    const double inv = 1.0 / kernel.length_scales[i];
    const double r = x[i] - xp[i];
    const double s = r * inv * inv;
    quad += r * s;
    vs += cp[i + 1] * s;
  }
  const double g = weight * kernel.signal_variance * std::exp(-0.5 * quad);
  const double a = cp[0] + vs;
  out[0] += g * a;
  for (Index i = 0; i < d; ++i) {
    const double inv2 = 1.0 / (kernel.length_scales[i] * kernel.length_scales[i]);
    out[i + 1] += g * inv2 * (cp[i + 1] - (x[i] - xp[i]) * a);
  }
}

Vector kernel_column(const Vector& x, const Vector& xp, const Vector& cp, const KernelSpec& kernel) {
  check_pair(x, xp, kernel);
  check_functional(cp, kernel);
  Vector out = Vector::Zero(kernel.dim() + 1);
  accumulate_kernel_column(x, xp, cp, 1.0, kernel, out);
  return out;
}

Matrix joint_covariance(const Vector& x, const Vector& xp, const KernelSpec& kernel) {
  check_pair(x, xp, kernel);
  const Index d = kernel.dim();
  Matrix out(d + 1, d + 1);
  for (Index j = 0; j <= d; ++j) {
    out.col(j) = kernel_column(x, xp, unit_functional(d, j), kernel);
  }
  return out;
}

Vector functional_covariance_dloglength(const Vector& x, const Vector& xp, const Vector& c,
                                        const Vector& cp, const KernelSpec& kernel) {
  check_pair(x, xp, kernel);
  check_functional(c, kernel);
  check_functional(cp, kernel);
  const Index d = kernel.dim();
  Vector lambda(d), r(d), s(d);
  double quad = 0.0, us = 0.0, vs = 0.0, uv = 0.0;
  for (Index i = 0; i < d; ++i) {
    lambda[i] = 1.0 / (kernel.length_scales[i] * kernel.length_scales[i]);
    r[i] = x[i] - xp[i];
    s[i] = lambda[i] * r[i];
    quad += r[i] * s[i];
    us += c[i + 1] * s[i];
    vs += cp[i + 1] * s[i];
    uv += c[i + 1] * cp[i + 1] * lambda[i];
  }
  const double g = kernel.signal_variance * std::exp(-0.5 * quad);
  const double f = g * (c[0] * cp[0] + c[0] * vs - cp[0] * us - us * vs + uv);
  Vector out(d);
  for (Index m = 0; m < d; ++m) {
    const double u = c[m + 1], v = cp[m + 1];
    const double dlambda = -0.5 * r[m] * r[m] * f +
                           g * (c[0] * v * r[m] - cp[0] * u * r[m] - u * r[m] * vs -
                                us * v * r[m] + u * v);
    // d/dlog l = -2 lambda d/dlambda
    out[m] = -2.0 * lambda[m] * dlambda;
  }
  return out;
}

Vector unit_functional(Index dim, Index channel) {
  require(channel >= 0 && channel <= dim, "unit_functional: channel out of range");
  Vector c = Vector::Zero(dim + 1);
  c[channel] = 1.0;
  return c;
}

Vector directional_functional(const Vector& theta) {
  Vector c(theta.size() + 1);
  c[0] = 0.0;
  c.tail(theta.size()) = theta;
  return c;
}

}  // namespace dkg
