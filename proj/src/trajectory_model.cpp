#include "stf/trajectory_model.hpp"

#include <cmath>
#include <stdexcept>

namespace stf {

void BasisSpec::validate() const {
  if (order < 1) throw std::invalid_argument("basis order must be >= 1");
  if (kind == BasisKind::CustomList) {
    if (static_cast<int>(custom.size()) != order)
      throw std::invalid_argument("custom basis needs exactly `order` functions");
    if (!custom_deriv.empty() && custom_deriv.size() != custom.size())
      throw std::invalid_argument("custom_deriv size mismatch");
  }
}

Eigen::VectorXd basis_vector(const BasisSpec& spec, double t, double t_ref) {
  spec.validate();
  const double tau = t - t_ref;
  Eigen::VectorXd phi(spec.order);
  switch (spec.kind) {
    case BasisKind::Monomial: {
      double p = 1.0;
      for (int i = 0; i < spec.order; ++i) {
        phi[i] = p;
        p *= tau;
      }
      break;
    }
    case BasisKind::Trigonometric: {
      phi[0] = 1.0;
      for (int i = 1; i < spec.order; ++i) {
        const int harmonic = (i + 1) / 2;
        const double arg = harmonic * spec.omega * tau;
        phi[i] = (i % 2 == 1) ? std::sin(arg) : std::cos(arg);
      }
      break;
    }
    case BasisKind::CustomList:
      for (int i = 0; i < spec.order; ++i) phi[i] = spec.custom[i](tau);
      break;
  }
  return phi;
}

Eigen::VectorXd basis_derivative_vector(const BasisSpec& spec, double t, double t_ref,
                                        int order) {
  spec.validate();
  if (order < 0) throw std::invalid_argument("derivative order must be >= 0");
  if (order == 0) return basis_vector(spec, t, t_ref);
  const double tau = t - t_ref;
  Eigen::VectorXd dphi = Eigen::VectorXd::Zero(spec.order);
  switch (spec.kind) {
    case BasisKind::Monomial: {
      // d^o/dtau^o tau^i = i!/(i-o)! tau^(i-o)
      for (int i = order; i < spec.order; ++i) {
        double fac = 1.0;
        for (int j = 0; j < order; ++j) fac *= static_cast<double>(i - j);
        dphi[i] = fac * std::pow(tau, i - order);
      }
      break;
    }
    case BasisKind::Trigonometric: {
      for (int i = 1; i < spec.order; ++i) {
        const int harmonic = (i + 1) / 2;
        const double w = harmonic * spec.omega;
        const double arg = w * tau;
        const double scale = std::pow(w, order);
        // sin/cos derivatives cycle with period 4; cos(x) = sin(x + pi/2)
        const int phase = (i % 2 == 1) ? order % 4 : (order + 1) % 4;
        switch (phase) {
          case 0: dphi[i] = scale * std::sin(arg); break;
          case 1: dphi[i] = scale * std::cos(arg); break;
          case 2: dphi[i] = -scale * std::sin(arg); break;
          case 3: dphi[i] = -scale * std::cos(arg); break;
        }
      }
      break;
    }
    case BasisKind::CustomList: {
      if (!spec.custom_deriv.empty() && order == 1) {
        for (int i = 0; i < spec.order; ++i) dphi[i] = spec.custom_deriv[i](tau);
      } else {
        // central differences, recursing on order
        const double h = 1e-5 * std::max(1.0, std::abs(tau));
        Eigen::VectorXd hi = basis_derivative_vector(spec, t + h, t_ref, order - 1);
        Eigen::VectorXd lo = basis_derivative_vector(spec, t - h, t_ref, order - 1);
        dphi = (hi - lo) / (2.0 * h);
      }
      break;
    }
  }
  return dphi;
}

Evaluation evaluate(const FotParams& fot, double t) {
  Evaluation out;
  out.value.resize(fot.dims());
  const Eigen::VectorXd phi = basis_vector(fot.basis, t, fot.t_ref);
  for (int d = 0; d < fot.dims(); ++d) {
    if (fot.coeffs[d].size() != phi.size())
      throw std::invalid_argument("coefficient/basis size mismatch");
    out.value[d] = fot.coeffs[d].dot(phi);
  }
  out.extrapolated = (t < fot.window_k1 || t > fot.window_k2);
  return out;
}

Eigen::VectorXd derivative(const FotParams& fot, double t, int order) {
  if (order < 1) throw std::invalid_argument("derivative order must be >= 1");
  const Eigen::VectorXd dphi = basis_derivative_vector(fot.basis, t, fot.t_ref, order);
  Eigen::VectorXd out(fot.dims());
  for (int d = 0; d < fot.dims(); ++d) out[d] = fot.coeffs[d].dot(dphi);
  return out;
}

int recommended_order(MotionClass motion) {
  return motion == MotionClass::CV ? 2 : 3;
}

double truncation_bound(double deriv_bound, double half_width, int m) {
  if (deriv_bound < 0 || half_width < 0)
    throw std::invalid_argument("truncation_bound wants nonnegative inputs");
  if (m < 1) throw std::invalid_argument("order must be >= 1");
  double factorial = 1.0;
  for (int i = 2; i <= m; ++i) factorial *= i;
  return deriv_bound * std::pow(half_width, m) / factorial;
}

FotParams recenter(const FotParams& fot, double new_t_ref) {
  FotParams out = fot;
  if (fot.basis.kind != BasisKind::Monomial) return out;
  const double s = new_t_ref - fot.t_ref;
  if (s == 0.0) return out;
  const int m = fot.basis.order;
  // p_new(tau) = p_old(tau + s): binomial re-expansion per dimension.
  Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    double binom = 1.0;
    double spow = 1.0;
    for (int j = i; j >= 0; --j) {
      shift(j, i) = binom * spow;
      spow *= s;
      binom = binom * j / static_cast<double>(i - j + 1);
    }
  }
  for (auto& c : out.coeffs) c = shift * c;
  out.t_ref = new_t_ref;
  return out;
}

}  // namespace stf
