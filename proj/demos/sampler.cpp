// NUTS on a correlated 2-d Gaussian with the halving step-size rule.

#include <cmath>
#include <iostream>
#include <vector>

#include "mcgmenn/sampler.hpp"

int main() {
  using namespace mcgmenn;
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 1.0;
  const Eigen::Matrix2d prec = cov.inverse();
  LogDensityFn target = [&](const Vector& x, Vector& grad) {
    const Eigen::Vector2d v = x;
    grad = -prec * v;
    return -0.5 * v.dot(prec * v);
  };

  ChainState chain = make_chain(Vector::Zero(2), target, 7);
  StepSizeController ctl = StepSizeController::starting_at(1.5);
  std::vector<double> xs, ys;
  for (int i = 0; i < 5000; ++i) {
    nuts_draw(chain, target, ctl);
    if (i % 100 == 99) adapt_step_size(ctl, chain);
    xs.push_back(chain.position(0));
    ys.push_back(chain.position(1));
  }
  double mx = 0, my = 0, cxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= static_cast<double>(xs.size()), my /= static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) cxy += (xs[i] - mx) * (ys[i] - my);
  cxy /= static_cast<double>(xs.size() - 1);
  std::cout << "mean (" << mx << ", " << my << "), covariance " << cxy << " (target 0.8)\n"
            << "final step size " << ctl.epsilon << " after " << ctl.halvings << " halving(s)\n"
            << "ESS of x: " << effective_sample_size(xs) << " of " << xs.size() << '\n';
}
