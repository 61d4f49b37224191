#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chc/graph.hpp"

namespace chc {

// Spline-type tight frame on [0, lambda_end]. Kernel j (0-based) is the
// translate of a smooth bump centered at j in warped coordinates,
//   k_j(lambda) = cos(pi/2 * nu(|omega(lambda) - j|))  for |.| <= 1,
// with nu the Meyer polynomial x^4 (35 - 84x + 70x^2 - 20x^3). Since
// nu(x) + nu(1 - x) = 1, neighbouring kernels are cos/sin pairs and the
// squared kernels sum to one everywhere. The warp omega has slope s below the
// transition and s / ratio above it, blended smoothly over
// [transition - w, transition + w], and maps lambda_end to J - 1.
class KernelSystem {
 public:
  // ArgumentError if the parameters cannot be tiled.
  KernelSystem(int count = 57, double transition = 0.1, double ratio = 10.0, double lambda_end = 2.0);

  int count() const { return count_; }
  double transition() const { return transition_; }
  double ratio() const { return ratio_; }
  double lambda_end() const { return end_; }
  double blend_width() const { return blend_; }
  double narrow_slope() const { return slope_; }

  double warp(double lambda) const;
  // Inverse of the warp, by bisection.
  double unwarp(double omega) const;

  double kernel(int j, double lambda) const;
  // sum_j k_j(lambda)^2
  double tightness(double lambda) const;

  // Support [lo, hi] of kernel j in lambda, clipped to [0, lambda_end].
  std::pair<double, double> support(int j) const;
  // Points where the closed form changes pieces inside the support of j.
  std::vector<double> breakpoints(int j) const;

 private:
  int count_;
  double transition_, ratio_, end_;
  double slope_ = 1.0;
  double blend_ = 0.0;
};

KernelSystem design_system(int count = 57, double transition = 0.1, double ratio = 10.0, double lambda_end = 2.0);

// Meyer auxiliary polynomial on [0, 1], clamped outside.
double meyer_step(double x);

// Center of mass of k_j^2 on [0, lambda_end]; the last kernel is pinned to
// lambda_end.
double center_of_mass(const KernelSystem& system, int j);

// p(lambda) = sum_k c_k T_k(lambda - 1) on [0, 2].
struct ChebyshevKernel {
  std::vector<double> coefficients;
  int index = -1;          // kernel this approximates, -1 if standalone
  double fit_error = 0.0;  // sup |p - k| on the verification grid

  int degree() const { return static_cast<int>(coefficients.size()) - 1; }
  double operator()(double lambda) const;
};

// Cosine-sampled projection at 2(degree + 1) Chebyshev nodes on [0, 2].
ChebyshevKernel chebyshev_project(const std::function<double(double)>& f, int degree);

// Smallest degree (searched by doubling, then bisection) whose projection has
// sup error <= budget on `grid_points` samples; NumericError past max_degree.
ChebyshevKernel fit_kernel(const std::function<double(double)>& f, double budget, int max_degree,
                           int grid_points = 10000);

// Sup of |p - f| over `points` equispaced samples of [0, 2].
double sup_error(const ChebyshevKernel& p, const std::function<double(double)>& f, int points = 10000);

struct FilterBank {
  std::vector<ChebyshevKernel> kernels;
  std::vector<double> centers;
  double joint_deviation = 0.0;  // sup |sum_j p_j^2 - 1| on the fit grid
  double joint_tol = 0.01;

  int count() const { return static_cast<int>(kernels.size()); }
};

struct FitOptions {
  int max_degree = 3000;
  double joint_tol = 0.01;
  int grid_points = 10000;
  int verify_points = 100000;
};

// Smallest degree per kernel meeting sup error <= joint_tol / (2J) on the fit
// grid, then a joint tightness check. NumericError naming the kernels that miss
// their budget at max_degree, or if the joint check fails.
FilterBank chebyshev_fit(const KernelSystem& system, const FitOptions& options = {});

// p(L) f by the three-term recurrence on L - I.
Eigen::VectorXd apply_filter(const LaplacianOperator& op, const ChebyshevKernel& kernel, const Eigen::VectorXd& f);
// Same for the columns of an N x S block of signals.
RowMatrix apply_filter(const LaplacianOperator& op, const ChebyshevKernel& kernel, const RowMatrix& f);

// ||p_j(L) f||^2 for every kernel, sharing one recurrence (max degree matvecs).
std::vector<double> apply_bank(const LaplacianOperator& op, const FilterBank& bank, const Eigen::VectorXd& f);

void write_kernel_csv(const std::string& path, const KernelSystem& system, const FilterBank* bank,
                      int points, const std::string& header_comment = {});
void write_bank_json(const std::string& path, const KernelSystem& system, const FilterBank& bank,
                     const std::string& header_comment = {});
FilterBank read_bank_json(const std::string& path);

}  // namespace chc
