#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chc/error.hpp"
#include "chc/graph.hpp"

namespace chc {

// Ascending eigenpairs of the lower spectrum. Every eigenvalue <= coverage is
// present; eigenvectors are the columns of `vectors`.
struct SpectralSlice {
  std::vector<double> values;
  Eigen::MatrixXd vectors;
  std::vector<double> residuals;  // ||L u - lambda u||_2 per pair
  double coverage = 0.0;
  bool full = false;
  std::string solver;
  std::uint64_t seed = 0;
  int iterations = 0;

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  std::int64_t dimension() const { return vectors.rows(); }
};

inline constexpr std::int64_t kDenseLimit = 4096;

// Full decomposition of an explicit symmetric matrix (N <= kDenseLimit).
// Eigenvalues are clamped into [0, 2], the normalized-Laplacian range.
SpectralSlice eig_dense(const Eigen::MatrixXd& laplacian);
SpectralSlice eig_dense(const LaplacianOperator& op);

struct EigLowOptions {
  double tol = 1e-8;
  std::uint64_t seed = 20190101;
  int block = 0;           // initial block size; 0 picks one
  int max_iterations = 400;
  int max_degree = 400;    // Chebyshev filter degree cap
  int extra_converged = 3; // certified Ritz values required above the cut
  double margin = 1e-3;    // relative margin above the cut
};

class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, SpectralSlice partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const SpectralSlice& partial() const { return partial_; }

 private:
  SpectralSlice partial_;
};

// Every eigenpair with lambda <= cut, for a connected graph, via
// Chebyshev-filtered block subspace iteration with locking. The known null
// vector D^{1/2}1 is deflated exactly. Iteration stops once all Ritz values
// below cut*(1+margin) and `extra_converged` more above it have residual <= tol.
SpectralSlice eig_low(const LaplacianOperator& op, double cut, const EigLowOptions& options = {});

struct GftCoefficients {
  Eigen::VectorXd values;
};

GftCoefficients gft(const SpectralSlice& slice, const Eigen::VectorXd& signal);

// C(lambda) = #{i : lambda_i <= lambda}. ArgumentError past the certified coverage.
std::int64_t count_below(const SpectralSlice& slice, double lambda);

// Upper end of the normalized-Laplacian spectrum used for kernel design.
inline double lambda_max_bound(const LaplacianOperator&) { return 2.0; }

// Recomputes ||L u - lambda u|| for every pair with an independent matvec.
std::vector<double> residual_norms(const LaplacianOperator& op, const SpectralSlice& slice);

// "SPEC1" container; see README for the layout.
void write_spectrum(const std::string& path, const SpectralSlice& slice, const std::string& meta = {});
SpectralSlice read_spectrum(const std::string& path, std::string* meta = nullptr);

// Eigenvalue CDF: one row per eigenvalue (lambda, C(lambda), C(lambda)/N).
void write_eigenvalue_csv(const std::string& path, const SpectralSlice& slice,
                          const std::string& header_comment = {});

}  // namespace chc
