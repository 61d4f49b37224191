#include "chc/frame.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fftw3.h>
#include "json.hpp"

#include "chc/error.hpp"

namespace chc {

namespace {

// Antiderivative of the Meyer polynomial, zero at 0 and 1/2 at 1.
double meyer_integral(double x) {
  x = std::clamp(x, 0.0, 1.0);
  const double x5 = std::pow(x, 5);
  return x5 * (7.0 - 14.0 * x + 10.0 * x * x - 2.5 * x * x * x);
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

double grid_point(int i, int points, double end) {
  return points == 1 ? 0.0 : end * double(i) / double(points - 1);
}

constexpr int kBlock = 256;

// Clenshaw over a block of points at once; the inner loop runs across points
// so it vectorizes. Same operation order as ChebyshevKernel::operator().
void evaluate_block(const std::vector<double>& c, const double* lambda, double* out, int n) {
  double x2[kBlock], b1[kBlock], b2[kBlock];
  for (int i = 0; i < n; ++i) {
    x2[i] = 2.0 * (lambda[i] - 1.0);
    b1[i] = b2[i] = 0.0;
  }
  for (int k = static_cast<int>(c.size()) - 1; k >= 1; --k) {
    const double ck = c[k];
    for (int i = 0; i < n; ++i) {
      const double b0 = ck + x2[i] * b1[i] - b2[i];
      b2[i] = b1[i];
      b1[i] = b0;
    }
  }
  const double c0 = c.empty() ? 0.0 : c[0];
  for (int i = 0; i < n; ++i) out[i] = c0 + 0.5 * x2[i] * b1[i] - b2[i];
}

// sup |p - target| over the grid, giving up once it exceeds `stop`.
double grid_error(const ChebyshevKernel& p, const std::vector<double>& grid, const std::vector<double>& target,
                  double stop = std::numeric_limits<double>::infinity()) {
  double worst = 0.0;
  double vals[kBlock];
  for (std::size_t s = 0; s < grid.size(); s += kBlock) {
    const int n = static_cast<int>(std::min<std::size_t>(kBlock, grid.size() - s));
    evaluate_block(p.coefficients, grid.data() + s, vals, n);
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(vals[i] - target[s + i]));
    if (worst > stop) break;
  }
  return worst;
}

std::vector<double> make_grid(int points, double end) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = grid_point(i, points, end);
  return g;
}

}  // namespace

double meyer_step(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * x * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x);
}

KernelSystem::KernelSystem(int count, double transition, double ratio, double lambda_end)
    : count_(count), transition_(transition), ratio_(ratio), end_(lambda_end) {
  if (count < 2) throw ArgumentError("kernel count must be at least 2, got " + std::to_string(count));
  if (!std::isfinite(lambda_end) || lambda_end <= 0.0) throw ArgumentError("lambda_end must be positive");
  if (!std::isfinite(transition) || transition <= 0.0 || transition >= lambda_end) {
    throw ArgumentError("transition must lie strictly inside (0, lambda_end)");
  }
  if (!std::isfinite(ratio) || ratio < 1.0) throw ArgumentError("bandwidth ratio must be >= 1");
  blend_ = std::min({0.1 * transition, 0.5 * transition, 0.5 * (lambda_end - transition)});
  slope_ = double(count - 1) / (transition + (lambda_end - transition) / ratio);
  if (ratio > 1.0 && warp(transition) < 1.0) {
    std::ostringstream msg;
    msg << "cannot tile: " << count << " kernels leave no narrow band below the transition " << transition
        << " (omega(transition) = " << warp(transition) << " < 1)";
    throw ArgumentError(msg.str());
  }
}

double KernelSystem::warp(double lambda) const {
  const double wide = slope_ / ratio_;
  const double a = transition_ - blend_;
  double bent = 0.0;
  if (lambda >= transition_ + blend_) {
    bent = lambda - transition_;
  } else if (lambda > a) {
    bent = 2.0 * blend_ * meyer_integral((lambda - a) / (2.0 * blend_));
  }
  return slope_ * lambda - (slope_ - wide) * bent;
}

double KernelSystem::unwarp(double omega) const {
  if (omega <= 0.0) return 0.0;
  if (omega >= double(count_ - 1)) return end_;
  double lo = 0.0, hi = end_;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (warp(mid) < omega ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double KernelSystem::kernel(int j, double lambda) const {
  if (j < 0 || j >= count_) throw ArgumentError("kernel index out of range");
  const double u = std::abs(warp(std::clamp(lambda, 0.0, end_)) - double(j));
  if (u >= 1.0) return 0.0;
  return std::cos(0.5 * std::numbers::pi * meyer_step(u));
}

double KernelSystem::tightness(double lambda) const {
  const double w = warp(std::clamp(lambda, 0.0, end_));
  const int j0 = std::clamp(int(std::floor(w)), 0, count_ - 1);
  double s = 0.0;
  for (int j = std::max(0, j0 - 1); j <= std::min(count_ - 1, j0 + 2); ++j) {
    const double k = kernel(j, lambda);
    s += k * k;
  }
  return s;
}

std::pair<double, double> KernelSystem::support(int j) const {
  if (j < 0 || j >= count_) throw ArgumentError("kernel index out of range");
  return {unwarp(double(j) - 1.0), unwarp(double(j) + 1.0)};
}

std::vector<double> KernelSystem::breakpoints(int j) const {
  const auto [lo, hi] = support(j);
  std::vector<double> pts{lo, hi};
  for (double p : {unwarp(double(j)), transition_ - blend_, transition_ + blend_}) {
    if (p > lo && p < hi) pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

KernelSystem design_system(int count, double transition, double ratio, double lambda_end) {
  return KernelSystem(count, transition, ratio, lambda_end);
}

double center_of_mass(const KernelSystem& system, int j) {
  if (j == system.count() - 1) return system.lambda_end();
  using boost::math::quadrature::gauss_kronrod;
  const auto pts = system.breakpoints(j);
  double mass = 0.0, moment = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    auto sq = [&](double x) {
      const double k = system.kernel(j, x);
      return k * k;
    };
    auto first = [&](double x) { return x * sq(x); };
    mass += gauss_kronrod<double, 61>::integrate(sq, pts[i], pts[i + 1], 15, 1e-12);
    moment += gauss_kronrod<double, 61>::integrate(first, pts[i], pts[i + 1], 15, 1e-12);
  }
  if (mass <= 0.0) throw NumericError("kernel " + std::to_string(j + 1) + " has zero mass");
  return moment / mass;
}

double ChebyshevKernel::operator()(double lambda) const {
  const double x = lambda - 1.0;
  double b1 = 0.0, b2 = 0.0;
  for (int k = degree(); k >= 1; --k) {
    const double b0 = coefficients[k] + 2.0 * x * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return coefficients.empty() ? 0.0 : coefficients[0] + x * b1 - b2;
}

ChebyshevKernel chebyshev_project(const std::function<double(double)>& f, int degree) {
  if (degree < 0) throw ArgumentError("negative Chebyshev degree");
  const int n = 2 * (degree + 1);
  std::vector<double> in(n), out(n);
  for (int k = 0; k < n; ++k) in[k] = f(1.0 + std::cos(std::numbers::pi * (k + 0.5) / n));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_r2r_1d(n, in.data(), out.data(), FFTW_REDFT10, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  if (!plan) throw NumericError("FFTW could not plan a DCT of size " + std::to_string(n));
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  ChebyshevKernel p;
  p.coefficients.resize(degree + 1);
  for (int k = 0; k <= degree; ++k) p.coefficients[k] = out[k] / n;
  p.coefficients[0] *= 0.5;
  return p;
}

double sup_error(const ChebyshevKernel& p, const std::function<double(double)>& f, int points) {
  if (points < 1) throw ArgumentError("sup_error needs at least one point");
  const auto grid = make_grid(points, 2.0);
  std::vector<double> target(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) target[i] = f(grid[i]);
  return grid_error(p, grid, target);
}

ChebyshevKernel fit_kernel(const std::function<double(double)>& f, double budget, int max_degree,
                           int grid_points) {
  if (max_degree < 0) throw ArgumentError("negative maximum degree");
  if (grid_points < 1) throw ArgumentError("fit grid needs at least one point");
  const auto grid = make_grid(grid_points, 2.0);
  std::vector<double> target(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) target[i] = f(grid[i]);
  auto error_at = [&](const ChebyshevKernel& p) { return grid_error(p, grid, target, budget); };

  ChebyshevKernel best = chebyshev_project(f, 0);
  if (error_at(best) <= budget) return best;
  int failing = 0, passing = 1;
  while (true) {
    passing = std::min(passing, max_degree);
    best = chebyshev_project(f, passing);
    if (error_at(best) <= budget) break;
    if (passing == max_degree) {
      std::ostringstream msg;
      msg << "sup error " << grid_error(best, grid, target) << " exceeds budget " << budget << " at degree " << max_degree;
      throw NumericError(msg.str());
    }
    failing = passing;
    passing *= 2;
  }
  while (passing - failing > 1) {
    const int mid = failing + (passing - failing) / 2;
    auto p = chebyshev_project(f, mid);
    if (error_at(p) <= budget) {
      passing = mid;
      best = std::move(p);
    } else {
      failing = mid;
    }
  }
  return best;
}

FilterBank chebyshev_fit(const KernelSystem& system, const FitOptions& options) {
  const int J = system.count();
  if (system.lambda_end() != 2.0) throw ArgumentError("Chebyshev fitting assumes lambda_end = 2");
  const double budget = options.joint_tol / (2.0 * J);
  FilterBank bank;
  bank.kernels.resize(J);
  bank.centers.resize(J);
  bank.joint_tol = options.joint_tol;
  std::vector<std::string> failures(J);

#pragma omp parallel for schedule(dynamic, 1)
  for (int j = 0; j < J; ++j) {
    auto k = [&system, j](double x) { return system.kernel(j, x); };
    try {
      bank.kernels[j] = fit_kernel(k, budget, options.max_degree, options.grid_points);
      bank.kernels[j].index = j;
      bank.kernels[j].fit_error = sup_error(bank.kernels[j], k, options.verify_points);
      bank.centers[j] = center_of_mass(system, j);
    } catch (const NumericError& e) {
      failures[j] = "kernel " + std::to_string(j + 1) + ": " + e.what();
    }
  }

  std::string missed;
  for (const auto& f : failures) {
    if (!f.empty()) missed += (missed.empty() ? "" : "; ") + f;
  }
  if (!missed.empty()) throw NumericError("chebyshev_fit: " + missed);

  const auto grid = make_grid(options.grid_points, 2.0);
  std::vector<double> sum(grid.size(), 0.0);
  double vals[kBlock];
  for (const auto& p : bank.kernels) {
    for (std::size_t s = 0; s < grid.size(); s += kBlock) {
      const int n = static_cast<int>(std::min<std::size_t>(kBlock, grid.size() - s));
      evaluate_block(p.coefficients, grid.data() + s, vals, n);
      for (int i = 0; i < n; ++i) sum[s + i] += vals[i] * vals[i];
    }
  }
  double joint = 0.0;
  for (double s : sum) joint = std::max(joint, std::abs(s - 1.0));
  bank.joint_deviation = joint;
  if (joint > options.joint_tol) {
    std::ostringstream msg;
    msg << "chebyshev_fit: joint tightness deviation " << joint << " exceeds " << options.joint_tol;
    throw NumericError(msg.str());
  }
  return bank;
}

Eigen::VectorXd apply_filter(const LaplacianOperator& op, const ChebyshevKernel& kernel, const Eigen::VectorXd& f) {
  if (f.size() != op.size()) throw ArgumentError("signal length does not match the graph");
  if (kernel.coefficients.empty()) return Eigen::VectorXd::Zero(f.size());
  Eigen::VectorXd y = kernel.coefficients[0] * f;
  if (kernel.degree() >= 1) {
    Eigen::VectorXd t0 = f;
    Eigen::VectorXd t1 = op.apply(f) - f;
    y += kernel.coefficients[1] * t1;
    for (int k = 2; k <= kernel.degree(); ++k) {
      Eigen::VectorXd t2 = 2.0 * (op.apply(t1) - t1) - t0;
      y += kernel.coefficients[k] * t2;
      t0.swap(t1);
      t1.swap(t2);
    }
  }
  if (!y.allFinite()) throw NumericError("apply_filter: non-finite output");
  return y;
}

RowMatrix apply_filter(const LaplacianOperator& op, const ChebyshevKernel& kernel, const RowMatrix& f) {
  if (f.rows() != op.size()) throw ArgumentError("signal length does not match the graph");
  if (kernel.coefficients.empty()) return RowMatrix::Zero(f.rows(), f.cols());
  RowMatrix y = kernel.coefficients[0] * f;
  if (kernel.degree() >= 1) {
    RowMatrix t0 = f, t1, t2;
    op.apply(f, t1);
    t1 -= f;
    y += kernel.coefficients[1] * t1;
    for (int k = 2; k <= kernel.degree(); ++k) {
      op.apply(t1, t2);
      t2 = 2.0 * (t2 - t1) - t0;
      y += kernel.coefficients[k] * t2;
      t0.swap(t1);
      t1.swap(t2);
    }
  }
  if (!y.allFinite()) throw NumericError("apply_filter: non-finite output");
  return y;
}

std::vector<double> apply_bank(const LaplacianOperator& op, const FilterBank& bank, const Eigen::VectorXd& f) {
  if (f.size() != op.size()) throw ArgumentError("signal length does not match the graph");
  const int J = bank.count();
  int top = 0;
  for (const auto& p : bank.kernels) top = std::max(top, p.degree());
  std::vector<Eigen::VectorXd> acc(J, Eigen::VectorXd::Zero(f.size()));
  auto accumulate = [&](int k, const Eigen::VectorXd& t) {
    for (int j = 0; j < J; ++j) {
      if (k <= bank.kernels[j].degree()) acc[j] += bank.kernels[j].coefficients[k] * t;
    }
  };
  accumulate(0, f);
  if (top >= 1) {
    Eigen::VectorXd t0 = f;
    Eigen::VectorXd t1 = op.apply(f) - f;
    accumulate(1, t1);
    for (int k = 2; k <= top; ++k) {
      Eigen::VectorXd t2 = 2.0 * (op.apply(t1) - t1) - t0;
      accumulate(k, t2);
      t0.swap(t1);
      t1.swap(t2);
    }
  }
  std::vector<double> out(J);
  for (int j = 0; j < J; ++j) {
    out[j] = acc[j].squaredNorm();
    if (!std::isfinite(out[j])) throw NumericError("apply_bank: non-finite output for kernel " + std::to_string(j + 1));
  }
  return out;
}

void write_kernel_csv(const std::string& path, const KernelSystem& system, const FilterBank* bank, int points,
                      const std::string& header_comment) {
  if (points < 2) throw ArgumentError("kernel table needs at least two points");
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(17);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  const int J = system.count();
  out << "lambda";
  for (int j = 1; j <= J; ++j) out << ",k" << j;
  out << ",tightness";
  if (bank) {
    for (int j = 1; j <= J; ++j) out << ",p" << j;
    out << ",tightness_fit";
  }
  out << '\n';
  for (int i = 0; i < points; ++i) {
    const double x = grid_point(i, points, system.lambda_end());
    out << x;
    double s = 0.0;
    for (int j = 0; j < J; ++j) {
      const double k = system.kernel(j, x);
      s += k * k;
      out << ',' << k;
    }
    out << ',' << s;
    if (bank) {
      double sp = 0.0;
      for (const auto& p : bank->kernels) {
        const double v = p(x);
        sp += v * v;
        out << ',' << v;
      }
      out << ',' << sp;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

void write_bank_json(const std::string& path, const KernelSystem& system, const FilterBank& bank,
                     const std::string& header_comment) {
  nlohmann::json doc;
  if (!header_comment.empty()) doc["comment"] = header_comment;
  doc["count"] = system.count();
  doc["transition"] = system.transition();
  doc["ratio"] = system.ratio();
  doc["lambda_end"] = system.lambda_end();
  doc["joint_tol"] = bank.joint_tol;
  doc["joint_deviation"] = bank.joint_deviation;
  auto& ks = doc["kernels"] = nlohmann::json::array();
  for (int j = 0; j < bank.count(); ++j) {
    const auto& p = bank.kernels[j];
    ks.push_back({{"index", j + 1},
                  {"center", bank.centers[j]},
                  {"degree", p.degree()},
                  {"fit_error", p.fit_error},
                  {"coefficients", p.coefficients}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw Error("write failed: " + path);
}

FilterBank read_bank_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  FilterBank bank;
  try {
    const auto doc = nlohmann::json::parse(in);
    bank.joint_tol = doc.at("joint_tol").get<double>();
    bank.joint_deviation = doc.at("joint_deviation").get<double>();
    for (const auto& k : doc.at("kernels")) {
      ChebyshevKernel p;
      p.coefficients = k.at("coefficients").get<std::vector<double>>();
      p.fit_error = k.at("fit_error").get<double>();
      p.index = k.at("index").get<int>() - 1;
      if (p.coefficients.empty()) throw FormatError("kernel without coefficients");
      bank.centers.push_back(k.at("center").get<double>());
      bank.kernels.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (bank.kernels.empty()) throw FormatError(path + ": no kernels");
  return bank;
}

}  // namespace chc
