#include "chc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "binio.hpp"
#include "chc/random.hpp"

namespace chc {

namespace {

SpectralSlice from_dense_solver(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  if (n != m.cols()) throw ArgumentError("eig_dense: matrix is not square");
  if (n > kDenseLimit) {
    throw ArgumentError("eig_dense: N = " + std::to_string(n) + " exceeds the dense limit of " +
                        std::to_string(kDenseLimit));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("dense eigensolver failed");
  SpectralSlice s;
  s.vectors = solver.eigenvectors();
  s.values.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) s.values[i] = std::clamp(solver.eigenvalues()[i], 0.0, 2.0);
  const Eigen::MatrixXd r = m * s.vectors - s.vectors * solver.eigenvalues().asDiagonal();
  s.residuals.resize(s.values.size());
  for (Eigen::Index i = 0; i < n; ++i) s.residuals[i] = r.col(i).norm();
  s.coverage = 2.0;
  s.full = true;
  s.solver = "dense";
  return s;
}

// Projects the columns of `y` off the orthonormal columns of `basis`; twice,
// which is enough for orthogonality at working precision.
void deflate(Eigen::MatrixXd& y, const Eigen::MatrixXd& basis) {
  if (basis.cols() == 0) return;
  for (int pass = 0; pass < 2; ++pass) y.noalias() -= basis * (basis.transpose() * y);
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

Eigen::MatrixXd random_block(Eigen::Index n, Eigen::Index k, NormalStream& rng) {
  Eigen::MatrixXd x(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index r = 0; r < n; ++r) x(r, c) = rng();
  }
  return x;
}

Eigen::MatrixXd apply_block(const LaplacianOperator& op, const Eigen::MatrixXd& x) {
  RowMatrix in = x;
  RowMatrix out;
  op.apply(in, out);
  return out;
}

// Y = p(L) X with p the degree-m Chebyshev polynomial of the first kind on
// [a, b], so components with eigenvalue in [a, b] stay bounded by 1 and those
// below a grow. Columns are rescaled once at the end.
Eigen::MatrixXd chebyshev_filter(const LaplacianOperator& op, const Eigen::MatrixXd& x, int degree,
                                 double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  RowMatrix prev = x;
  RowMatrix lx;
  op.apply(prev, lx);
  RowMatrix cur = (lx - center * prev) / half;
  for (int k = 2; k <= degree; ++k) {
    op.apply(cur, lx);
    RowMatrix next = (2.0 / half) * (lx - center * cur) - prev;
    prev.swap(cur);
    cur.swap(next);
  }
  Eigen::MatrixXd y = cur;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    const double norm = y.col(c).norm();
    if (!std::isfinite(norm)) throw NumericError("Chebyshev filter overflowed");
    if (norm > 0) y.col(c) /= norm;
  }
  return y;
}

struct Ritz {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::VectorXd residuals;
};

Ritz rayleigh_ritz(const LaplacianOperator& op, const Eigen::MatrixXd& basis) {
  const Eigen::MatrixXd lb = apply_block(op, basis);
  Eigen::MatrixXd h = basis.transpose() * lb;
  h = 0.5 * (h + h.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) throw NumericError("Rayleigh-Ritz eigensolver failed");
  Ritz r;
  r.values = solver.eigenvalues();
  r.vectors = basis * solver.eigenvectors();
  const Eigen::MatrixXd lv = lb * solver.eigenvectors();
  r.residuals.resize(r.values.size());
  for (Eigen::Index i = 0; i < r.values.size(); ++i) {
    r.residuals[i] = (lv.col(i) - r.values[i] * r.vectors.col(i)).norm();
  }
  return r;
}

SpectralSlice assemble(const LaplacianOperator& op, const std::vector<double>& values,
                       const Eigen::MatrixXd& vectors, double cut, bool keep_all) {
  std::vector<Eigen::Index> order(values.size());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  SpectralSlice s;
  std::vector<Eigen::Index> chosen;
  for (auto i : order) {
    if (keep_all || values[i] <= cut) chosen.push_back(i);
  }
  s.vectors.resize(op.size(), static_cast<Eigen::Index>(chosen.size()));
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    s.values.push_back(std::clamp(values[chosen[c]], 0.0, 2.0));
    s.vectors.col(static_cast<Eigen::Index>(c)) = vectors.col(chosen[c]);
  }
  s.coverage = cut;
  s.residuals = residual_norms(op, s);
  return s;
}

}  // namespace

SpectralSlice eig_dense(const Eigen::MatrixXd& laplacian) { return from_dense_solver(laplacian); }

SpectralSlice eig_dense(const LaplacianOperator& op) {
  if (op.size() > kDenseLimit) {
    throw ArgumentError("eig_dense: N = " + std::to_string(op.size()) + " exceeds the dense limit of " +
                        std::to_string(kDenseLimit));
  }
  return from_dense_solver(op.dense());
}

SpectralSlice eig_low(const LaplacianOperator& op, double cut, const EigLowOptions& options) {
  if (!(cut > 0.0 && cut < 2.0)) {
    throw ArgumentError("eig_low: cut must lie in (0, 2); use eig_dense for the full spectrum");
  }
  if (!(options.tol > 0.0)) throw ArgumentError("eig_low: tol must be > 0");
  const Eigen::Index n = op.size();
  const double upper = 2.0;
  const double cut_margin = cut * (1.0 + options.margin);
  const int extra = std::max(1, options.extra_converged);

  // Locked pairs, starting with the exact null vector.
  Eigen::MatrixXd locked(n, 0);
  std::vector<double> locked_values;
  auto lock = [&](const Eigen::VectorXd& v, double value) {
    locked.conservativeResize(Eigen::NoChange, locked.cols() + 1);
    locked.col(locked.cols() - 1) = v;
    locked_values.push_back(value);
  };
  {
    const auto parts = connected_components(op.adjacency()).sizes.size();
    if (parts != 1) {
      throw ArgumentError("eig_low: graph has " + std::to_string(parts) +
                          " connected components; restrict it to the largest one first");
    }
    const Eigen::VectorXd u1 = op.null_vector();
    lock(u1, u1.dot(op.apply(u1)));
  }

  NormalStream rng(options.seed);
  Eigen::Index width = options.block > 0 ? options.block : std::clamp<Eigen::Index>(n / 50, 16, 64);

  auto dense_fallback = [&]() {
    auto full = eig_dense(op);
    auto s = assemble(op, full.values, full.vectors, cut, false);
    s.solver = "dense";
    s.seed = options.seed;
    return s;
  };
  if (n <= 4 * (width + extra + 1)) {
    if (n <= kDenseLimit) return dense_fallback();
  }

  auto fresh = [&](Eigen::Index k) {
    Eigen::MatrixXd x = random_block(n, k, rng);
    deflate(x, locked);
    return x;
  };
  Eigen::MatrixXd active = orthonormalize(fresh(width));
  Ritz ritz = rayleigh_ritz(op, active);
  // Leading Ritz values that come from filtered directions; fresh random
  // columns only lower them, so ritz.values[trusted - 1] bounds the block edge.
  // A growth step trusts the whole widened block.
  Eigen::Index trusted = active.cols();

  auto count_locked_above = [&]() {
    return std::count_if(locked_values.begin(), locked_values.end(), [&](double v) { return v > cut_margin; });
  };
  auto widen = [&](Eigen::Index grow) {
    Eigen::MatrixXd wider(n, ritz.vectors.cols() + grow);
    wider << ritz.vectors, fresh(grow);
    deflate(wider, locked);
    active = orthonormalize(wider);
    ritz = rayleigh_ritz(op, active);
  };

  int iteration = 0;
  for (; iteration < options.max_iterations; ++iteration) {
    const double a = std::min(trusted > 0 ? ritz.values[trusted - 1] : ritz.values.maxCoeff(), 1.9);
    // The active block must reach well past the cut for the extra pairs to
    // converge at a useful rate.
    const Eigen::Index above = (ritz.values.array() > cut_margin).count();
    const Eigen::Index needed = std::max<Eigen::Index>(extra + 2, active.cols() / 4);
    if (above < needed || a <= cut_margin) {
      const Eigen::Index grow = std::max<Eigen::Index>(8, active.cols() / 2);
      if (locked.cols() + active.cols() + grow >= n / 2) {
        if (n <= kDenseLimit) return dense_fallback();
        SpectralSlice partial = assemble(op, locked_values, locked, cut, true);
        throw ConvergenceError("eig_low: subspace would exceed half the graph; lower the cut", partial);
      }
      widen(grow);
      trusted = active.cols();
      continue;
    }

    // Degree so that the filter separates the cut from [a, 2] by ~1e6.
    const double x_cut = (upper + a - 2.0 * cut) / (upper - a);
    const double rho = x_cut + std::sqrt(std::max(0.0, x_cut * x_cut - 1.0));
    int degree = rho > 1.0 ? static_cast<int>(std::ceil(std::log(1e6) / std::log(rho))) : options.max_degree;
    degree = std::clamp(degree, 8, std::max(8, options.max_degree));

    Eigen::MatrixXd filtered = chebyshev_filter(op, ritz.vectors, degree, a, upper);
    deflate(filtered, locked);
    active = orthonormalize(filtered);
    deflate(active, locked);
    active = orthonormalize(active);
    ritz = rayleigh_ritz(op, active);
    trusted = active.cols();

    // Lock the converged ascending prefix.
    Eigen::Index converged = 0;
    while (converged < ritz.values.size() && ritz.residuals[converged] <= options.tol) ++converged;
    for (Eigen::Index i = 0; i < converged; ++i) lock(ritz.vectors.col(i), ritz.values[i]);
    if (count_locked_above() >= extra) {
      ++iteration;
      break;
    }
    if (converged > 0) {
      const Eigen::Index keep = ritz.values.size() - converged;
      Eigen::MatrixXd rest = ritz.vectors.rightCols(keep);
      ritz.vectors = rest;
      trusted = keep;
      widen(converged);
    }
  }

  if (count_locked_above() < extra) {
    SpectralSlice partial = assemble(op, locked_values, locked, cut, true);
    partial.solver = "chebyshev-subspace";
    partial.seed = options.seed;
    partial.iterations = iteration;
    partial.coverage = 0.0;
    throw ConvergenceError("eig_low: not converged after " + std::to_string(iteration) + " iterations; " +
                               std::to_string(locked_values.size()) + " pairs locked",
                           partial);
  }
  SpectralSlice s = assemble(op, locked_values, locked, cut, false);
  s.solver = "chebyshev-subspace";
  s.seed = options.seed;
  s.iterations = iteration;
  return s;
}

GftCoefficients gft(const SpectralSlice& slice, const Eigen::VectorXd& signal) {
  if (signal.size() != slice.dimension()) throw ArgumentError("gft: signal length does not match N");
  return {slice.vectors.transpose() * signal};
}

std::int64_t count_below(const SpectralSlice& slice, double lambda) {
  if (!slice.full && lambda > slice.coverage) {
    throw ArgumentError("count_below: lambda " + std::to_string(lambda) + " exceeds certified coverage " +
                        std::to_string(slice.coverage));
  }
  return std::upper_bound(slice.values.begin(), slice.values.end(), lambda) - slice.values.begin();
}

std::vector<double> residual_norms(const LaplacianOperator& op, const SpectralSlice& slice) {
  std::vector<double> out(static_cast<std::size_t>(slice.size()));
  for (std::int64_t i = 0; i < slice.size(); ++i) {
    const Eigen::VectorXd u = slice.vectors.col(i);
    out[i] = (op.apply(u) - slice.values[i] * u).norm();
  }
  return out;
}

// SPEC1 layout (little-endian):
//   "SPEC1" | u32 meta length | meta | u8 full | f64 coverage | u64 seed
//   | i32 iterations | u32 solver length | solver | i64 N | i64 K
//   | f64 values[K] | f64 residuals[K] | f64 vectors[N*K] column-major
void write_spectrum(const std::string& path, const SpectralSlice& slice, const std::string& meta) {
  binio::Writer w(path);
  w.bytes("SPEC1", 5);
  w.string(meta);
  w.put<std::uint8_t>(slice.full ? 1 : 0);
  w.put<double>(slice.coverage);
  w.put<std::uint64_t>(slice.seed);
  w.put<std::int32_t>(slice.iterations);
  w.string(slice.solver);
  w.put<std::int64_t>(slice.dimension());
  w.put<std::int64_t>(slice.size());
  w.array(std::span<const double>(slice.values));
  w.array(std::span<const double>(slice.residuals));
  w.array(std::span<const double>(slice.vectors.data(), static_cast<std::size_t>(slice.vectors.size())));
  w.finish();
}

SpectralSlice read_spectrum(const std::string& path, std::string* meta) {
  binio::Reader r(path);
  r.expect_magic("SPEC1");
  auto m = r.string();
  if (meta) *meta = std::move(m);
  SpectralSlice s;
  s.full = r.get<std::uint8_t>() != 0;
  s.coverage = r.get<double>();
  s.seed = r.get<std::uint64_t>();
  s.iterations = r.get<std::int32_t>();
  s.solver = r.string();
  const auto n = r.get<std::int64_t>();
  const auto k = r.get<std::int64_t>();
  if (n < 0 || k < 0 || k > n) throw FormatError(path + ": bad SPEC1 dimensions");
  s.values = r.array<double>(static_cast<std::size_t>(k));
  s.residuals = r.array<double>(static_cast<std::size_t>(k));
  s.vectors.resize(n, k);
  r.bytes(s.vectors.data(), static_cast<std::size_t>(n * k) * sizeof(double));
  return s;
}

void write_eigenvalue_csv(const std::string& path, const SpectralSlice& slice, const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(17);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "index,lambda,count,fraction,residual\n";
  const double n = double(slice.dimension());
  for (std::int64_t i = 0; i < slice.size(); ++i) {
    const auto c = count_below(slice, slice.values[i]);
    out << i + 1 << ',' << slice.values[i] << ',' << c << ',' << double(c) / n << ',' << slice.residuals[i] << '\n';
  }
  if (!out) throw Error("write failed: " + path);
}

}  // namespace chc
