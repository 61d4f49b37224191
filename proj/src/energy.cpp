#include "chc/energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "chc/error.hpp"
#include "parallel.hpp"

namespace chc {

namespace {

void require_normalized(const GraphSignalSet& set, const char* who) {
  if (!set.normalized) throw ArgumentError(std::string(who) + ": signal set '" + set.name + "' is not normalized");
  if (set.signals.empty()) throw ArgumentError(std::string(who) + ": signal set '" + set.name + "' is empty");
}

// Mean of per-signal rows in signal order, so the result does not depend on
// how the rows were computed.
std::vector<double> ordered_mean(const std::vector<std::vector<double>>& rows) {
  std::vector<double> mean(rows.front().size(), 0.0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) mean[i] += row[i];
  }
  for (auto& m : mean) m /= double(rows.size());
  return mean;
}

void cumulate(std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) v[i] += v[i - 1];
}

}  // namespace

Eigen::VectorXd normalize_signal(const Eigen::VectorXd& f, const Eigen::VectorXd& u1) {
  if (f.size() != u1.size()) throw ArgumentError("normalize_signal: length mismatch");
  if (!f.allFinite()) throw DataError("normalize_signal: signal has non-finite values");
  Eigen::VectorXd g = f - u1.dot(f) * u1;
  // A second pass removes what rounding left along u1.
  g -= u1.dot(g) * u1;
  const double norm = g.norm();
  if (norm < 1e-12) throw DataError("normalize_signal: degenerate signal (constant along the null vector)");
  return g / norm;
}

GraphSignalSet normalize_set(GraphSignalSet set, const Eigen::VectorXd& u1) {
  const auto n = static_cast<std::int64_t>(set.signals.size());
  detail::parallel_for(n, [&](std::int64_t s) { set.signals[s] = normalize_signal(set.signals[s], u1); });
  set.normalized = true;
  return set;
}

GraphSignalSet union_sets(const std::string& name, const std::vector<const GraphSignalSet*>& sets) {
  GraphSignalSet out;
  out.name = name;
  out.normalized = true;
  for (const auto* s : sets) {
    out.normalized = out.normalized && s->normalized;
    out.signals.insert(out.signals.end(), s->signals.begin(), s->signals.end());
    for (std::size_t i = 0; i < s->size(); ++i) {
      out.labels.push_back(i < s->labels.size() ? s->labels[i] : s->name + ":" + std::to_string(i));
    }
  }
  return out;
}

EnergyProfile energy_profile_exact(const GraphSignalSet& set, const SpectralSlice& slice,
                                   const std::vector<double>& lambdas) {
  require_normalized(set, "ensemble_energy_exact");
  std::vector<std::int64_t> counts;
  counts.reserve(lambdas.size());
  for (double l : lambdas) counts.push_back(count_below(slice, l));

  const auto S = static_cast<std::int64_t>(set.size());
  std::vector<std::vector<double>> rows(S);
  detail::parallel_for(S, [&](std::int64_t s) {
    const Eigen::VectorXd c = gft(slice, set.signals[s]).values;
    std::vector<double> cum(static_cast<std::size_t>(c.size()) + 1, 0.0);
    for (Eigen::Index i = 0; i < c.size(); ++i) cum[i + 1] = cum[i] + c[i] * c[i];
    auto& row = rows[s];
    row.resize(lambdas.size());
    for (std::size_t k = 0; k < lambdas.size(); ++k) row[k] = cum[counts[k]];
  });

  EnergyProfile p;
  p.abscissae = lambdas;
  p.energies = lambdas.empty() ? std::vector<double>{} : ordered_mean(rows);
  p.method = "exact";
  p.set_name = set.name;
  p.set_size = set.size();
  return p;
}

double ensemble_energy_exact(const GraphSignalSet& set, const SpectralSlice& slice, double lambda) {
  return energy_profile_exact(set, slice, {lambda}).energies.front();
}

EnergyProfile ensemble_energy_coarse(const GraphSignalSet& set, const FilterBank& bank, const LaplacianOperator& op) {
  require_normalized(set, "ensemble_energy_coarse");
  const auto S = static_cast<std::int64_t>(set.size());
  std::vector<std::vector<double>> rows(S);
  detail::parallel_for(S, [&](std::int64_t s) { rows[s] = apply_bank(op, bank, set.signals[s]); });

  EnergyProfile p;
  p.abscissae = bank.centers;
  p.energies = ordered_mean(rows);
  cumulate(p.energies);
  p.method = "coarse";
  p.set_name = set.name;
  p.set_size = set.size();
  return p;
}

EnergyProfile ensemble_energy_ideal(const GraphSignalSet& set, const SpectralSlice& slice,
                                    const KernelSystem& system, const std::vector<double>& centers) {
  require_normalized(set, "ensemble_energy_ideal");
  if (!slice.full) throw ArgumentError("ensemble_energy_ideal needs the full spectrum");
  const int J = system.count();
  const auto K = slice.size();
  std::vector<double> response(static_cast<std::size_t>(K * J));
  for (std::int64_t i = 0; i < K; ++i) {
    for (int j = 0; j < J; ++j) {
      const double k = system.kernel(j, slice.values[i]);
      response[i * J + j] = k * k;
    }
  }
  const auto S = static_cast<std::int64_t>(set.size());
  std::vector<std::vector<double>> rows(S);
  detail::parallel_for(S, [&](std::int64_t s) {
    const Eigen::VectorXd c = gft(slice, set.signals[s]).values;
    auto& row = rows[s];
    row.assign(J, 0.0);
    for (std::int64_t i = 0; i < K; ++i) {
      const double e = c[i] * c[i];
      for (int j = 0; j < J; ++j) row[j] += response[i * J + j] * e;
    }
  });
  EnergyProfile p;
  p.abscissae = centers;
  p.energies = ordered_mean(rows);
  cumulate(p.energies);
  p.method = "ideal";
  p.set_name = set.name;
  p.set_size = set.size();
  return p;
}

CorrelationResult pearson_ci(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ArgumentError("pearson_ci: length mismatch");
  const std::size_t n = x.size();
  if (n < 4) throw ArgumentError("pearson_ci: need at least 4 samples, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw ArgumentError("pearson_ci: zero variance");
  CorrelationResult c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.ci_low = c.ci_high = c.r;
    return c;
  }
  const double z = std::atanh(c.r);
  const double half = 1.959963984540054 / std::sqrt(double(n) - 3.0);
  c.ci_low = std::tanh(z - half);
  c.ci_high = std::tanh(z + half);
  return c;
}

void write_profiles_csv(const std::string& path, const std::vector<EnergyProfile>& profiles,
                        const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(17);
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "set,size,method,index,abscissa,energy\n";
  for (const auto& p : profiles) {
    for (std::size_t i = 0; i < p.abscissae.size(); ++i) {
      out << p.set_name << ',' << p.set_size << ',' << p.method << ',' << i + 1 << ',' << p.abscissae[i] << ','
          << p.energies[i] << '\n';
    }
  }
  if (!out) throw Error("write failed: " + path);
}

void write_correlation_json(const std::string& path, const CorrelationResult& result,
                            const std::string& header_comment) {
  nlohmann::json doc;
  if (!header_comment.empty()) doc["comment"] = header_comment;
  doc["r"] = result.r;
  doc["ci_low"] = result.ci_low;
  doc["ci_high"] = result.ci_high;
  doc["n"] = result.n;
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << doc.dump(1) << '\n';
  if (!out) throw Error("write failed: " + path);
}

}  // namespace chc
