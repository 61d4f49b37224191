#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "chc/frame.hpp"
#include "chc/graph.hpp"
#include "chc/spectral.hpp"

namespace chc {

struct GraphSignalSet {
  std::string name;
  std::vector<Eigen::VectorXd> signals;
  std::vector<std::string> labels;  // provenance per signal (subject/task/condition/frame)
  bool normalized = false;

  std::size_t size() const { return signals.size(); }
};

// f - (u1'f) u1, scaled to unit 2-norm. DataError if the de-meaned signal
// vanishes (norm < 1e-12).
Eigen::VectorXd normalize_signal(const Eigen::VectorXd& f, const Eigen::VectorXd& u1);
GraphSignalSet normalize_set(GraphSignalSet set, const Eigen::VectorXd& u1);

// Concatenation of several sets; signals keep their labels.
GraphSignalSet union_sets(const std::string& name, const std::vector<const GraphSignalSet*>& sets);

struct EnergyProfile {
  std::vector<double> abscissae;
  std::vector<double> energies;
  std::string method;  // "exact", "coarse" or "ideal"
  std::string set_name;
  std::size_t set_size = 0;
};

// E(F, lambda) = (1/S) sum_s sum_{i <= C(lambda)} |<u_i, f_s>|^2.
double ensemble_energy_exact(const GraphSignalSet& set, const SpectralSlice& slice, double lambda);
EnergyProfile energy_profile_exact(const GraphSignalSet& set, const SpectralSlice& slice,
                                   const std::vector<double>& lambdas);

// E(F, c_j) = (1/S) sum_s sum_{i <= j} ||p_i(L) f_s||^2 over the fitted bank,
// abscissae at the bank centers.
EnergyProfile ensemble_energy_coarse(const GraphSignalSet& set, const FilterBank& bank, const LaplacianOperator& op);

// Cumulative energy through the ideal kernels, evaluated on a full spectrum.
// Reference for the coarse path on small graphs.
EnergyProfile ensemble_energy_ideal(const GraphSignalSet& set, const SpectralSlice& slice,
                                    const KernelSystem& system, const std::vector<double>& centers);

struct CorrelationResult {
  double r = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

// Pearson r with a 95% Fisher-z interval. ArgumentError for n < 4, mismatched
// lengths or zero variance.
CorrelationResult pearson_ci(const std::vector<double>& x, const std::vector<double>& y);

void write_profiles_csv(const std::string& path, const std::vector<EnergyProfile>& profiles,
                        const std::string& header_comment = {});
void write_correlation_json(const std::string& path, const CorrelationResult& result,
                            const std::string& header_comment = {});

}  // namespace chc
