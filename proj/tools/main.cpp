// chc: command-line pipeline for cortical graph construction, low-end
// spectra, spectral kernels and ensemble energy metrics.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cli_support.hpp"

#include "chc/energy.hpp"
#include "chc/error.hpp"
#include "chc/experiment.hpp"
#include "chc/frame.hpp"
#include "chc/graph.hpp"
#include "chc/spectral.hpp"
#include "chc/surface.hpp"
#include "chc/volume.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace chc::cli {
namespace {

std::string prepare_out(const std::string& dir) {
  Stage s("output");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

Point3 spacing_triple(const std::vector<double>& v) {
  if (v.size() == 1) return Point3::Constant(v[0]);
  if (v.size() == 3) return Point3(v[0], v[1], v[2]);
  throw ArgumentError("spacing takes one or three values");
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const auto& m : parts) {
    const auto base = static_cast<std::int32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (auto t : m.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return out;
}

// ---------------------------------------------------------------- build-graph

struct BuildGraphArgs {
  std::string mask, out;
  std::vector<std::string> surfaces;
  std::vector<int> labels;
  std::vector<double> spacing;
};

void run_build_graph(const BuildGraphArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  json report;
  prov.stamp(report);
  json warnings = json::array();

  BinaryMask mask;
  {
    Stage s("mask");
    if (!a.labels.empty()) {
      const auto grids = load_nifti(a.mask);
      mask = select_labels(grids.front(), a.labels);
    } else {
      mask = load_mask(a.mask);
    }
    if (mask.count() == 0) throw DataError("mask " + a.mask + " has no set voxels");
    report["mask_voxels"] = mask.count();
  }
  if (!a.spacing.empty()) {
    Stage s("resample");
    mask = resample_mask(mask, spacing_triple(a.spacing));
    report["resampled_voxels"] = mask.count();
  }
  {
    Stage s("connectivity");
    mask = enforce_6connectivity(mask);
    if (mask.count() == 0) throw DataError("no voxel has a face neighbour");
    report["connected_voxels"] = mask.count();
  }
  VoxelGraph graph;
  {
    Stage s("graph");
    graph = build_graph(mask);
  }
  PruneReport pr;
  pr.edges_before = graph.adjacency.edge_count();
  if (a.surfaces.empty()) {
    const std::string msg = "no surface given, pruning skipped";
    warn(msg);
    warnings.push_back(msg);
    pr.components_before = pr.components_after = std::int64_t(connected_components(graph).sizes.size());
  } else {
    std::vector<TriangleMesh> meshes;
    {
      Stage s("surface");
      for (const auto& path : a.surfaces) {
        auto loaded = load_surface(path);
        if (loaded.degenerate_dropped > 0) {
          const auto msg = path + ": dropped " + std::to_string(loaded.degenerate_dropped) + " degenerate triangles";
          warn(msg);
          warnings.push_back(msg);
        }
        meshes.push_back(std::move(loaded.mesh));
      }
    }
    Stage s("prune");
    const MeshIndex index(merge_meshes(meshes));
    auto result = prune_graph(graph, index);
    pr = std::move(result.report);
    graph = std::move(result.graph);
    write_pruned_edges_csv(join(out, "pruned_edges.csv"), mask.geometry, pr, prov.comment());
  }
  {
    Stage s("component");
    const auto before = graph.size();
    graph = largest_component(graph);
    report["vertices_outside_largest_component"] = before - graph.size();
  }
  {
    Stage s("write");
    write_graph(join(out, "graph.chcg"), graph, prov.meta());
  }
  report["edges_before"] = pr.edges_before;
  report["edges_removed"] = pr.edges_removed;
  report["vertices_removed"] = pr.vertices_removed;
  report["components_before"] = pr.components_before;
  report["components_after"] = pr.components_after;
  report["pruning_skipped"] = a.surfaces.empty();
  report["vertices"] = graph.size();
  report["edges"] = graph.adjacency.edge_count();
  report["warnings"] = warnings;
  write_json(join(out, "prune_report.json"), report);
  std::cout << "graph: N=" << graph.size() << " |E|=" << graph.adjacency.edge_count()
            << " pruned=" << pr.edges_removed << '\n';
}

// ---------------------------------------------------------------------- eigs

struct EigsArgs {
  std::string graph, out;
  double cut = 0.1;
  double tol = 1e-8;
  std::uint64_t seed = 20190101;
  int max_iterations = 400;
};

void run_eigs(const EigsArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  VoxelGraph graph;
  {
    Stage s("graph");
    graph = read_graph(a.graph);
  }
  SpectralSlice slice;
  {
    Stage s("solve");
    const LaplacianOperator op = laplacian(graph);
    if (!(a.cut > 0.0)) throw ArgumentError("cut must be positive");
    if (a.cut >= 2.0) {
      if (graph.size() > kDenseLimit) {
        throw ArgumentError("cut >= 2 asks for the whole spectrum, but N = " + std::to_string(graph.size()) +
                            " exceeds the dense limit of " + std::to_string(kDenseLimit) +
                            "; use a cut below 2, or the kernels/energy coarse path for the upper spectrum");
      }
      slice = eig_dense(op);
    } else {
      EigLowOptions opt;
      opt.tol = a.tol;
      opt.seed = a.seed;
      opt.max_iterations = a.max_iterations;
      slice = eig_low(op, a.cut, opt);
    }
  }
  Stage s("write");
  write_spectrum(join(out, "spectrum.spec"), slice, prov.meta());
  write_eigenvalue_csv(join(out, "eigenvalues.csv"), slice, prov.comment());
  json summary;
  prov.stamp(summary);
  summary["vertices"] = graph.size();
  summary["pairs"] = slice.size();
  summary["cut"] = a.cut;
  summary["coverage"] = slice.coverage;
  summary["full"] = slice.full;
  summary["solver"] = slice.solver;
  summary["seed"] = slice.seed;
  summary["iterations"] = slice.iterations;
  summary["count_at_cut"] = count_below(slice, std::min(a.cut, slice.coverage));
  summary["max_residual"] = slice.residuals.empty() ? 0.0 : *std::max_element(slice.residuals.begin(), slice.residuals.end());
  write_json(join(out, "eigs.json"), summary);
  std::cout << "eigs: " << slice.size() << " pairs with lambda <= " << slice.coverage << " (" << slice.solver << ")\n";
}

// ------------------------------------------------------------------- kernels

struct KernelsArgs {
  std::string out;
  int count = 57;
  double transition = 0.1;
  double ratio = 10.0;
  double joint_tol = 0.01;
  int max_degree = 3000;
  int points = 2001;
  bool no_fit = false;
};

void run_kernels(const KernelsArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  KernelSystem system;
  {
    Stage s("design");
    system = design_system(a.count, a.transition, a.ratio, 2.0);
  }
  if (a.no_fit) {
    Stage s("write");
    write_kernel_csv(join(out, "kernels.csv"), system, nullptr, a.points, prov.comment());
    std::cout << "kernels: J=" << system.count() << " (exact only)\n";
    return;
  }
  FilterBank bank;
  {
    Stage s("fit");
    FitOptions opt;
    opt.joint_tol = a.joint_tol;
    opt.max_degree = a.max_degree;
    bank = chebyshev_fit(system, opt);
  }
  Stage s("write");
  write_kernel_csv(join(out, "kernels.csv"), system, &bank, a.points, prov.comment());
  write_bank_json(join(out, "chebyshev.json"), system, bank, prov.comment());
  std::ofstream deg(join(out, "degrees.csv"));
  if (!deg) throw Error("cannot open degrees.csv for writing");
  deg.precision(17);
  deg << "# " << prov.comment() << "\nindex,center,degree,fit_error,budget\n";
  double mean = 0.0;
  for (int j = 0; j < bank.count(); ++j) {
    deg << j + 1 << ',' << bank.centers[j] << ',' << bank.kernels[j].degree() << ',' << bank.kernels[j].fit_error
        << ',' << a.joint_tol / (2.0 * bank.count()) << '\n';
    mean += bank.kernels[j].degree();
  }
  std::cout << "kernels: J=" << bank.count() << " mean degree " << mean / bank.count()
            << " joint deviation " << bank.joint_deviation << '\n';
}

// -------------------------------------------------------------------- filter

std::vector<double> read_signal_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::vector<double> v;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto field = line.substr(line.find_last_of(',') == std::string::npos ? 0 : line.find_last_of(',') + 1);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(field, &used));
    } catch (const std::exception&) {
      if (first) {
        first = false;
        continue;
      }
      throw FormatError(path + ": non-numeric value '" + field + "'");
    }
    first = false;
  }
  return v;
}

Eigen::VectorXd load_graph_signal(const std::string& path, const VoxelGraph& graph) {
  const bool csv = fs::path(path).extension() == ".csv" || fs::path(path).extension() == ".txt";
  std::vector<double> values;
  if (csv) {
    values = read_signal_csv(path);
  } else {
    const auto grids = load_nifti(path);
    values = sample_signal(grids.front(), graph.geometry, graph.vertex_to_voxel).values;
  }
  if (std::int64_t(values.size()) != graph.size()) {
    throw DataError(path + ": signal has " + std::to_string(values.size()) + " values, graph has " +
                    std::to_string(graph.size()) + " vertices");
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
}

struct FilterArgs {
  std::string graph, bank, signal, out;
  int kernel = 0;
};

void run_filter(const FilterArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  VoxelGraph graph;
  FilterBank bank;
  Eigen::VectorXd f;
  {
    Stage s("graph");
    graph = read_graph(a.graph);
  }
  {
    Stage s("bank");
    bank = read_bank_json(a.bank);
  }
  {
    Stage s("signal");
    f = load_graph_signal(a.signal, graph);
  }
  if (a.kernel < 0 || a.kernel > bank.count()) {
    throw ArgumentError("kernel index must lie in 1.." + std::to_string(bank.count()) + " (0 for energies only)");
  }
  const LaplacianOperator op = laplacian(graph);
  std::vector<double> energies;
  Eigen::VectorXd filtered;
  {
    Stage s("filter");
    energies = apply_bank(op, bank, f);
    if (a.kernel > 0) filtered = apply_filter(op, bank.kernels[a.kernel - 1], f);
  }
  Stage s("write");
  {
    std::ofstream csv(join(out, "band_energies.csv"));
    if (!csv) throw Error("cannot open band_energies.csv for writing");
    csv.precision(17);
    csv << "# " << prov.comment() << "\nindex,center,energy,fraction\n";
    const double total = f.squaredNorm();
    for (int j = 0; j < bank.count(); ++j) {
      csv << j + 1 << ',' << bank.centers[j] << ',' << energies[j] << ',' << (total > 0 ? energies[j] / total : 0.0)
          << '\n';
    }
  }
  if (a.kernel > 0) {
    std::ofstream csv(join(out, "filtered.csv"));
    if (!csv) throw Error("cannot open filtered.csv for writing");
    csv.precision(17);
    csv << "# " << prov.comment() << "\nvertex,i,j,k,value\n";
    VoxelGrid volume(graph.geometry, 0.0);
    for (std::int64_t v = 0; v < graph.size(); ++v) {
      const auto ijk = graph.geometry.lattice_index(graph.vertex_to_voxel[v]);
      csv << v << ',' << ijk[0] << ',' << ijk[1] << ',' << ijk[2] << ',' << filtered[v] << '\n';
      volume.data[graph.vertex_to_voxel[v]] = filtered[v];
    }
    write_nifti(join(out, "filtered.nii.gz"), std::span<const VoxelGrid>(&volume, 1), NiftiType::float32, 0.0,
                prov.comment());
  }
  std::cout << "filter: " << bank.count() << " band energies" << (a.kernel > 0 ? " + filtered signal" : "") << '\n';
}

// -------------------------------------------------------------------- energy

struct EnergyArgs {
  std::string graph, spectrum, bank, func, subjects, out, synthetic, subject = "subject";
  std::vector<std::string> evs;
  std::vector<double> band{0.0, 0.1};
  double tr = 0.0;
  double threshold = 0.8;
  double lambda = 0.1;
  int signals = 20;
  int conditions = 2;
  std::int64_t mode = 2;
  std::uint64_t seed = 1;
};

struct SubjectInput {
  std::string name, graph, spectrum, func;
  double tr = 0.0;
  std::vector<std::string> evs;
};

struct SubjectResult {
  std::string name;
  std::int64_t vertices = 0;
  std::int64_t count_at_lambda = -1;
  std::vector<EnergyProfile> conditions, tasks, coarse_conditions, coarse_tasks;
  std::vector<std::string> agreement;  // preformatted CSV rows
};

std::vector<SubjectInput> read_subjects(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  std::vector<SubjectInput> out;
  try {
    const auto doc = json::parse(in);
    const auto& list = doc.is_object() ? doc.at("subjects") : doc;
    for (const auto& s : list) {
      SubjectInput si;
      si.name = s.at("name").get<std::string>();
      si.graph = s.at("graph").get<std::string>();
      si.spectrum = s.at("spectrum").get<std::string>();
      si.func = s.value("func", std::string{});
      si.tr = s.value("tr", 0.0);
      si.evs = s.value("ev", std::vector<std::string>{});
      out.push_back(std::move(si));
    }
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (out.empty()) throw DataError(path + ": no subjects");
  return out;
}

// TASK:CONDITION:PATH
std::tuple<std::string, std::string, std::string> split_ev(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (b == std::string::npos) throw ArgumentError("--ev expects TASK:CONDITION:PATH, got '" + spec + "'");
  return {spec.substr(0, a), spec.substr(a + 1, b - a - 1), spec.substr(b + 1)};
}

AssembledSets synthetic_sets(const EnergyArgs& a, const SpectralSlice& slice, const Eigen::VectorXd& u1,
                             std::int64_t n) {
  AssembledSets sets;
  GraphSignalSet task;
  for (int c = 0; c < a.conditions; ++c) {
    GraphSignalSet set;
    set.name = "cond" + std::to_string(c + 1);
    for (int s = 0; s < a.signals; ++s) {
      const std::uint64_t seed = a.seed + 1000003ull * std::uint64_t(c) + std::uint64_t(s);
      Eigen::VectorXd f;
      if (a.synthetic == "white") {
        f = white_noise_signal(n, seed);
      } else if (a.synthetic == "band") {
        if (a.band.size() != 2) throw ArgumentError("--band takes two values");
        f = band_limited_signal(slice, a.band[0], a.band[1], seed);
      } else if (a.synthetic == "eigenmode") {
        f = eigenmode_signal(slice, a.mode);
      } else {
        throw ArgumentError("--synthetic must be white, band or eigenmode");
      }
      set.signals.push_back(f);
      set.labels.push_back(set.name + "/" + std::to_string(s));
    }
    sets.conditions.push_back(normalize_set(std::move(set), u1));
  }
  std::vector<const GraphSignalSet*> parts;
  for (const auto& c : sets.conditions) parts.push_back(&c);
  sets.tasks.push_back(union_sets("synthetic", parts));
  return sets;
}

SubjectResult run_subject(const EnergyArgs& a, const SubjectInput& in, const FilterBank* bank,
                          const KernelSystem* system) {
  SubjectResult r;
  r.name = in.name;
  VoxelGraph graph;
  SpectralSlice slice;
  {
    Stage s("graph");
    graph = read_graph(in.graph);
  }
  {
    Stage s("spectrum");
    slice = read_spectrum(in.spectrum);
    if (slice.dimension() != graph.size()) {
      throw DataError(in.spectrum + " was computed for N = " + std::to_string(slice.dimension()) + ", graph has " +
                      std::to_string(graph.size()));
    }
  }
  r.vertices = graph.size();
  if (slice.full || a.lambda <= slice.coverage) r.count_at_lambda = count_below(slice, a.lambda);
  const Eigen::VectorXd u1 = slice.vectors.col(0);

  AssembledSets sets;
  if (!a.synthetic.empty()) {
    Stage s("signals");
    sets = synthetic_sets(a, slice, u1, graph.size());
  } else {
    std::vector<VoxelGrid> frames;
    double tr = in.tr;
    {
      Stage s("functional");
      if (in.func.empty()) throw ArgumentError("subject " + in.name + ": give --func or --synthetic");
      frames = load_nifti(in.func);
      if (tr <= 0.0) tr = nifti_repetition_time(in.func);
      if (tr <= 0.0) throw DataError(in.func + ": no repetition time in the header; pass --tr");
    }
    std::vector<FrameSelection> selections;
    {
      Stage s("paradigm");
      if (in.evs.empty()) throw ArgumentError("subject " + in.name + ": no --ev paradigm files");
      for (const auto& spec : in.evs) {
        const auto [task, condition, path] = split_ev(spec);
        const auto p = read_paradigm(path, condition, tr, int(frames.size()));
        selections.push_back({condition, task, select_frames(build_regressor(p), a.threshold)});
        if (selections.back().frames.empty()) warn(in.name + "/" + condition + ": no frame reaches the threshold");
      }
    }
    Stage s("assemble");
    std::vector<FrameSelection> nonempty;
    for (auto& sel : selections) {
      if (!sel.frames.empty()) nonempty.push_back(sel);
    }
    sets = assemble_sets(frames, graph, nonempty, u1, in.name);
  }

  Stage s("energy");
  std::vector<double> abscissae = slice.values;
  abscissae.erase(std::unique(abscissae.begin(), abscissae.end()), abscissae.end());
  auto label = [&](EnergyProfile p) {
    if (p.set_name.rfind(in.name + "/", 0) != 0) p.set_name = in.name + "/" + p.set_name;
    return p;
  };
  std::unique_ptr<LaplacianOperator> op;
  if (bank) op = std::make_unique<LaplacianOperator>(laplacian(graph));
  for (auto* group : {&sets.conditions, &sets.tasks}) {
    const bool is_task = group == &sets.tasks;
    for (const auto& set : *group) {
      auto exact = label(energy_profile_exact(set, slice, abscissae));
      (is_task ? r.tasks : r.conditions).push_back(exact);
      if (!bank) continue;
      auto coarse = label(ensemble_energy_coarse(set, *bank, *op));
      (is_task ? r.coarse_tasks : r.coarse_conditions).push_back(coarse);
      if (!slice.full) continue;
      const auto ideal = ensemble_energy_ideal(set, slice, *system, bank->centers);
      for (int j = 0; j < bank->count(); ++j) {
        const double diff = std::abs(coarse.energies[j] - ideal.energies[j]);
        std::ostringstream row;
        row.precision(17);
        row << coarse.set_name << ',' << j + 1 << ',' << bank->centers[j] << ',' << coarse.energies[j] << ','
            << ideal.energies[j] << ',' << diff << ',' << bank->joint_tol << ',' << (diff <= bank->joint_tol ? 1 : 0);
        r.agreement.push_back(row.str());
      }
    }
  }
  return r;
}

void run_energy(const EnergyArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  std::vector<SubjectInput> subjects;
  if (!a.subjects.empty()) {
    Stage s("subjects");
    subjects = read_subjects(a.subjects);
  } else {
    if (a.graph.empty() || a.spectrum.empty()) throw ArgumentError("energy needs --graph and --spectrum (or --subjects)");
    subjects.push_back({a.subject, a.graph, a.spectrum, a.func, a.tr, a.evs});
  }
  std::optional<FilterBank> bank;
  std::optional<KernelSystem> system;
  if (!a.bank.empty()) {
    Stage s("bank");
    bank = read_bank_json(a.bank);
    std::ifstream in(a.bank);
    const auto doc = json::parse(in);
    system.emplace(doc.at("count").get<int>(), doc.at("transition").get<double>(), doc.at("ratio").get<double>(),
                   doc.at("lambda_end").get<double>());
  }

  std::vector<SubjectResult> results;
  for (const auto& subject : subjects) {
    results.push_back(run_subject(a, subject, bank ? &*bank : nullptr, system ? &*system : nullptr));
  }

  Stage s("write");
  std::vector<EnergyProfile> conds, tasks;
  for (const auto& r : results) {
    conds.insert(conds.end(), r.conditions.begin(), r.conditions.end());
    conds.insert(conds.end(), r.coarse_conditions.begin(), r.coarse_conditions.end());
    tasks.insert(tasks.end(), r.tasks.begin(), r.tasks.end());
    tasks.insert(tasks.end(), r.coarse_tasks.begin(), r.coarse_tasks.end());
  }
  write_profiles_csv(join(out, "profiles_conditions.csv"), conds, prov.comment());
  write_profiles_csv(join(out, "profiles_tasks.csv"), tasks, prov.comment());

  std::ofstream summary(join(out, "summary.csv"));
  if (!summary) throw Error("cannot open summary.csv for writing");
  summary.precision(17);
  summary << "# " << prov.comment() << "\nsubject,set,kind,size,vertices,lambda,count_at_lambda,energy_at_lambda\n";
  for (const auto& r : results) {
    for (const auto* group : {&r.conditions, &r.tasks}) {
      for (const auto& p : *group) {
        summary << r.name << ',' << p.set_name << ',' << (group == &r.tasks ? "task" : "condition") << ','
                << p.set_size << ',' << r.vertices << ',' << a.lambda << ',';
        if (r.count_at_lambda >= 0) {
          // Exact profiles are step functions sampled at the eigenvalues.
          double e = 0.0;
          for (std::size_t i = 0; i < p.abscissae.size() && p.abscissae[i] <= a.lambda; ++i) e = p.energies[i];
          summary << r.count_at_lambda << ',' << e << '\n';
        } else {
          summary << ",\n";
        }
      }
    }
  }

  bool any_agreement = false;
  for (const auto& r : results) any_agreement = any_agreement || !r.agreement.empty();
  if (any_agreement) {
    std::ofstream agree(join(out, "agreement.csv"));
    if (!agree) throw Error("cannot open agreement.csv for writing");
    agree << "# " << prov.comment() << "\nset,index,center,coarse,ideal,abs_diff,tolerance,within\n";
    for (const auto& r : results) {
      for (const auto& row : r.agreement) agree << row << '\n';
    }
  }

  std::vector<double> sizes, counts;
  for (const auto& r : results) {
    if (r.count_at_lambda < 0) continue;
    sizes.push_back(double(r.vertices));
    counts.push_back(double(r.count_at_lambda));
  }
  if (sizes.size() >= 4) {
    const auto c = pearson_ci(sizes, counts);
    json doc;
    prov.stamp(doc);
    doc["x"] = "vertices";
    doc["y"] = "count_at_lambda";
    doc["lambda"] = a.lambda;
    doc["r"] = c.r;
    doc["ci_low"] = c.ci_low;
    doc["ci_high"] = c.ci_high;
    doc["n"] = c.n;
    write_json(join(out, "correlation.json"), doc);
  } else if (subjects.size() > 1) {
    warn("fewer than 4 subjects cover lambda; correlation skipped");
  }
  std::cout << "energy: " << results.size() << " subject(s)\n";
}

// ------------------------------------------------------------------- phantom

struct PhantomArgs {
  std::string kind = "sheet", out;
  std::uint64_t seed = 1;
  int gap = 0;
  double radius = 9.0, thickness = 2.0;
  int size = 14;
  int frames = 0;
  double tr = 0.72;
};

void write_phantom_frames(const PhantomArgs& a, const BinaryMask& mask, const std::string& out,
                          const Provenance& prov) {
  // Two alternating 20 s blocks; each condition adds a smooth spatial pattern
  // scaled by its regressor on top of white noise.
  const double block = 20.0;
  std::vector<Paradigm> paradigms(2);
  for (int c = 0; c < 2; ++c) {
    paradigms[c].condition = c == 0 ? "cond_a" : "cond_b";
    paradigms[c].tr = a.tr;
    paradigms[c].n_frames = a.frames;
    for (double t = c * block; t + block <= a.frames * a.tr; t += 2 * block) {
      paradigms[c].onsets.push_back(t);
      paradigms[c].durations.push_back(block);
    }
    std::ofstream ev(join(out, paradigms[c].condition + ".csv"));
    if (!ev) throw Error("cannot write paradigm file");
    ev << "# " << prov.comment() << "\nonset,duration\n";
    for (std::size_t e = 0; e < paradigms[c].onsets.size(); ++e) {
      ev << paradigms[c].onsets[e] << ',' << paradigms[c].durations[e] << '\n';
    }
  }
  const auto r0 = build_regressor(paradigms[0]), r1 = build_regressor(paradigms[1]);
  const auto& g = mask.geometry;
  std::vector<VoxelGrid> frames;
  for (int t = 0; t < a.frames; ++t) {
    VoxelGrid frame(g, 0.0);
    const auto noise = white_noise_signal(g.voxel_count(), a.seed + 7919ull * std::uint64_t(t + 1));
    for (std::int64_t v = 0; v < g.voxel_count(); ++v) {
      const auto ijk = g.lattice_index(v);
      const double x = double(ijk[0]) / g.dims()[0], y = double(ijk[1]) / g.dims()[1];
      frame.data[v] = 100.0 + 0.5 * noise[v] + 2.0 * r0[t] * std::cos(3.14159 * x) + 2.0 * r1[t] * std::sin(3.14159 * y);
    }
    frames.push_back(std::move(frame));
  }
  write_nifti(join(out, "func.nii.gz"), frames, NiftiType::float32, a.tr, prov.comment());
}

void run_phantom(const PhantomArgs& a, const Provenance& prov) {
  const auto out = prepare_out(a.out);
  Phantom ph;
  {
    Stage s("phantom");
    if (a.kind == "sheet") {
      ph = make_folded_sheet(random_sheet_options(a.seed, a.gap));
    } else if (a.kind == "shell") {
      ph.mask = make_shell(a.radius, a.thickness);
    } else if (a.kind == "ring") {
      ph.mask = make_ring();
    } else if (a.kind == "blob") {
      ph.mask = make_blob(a.seed, a.size);
    } else {
      throw ArgumentError("--kind must be sheet, shell, ring or blob");
    }
  }
  Stage s("write");
  write_nifti(join(out, "mask.nii.gz"), ph.mask, prov.comment());
  json doc;
  prov.stamp(doc);
  doc["kind"] = a.kind;
  doc["voxels"] = ph.mask.count();
  if (ph.has_surface) {
    write_freesurfer_surface(join(out, "surface.surf"), ph.surface, prov.comment());
    doc["expected_edges_removed"] = ph.expected_removed.size();
    doc["expected_components"] = ph.expected_components;
    std::ofstream csv(join(out, "expected_removed.csv"));
    if (!csv) throw Error("cannot write expected_removed.csv");
    csv << "# " << prov.comment() << "\nvoxel_a,voxel_b\n";
    for (const auto& e : ph.expected_removed) csv << e.voxel_a << ',' << e.voxel_b << '\n';
  }
  if (a.frames > 0) {
    write_phantom_frames(a, ph.mask, out, prov);
    doc["frames"] = a.frames;
    doc["tr"] = a.tr;
  }
  write_json(join(out, "phantom.json"), doc);
  std::cout << "phantom: " << a.kind << " with " << ph.mask.count() << " voxels\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ArgumentError*>(&e)) return 1;
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  return 2;
}

}  // namespace
}  // namespace chc::cli

int main(int argc, char** argv) {
  using namespace chc::cli;
  CLI::App app{"Cortical graph spectral analysis pipeline", kToolName};
  app.set_version_flag("--version", std::string(kToolName) + " " + kVersion);
  app.require_subcommand(1);
  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config; command-line flags take precedence")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "worker threads (default: CHC_THREADS or all cores)");

  BuildGraphArgs bg;
  auto* cmd_bg = app.add_subcommand("build-graph", "mask + surface -> pruned CHC graph");
  cmd_bg->add_option("--mask", bg.mask, "ribbon mask (NIfTI or VOXG1)");
  cmd_bg->add_option("--surface", bg.surfaces, "pial surface(s), FreeSurfer or OFF");
  cmd_bg->add_option("--labels", bg.labels, "label values to keep from a label volume");
  cmd_bg->add_option("--spacing", bg.spacing, "target voxel spacing in mm (1 or 3 values)");
  cmd_bg->add_option("--out", bg.out, "output directory");

  EigsArgs eg;
  auto* cmd_eigs = app.add_subcommand("eigs", "eigenpairs of the normalized Laplacian below a cut");
  cmd_eigs->add_option("--graph", eg.graph, "CHCG1 graph");
  cmd_eigs->add_option("--cut", eg.cut, "largest eigenvalue wanted")->capture_default_str();
  cmd_eigs->add_option("--tol", eg.tol, "residual tolerance")->capture_default_str();
  cmd_eigs->add_option("--seed", eg.seed, "starting block seed")->capture_default_str();
  cmd_eigs->add_option("--max-iterations", eg.max_iterations, "outer iteration cap")->capture_default_str();
  cmd_eigs->add_option("--out", eg.out, "output directory");

  KernelsArgs kg;
  auto* cmd_k = app.add_subcommand("kernels", "design the kernel system and fit Chebyshev polynomials");
  cmd_k->add_option("--count", kg.count, "number of kernels J")->capture_default_str();
  cmd_k->add_option("--transition", kg.transition, "narrow/wide band transition")->capture_default_str();
  cmd_k->add_option("--ratio", kg.ratio, "wide/narrow bandwidth ratio")->capture_default_str();
  cmd_k->add_option("--joint-tol", kg.joint_tol, "tolerance on |sum p_j^2 - 1|")->capture_default_str();
  cmd_k->add_option("--max-degree", kg.max_degree, "Chebyshev degree cap")->capture_default_str();
  cmd_k->add_option("--points", kg.points, "lambda grid points in kernels.csv")->capture_default_str();
  cmd_k->add_flag("--no-fit", kg.no_fit, "write the exact kernels only");
  cmd_k->add_option("--out", kg.out, "output directory");

  FilterArgs fg;
  auto* cmd_f = app.add_subcommand("filter", "apply the fitted bank to a graph signal");
  cmd_f->add_option("--graph", fg.graph, "CHCG1 graph");
  cmd_f->add_option("--bank", fg.bank, "chebyshev.json from 'kernels'");
  cmd_f->add_option("--signal", fg.signal, "CSV (one value per vertex) or NIfTI volume");
  cmd_f->add_option("--kernel", fg.kernel, "kernel to apply, 1-based; 0 writes band energies only")->capture_default_str();
  cmd_f->add_option("--out", fg.out, "output directory");

  EnergyArgs en;
  auto* cmd_e = app.add_subcommand("energy", "ensemble spectral energy per condition and task");
  cmd_e->add_option("--graph", en.graph, "CHCG1 graph");
  cmd_e->add_option("--spectrum", en.spectrum, "SPEC1 spectrum of the graph");
  cmd_e->add_option("--bank", en.bank, "chebyshev.json; enables the coarse profiles");
  cmd_e->add_option("--func", en.func, "4-D functional NIfTI");
  cmd_e->add_option("--tr", en.tr, "repetition time in s (default: from the header)")->capture_default_str();
  cmd_e->add_option("--ev", en.evs, "paradigm as TASK:CONDITION:PATH (repeatable)");
  cmd_e->add_option("--threshold", en.threshold, "regressor threshold for frame selection")->capture_default_str();
  cmd_e->add_option("--lambda", en.lambda, "lambda for the summary and correlation")->capture_default_str();
  cmd_e->add_option("--subject", en.subject, "subject name")->capture_default_str();
  cmd_e->add_option("--subjects", en.subjects, "JSON list of subjects (name, graph, spectrum, func, tr, ev)");
  cmd_e->add_option("--synthetic", en.synthetic, "white, band or eigenmode signals instead of fMRI");
  cmd_e->add_option("--signals", en.signals, "synthetic signals per condition")->capture_default_str();
  cmd_e->add_option("--conditions", en.conditions, "synthetic conditions")->capture_default_str();
  cmd_e->add_option("--band", en.band, "band [a b] for band-limited signals")->expected(2)->capture_default_str();
  cmd_e->add_option("--mode", en.mode, "eigenmode index, 1-based")->capture_default_str();
  cmd_e->add_option("--seed", en.seed, "synthetic signal seed")->capture_default_str();
  cmd_e->add_option("--out", en.out, "output directory");

  PhantomArgs pg;
  auto* cmd_p = app.add_subcommand("phantom", "write a synthetic mask/surface (and optional fMRI) phantom");
  cmd_p->add_option("--kind", pg.kind, "sheet, shell, ring or blob")->capture_default_str();
  cmd_p->add_option("--seed", pg.seed, "geometry seed")->capture_default_str();
  cmd_p->add_option("--gap", pg.gap, "empty layers between sheets")->capture_default_str();
  cmd_p->add_option("--radius", pg.radius, "shell radius in voxels")->capture_default_str();
  cmd_p->add_option("--thickness", pg.thickness, "shell thickness in voxels")->capture_default_str();
  cmd_p->add_option("--size", pg.size, "blob box size in voxels")->capture_default_str();
  cmd_p->add_option("--frames", pg.frames, "synthetic fMRI frames (0 for none)")->capture_default_str();
  cmd_p->add_option("--tr", pg.tr, "synthetic repetition time in s")->capture_default_str();
  cmd_p->add_option("--out", pg.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (!config_path.empty()) {
      Stage s("config");
      std::ifstream in(config_path);
      nlohmann::json config;
      try {
        config = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw chc::FormatError(config_path + ": " + e.what());
      }
      apply_json_config(*cmd, config);
    }
    configure_threads(threads);
    std::string out;
    if (auto* o = cmd->get_option_no_throw("--out"); o && o->count() > 0) out = o->as<std::string>();
    if (out.empty()) throw chc::ArgumentError("--out is required");
    const auto prov = Provenance::from(*cmd);

    const auto& name = cmd->get_name();
    if (name == "build-graph") {
      if (bg.mask.empty()) throw chc::ArgumentError("--mask is required");
      run_build_graph(bg, prov);
    } else if (name == "eigs") {
      if (eg.graph.empty()) throw chc::ArgumentError("--graph is required");
      run_eigs(eg, prov);
    } else if (name == "kernels") {
      run_kernels(kg, prov);
    } else if (name == "filter") {
      if (fg.graph.empty() || fg.bank.empty() || fg.signal.empty()) {
        throw chc::ArgumentError("--graph, --bank and --signal are required");
      }
      run_filter(fg, prov);
    } else if (name == "energy") {
      run_energy(en, prov);
    } else if (name == "phantom") {
      run_phantom(pg, prov);
    }
    write_json((std::filesystem::path(out) / (name + ".config.json")).string(),
               nlohmann::json{{"tool", kToolName}, {"version", kVersion}, {"config_hash", prov.hash},
                              {name, prov.config}});
  } catch (const std::exception& e) {
    std::cerr << kToolName << " " << cmd->get_name() << ": stage '" << Stage::current() << "': " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
