#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "chc/energy.hpp"
#include "chc/graph.hpp"
#include "chc/spectral.hpp"
#include "chc/surface.hpp"
#include "chc/volume.hpp"

namespace chc {

// SPM canonical double gamma in seconds: gamma(6, 1) - gamma(16, 1) / 6 on
// [0, 32], zero elsewhere.
double hrf(double t);

inline constexpr double kHrfSupport = 32.0;
inline constexpr double kRegressorStep = 0.1;

struct Paradigm {
  std::string condition;
  std::vector<double> onsets;     // seconds, ascending
  std::vector<double> durations;  // seconds, >= 0
  std::vector<double> amplitudes; // empty means 1 for every event
  double tr = 0.0;
  int n_frames = 0;

  // ArgumentError on a broken invariant.
  void validate() const;
};

// EV file: "onset,duration[,amplitude]" rows (CSV, optional header) or
// whitespace-separated "onset duration amplitude". '#' starts a comment.
Paradigm read_paradigm(const std::string& path, const std::string& condition, double tr, int n_frames);

// Boxcar on a 0.1 s grid, convolved with the HRF, linearly interpolated at
// i * TR and scaled to peak 1. A zero-duration event is a one-sample impulse.
// An empty paradigm gives zeros.
std::vector<double> build_regressor(const Paradigm& paradigm);

// Indices with r[i] >= tau, ascending.
std::vector<std::int64_t> select_frames(const std::vector<double>& regressor, double tau = 0.8);

struct FrameSelection {
  std::string condition;
  std::string task;
  std::vector<std::int64_t> frames;
};

struct AssembledSets {
  std::vector<GraphSignalSet> conditions;  // in selection order
  std::vector<GraphSignalSet> tasks;       // in order of first appearance
};

// Samples every selected frame at the graph's voxel centers and normalizes it.
// Task sets hold the union of their condition frames, each frame once.
AssembledSets assemble_sets(const std::vector<VoxelGrid>& frames, const VoxelGraph& graph,
                            const std::vector<FrameSelection>& selections, const Eigen::VectorXd& u1,
                            const std::string& subject = {});

struct Phantom {
  BinaryMask mask;
  TriangleMesh surface;
  bool has_surface = false;
  std::vector<PrunedEdge> expected_removed;  // sorted by (voxel_a, voxel_b)
  std::int64_t expected_components = 1;      // after pruning and dropping isolated voxels
};

struct SheetOptions {
  int nx = 10, ny = 10;
  int gap = 0;                        // empty voxel layers between the sheets
  Eigen::Vector3d spacing{1.0, 1.0, 1.0};
  Eigen::Vector3d origin{0.0, 0.0, 0.0};
  double plane_offset = 0.0;          // shift of the plane off the midline, in z voxels
  double tilt_x = 0.0, tilt_y = 0.0;  // plane slope, z voxels per x / y voxel
  int plane_cells = 4;                // quads per side of the plane mesh
};

// Two parallel one-voxel sheets with a planar mesh between them. The expected
// removed edges come from the analytic plane/segment test.
Phantom make_folded_sheet(const SheetOptions& options);

// Randomized sheet geometry: spacing, origin, plane offset and tilt drawn from
// the seed, with the plane kept strictly between the sheets.
SheetOptions random_sheet_options(std::uint64_t seed, int gap = 0);

// Spherical shell of voxels whose centers satisfy radius - thickness <= r <= radius.
// ArgumentError unless radius > thickness >= 1.
BinaryMask make_shell(double radius, double thickness, const Eigen::Vector3d& spacing = Eigen::Vector3d::Ones());

// 256-voxel chordless ring in one slice; its 26-graph is the cycle C_256.
BinaryMask make_ring();

// Union of random ellipsoids inside a box, 6-connectivity cleaned.
BinaryMask make_blob(std::uint64_t seed, int size = 16, int ellipsoids = 4);

// u_k, 1-based (u_1 is the null vector). ArgumentError if k exceeds the slice.
Eigen::VectorXd eigenmode_signal(const SpectralSlice& slice, std::int64_t k);
// White noise projected onto the eigenvectors with a <= lambda <= b.
Eigen::VectorXd band_limited_signal(const SpectralSlice& slice, double a, double b, std::uint64_t seed);
// Seeded unit-variance white noise.
Eigen::VectorXd white_noise_signal(std::int64_t n, std::uint64_t seed);

}  // namespace chc
