#include "chc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "chc/error.hpp"
#include "chc/random.hpp"
#include "parallel.hpp"

namespace chc {

namespace {

double gamma_pdf(double t, double shape) {
  return std::exp((shape - 1.0) * std::log(t) - t - std::lgamma(shape));
}

bool parse_double(const std::string& s, double& out) {
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == s.size();
}

struct DisjointSets {
  std::vector<std::int64_t> parent;
  explicit DisjointSets(std::int64_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::int64_t find(std::int64_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void join(std::int64_t a, std::int64_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

double hrf(double t) {
  if (t <= 0.0 || t > kHrfSupport) return 0.0;
  return gamma_pdf(t, 6.0) - gamma_pdf(t, 16.0) / 6.0;
}

void Paradigm::validate() const {
  if (!(tr > 0.0) || !std::isfinite(tr)) throw ArgumentError("paradigm '" + condition + "': TR must be positive");
  if (n_frames <= 0) throw ArgumentError("paradigm '" + condition + "': frame count must be positive");
  if (durations.size() != onsets.size()) throw ArgumentError("paradigm '" + condition + "': onset/duration count mismatch");
  if (!amplitudes.empty() && amplitudes.size() != onsets.size()) {
    throw ArgumentError("paradigm '" + condition + "': amplitude count mismatch");
  }
  const double end = n_frames * tr;
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    if (!std::isfinite(onsets[i]) || onsets[i] < 0.0) throw ArgumentError("paradigm '" + condition + "': negative onset");
    if (i > 0 && onsets[i] < onsets[i - 1]) throw ArgumentError("paradigm '" + condition + "': onsets not ascending");
    if (!std::isfinite(durations[i]) || durations[i] < 0.0) {
      throw ArgumentError("paradigm '" + condition + "': negative duration");
    }
    if (onsets[i] + durations[i] > end + 1e-9) {
      std::ostringstream msg;
      msg << "paradigm '" << condition << "': event at " << onsets[i] << " s runs past the scan end " << end << " s";
      throw ArgumentError(msg.str());
    }
  }
}

Paradigm read_paradigm(const std::string& path, const std::string& condition, double tr, int n_frames) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  struct Event {
    double onset, duration, amplitude;
  };
  std::vector<Event> events;
  std::string line;
  int line_no = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    for (std::string tok; fields >> tok;) tokens.push_back(tok);
    if (tokens.empty()) continue;
    std::vector<double> v(tokens.size());
    bool numeric = true;
    for (std::size_t i = 0; i < tokens.size(); ++i) numeric = numeric && parse_double(tokens[i], v[i]);
    if (!numeric) {
      if (!seen_data) {
        seen_data = true;  // header row
        continue;
      }
      throw FormatError(path + ":" + std::to_string(line_no) + ": non-numeric paradigm row");
    }
    seen_data = true;
    if (v.size() < 2 || v.size() > 3) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected onset, duration[, amplitude]");
    }
    events.push_back({v[0], v[1], v.size() == 3 ? v[2] : 1.0});
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.onset < b.onset; });
  Paradigm p;
  p.condition = condition;
  p.tr = tr;
  p.n_frames = n_frames;
  bool weighted = false;
  for (const auto& e : events) {
    p.onsets.push_back(e.onset);
    p.durations.push_back(e.duration);
    p.amplitudes.push_back(e.amplitude);
    weighted = weighted || e.amplitude != 1.0;
  }
  if (!weighted) p.amplitudes.clear();
  p.validate();
  return p;
}

std::vector<double> build_regressor(const Paradigm& paradigm) {
  paradigm.validate();
  const double dt = kRegressorStep;
  const auto last = static_cast<std::int64_t>(std::floor((paradigm.n_frames - 1) * paradigm.tr / dt + 1e-9));
  const std::int64_t m = last + 2;
  std::vector<double> box(static_cast<std::size_t>(m), 0.0);
  for (std::size_t e = 0; e < paradigm.onsets.size(); ++e) {
    const double amp = paradigm.amplitudes.empty() ? 1.0 : paradigm.amplitudes[e];
    const auto start = static_cast<std::int64_t>(std::llround(paradigm.onsets[e] / dt));
    auto stop = static_cast<std::int64_t>(std::llround((paradigm.onsets[e] + paradigm.durations[e]) / dt));
    stop = std::max(stop, start + 1);
    for (std::int64_t i = start; i < std::min(stop, m); ++i) box[i] = amp;
  }

  const auto taps = static_cast<std::int64_t>(std::llround(kHrfSupport / dt)) + 1;
  std::vector<double> h(static_cast<std::size_t>(taps));
  for (std::int64_t k = 0; k < taps; ++k) h[k] = hrf(k * dt) * dt;
  std::vector<double> conv(static_cast<std::size_t>(m), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < taps && k <= i; ++k) s += box[i - k] * h[k];
    conv[i] = s;
  }

  std::vector<double> r(static_cast<std::size_t>(paradigm.n_frames));
  for (int f = 0; f < paradigm.n_frames; ++f) {
    const double x = f * paradigm.tr / dt;
    auto i0 = static_cast<std::int64_t>(std::floor(x));
    i0 = std::clamp<std::int64_t>(i0, 0, m - 2);
    const double w = std::clamp(x - double(i0), 0.0, 1.0);
    r[f] = (1.0 - w) * conv[i0] + w * conv[i0 + 1];
  }
  const double peak = *std::max_element(r.begin(), r.end());
  if (peak > 0.0) {
    for (auto& v : r) v /= peak;
  } else {
    std::fill(r.begin(), r.end(), 0.0);
  }
  return r;
}

std::vector<std::int64_t> select_frames(const std::vector<double>& regressor, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("select_frames: threshold must lie in (0, 1]");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < regressor.size(); ++i) {
    if (regressor[i] >= tau) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

AssembledSets assemble_sets(const std::vector<VoxelGrid>& frames, const VoxelGraph& graph,
                            const std::vector<FrameSelection>& selections, const Eigen::VectorXd& u1,
                            const std::string& subject) {
  std::vector<std::int64_t> wanted;
  for (const auto& s : selections) {
    for (auto f : s.frames) {
      if (f < 0 || f >= static_cast<std::int64_t>(frames.size())) {
        throw ArgumentError("condition '" + s.condition + "' selects frame " + std::to_string(f) + " of " +
                            std::to_string(frames.size()));
      }
      wanted.push_back(f);
    }
  }
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  std::vector<Eigen::VectorXd> sampled(wanted.size());
  detail::parallel_for(static_cast<std::int64_t>(wanted.size()), [&](std::int64_t i) {
    const auto r = sample_signal(frames[wanted[i]], graph.geometry, graph.vertex_to_voxel);
    sampled[i] = normalize_signal(Eigen::Map<const Eigen::VectorXd>(r.values.data(), Eigen::Index(r.values.size())), u1);
  });
  auto signal_of = [&](std::int64_t f) -> const Eigen::VectorXd& {
    return sampled[std::lower_bound(wanted.begin(), wanted.end(), f) - wanted.begin()];
  };
  const std::string prefix = subject.empty() ? "" : subject + "/";

  AssembledSets out;
  std::vector<std::string> task_order;
  std::map<std::string, std::vector<std::int64_t>> task_frames;
  for (const auto& s : selections) {
    GraphSignalSet set;
    set.name = prefix + s.condition;
    set.normalized = true;
    for (auto f : s.frames) {
      set.signals.push_back(signal_of(f));
      set.labels.push_back(prefix + s.condition + "/" + std::to_string(f));
    }
    out.conditions.push_back(std::move(set));
    if (!s.task.empty()) {
      if (!task_frames.count(s.task)) task_order.push_back(s.task);
      auto& tf = task_frames[s.task];
      tf.insert(tf.end(), s.frames.begin(), s.frames.end());
    }
  }
  for (const auto& task : task_order) {
    auto tf = task_frames[task];
    std::sort(tf.begin(), tf.end());
    tf.erase(std::unique(tf.begin(), tf.end()), tf.end());
    GraphSignalSet set;
    set.name = prefix + task;
    set.normalized = true;
    for (auto f : tf) {
      set.signals.push_back(signal_of(f));
      set.labels.push_back(prefix + task + "/" + std::to_string(f));
    }
    out.tasks.push_back(std::move(set));
  }
  return out;
}

Phantom make_folded_sheet(const SheetOptions& o) {
  if (o.nx < 2 || o.ny < 2 || o.gap < 0 || o.plane_cells < 1) throw ArgumentError("make_folded_sheet: bad dimensions");
  const std::array<int, 3> dims{o.nx + 2, o.ny + 2, o.gap + 4};
  const auto geometry = VolumeGeometry::axis_aligned(dims, o.spacing, o.origin);
  Phantom ph;
  ph.mask = BinaryMask(geometry);
  const int z_low = 1, z_high = 2 + o.gap;
  for (int j = 1; j <= o.ny; ++j) {
    for (int i = 1; i <= o.nx; ++i) {
      ph.mask.set(i, j, z_low);
      ph.mask.set(i, j, z_high);
    }
  }

  // Plane in voxel coordinates: z = z0 + tilt_x (x - cx) + tilt_y (y - cy).
  const double cx = 0.5 * (dims[0] - 1), cy = 0.5 * (dims[1] - 1);
  const double z0 = 0.5 * (z_low + z_high) + o.plane_offset;
  auto plane_z = [&](double x, double y) { return z0 + o.tilt_x * (x - cx) + o.tilt_y * (y - cy); };

  const int m = o.plane_cells;
  const double x_lo = -2.0, x_hi = dims[0] + 1.0, y_lo = -2.0, y_hi = dims[1] + 1.0;
  for (int b = 0; b <= m; ++b) {
    for (int a = 0; a <= m; ++a) {
      const double x = x_lo + (x_hi - x_lo) * a / m, y = y_lo + (y_hi - y_lo) * b / m;
      ph.surface.vertices.push_back(geometry.world(Point3(x, y, plane_z(x, y))));
    }
  }
  for (int b = 0; b < m; ++b) {
    for (int a = 0; a < m; ++a) {
      const std::int32_t v00 = b * (m + 1) + a, v10 = v00 + 1, v01 = v00 + (m + 1), v11 = v01 + 1;
      ph.surface.triangles.push_back({v00, v10, v11});
      ph.surface.triangles.push_back({v00, v11, v01});
    }
  }
  ph.has_surface = true;

  DisjointSets sets(geometry.voxel_count());
  for (std::int64_t v = 0; v < geometry.voxel_count(); ++v) {
    if (!ph.mask.bits[v]) continue;
    const auto [i, j, k] = geometry.lattice_index(v);
    for (int dk = -1; dk <= 1; ++dk) {
      for (int dj = -1; dj <= 1; ++dj) {
        for (int di = -1; di <= 1; ++di) {
          if (di == 0 && dj == 0 && dk == 0) continue;
          if (!ph.mask.test(i + di, j + dj, k + dk)) continue;
          const auto w = geometry.linear_index(i + di, j + dj, k + dk);
          if (w < v) continue;
          const double sa = double(k) - plane_z(double(i), double(j));
          const double sb = double(k + dk) - plane_z(double(i + di), double(j + dj));
          if ((sa < 0.0 && sb > 0.0) || (sa > 0.0 && sb < 0.0)) {
            ph.expected_removed.push_back({v, w});
          } else {
            sets.join(v, w);
          }
        }
      }
    }
  }
  std::sort(ph.expected_removed.begin(), ph.expected_removed.end(), [](const PrunedEdge& a, const PrunedEdge& b) {
    return std::pair(a.voxel_a, a.voxel_b) < std::pair(b.voxel_a, b.voxel_b);
  });
  std::vector<std::int64_t> roots;
  for (std::int64_t v = 0; v < geometry.voxel_count(); ++v) {
    if (ph.mask.bits[v]) roots.push_back(sets.find(v));
  }
  std::sort(roots.begin(), roots.end());
  ph.expected_components = std::unique(roots.begin(), roots.end()) - roots.begin();
  return ph;
}

SheetOptions random_sheet_options(std::uint64_t seed, int gap) {
  NormalStream rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  SheetOptions o;
  o.nx = 6 + static_cast<int>(rng.uniform() * 9);
  o.ny = 6 + static_cast<int>(rng.uniform() * 9);
  o.gap = gap;
  o.spacing = {uniform(0.7, 1.6), uniform(0.7, 1.6), uniform(0.7, 1.6)};
  o.origin = {uniform(-60, 60), uniform(-60, 60), uniform(-60, 60)};
  o.plane_offset = uniform(-0.3, 0.3);
  // Keep |tilt| * half-extent below 0.15 so the plane clears both sheets by
  // at least 0.05 voxel everywhere.
  o.tilt_x = uniform(-1, 1) * 0.15 / (0.5 * (o.nx + 2));
  o.tilt_y = uniform(-1, 1) * 0.15 / (0.5 * (o.ny + 2));
  o.plane_cells = 1 + static_cast<int>(rng.uniform() * 6);
  return o;
}

BinaryMask make_shell(double radius, double thickness, const Eigen::Vector3d& spacing) {
  if (!(thickness >= 1.0) || !(radius > thickness)) {
    throw ArgumentError("make_shell: need radius > thickness >= 1");
  }
  const int n = 2 * static_cast<int>(std::ceil(radius)) + 3;
  BinaryMask mask(VolumeGeometry::axis_aligned({n, n, n}, spacing));
  const double c = 0.5 * (n - 1);
  const double inner = radius - thickness;
  for (int k = 0; k < n; ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        const double r = std::sqrt((i - c) * (i - c) + (j - c) * (j - c) + (k - c) * (k - c));
        if (r >= inner && r <= radius) mask.set(i, j, k);
      }
    }
  }
  return enforce_6connectivity(mask);
}

BinaryMask make_ring() {
  BinaryMask mask(VolumeGeometry::axis_aligned({66, 66, 1}, Point3::Ones()));
  for (int t = 1; t <= 64; ++t) {
    mask.set(t, 0, 0);
    mask.set(65, t, 0);
    mask.set(t, 65, 0);
    mask.set(0, t, 0);
  }
  return mask;
}

BinaryMask make_blob(std::uint64_t seed, int size, int ellipsoids) {
  if (size < 4 || ellipsoids < 1) throw ArgumentError("make_blob: bad parameters");
  NormalStream rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  struct Ellipsoid {
    Point3 center, axes;
  };
  std::vector<Ellipsoid> parts;
  for (int e = 0; e < ellipsoids; ++e) {
    parts.push_back({Point3(uniform(0.3, 0.7), uniform(0.3, 0.7), uniform(0.3, 0.7)) * size,
                     Point3(uniform(0.12, 0.3), uniform(0.12, 0.3), uniform(0.12, 0.3)) * size});
  }
  BinaryMask mask(VolumeGeometry::axis_aligned({size, size, size}, Point3::Ones()));
  for (int k = 0; k < size; ++k) {
    for (int j = 0; j < size; ++j) {
      for (int i = 0; i < size; ++i) {
        for (const auto& p : parts) {
          const Point3 d = (Point3(i, j, k) - p.center).cwiseQuotient(p.axes);
          if (d.squaredNorm() <= 1.0) {
            mask.set(i, j, k);
            break;
          }
        }
      }
    }
  }
  return enforce_6connectivity(mask);
}

Eigen::VectorXd eigenmode_signal(const SpectralSlice& slice, std::int64_t k) {
  if (k < 1 || k > slice.size()) {
    throw ArgumentError("eigenmode " + std::to_string(k) + " outside the slice of " + std::to_string(slice.size()));
  }
  return slice.vectors.col(k - 1);
}

Eigen::VectorXd band_limited_signal(const SpectralSlice& slice, double a, double b, std::uint64_t seed) {
  if (!(a <= b)) throw ArgumentError("band_limited_signal: empty band");
  if (!slice.full && b > slice.coverage) throw ArgumentError("band_limited_signal: band exceeds the slice coverage");
  const Eigen::VectorXd w = white_noise_signal(slice.dimension(), seed);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(slice.dimension());
  int used = 0;
  for (std::int64_t i = 0; i < slice.size(); ++i) {
    if (slice.values[i] < a || slice.values[i] > b) continue;
    f += slice.vectors.col(i).dot(w) * slice.vectors.col(i);
    ++used;
  }
  if (used == 0) throw DataError("band_limited_signal: no eigenvalues inside the band");
  return f;
}

Eigen::VectorXd white_noise_signal(std::int64_t n, std::uint64_t seed) {
  NormalStream rng(seed);
  Eigen::VectorXd f(n);
  for (std::int64_t i = 0; i < n; ++i) f[i] = rng();
  return f;
}

}  // namespace chc
