#include "chc/surface.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include <Eigen/Geometry>

#include "chc/error.hpp"

namespace chc {

std::size_t TriangleMesh::clean() {
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw DataError("mesh has non-finite vertex coordinates");
  }
  const auto nv = static_cast<std::int64_t>(vertices.size());
  for (const auto& t : triangles) {
    for (auto idx : t) {
      if (idx < 0 || idx >= nv) throw DataError("triangle index out of range");
    }
  }
  const auto before = triangles.size();
  std::erase_if(triangles, [&](const std::array<std::int32_t, 3>& t) {
    const Point3& a = vertices[t[0]];
    const double area = 0.5 * (vertices[t[1]] - a).cross(vertices[t[2]] - a).norm();
    return !(area > 1e-12);
  });
  return before - triangles.size();
}

void TriangleMesh::translate(const Point3& offset) {
  for (auto& v : vertices) v += offset;
}

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class BigEndianCursor {
 public:
  BigEndianCursor(const std::vector<char>& bytes, std::size_t pos, std::string path)
      : bytes_(bytes), pos_(pos), path_(std::move(path)) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw FormatError(path_ + ": truncated surface");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::little) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_;
  std::string path_;
};

TriangleMesh read_freesurfer(const std::vector<char>& bytes, const std::string& path, Point3& cras) {
  // Two newline-terminated comment lines follow the magic.
  std::size_t pos = 3;
  int newlines = 0;
  while (pos < bytes.size() && newlines < 2) {
    if (bytes[pos++] == '\n') ++newlines;
  }
  if (newlines < 2) throw FormatError(path + ": unterminated FreeSurfer comment");
  BigEndianCursor cur(bytes, pos, path);
  const auto nv = cur.get<std::int32_t>();
  const auto nf = cur.get<std::int32_t>();
  if (nv < 0 || nf < 0) throw FormatError(path + ": negative element count");
  TriangleMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (std::int32_t i = 0; i < nv; ++i) {
    const double x = cur.get<float>(), y = cur.get<float>(), z = cur.get<float>();
    mesh.vertices.emplace_back(x, y, z);
  }
  mesh.triangles.reserve(static_cast<std::size_t>(nf));
  for (std::int32_t i = 0; i < nf; ++i) {
    std::array<std::int32_t, 3> t{cur.get<std::int32_t>(), cur.get<std::int32_t>(), cur.get<std::int32_t>()};
    mesh.triangles.push_back(t);
  }
  // Optional volume-info footer, plain text.
  const std::string tail(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos()), bytes.end());
  const auto at = tail.find("cras");
  if (at != std::string::npos) {
    std::istringstream line(tail.substr(tail.find('=', at) + 1));
    double x, y, z;
    if (line >> x >> y >> z) cras = Point3(x, y, z);
  }
  return mesh;
}

// OFF: "OFF", counts, vertices, faces. Polygons are fan-triangulated.
TriangleMesh read_off(const std::vector<char>& bytes, const std::string& path) {
  std::string text(bytes.begin(), bytes.end());
  std::istringstream lines(text);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(lines, line)) {
    line = line.substr(0, line.find('#'));
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  std::size_t at = 0;
  auto next = [&]() -> const std::string& {
    if (at >= tokens.size()) throw FormatError(path + ": truncated OFF file");
    return tokens[at++];
  };
  auto number = [&]() {
    const std::string& t = next();
    try {
      std::size_t used = 0;
      const double v = std::stod(t, &used);
      if (used != t.size()) throw FormatError(path + ": bad number '" + t + "'");
      return v;
    } catch (const std::logic_error&) {
      throw FormatError(path + ": bad number '" + t + "'");
    }
  };
  if (next() != "OFF") throw FormatError(path + ": missing OFF header");
  const auto nv = static_cast<long>(number());
  const auto nf = static_cast<long>(number());
  number();  // edge count, unused
  if (nv < 0 || nf < 0) throw FormatError(path + ": negative element count");
  TriangleMesh mesh;
  for (long i = 0; i < nv; ++i) {
    const double x = number(), y = number(), z = number();
    mesh.vertices.emplace_back(x, y, z);
  }
  for (long f = 0; f < nf; ++f) {
    const auto k = static_cast<long>(number());
    if (k < 3) throw FormatError(path + ": face with fewer than 3 vertices");
    std::vector<std::int32_t> idx(static_cast<std::size_t>(k));
    for (auto& v : idx) v = static_cast<std::int32_t>(number());
    for (long t = 1; t + 1 < k; ++t) mesh.triangles.push_back({idx[0], idx[t], idx[t + 1]});
  }
  return mesh;
}

}  // namespace

LoadedSurface load_surface(const std::string& path) {
  const auto bytes = slurp(path);
  LoadedSurface out;
  const bool freesurfer = bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
                          static_cast<unsigned char>(bytes[1]) == 0xFF &&
                          static_cast<unsigned char>(bytes[2]) == 0xFE;
  if (freesurfer) {
    Point3 cras = Point3::Zero();
    out.mesh = read_freesurfer(bytes, path, cras);
    out.mesh.translate(cras);
  } else {
    std::size_t start = 0;
    while (start < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[start]))) ++start;
    if (bytes.size() - start < 3 || std::string(bytes.data() + start, 3) != "OFF") {
      throw FormatError(path + ": unknown surface format (expected FreeSurfer or OFF)");
    }
    out.mesh = read_off(bytes, path);
  }
  out.degenerate_dropped = out.mesh.clean();
  return out;
}

void write_freesurfer_surface(const std::string& path, const TriangleMesh& mesh, const std::string& created_by) {
  if (created_by.find('\n') != std::string::npos) throw ArgumentError("creator line contains a newline");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  const unsigned char magic[3] = {0xFF, 0xFF, 0xFE};
  out.write(reinterpret_cast<const char*>(magic), 3);
  out << "created by " << (created_by.empty() ? std::string("chc") : created_by) << "\n\n";
  auto put = [&](auto value) {
    auto* p = reinterpret_cast<unsigned char*>(&value);
    if constexpr (std::endian::native == std::endian::little) std::reverse(p, p + sizeof(value));
    out.write(reinterpret_cast<const char*>(p), sizeof(value));
  };
  put(static_cast<std::int32_t>(mesh.vertices.size()));
  put(static_cast<std::int32_t>(mesh.triangles.size()));
  for (const auto& v : mesh.vertices) {
    for (int c = 0; c < 3; ++c) put(static_cast<float>(v[c]));
  }
  for (const auto& t : mesh.triangles) {
    for (auto idx : t) put(idx);
  }
  if (!out) throw Error("write failed: " + path);
}

void write_off(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out.precision(17);
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.triangles.size() << " 0\n";
  for (const auto& v : mesh.vertices) out << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw Error("write failed: " + path);
}

bool segment_hits_triangle(const Point3& p0, const Point3& q0, const Point3& a, const Point3& b,
                           const Point3& c) {
  const bool swap = std::lexicographical_compare(q0.data(), q0.data() + 3, p0.data(), p0.data() + 3);
  const Point3& p = swap ? q0 : p0;
  const Point3& q = swap ? p0 : q0;

  constexpr double eps = kSegmentEpsilon;
  const Point3 dir = q - p;
  const Point3 e1 = b - a;
  const Point3 e2 = c - a;
  const Point3 h = dir.cross(e2);
  const double det = e1.dot(h);
  if (std::abs(det) <= 1e-14 * dir.norm() * e1.norm() * e2.norm()) return false;  // parallel
  const double inv = 1.0 / det;
  const Point3 s = p - a;
  const double u = inv * s.dot(h);
  if (u < -eps || u > 1.0 + eps) return false;
  const Point3 qv = s.cross(e1);
  const double v = inv * dir.dot(qv);
  if (v < -eps || u + v > 1.0 + eps) return false;
  const double t = inv * e2.dot(qv);
  return t > eps && t < 1.0 - eps;
}

bool segment_intersects_brute(const TriangleMesh& mesh, const Point3& p, const Point3& q) {
  for (const auto& t : mesh.triangles) {
    if (segment_hits_triangle(p, q, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]])) {
      return true;
    }
  }
  return false;
}

MeshIndex::MeshIndex(TriangleMesh mesh, double cell_size) : mesh_(std::move(mesh)) {
  if (mesh_.triangles.empty()) throw DataError("cannot index an empty mesh");
  lo_ = Point3::Constant(std::numeric_limits<double>::infinity());
  hi_ = -lo_;
  double edge_sum = 0.0;
  for (const auto& t : mesh_.triangles) {
    for (int k = 0; k < 3; ++k) {
      const Point3& v = mesh_.vertices[t[k]];
      lo_ = lo_.cwiseMin(v);
      hi_ = hi_.cwiseMax(v);
      edge_sum += (mesh_.vertices[t[(k + 1) % 3]] - v).norm();
    }
  }
  const double extent = (hi_ - lo_).maxCoeff();
  cell_ = cell_size > 0.0 ? cell_size : 2.0 * edge_sum / (3.0 * double(mesh_.triangles.size()));
  // Keep the table bounded.
  constexpr double kMaxCells = 1 << 24;
  while (true) {
    double total = 1.0;
    for (int c = 0; c < 3; ++c) total *= std::floor((hi_[c] - lo_[c]) / cell_) + 1.0;
    if (total <= kMaxCells) break;
    cell_ *= 1.5;
  }
  const double pad = 1e-7 * std::max(1.0, extent);
  lo_.array() -= pad;
  hi_.array() += pad;
  origin_ = lo_;
  for (int c = 0; c < 3; ++c) n_[c] = static_cast<std::int64_t>(std::floor((hi_[c] - lo_[c]) / cell_)) + 1;

  const auto cell_id = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return static_cast<std::size_t>(i + n_[0] * (j + n_[1] * k));
  };
  const auto total = static_cast<std::size_t>(n_[0] * n_[1] * n_[2]);
  std::vector<std::uint32_t> counts(total + 1, 0);
  auto for_each_cell = [&](const std::array<std::int32_t, 3>& t, auto&& fn) {
    Point3 tlo = mesh_.vertices[t[0]], thi = tlo;
    for (int k = 1; k < 3; ++k) {
      tlo = tlo.cwiseMin(mesh_.vertices[t[k]]);
      thi = thi.cwiseMax(mesh_.vertices[t[k]]);
    }
    tlo.array() -= pad;
    thi.array() += pad;
    const auto a = cell_of(tlo), b = cell_of(thi);
    for (auto k = a[2]; k <= b[2]; ++k)
      for (auto j = a[1]; j <= b[1]; ++j)
        for (auto i = a[0]; i <= b[0]; ++i) fn(cell_id(i, j, k));
  };
  for (const auto& t : mesh_.triangles) for_each_cell(t, [&](std::size_t id) { ++counts[id + 1]; });
  for (std::size_t i = 0; i < total; ++i) counts[i + 1] += counts[i];
  start_ = counts;
  items_.resize(start_.back());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t n = 0; n < mesh_.triangles.size(); ++n) {
    for_each_cell(mesh_.triangles[n], [&](std::size_t id) { items_[fill[id]++] = static_cast<std::int32_t>(n); });
  }
}

std::array<std::int64_t, 3> MeshIndex::cell_of(const Point3& p) const {
  std::array<std::int64_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double x = std::floor((p[c] - origin_[c]) / cell_);
    out[c] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::clamp(x, -1.0, double(n_[c]))), 0, n_[c] - 1);
  }
  return out;
}

bool MeshIndex::segment_intersects(const Point3& p, const Point3& q) const {
  const Point3 slo = p.cwiseMin(q), shi = p.cwiseMax(q);
  if ((slo.array() > hi_.array()).any() || (shi.array() < lo_.array()).any()) return false;
  const auto a = cell_of(slo), b = cell_of(shi);
  const auto& V = mesh_.vertices;
  for (auto k = a[2]; k <= b[2]; ++k) {
    for (auto j = a[1]; j <= b[1]; ++j) {
      for (auto i = a[0]; i <= b[0]; ++i) {
        const auto id = static_cast<std::size_t>(i + n_[0] * (j + n_[1] * k));
        for (auto it = start_[id]; it < start_[id + 1]; ++it) {
          const auto& t = mesh_.triangles[static_cast<std::size_t>(items_[it])];
          if (segment_hits_triangle(p, q, V[t[0]], V[t[1]], V[t[2]])) return true;
        }
      }
    }
  }
  return false;
}

}  // namespace chc
