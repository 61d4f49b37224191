// NIfTI-1 reading and writing. Only the header fields needed to place the
// lattice in world space and scale its values are interpreted.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <memory>

#include <zlib.h>

#include "chc/error.hpp"
#include "chc/volume.hpp"

namespace chc {

namespace {

constexpr int kHeaderSize = 348;

enum DataType : std::int16_t {
  DT_UINT8 = 2,
  DT_INT16 = 4,
  DT_INT32 = 8,
  DT_FLOAT32 = 16,
  DT_FLOAT64 = 64,
};

struct GzFile {
  gzFile handle = nullptr;
  GzFile(const std::string& path, const char* mode) : handle(gzopen(path.c_str(), mode)) {}
  ~GzFile() {
    if (handle) gzclose(handle);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
};

// gzread handles plain files transparently.
std::vector<unsigned char> read_all(const std::string& path) {
  GzFile f(path, "rb");
  if (!f.handle) throw Error("cannot open: " + path);
  std::vector<unsigned char> out;
  std::array<unsigned char, 1 << 16> chunk{};
  for (;;) {
    const int n = gzread(f.handle, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) throw FormatError("decompression failed: " + path);
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

class HeaderView {
 public:
  HeaderView(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <class T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_ + offset, sizeof(T));
    if (swap_) {
      auto* p = reinterpret_cast<unsigned char*>(&v);
      std::reverse(p, p + sizeof(T));
    }
    return v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

Eigen::Matrix4d qform_affine(const HeaderView& h, const std::array<double, 3>& pixdim) {
  const double b = h.get<float>(256), c = h.get<float>(260), d = h.get<float>(264);
  double a = 1.0 - (b * b + c * c + d * d);
  a = a < 1e-7 ? 0.0 : std::sqrt(a);
  double qfac = h.get<float>(76);
  qfac = qfac < 0 ? -1.0 : 1.0;
  Eigen::Matrix3d r;
  r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
      2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
      2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r * Eigen::Vector3d(pixdim[0], pixdim[1], pixdim[2] * qfac).asDiagonal();
  m(0, 3) = h.get<float>(268);
  m(1, 3) = h.get<float>(272);
  m(2, 3) = h.get<float>(276);
  return m;
}

struct ParsedHeader {
  std::array<int, 3> dims{};
  int frames = 1;
  std::int16_t datatype = 0;
  double slope = 1.0;
  double inter = 0.0;
  std::size_t vox_offset = kHeaderSize;
  bool swap = false;
  bool single_file = true;
  Eigen::Matrix4d affine = Eigen::Matrix4d::Identity();
  double repetition_time = 0.0;
};

ParsedHeader parse_header(const std::vector<unsigned char>& raw, const std::string& path) {
  if (raw.size() < kHeaderSize) throw FormatError(path + ": shorter than a NIfTI-1 header");
  ParsedHeader p;
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, raw.data(), 4);
  if (sizeof_hdr != kHeaderSize) {
    p.swap = true;
    if (HeaderView(raw.data(), true).get<std::int32_t>(0) != kHeaderSize) {
      throw FormatError(path + ": sizeof_hdr is not 348");
    }
  }
  const char* magic = reinterpret_cast<const char*>(raw.data() + 344);
  if (std::memcmp(magic, "n+1\0", 4) == 0) {
    p.single_file = true;
  } else if (std::memcmp(magic, "ni1\0", 4) == 0) {
    p.single_file = false;
  } else {
    throw FormatError(path + ": bad NIfTI-1 magic");
  }
  const HeaderView h(raw.data(), p.swap);
  const int ndim = h.get<std::int16_t>(40);
  if (ndim < 1 || ndim > 7) throw FormatError(path + ": dim[0] out of range");
  for (int c = 0; c < 3; ++c) {
    p.dims[c] = c < ndim ? h.get<std::int16_t>(42 + 2 * c) : 1;
    if (p.dims[c] < 1) throw FormatError(path + ": non-positive dimension");
  }
  p.frames = ndim >= 4 ? std::max<int>(1, h.get<std::int16_t>(48)) : 1;
  for (int c = 5; c <= ndim; ++c) {
    if (h.get<std::int16_t>(40 + 2 * c) > 1) throw UnsupportedError(path + ": more than 4 dimensions");
  }
  p.datatype = h.get<std::int16_t>(70);
  switch (p.datatype) {
    case DT_UINT8: case DT_INT16: case DT_INT32: case DT_FLOAT32: case DT_FLOAT64: break;
    default: throw UnsupportedError(path + ": unsupported datatype " + std::to_string(p.datatype));
  }
  std::array<double, 3> pixdim{};
  for (int c = 0; c < 3; ++c) {
    pixdim[c] = std::abs(h.get<float>(80 + 4 * c));
    if (!(pixdim[c] > 0.0) || !std::isfinite(pixdim[c])) pixdim[c] = 1.0;
  }
  if (ndim >= 4) {
    const double tr = h.get<float>(92);
    const int time_unit = raw[123] & 0x38;  // xyzt_units: 8 sec, 16 msec, 24 usec
    const double to_seconds = time_unit == 16 ? 1e-3 : time_unit == 24 ? 1e-6 : 1.0;
    p.repetition_time = std::isfinite(tr) && tr > 0 ? tr * to_seconds : 0.0;
  }
  const double offset = h.get<float>(108);
  p.vox_offset = p.single_file ? static_cast<std::size_t>(std::max(offset, double(kHeaderSize))) : 0;
  const double slope = h.get<float>(112);
  if (std::isfinite(slope) && slope != 0.0) {
    p.slope = slope;
    const double inter = h.get<float>(116);
    p.inter = std::isfinite(inter) ? inter : 0.0;
  }

  const auto qform_code = h.get<std::int16_t>(252);
  const auto sform_code = h.get<std::int16_t>(254);
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) p.affine(r, c) = h.get<float>(280 + 16 * r + 4 * c);
    }
  } else if (qform_code > 0) {
    p.affine = qform_affine(h, pixdim);
  } else {
    p.affine.diagonal().head<3>() = Eigen::Vector3d(pixdim[0], pixdim[1], pixdim[2]);
  }
  return p;
}

template <class T>
double raw_value(const unsigned char* base, std::size_t index, bool swap) {
  T v;
  std::memcpy(&v, base + index * sizeof(T), sizeof(T));
  if (swap) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return static_cast<double>(v);
}

std::size_t type_size(std::int16_t datatype) {
  switch (datatype) {
    case DT_UINT8: return 1;
    case DT_INT16: return 2;
    case DT_INT32: case DT_FLOAT32: return 4;
    default: return 8;
  }
}

std::string image_path_for(const std::string& header_path) {
  for (const std::string ext : {".hdr.gz", ".hdr"}) {
    if (ends_with(header_path, ext)) {
      return header_path.substr(0, header_path.size() - ext.size()) + (ext == ".hdr" ? ".img" : ".img.gz");
    }
  }
  throw FormatError(header_path + ": two-file NIfTI needs a .hdr path");
}

struct Loaded {
  ParsedHeader header;
  std::vector<VoxelGrid> frames;
};

Loaded load(const std::string& path) {
  const auto raw = read_all(path);
  Loaded out;
  out.header = parse_header(raw, path);
  const auto& p = out.header;
  std::vector<unsigned char> image_storage;
  const unsigned char* payload = nullptr;
  std::size_t available = 0;
  if (p.single_file) {
    if (raw.size() < p.vox_offset) throw FormatError(path + ": vox_offset beyond end of file");
    payload = raw.data() + p.vox_offset;
    available = raw.size() - p.vox_offset;
  } else {
    image_storage = read_all(image_path_for(path));
    payload = image_storage.data();
    available = image_storage.size();
  }
  const VolumeGeometry geometry(p.dims, p.affine);
  const auto per_frame = static_cast<std::size_t>(geometry.voxel_count());
  const std::size_t elem = type_size(p.datatype);
  if (available < per_frame * p.frames * elem) throw FormatError(path + ": truncated voxel payload");

  std::size_t non_finite = 0;
  out.frames.reserve(static_cast<std::size_t>(p.frames));
  for (int t = 0; t < p.frames; ++t) {
    std::vector<double> values(per_frame);
    for (std::size_t v = 0; v < per_frame; ++v) {
      const std::size_t idx = t * per_frame + v;
      double x = 0.0;
      switch (p.datatype) {
        case DT_UINT8: x = raw_value<std::uint8_t>(payload, idx, false); break;
        case DT_INT16: x = raw_value<std::int16_t>(payload, idx, p.swap); break;
        case DT_INT32: x = raw_value<std::int32_t>(payload, idx, p.swap); break;
        case DT_FLOAT32: x = raw_value<float>(payload, idx, p.swap); break;
        case DT_FLOAT64: x = raw_value<double>(payload, idx, p.swap); break;
        default: break;
      }
      x = p.slope * x + p.inter;
      if (!std::isfinite(x)) ++non_finite;
      values[v] = x;
    }
    if (non_finite == 0) {
      VoxelGrid grid;
      grid.geometry = geometry;
      grid.data = std::move(values);
      out.frames.push_back(std::move(grid));
    }
  }
  if (non_finite > 0) {
    throw DataError(path + ": " + std::to_string(non_finite) + " non-finite voxel values");
  }
  return out;
}

template <class T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

}  // namespace

std::vector<VoxelGrid> load_nifti(const std::string& path) { return load(path).frames; }

double nifti_repetition_time(const std::string& path) {
  const auto raw = read_all(path);
  return parse_header(raw, path).repetition_time;
}

void write_nifti(const std::string& path, std::span<const VoxelGrid> frames, NiftiType type,
                 double repetition_time, const std::string& description) {
  if (frames.empty()) throw ArgumentError("write_nifti: no frames");
  const VolumeGeometry& g = frames.front().geometry;
  for (const auto& f : frames) {
    if (!(f.geometry == g)) throw ArgumentError("write_nifti: frames differ in geometry");
  }
  const bool four_d = frames.size() > 1;
  const auto& dims = g.dims();
  if (std::max({dims[0], dims[1], dims[2]}) > 32767 || frames.size() > 32767) {
    throw UnsupportedError("write_nifti: dimension exceeds NIfTI-1 limits");
  }
  constexpr std::size_t offset = 352;
  std::vector<unsigned char> buf(offset, 0);
  put<std::int32_t>(buf, 0, kHeaderSize);
  put<std::int16_t>(buf, 40, four_d ? 4 : 3);
  for (int c = 0; c < 3; ++c) put<std::int16_t>(buf, 42 + 2 * c, static_cast<std::int16_t>(dims[c]));
  put<std::int16_t>(buf, 48, static_cast<std::int16_t>(frames.size()));
  for (int c = 4; c < 8; ++c) {
    if (c > 4 || !four_d) put<std::int16_t>(buf, 40 + 2 * c, 1);
  }
  const bool u8 = type == NiftiType::uint8;
  put<std::int16_t>(buf, 70, u8 ? DT_UINT8 : DT_FLOAT32);
  put<std::int16_t>(buf, 72, u8 ? 8 : 32);
  put<float>(buf, 76, 1.0f);
  for (int c = 0; c < 3; ++c) put<float>(buf, 80 + 4 * c, static_cast<float>(g.spacing()[c]));
  put<float>(buf, 92, static_cast<float>(repetition_time));
  put<float>(buf, 108, static_cast<float>(offset));
  put<float>(buf, 112, 1.0f);
  buf[123] = 2 | 8;  // mm, seconds
  put<std::int16_t>(buf, 254, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) put<float>(buf, 280 + 16 * r + 4 * c, static_cast<float>(g.affine()(r, c)));
  }
  std::memcpy(buf.data() + 148, description.data(), std::min<std::size_t>(description.size(), 79));
  std::memcpy(buf.data() + 344, "n+1\0", 4);

  for (const auto& f : frames) {
    for (double v : f.data) {
      if (u8) {
        buf.push_back(static_cast<unsigned char>(std::clamp(std::nearbyint(v), 0.0, 255.0)));
      } else {
        const auto x = static_cast<float>(v);
        const auto* b = reinterpret_cast<const unsigned char*>(&x);
        buf.insert(buf.end(), b, b + 4);
      }
    }
  }

  if (ends_with(path, ".gz")) {
    // Level 6, no header timestamp from gzopen, so output is reproducible.
    GzFile f(path, "wb6");
    if (!f.handle) throw Error("cannot open for writing: " + path);
    if (gzwrite(f.handle, buf.data(), static_cast<unsigned>(buf.size())) != static_cast<int>(buf.size())) {
      throw Error("write failed: " + path);
    }
  } else {
    std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!f || std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size()) {
      throw Error("write failed: " + path);
    }
  }
}

void write_nifti(const std::string& path, const BinaryMask& mask, const std::string& description) {
  VoxelGrid grid(mask.geometry);
  for (std::size_t v = 0; v < mask.bits.size(); ++v) grid.data[v] = mask.bits[v];
  write_nifti(path, std::span<const VoxelGrid>(&grid, 1), NiftiType::uint8, 0.0, description);
}

}  // namespace chc
