#include "vpfp/snapshot.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace vpfp {

namespace {

constexpr char kMagic[4] = {'V', 'P', 'F', 'P'};

template <class T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size())
      throw SnapshotError(SnapshotError::Code::crc_mismatch, "snapshot truncated at byte " + std::to_string(pos_));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void header(std::vector<std::uint8_t>& out, SnapshotKind kind, std::uint32_t d) {
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, kSnapshotVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(kind));
  put<std::uint32_t>(out, d);
}

void finish(std::vector<std::uint8_t>& out, std::size_t payload_start) {
  put<std::uint32_t>(out, crc_of(out.data() + payload_start, out.size() - payload_start));
}

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const Snapshot& snapshot) {
  std::vector<std::uint8_t> out;
  std::size_t payload = 0;
  if (const auto* s = std::get_if<PhaseState>(&snapshot)) {
    header(out, SnapshotKind::phase_state, static_cast<std::uint32_t>(s->dim));
    put<std::uint64_t>(out, s->n);
    put<double>(out, s->t);
    payload = out.size();
    for (double x : s->x) put<double>(out, x);
    for (double v : s->v) put<double>(out, v);
  } else if (const auto* g = std::get_if<DensityGrid>(&snapshot)) {
    const GridGeometry& geo = g->geometry;
    header(out, SnapshotKind::density_grid, static_cast<std::uint32_t>(geo.axes));
    for (int a = 0; a < geo.axes; ++a) put<std::uint64_t>(out, geo.cells[a]);
    put<double>(out, 0.0);
    payload = out.size();
    for (int a = 0; a < geo.axes; ++a) put<double>(out, geo.lower[a]);
    for (int a = 0; a < geo.axes; ++a) put<double>(out, geo.edge[a]);
    put<double>(out, g->clipped_mass);
    for (double m : g->mass) put<double>(out, m);
  } else {
    const auto& k = std::get<KineticGrid1D>(snapshot);
    header(out, SnapshotKind::kinetic_grid, 1);
    put<std::uint64_t>(out, k.nx);
    put<std::uint64_t>(out, k.nv);
    put<double>(out, k.t);
    payload = out.size();
    for (double x : {k.x_lo, k.x_hi, k.v_lo, k.v_hi, k.outflow, k.clipped}) put<double>(out, x);
    for (double f : k.f) put<double>(out, f);
  }
  finish(out, payload);
  return out;
}

Snapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
  using Code = SnapshotError::Code;
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    if (bytes.size() < 4) throw SnapshotError(Code::crc_mismatch, "snapshot truncated before the magic bytes");
    throw SnapshotError(Code::bad_magic, "not a VPFP snapshot (bad magic bytes)");
  }
  Reader r(bytes.subspan(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion)
    throw SnapshotError(Code::unsupported_version, "unsupported snapshot version " + std::to_string(version) +
                                                       " (expected " + std::to_string(kSnapshotVersion) + ")");
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw SnapshotError(Code::unknown_kind, "unknown snapshot kind " + std::to_string(kind));
  const auto d = r.get<std::uint32_t>();

  std::vector<std::uint64_t> counts;
  if (kind == 0) {
    counts.push_back(r.get<std::uint64_t>());
  } else if (kind == 1) {
    if (d < 1 || d > static_cast<std::uint32_t>(kMaxAxes))
      throw SnapshotError(Code::crc_mismatch, "density snapshot with " + std::to_string(d) + " axes");
    for (std::uint32_t a = 0; a < d; ++a) counts.push_back(r.get<std::uint64_t>());
  } else {
    counts.push_back(r.get<std::uint64_t>());
    counts.push_back(r.get<std::uint64_t>());
  }
  const auto time = r.get<double>();

  // payload length implied by the header; the CRC must cover exactly that many bytes
  std::uint64_t values = 0;
  if (kind == 0) {
    values = 2 * counts[0] * d;
  } else if (kind == 1) {
    values = 2 * d + 1;
    std::uint64_t cells = 1;
    for (auto c : counts) cells *= c;
    values += cells;
  } else {
    values = 6 + counts[0] * counts[1];
  }
  const std::size_t payload_start = 4 + r.pos();
  const std::size_t payload_bytes = values * sizeof(double);
  if (values > bytes.size() || payload_start + payload_bytes + 4 != bytes.size())
    throw SnapshotError(Code::crc_mismatch, "snapshot length does not match its header (truncated or padded)");
  Reader tail(bytes.subspan(payload_start + payload_bytes));
  const auto stored = tail.get<std::uint32_t>();
  if (stored != crc_of(bytes.data() + payload_start, payload_bytes))
    throw SnapshotError(Code::crc_mismatch, "snapshot CRC-32 mismatch");

  Reader p(bytes.subspan(payload_start, payload_bytes));
  if (kind == 0) {
    PhaseState s(counts[0], static_cast<int>(d), time);
    for (double& x : s.x) x = p.get<double>();
    for (double& v : s.v) v = p.get<double>();
    return s;
  }
  if (kind == 1) {
    GridGeometry geo;
    geo.axes = static_cast<int>(d);
    for (int a = 0; a < geo.axes; ++a) geo.cells[a] = counts[a];
    for (int a = 0; a < geo.axes; ++a) geo.lower[a] = p.get<double>();
    for (int a = 0; a < geo.axes; ++a) geo.edge[a] = p.get<double>();
    DensityGrid g(geo);
    g.clipped_mass = p.get<double>();
    for (double& m : g.mass) m = p.get<double>();
    return g;
  }
  KineticGrid1D k;
  k.nx = counts[0];
  k.nv = counts[1];
  k.t = time;
  k.x_lo = p.get<double>();
  k.x_hi = p.get<double>();
  k.v_lo = p.get<double>();
  k.v_hi = p.get<double>();
  k.outflow = p.get<double>();
  k.clipped = p.get<double>();
  k.f.resize(k.nx * k.nv);
  for (double& f : k.f) f = p.get<double>();
  return k;
}

void write_snapshot(const std::string& path, const Snapshot& snapshot) {
  const std::vector<std::uint8_t> bytes = encode_snapshot(snapshot);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SnapshotError(SnapshotError::Code::io, "cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw SnapshotError(SnapshotError::Code::io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw SnapshotError(SnapshotError::Code::io, "cannot rename " + tmp + ": " + ec.message());
}

Snapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError(SnapshotError::Code::io, "cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

}  // namespace vpfp
