#pragma once

#include <string>
#include <vector>

#include "adaptct/binary_io.hpp"
#include "adaptct/phantoms.hpp"

namespace adaptct {

// Phantom container layout (all integers little-endian, reals IEEE-754 binary64):
//   "CTPH" | u32 version | u32 image_size | u64 count
//   count x { u8 kind | f64 rotation_deg | f64 scale | f64 center_x | f64 center_y
//             | f64 aspect | image_size*image_size bytes, row-major, each 0 or 1 }
inline constexpr std::uint32_t kPhantomFormatVersion = 1;

inline std::vector<std::uint8_t> encode_phantoms(const std::vector<Phantom>& phantoms, int image_size) {
  io::Writer w;
  w.bytes("CTPH", 4);
  w.u32(kPhantomFormatVersion);
  w.u32(static_cast<std::uint32_t>(image_size));
  w.u64(phantoms.size());
  for (const auto& p : phantoms) {
    if (p.image.side != image_size) throw DomainError("phantom size differs from container image_size");
    w.u8(static_cast<std::uint8_t>(p.spec.kind));
    w.f64(p.spec.rotation_deg);
    w.f64(p.spec.scale);
    w.f64(p.spec.center_x);
    w.f64(p.spec.center_y);
    w.f64(p.spec.aspect);
    for (double v : p.image.pixels) {
      if (v != 0.0 && v != 1.0) throw DomainError("phantom pixels must be binary");
      w.u8(v == 1.0 ? 1 : 0);
    }
  }
  return std::move(w.buffer());
}

struct PhantomCorpus {
  int image_size = 0;
  std::vector<Phantom> phantoms;
};

inline PhantomCorpus decode_phantoms(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "CTPH") throw FormatError("not a phantom container (bad magic)");
  const auto version = r.u32();
  if (version != kPhantomFormatVersion) throw FormatError("unsupported phantom container version " + std::to_string(version));
  PhantomCorpus corpus;
  corpus.image_size = static_cast<int>(r.u32());
  if (corpus.image_size <= 0) throw FormatError("phantom container has non-positive image_size");
  const auto count = r.u64();
  const std::size_t npix = static_cast<std::size_t>(corpus.image_size) * corpus.image_size;
  if (count > r.remaining() / (41 + npix)) throw FormatError("phantom container truncated");
  corpus.phantoms.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Phantom p;
    const auto kind = r.u8();
    if (kind >= kShapeNames.size()) throw FormatError("record " + std::to_string(k) + ": bad shape kind");
    p.spec.kind = static_cast<ShapeKind>(kind);
    p.spec.rotation_deg = r.f64();
    p.spec.scale = r.f64();
    p.spec.center_x = r.f64();
    p.spec.center_y = r.f64();
    p.spec.aspect = r.f64();
    p.image = Image(corpus.image_size);
    for (std::size_t i = 0; i < npix; ++i) {
      const auto b = r.u8();
      if (b > 1) throw FormatError("record " + std::to_string(k) + ": non-binary pixel");
      p.image.pixels[i] = b;
    }
    corpus.phantoms.push_back(std::move(p));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after phantom records");
  return corpus;
}

inline void save_phantoms(const std::string& path, const std::vector<Phantom>& phantoms, int image_size) {
  io::write_file(path, encode_phantoms(phantoms, image_size));
}

inline PhantomCorpus load_phantoms(const std::string& path) { return decode_phantoms(io::read_file(path)); }

}  // namespace adaptct
