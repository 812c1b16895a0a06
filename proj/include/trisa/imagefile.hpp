#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>

#include "trisa/image.hpp"

namespace trisa {

// On-disk image format (little-endian):
//   "TRSA" magic, u32 version, u64 entry,
//   u32 section count, sections: u8 zone, u64 start, u64 size, bytes,
//   u32 symbol count, symbols: u32 name length, name, u64 address.
inline constexpr char kImageMagic[4] = {'T', 'R', 'S', 'A'};
inline constexpr std::uint32_t kImageVersion = 1;

namespace imagefile_detail {

template <typename T>
void put(std::ostream& out, T v) {
  for (unsigned i = 0; i < sizeof(T); ++i)
    out.put(static_cast<char>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <typename T>
bool get(std::istream& in, T& v) {
  std::uint64_t acc = 0;
  for (unsigned i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) return false;
    acc |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  v = static_cast<T>(acc);
  return true;
}

}  // namespace imagefile_detail

inline bool write_image_file(const std::string& path,
                             const ProgramImage& image) {
  using imagefile_detail::put;
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  out.write(kImageMagic, 4);
  put<std::uint32_t>(out, kImageVersion);
  put<std::uint64_t>(out, image.entry);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.sections.size()));
  for (const Section& s : image.sections) {
    put<std::uint8_t>(out, static_cast<std::uint8_t>(s.zone));
    put<std::uint64_t>(out, s.start);
    put<std::uint64_t>(out, s.bytes.size());
    out.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.symbols.size()));
  for (const auto& [name, addr] : image.symbols) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, addr);
  }
  return out.good();
}

inline std::optional<ProgramImage> read_image_file(const std::string& path) {
  using imagefile_detail::get;
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != std::string_view(kImageMagic, 4))
    return std::nullopt;
  std::uint32_t version = 0;
  if (!get(in, version) || version != kImageVersion) return std::nullopt;
  ProgramImage image;
  std::uint32_t nsec = 0;
  if (!get(in, image.entry) || !get(in, nsec)) return std::nullopt;
  for (std::uint32_t i = 0; i < nsec; ++i) {
    Section s;
    std::uint8_t zone = 0;
    std::uint64_t size = 0;
    if (!get(in, zone) || !get(in, s.start) || !get(in, size))
      return std::nullopt;
    if (zone > static_cast<std::uint8_t>(Zone::ExternalIo)) return std::nullopt;
    s.zone = static_cast<Zone>(zone);
    s.bytes.resize(size);
    in.read(reinterpret_cast<char*>(s.bytes.data()),
            static_cast<std::streamsize>(size));
    if (!in) return std::nullopt;
    image.sections.push_back(std::move(s));
  }
  std::uint32_t nsym = 0;
  if (!get(in, nsym)) return std::nullopt;
  for (std::uint32_t i = 0; i < nsym; ++i) {
    std::uint32_t len = 0;
    if (!get(in, len)) return std::nullopt;
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint64_t addr = 0;
    if (!in || !get(in, addr)) return std::nullopt;
    image.symbols[name] = addr;
  }
  return image;
}

}  // namespace trisa
