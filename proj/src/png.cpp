#include <zlib.h>

#include <cstdlib>
#include <cstring>
#include <string>

#include "trajoracle/error.hpp"
#include "trajoracle/raster.hpp"

namespace trajoracle {
namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], const std::vector<std::uint8_t>& body) {
  put_u32(out, static_cast<std::uint32_t>(body.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Canvas& canvas) {
  const std::size_t stride = static_cast<std::size_t>(canvas.width()) * 3;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * canvas.height());
  const auto& px = canvas.data();
  for (int y = 0; y < canvas.height(); ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), px.begin() + y * stride, px.begin() + (y + 1) * stride);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error(ErrorCode::Io, "zlib compression failed");
  }
  z.resize(zlen);

  std::vector<std::uint8_t> out(std::begin(kSignature), std::end(kSignature));
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(canvas.width()));
  put_u32(ihdr, static_cast<std::uint32_t>(canvas.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolor, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

Canvas decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0) {
    throw Error(ErrorCode::ParseError, "not a PNG stream");
  }
  std::size_t pos = 8;
  int width = 0, height = 0;
  std::vector<std::uint8_t> z;
  bool seen_end = false;
  while (pos + 12 <= bytes.size() && !seen_end) {
    const std::uint32_t len = get_u32(bytes.data() + pos);
    if (pos + 12 + static_cast<std::size_t>(len) > bytes.size()) {
      throw Error(ErrorCode::ParseError, "truncated PNG chunk");
    }
    const std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    const std::uint8_t* body = bytes.data() + pos + 8;
    const uLong crc = crc32(0L, bytes.data() + pos + 4, len + 4);
    if (crc != get_u32(body + len)) {
      throw Error(ErrorCode::ParseError, "PNG chunk CRC mismatch");
    }
    if (type == "IHDR") {
      if (len != 13 || body[8] != 8 || body[9] != 2 || body[12] != 0) {
        throw Error(ErrorCode::ParseError, "only 8-bit RGB non-interlaced PNG is supported");
      }
      width = static_cast<int>(get_u32(body));
      height = static_cast<int>(get_u32(body + 4));
    } else if (type == "IDAT") {
      z.insert(z.end(), body, body + len);
    } else if (type == "IEND") {
      seen_end = true;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || !seen_end) {
    throw Error(ErrorCode::ParseError, "PNG missing IHDR or IEND");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * height);
  uLongf rlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rlen, z.data(), static_cast<uLong>(z.size())) != Z_OK || rlen != raw.size()) {
    throw Error(ErrorCode::ParseError, "PNG image data is corrupt");
  }

  Canvas canvas(width, height);
  auto& px = canvas.data();
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* row = px.data() + y * stride;
    const std::uint8_t* up = y > 0 ? px.data() + (y - 1) * stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? row[i - 3] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      int pred = 0;
      switch (filter) {
        case 0: pred = 0; break;
        case 1: pred = a; break;
        case 2: pred = b; break;
        case 3: pred = (a + b) / 2; break;
        case 4: pred = paeth(a, b, c); break;
        default: throw Error(ErrorCode::ParseError, "unknown PNG filter");
      }
      row[i] = static_cast<std::uint8_t>(src[i] + pred);
    }
  }
  return canvas;
}

}  // namespace trajoracle
