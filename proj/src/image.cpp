#include "gazereg/image.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace gazereg {

Bytes read_file(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path &p, const Bytes &b) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out.write(reinterpret_cast<const char *>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("short write to " + p.string());
}

void write_text(const std::filesystem::path &p, std::string_view text) {
  write_file(p, Bytes(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path &p) {
  const Bytes b = read_file(p);
  return std::string(b.begin(), b.end());
}

Frame quantize8(const Frame &f) {
  return (f.array().max(0.0).min(1.0) * 255.0).round().matrix() / 255.0;
}

Bytes encode_pgm8(const MatrixX<std::uint8_t> &pixels) {
  Bytes out;
  put_raw(out, "P5\n" + std::to_string(pixels.cols()) + " " + std::to_string(pixels.rows()) + "\n255\n");
  out.insert(out.end(), pixels.data(), pixels.data() + pixels.size());
  return out;
}

Bytes encode_pgm(const Frame &f) {
  MatrixX<std::uint8_t> px = (f.array().max(0.0).min(1.0) * 255.0).round().cast<std::uint8_t>().matrix();
  return encode_pgm8(px);
}

namespace {

struct PgmHeader {
  long width = 0, height = 0, maxval = 0;
  std::size_t raster_offset = 0;
};

PgmHeader parse_pgm_header(const Bytes &b) {
  if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw FormatError("pgm: missing P5 magic");
  std::size_t pos = 2;
  auto skip_ws = [&] {
    for (;;) {
      while (pos < b.size() && std::isspace(b[pos])) ++pos;
      if (pos < b.size() && b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
  };
  auto number = [&] {
    skip_ws();
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("pgm: expected a decimal field");
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos] - '0');
      if (v > (1L << 24)) throw FormatError("pgm: header value too large");
      ++pos;
    }
    return v;
  };
  PgmHeader h;
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (h.width <= 0 || h.height <= 0) throw FormatError("pgm: empty image");
  if (h.maxval < 1 || h.maxval > 255) throw FormatError("pgm: only 8-bit maxval is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw FormatError("pgm: missing separator before raster");
  h.raster_offset = pos + 1;
  const auto need = static_cast<std::size_t>(h.width * h.height);
  if (b.size() - h.raster_offset != need) throw LengthError("pgm: raster length does not match header");
  return h;
}

} // namespace

MatrixX<std::uint8_t> decode_pgm8(const Bytes &bytes) {
  const PgmHeader h = parse_pgm_header(bytes);
  MatrixX<std::uint8_t> px(h.height, h.width);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(h.raster_offset), px.size(), px.data());
  return px;
}

Frame decode_pgm(const Bytes &bytes) {
  const PgmHeader h = parse_pgm_header(bytes);
  const MatrixX<std::uint8_t> px = decode_pgm8(bytes);
  return px.cast<double>() / double(h.maxval);
}

} // namespace gazereg
