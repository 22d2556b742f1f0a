#pragma once

#include "gazereg/bytes.hpp"
#include "gazereg/numerics.hpp"

namespace gazereg {

/// Grayscale frame, intensities in [0, 1], rows = height.
using Frame = Tensor;

/// Round to the nearest 8-bit level and back, so a frame survives PGM I/O unchanged.
Frame quantize8(const Frame &f);

/// Binary P5 PGM, maxval 255.
Bytes encode_pgm(const Frame &f);

/// Parses the P5 grammar: magic, whitespace/comments, width, height, maxval (1..255),
/// a single whitespace byte, then width*height raster bytes.
Frame decode_pgm(const Bytes &bytes);

/// Raw 8-bit variant used by the renderer, which composes in byte space.
Bytes encode_pgm8(const MatrixX<std::uint8_t> &pixels);
MatrixX<std::uint8_t> decode_pgm8(const Bytes &bytes);

} // namespace gazereg
