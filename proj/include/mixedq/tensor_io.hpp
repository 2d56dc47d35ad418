#pragma once

#include <iosfwd>
#include <string>

#include "mixedq/tensor.hpp"

namespace mixedq {

// Raw tensor file format shared across the toolkit:
//   magic "MXQT", version byte, u8 rank, rank x u32 little-endian dims,
//   elements as little-endian 32-bit floats in row-major order.
inline constexpr char kTensorMagic[4] = {'M', 'X', 'Q', 'T'};
inline constexpr uint8_t kTensorFormatVersion = 1;

void write_tensor(std::ostream &os, const Tensor &t);
Tensor read_tensor(std::istream &is);

void save_tensor(const std::string &path, const Tensor &t);
Tensor load_tensor(const std::string &path);

} // namespace mixedq
