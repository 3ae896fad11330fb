#pragma once

#include <iosfwd>
#include <string>
#include <variant>

#include "mscsa/tensor.hpp"

namespace mscsa::io {

// MSCT binary tensor file:
//   magic "MSCT", version u32 = 1, dtype u8 (0 = f32, 1 = f64), ndim u8,
//   ndim x u32 dims, then the raw little-endian row-major payload.

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

template <typename T>
void write_tensor_file(const std::string& path, const Tensor<T>& t);

AnyTensor read_tensor(std::istream& is);
AnyTensor read_tensor_file(const std::string& path);

template <typename T>
Tensor<T> read_tensor_file_as(const std::string& path);

}  // namespace mscsa::io
