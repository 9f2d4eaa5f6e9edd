#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace dpsynth {

/// Dense row-major tensor of doubles. The binary container on disk stores
/// either f32 or u8 payloads; values are widened on load, so round-trips
/// are bit-exact for both dtypes.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, double fill = 0.0);

    std::size_t rank() const { return shape.size(); }
    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& at(std::size_t flat) { return data[flat]; }
    double at(std::size_t flat) const { return data[flat]; }
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

enum class Dtype : uint8_t { f32 = 0, u8 = 1 };

// Container layout (little-endian):
//   8-byte magic "DPSL0001", 1 byte dtype code, 1 byte rank,
//   rank x u64 shape, then the raw row-major payload.
inline constexpr char kTensorFileMagic[8] = {'D', 'P', 'S', 'L', '0', '0', '0', '1'};

/// Writes `t` to `path`. f32 truncates doubles to float; u8 requires
/// integer values in [0, 255] and throws ValidationError otherwise.
void write_tensor_file(const std::string& path, const Tensor& t, Dtype dtype);

/// Reads a container written by write_tensor_file. Throws FormatError on a
/// bad magic, unknown dtype, or a payload/shape mismatch.
Tensor read_tensor_file(const std::string& path, Dtype* dtype_out = nullptr);

/// Rounds every value through float, so a later f32 write/read is an
/// identity. Fixture generators use this before handing data to Dataset.
void round_through_f32(Tensor& t);

} // namespace dpsynth
