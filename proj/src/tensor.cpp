#include "dpsynth/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "dpsynth/errors.hpp"

namespace dpsynth {

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(shape_product(shape), fill) {}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("tensor file truncated");
    return v;
}

} // namespace

void write_tensor_file(const std::string& path, const Tensor& t, Dtype dtype) {
    if (t.size() != shape_product(t.shape))
        throw ValidationError("tensor payload does not match its shape");
    if (t.rank() > 255) throw ValidationError("tensor rank exceeds container limit");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for write: " + path);
    out.write(kTensorFileMagic, sizeof(kTensorFileMagic));
    write_raw(out, static_cast<uint8_t>(dtype));
    write_raw(out, static_cast<uint8_t>(t.rank()));
    for (std::size_t d : t.shape) write_raw(out, static_cast<uint64_t>(d));

    if (dtype == Dtype::f32) {
        for (double v : t.data) write_raw(out, static_cast<float>(v));
    } else {
        for (double v : t.data) {
            if (v < 0.0 || v > 255.0 || v != std::floor(v))
                throw ValidationError("u8 tensor requires integer values in [0,255]");
            write_raw(out, static_cast<uint8_t>(v));
        }
    }
    if (!out) throw FormatError("short write: " + path);
}

Tensor read_tensor_file(const std::string& path, Dtype* dtype_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open for read: " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kTensorFileMagic, sizeof(magic)) != 0)
        throw FormatError("bad tensor file magic: " + path);

    const auto dtype_code = read_raw<uint8_t>(in);
    if (dtype_code > 1) throw FormatError("unknown dtype code in " + path);
    const Dtype dtype = static_cast<Dtype>(dtype_code);
    const auto rank = read_raw<uint8_t>(in);

    Tensor t;
    t.shape.resize(rank);
    for (auto& d : t.shape) d = static_cast<std::size_t>(read_raw<uint64_t>(in));
    const std::size_t n = shape_product(t.shape);
    t.data.resize(n);

    if (dtype == Dtype::f32) {
        for (std::size_t i = 0; i < n; ++i) t.data[i] = read_raw<float>(in);
    } else {
        for (std::size_t i = 0; i < n; ++i) t.data[i] = read_raw<uint8_t>(in);
    }
    // Trailing bytes mean the shape header lied about the payload.
    in.peek();
    if (!in.eof()) throw FormatError("trailing bytes after payload: " + path);
    if (dtype_out) *dtype_out = dtype;
    return t;
}

void round_through_f32(Tensor& t) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

} // namespace dpsynth
