#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dpsynth/dataset.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/fixtures.hpp"
#include "dpsynth/tensor.hpp"

using namespace dpsynth;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("dpsynth_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_SUITE("dataio") {

TEST_CASE("tensor file round-trip is bit-exact for both dtypes") {
    const fs::path dir = temp_dir("tensor_rt");

    Tensor tf({3, 4});
    for (std::size_t i = 0; i < tf.size(); ++i)
        tf.data[i] = static_cast<float>(0.125 * static_cast<double>(i) - 0.7);
    write_tensor_file((dir / "a.tf").string(), tf, Dtype::f32);
    Dtype dt{};
    Tensor back = read_tensor_file((dir / "a.tf").string(), &dt);
    CHECK(dt == Dtype::f32);
    CHECK(back.shape == tf.shape);
    CHECK(back.data == tf.data);

    write_tensor_file((dir / "a2.tf").string(), back, Dtype::f32);
    CHECK(slurp(dir / "a.tf") == slurp(dir / "a2.tf"));

    Tensor tu({5});
    for (std::size_t i = 0; i < 5; ++i) tu.data[i] = static_cast<double>(i * 51);
    write_tensor_file((dir / "b.tf").string(), tu, Dtype::u8);
    Tensor ub = read_tensor_file((dir / "b.tf").string(), &dt);
    CHECK(dt == Dtype::u8);
    CHECK(ub.data == tu.data);
}

TEST_CASE("bad magic and trailing bytes are format errors") {
    const fs::path dir = temp_dir("tensor_bad");
    {
        std::ofstream out(dir / "bad.tf", std::ios::binary);
        out << "NOTDPSL0 garbage";
    }
    CHECK_THROWS_AS(read_tensor_file((dir / "bad.tf").string()), FormatError);

    Tensor t({2});
    t.data = {1.0, 2.0};
    write_tensor_file((dir / "ok.tf").string(), t, Dtype::f32);
    {
        std::ofstream out(dir / "ok.tf", std::ios::binary | std::ios::app);
        out << "x";
    }
    CHECK_THROWS_AS(read_tensor_file((dir / "ok.tf").string()), FormatError);
}

TEST_CASE("toy digits fixture loads with the documented dims") {
    const fs::path dir = temp_dir("toy");
    Dataset toy = make_toy_digits(2000, 7);
    save_dataset((dir / "digits").string(), toy);
    Dataset ds = load_dataset((dir / "digits").string());

    CHECK(ds.size() == 2000);
    CHECK(ds.height() == 8);
    CHECK(ds.width() == 8);
    CHECK(ds.channels() == 1);
    CHECK(ds.num_classes() == 10);
    CHECK(ds.images().data == toy.images().data);

    // Save-load-save produces identical bytes.
    save_dataset((dir / "digits2").string(), ds);
    CHECK(slurp(dir / "digits" / "images.tf") == slurp(dir / "digits2" / "images.tf"));
    CHECK(slurp(dir / "digits" / "labels.tf") == slurp(dir / "digits2" / "labels.tf"));
}

TEST_CASE("label equal to K fails validation") {
    const fs::path dir = temp_dir("badlabel");
    Dataset toy = make_toy_digits(20, 3);
    save_dataset((dir / "d").string(), toy);
    // Rewrite labels.tf so one label equals K.
    Tensor labels = read_tensor_file((dir / "d" / "labels.tf").string());
    labels.data[0] = 10.0;
    write_tensor_file((dir / "d" / "labels.tf").string(), labels, Dtype::u8);
    CHECK_THROWS_AS(load_dataset((dir / "d").string()), ValidationError);
}

TEST_CASE("split sizes are floors and the MNIST row splits 55000/5000/10000") {
    Dataset toy = make_toy_digits(70, 1);
    // Same fractions as the 70000-image case, scaled down 1000x.
    Dataset split = split_dataset(toy, {55000.0 / 70000.0, 5000.0 / 70000.0, 10000.0 / 70000.0}, 5);
    CHECK(split.split().n_train() == 55);
    CHECK(split.split().n_val() == 5);
    CHECK(split.split().n_test() == 10);
    split.split().validate(split.size());

    // Full-size check on the arithmetic alone, without materializing 70k images.
    const auto n_train = static_cast<std::size_t>(std::floor(55000.0 / 70000.0 * 70000.0));
    const auto n_val = static_cast<std::size_t>(std::floor(5000.0 / 70000.0 * 70000.0));
    const auto n_test = static_cast<std::size_t>(std::floor(10000.0 / 70000.0 * 70000.0));
    CHECK(n_train == 55000);
    CHECK(n_val == 5000);
    CHECK(n_test == 10000);
}

TEST_CASE("fractions (1,0,0) put every index in train") {
    Dataset toy = make_toy_digits(33, 2);
    Dataset split = split_dataset(toy, {1.0, 0.0, 0.0}, 11);
    CHECK(split.split().n_train() == 33);
    CHECK(split.split().n_val() == 0);
    CHECK(split.split().n_test() == 0);
}

TEST_CASE("same seed gives identical manifests, different seed does not") {
    Dataset toy = make_toy_digits(200, 4);
    Dataset a = split_dataset(toy, {0.6, 0.2, 0.2}, 42);
    Dataset b = split_dataset(toy, {0.6, 0.2, 0.2}, 42);
    Dataset c = split_dataset(toy, {0.6, 0.2, 0.2}, 43);
    CHECK(a.split().train_idx == b.split().train_idx);
    CHECK(a.split().val_idx == b.split().val_idx);
    CHECK(a.split().test_idx == b.split().test_idx);
    CHECK(a.split().train_idx != c.split().train_idx);
}

TEST_CASE("fractions summing above one are rejected") {
    Dataset toy = make_toy_digits(10, 6);
    CHECK_THROWS_AS(split_dataset(toy, {0.8, 0.2, 0.2}, 1), ValidationError);
}

TEST_CASE("stratified split keeps class counts within one of proportional") {
    Dataset toy = make_toy_digits(503, 9); // uneven class sizes
    Dataset split = split_dataset(toy, {0.7, 0.15, 0.15}, 3, /*stratified=*/true);
    std::vector<std::size_t> class_total(10, 0), class_train(10, 0);
    for (std::size_t i = 0; i < toy.size(); ++i) ++class_total[toy.labels()[i]];
    for (std::size_t i : split.split().train_idx) ++class_train[toy.labels()[i]];
    for (std::size_t k = 0; k < 10; ++k) {
        const double proportional = 0.7 * static_cast<double>(class_total[k]);
        CHECK(std::fabs(static_cast<double>(class_train[k]) - proportional) <= 1.0);
    }
}

TEST_CASE("resize to the same shape is the identity") {
    Dataset toy = make_toy_digits(12, 5);
    Dataset same = resize_nearest(toy, 8, 8);
    CHECK(same.images().data == toy.images().data);
}

TEST_CASE("constant 2x2 image upsamples to a constant 4x4") {
    Tensor im({1, 2, 2, 1}, 0.25);
    Dataset ds(im, {0}, 1);
    Dataset up = resize_nearest(ds, 4, 4);
    CHECK(up.height() == 4);
    for (double v : up.images().data) CHECK(v == 0.25);
}

TEST_CASE("8x8 downsample matches the floor index map oracle") {
    Dataset toy = make_toy_digits(5, 8);
    Dataset down = resize_nearest(toy, 4, 4);
    const Tensor& src = toy.images();
    const Tensor& dst = down.images();
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
                // Independent oracle: src index floor(dst * 8 / 4).
                const std::size_t sy = y * 8 / 4, sx = x * 8 / 4;
                CHECK(dst.data[(i * 4 + y) * 4 + x] ==
                      src.data[(i * 8 + sy) * 8 + sx]);
            }
    for (double v : dst.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

} // TEST_SUITE

