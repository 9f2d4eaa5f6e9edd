#include "dpsynth/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace dpsynth {

namespace {

// 8x8 glyph templates, one per class. Coarse digit-like strokes are enough
// for classifiers and denoisers to have real structure to learn.
const std::array<std::array<const char*, 8>, 10> kGlyphs = {{
    {{"..####..", ".#....#.", "#......#", "#......#", "#......#", "#......#",
      ".#....#.", "..####.."}},
    {{"...##...", "..###...", "...##...", "...##...", "...##...", "...##...",
      "...##...", ".######."}},
    {{".#####..", "#.....#.", "......#.", ".....#..", "...##...", "..#.....",
      ".#......", "#######."}},
    {{".#####..", "......#.", "......#.", "..####..", "......#.", "......#.",
      "......#.", ".#####.."}},
    {{"#....#..", "#....#..", "#....#..", "#######.", ".....#..", ".....#..",
      ".....#..", ".....#.."}},
    {{"#######.", "#.......", "#.......", "######..", "......#.", "......#.",
      "#.....#.", ".#####.."}},
    {{"..####..", ".#......", "#.......", "######..", "#.....#.", "#.....#.",
      "#.....#.", ".#####.."}},
    {{"#######.", "......#.", ".....#..", "....#...", "...#....", "..#.....",
      "..#.....", "..#....."}},
    {{".#####..", "#.....#.", "#.....#.", ".#####..", "#.....#.", "#.....#.",
      "#.....#.", ".#####.."}},
    {{".#####..", "#.....#.", "#.....#.", ".######.", "......#.", "......#.",
      ".....#..", "####...."}},
}};

} // namespace

Dataset make_toy_digits(std::size_t n, uint64_t seed) {
    SeededRng rng(seed, /*stream=*/1);
    Tensor images({n, 8, 8, 1});
    std::vector<std::size_t> labels(n);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t y = i % 10;
        labels[i] = y;
        const auto& glyph = kGlyphs[y];
        // Small random shift plus pixel jitter so samples within a class vary.
        const int dy = static_cast<int>(rng.uniform_below(3)) - 1;
        const int dx = static_cast<int>(rng.uniform_below(3)) - 1;
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                const int sr = std::clamp(r - dy, 0, 7);
                const int sc = std::clamp(c - dx, 0, 7);
                double v = glyph[static_cast<std::size_t>(sr)][sc] == '#' ? 0.9 : 0.1;
                v += 0.08 * rng.normal();
                images.data[(i * 8 + static_cast<std::size_t>(r)) * 8 +
                            static_cast<std::size_t>(c)] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    round_through_f32(images);
    return Dataset(std::move(images), std::move(labels), 10);
}

Dataset make_three_gaussians(std::size_t n, uint64_t seed) {
    SeededRng rng(seed, /*stream=*/2);
    const double centers[3][2] = {{0.25, 0.25}, {0.75, 0.3}, {0.5, 0.8}};
    const double sigma = 0.05;

    Tensor images({n, 1, 2, 1});
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % 3;
        labels[i] = k;
        for (std::size_t d = 0; d < 2; ++d) {
            const double v = centers[k][d] + sigma * rng.normal();
            images.data[i * 2 + d] = std::clamp(v, 0.0, 1.0);
        }
    }
    round_through_f32(images);
    return Dataset(std::move(images), std::move(labels), 3);
}

} // namespace dpsynth
