#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "lrr/vision.h"

using namespace lrr;

namespace {

Image noise_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img = Image::filled(size, size, {0, 0, 0});
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

VisionConfig tiny_config() {
    VisionConfig cfg;
    cfg.image_size = 16;
    cfg.channels = {4, 4, 8, 8};
    cfg.strides = {2, 2, 2, 1};
    cfg.qprime = 8;
    return cfg;
}

}  // namespace

TEST_CASE("default config grid geometry") {
    VisionConfig cfg;
    CHECK(cfg.grid_side() == 8);
    CHECK(cfg.grid_cells() == 64);
    CHECK(kernels::conv_out_dim(64, 3, 2, 1) == 32);
    CHECK(kernels::conv_out_dim(8, 3, 1, 1) == 8);
}

TEST_CASE("position channels are unit sin/cos pairs and injective") {
    std::map<std::vector<double>, int> seen;
    for (int f = 0; f < 16; ++f) {
        for (int r = 0; r < 8; ++r) {
            for (int c = 0; c < 8; ++c) {
                auto ch = position_channels(f, r, c);
                REQUIRE(ch.size() == 24);
                for (int j = 0; j < 12; ++j) {
                    CHECK(ch[2 * j] * ch[2 * j] + ch[2 * j + 1] * ch[2 * j + 1] ==
                          doctest::Approx(1.0).epsilon(1e-12));
                }
                seen[ch] += 1;
            }
        }
    }
    CHECK(seen.size() == 16u * 8 * 8);
}

TEST_CASE("encode produces grid cells of the configured width") {
    Rng rng(3);
    VisionConfig cfg = tiny_config();
    VisionEncoder<float> enc(cfg, rng);
    Image img = noise_image(cfg.image_size, 5);
    GridFeatures<float> feats = enc.encode(img);
    CHECK(feats.rows == 2);
    CHECK(feats.cols == 2);
    CHECK(feats.frame_index == -1);
    CHECK(feats.cells.shape() == std::vector<int>{4, 8});

    GridFeatures<float> with_pos = enc.attach_positions(feats, 3);
    CHECK(with_pos.frame_index == 3);
    CHECK(with_pos.cells.shape() == std::vector<int>{4, 8 + 24});
    // Positional block of cell (r=1, c=0) is exactly position_channels(3,1,0).
    auto want = position_channels(3, 1, 0);
    const auto& vals = with_pos.cells.value();
    const int width = 8 + 24;
    for (int j = 0; j < 24; ++j) {
        CHECK(vals[static_cast<size_t>(2 * width + 8 + j)] ==
              doctest::Approx(want[static_cast<size_t>(j)]).epsilon(1e-6));
    }
}

TEST_CASE("encode is deterministic and seed-sensitive") {
    VisionConfig cfg = tiny_config();
    Rng rng_a(3);
    VisionEncoder<float> a(cfg, rng_a);
    Rng rng_b(3);
    VisionEncoder<float> b(cfg, rng_b);
    Image img = noise_image(cfg.image_size, 5);
    CHECK(a.encode(img).cells.value() == b.encode(img).cells.value());

    Rng rng_c(4);
    VisionEncoder<float> c(cfg, rng_c);
    CHECK(a.encode(img).cells.value() != c.encode(img).cells.value());
}

TEST_CASE("gradients flow back to every conv parameter") {
    Rng rng(9);
    VisionConfig cfg = tiny_config();
    VisionEncoder<float> enc(cfg, rng);
    Image img = noise_image(cfg.image_size, 6);
    GridFeatures<float> feats = enc.attach_positions(enc.encode(img), 0);
    auto loss = sum(mul(feats.cells, feats.cells));
    backward(loss);
    ParamList<float> params;
    enc.register_params(params, "vision.");
    CHECK(params.size() == 8);  // 4 conv weights + 4 biases
    for (auto& p : params) {
        REQUIRE(p.tensor.has_grad());
        double norm = 0;
        for (float g : p.tensor.grad()) norm += std::abs(g);
        CHECK(norm > 0);
    }
}

TEST_CASE("encoder validates input dimensions") {
    Rng rng(1);
    VisionConfig cfg = tiny_config();
    VisionEncoder<float> enc(cfg, rng);
    CHECK_THROWS_AS(enc.encode(noise_image(cfg.image_size + 1, 2)), Error);
    CHECK_THROWS_AS(enc.attach_positions(enc.encode(noise_image(cfg.image_size, 2)), -1), Error);
    CHECK_THROWS_AS(
        enc.attach_positions(enc.encode(noise_image(cfg.image_size, 2)), cfg.max_frames), Error);
}

TEST_CASE("config validation rejects inconsistent geometry") {
    Rng rng(1);
    VisionConfig cfg = tiny_config();
    cfg.qprime = 5;  // != channels.back()
    CHECK_THROWS_AS(VisionEncoder<float>(cfg, rng), Error);
    VisionConfig cfg2 = tiny_config();
    cfg2.strides = {2, 2};  // block count mismatch
    CHECK_THROWS_AS(VisionEncoder<float>(cfg2, rng), Error);
}
