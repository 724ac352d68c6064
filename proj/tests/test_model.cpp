#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include "doctest.h"
#include "lrr/model.h"

using namespace lrr;

namespace {

VisionConfig tiny_vision(int image_size = 16) {
    VisionConfig cfg;
    cfg.image_size = image_size;
    cfg.channels = {4, 4, 8, 8};
    cfg.strides = {2, 2, 2, 1};
    cfg.qprime = 8;
    return cfg;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.m = 2;
    cfg.q = 16;
    cfg.heads = 2;
    cfg.vocab = 24;
    cfg.max_seq = 64;
    cfg.vision = tiny_vision();
    return cfg;
}

Image noise_image(int size, uint64_t seed) {
    Rng rng(seed);
    Image img = Image::filled(size, size, {0, 0, 0});
    for (auto& v : img.data) v = static_cast<float>(rng.uniform());
    return img;
}

// <bos> tok tok <img> tok tok ... with the given counts.
InterleavedSequence make_seq(const std::vector<int>& tokens, const std::vector<int>& img_after,
                             int n_images) {
    InterleavedSequence seq;
    seq.items.push_back({false, Vocabulary::kBos});
    int frame = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
        seq.items.push_back({false, tokens[i]});
        for (int a : img_after) {
            if (a == static_cast<int>(i) && frame < n_images) {
                seq.items.push_back({true, frame});
                ++frame;
            }
        }
    }
    return seq;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
    std::vector<int> out;
    for (int i = 0; i < n; ++i) out.push_back(rng.uniform_int(Vocabulary::kNumReserved, vocab - 1));
    return out;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    ModelConfig cfg;
    cfg.vocab = 100;
    CHECK(cfg.cross_start() == 3);  // ceil(4/2)+1
    cfg.m = 2;
    CHECK(cfg.cross_start() == 2);
    cfg.m = 6;
    CHECK(cfg.cross_start() == 4);
    cfg.m = 1;
    CHECK_THROWS_AS(cfg.validate(), Error);  // default k = 2 > m
    cfg.k = 1;
    CHECK_NOTHROW(cfg.validate());
    cfg.m = 4;
    cfg.k = 0;
    cfg.q = 130;
    CHECK_THROWS_AS(cfg.validate(), Error);  // q % heads != 0
}

TEST_CASE("masks have the documented layout") {
    auto causal = LrrModel<float>::causal_mask(3);
    std::vector<uint8_t> want = {1, 0, 0, 1, 1, 0, 1, 1, 1};
    CHECK(*causal == want);

    auto vis = LrrModel<float>::visibility_mask(4, {1, 3}, 2);
    // Rows: s=0 sees nothing, s=1 sees image0, s=3 sees both.
    std::vector<uint8_t> want_vis = {0, 0, 0, 0,  1, 1, 0, 0,  1, 1, 0, 0,  1, 1, 1, 1};
    CHECK(*vis == want_vis);
}

TEST_CASE("parameter registry has unique names and expected entries") {
    Rng rng(21);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    std::set<std::string> names;
    for (const auto& p : model.params()) {
        CHECK(names.insert(p.name).second);
        for (float v : p.tensor.value()) CHECK(std::isfinite(v));
    }
    CHECK(model.param("tok_emb").shape() == std::vector<int>{24, 16});
    CHECK(model.param("layer1.cross.wo").shape() == std::vector<int>{16, 16});
    CHECK(model.param("layer1.mlp.w1").shape() == std::vector<int>{16, 8 + 24});
    CHECK_THROWS_AS(model.param("layer0.cross.wo"), Error);  // below cross_start
    // 2 emb + 8 vision + 16 plain layer + (16+14) cross layer + 2 final LN
    CHECK(model.params().size() == 2u + 8 + 16 + 30 + 2);
}

TEST_CASE("forward returns one logit row per text token") {
    Rng rng(22);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    Rng data_rng(1);
    auto seq = make_seq(random_tokens(data_rng, 6, cfg.vocab), {1, 3}, 2);
    std::vector<Image> imgs = {noise_image(16, 2), noise_image(16, 3)};
    REQUIRE(seq.t_v() == 2);
    REQUIRE(seq.t_s() == 7);

    auto logits = model.forward(seq, imgs);
    CHECK(logits.shape() == std::vector<int>{7, 24});

    auto stream = model.forward_stream(seq, imgs);
    CHECK(stream.logits.shape() == std::vector<int>{9, 24});
    REQUIRE(stream.text_positions.size() == 7);
    // Spec rows are slices of the stream rows at the text positions.
    const auto& lv = logits.value();
    const auto& sv = stream.logits.value();
    for (int j = 0; j < 7; ++j) {
        const int p = stream.text_positions[static_cast<size_t>(j)];
        for (int c = 0; c < 24; ++c) {
            CHECK(lv[static_cast<size_t>(j) * 24 + c] == sv[static_cast<size_t>(p) * 24 + c]);
        }
    }
}

TEST_CASE("text-only sequences bypass the vision stack") {
    Rng rng(23);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    Rng data_rng(2);
    auto seq = make_seq(random_tokens(data_rng, 5, cfg.vocab), {}, 0);
    auto logits = model.forward(seq, {});
    CHECK(logits.shape() == std::vector<int>{6, 24});
}

TEST_CASE("causality: perturbing a later token leaves earlier rows unchanged") {
    Rng rng(24);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    Rng data_rng(3);
    std::vector<Image> imgs = {noise_image(16, 7)};
    for (int trial = 0; trial < 5; ++trial) {
        auto tokens = random_tokens(data_rng, 8, cfg.vocab);
        auto seq = make_seq(tokens, {2}, 1);
        const int t = seq.size();
        auto base = model.forward_stream(seq, imgs);

        const int flip = data_rng.uniform_int(t / 2, t - 1);
        if (seq.items[static_cast<size_t>(flip)].is_image) continue;
        auto seq2 = seq;
        seq2.items[static_cast<size_t>(flip)].value =
            (seq2.items[static_cast<size_t>(flip)].value - Vocabulary::kNumReserved + 1) %
                (cfg.vocab - Vocabulary::kNumReserved) +
            Vocabulary::kNumReserved;
        auto pert = model.forward_stream(seq2, imgs);

        for (int s = 0; s < flip; ++s) {
            for (int c = 0; c < cfg.vocab; ++c) {
                const size_t idx = static_cast<size_t>(s) * cfg.vocab + c;
                CHECK(std::abs(base.logits.value()[idx] - pert.logits.value()[idx]) <= 1e-6);
            }
        }
    }
}

TEST_CASE("zeroed cross-attention output reduces bitwise to the text-only path") {
    Rng rng(25);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    for (auto& p : model.params()) {
        if (p.name.find("cross.wo") != std::string::npos ||
            p.name.find("cross.bo") != std::string::npos) {
            std::fill(p.tensor.value().begin(), p.tensor.value().end(), 0.0f);
        }
    }
    Rng data_rng(4);
    auto seq = make_seq(random_tokens(data_rng, 6, cfg.vocab), {0, 2}, 2);
    std::vector<Image> imgs = {noise_image(16, 8), noise_image(16, 9)};
    auto with_vision = model.forward_stream(seq, imgs);
    auto text_only = model.forward_stream_text_only(seq);
    REQUIRE(with_vision.logits.numel() == text_only.logits.numel());
    CHECK(std::memcmp(with_vision.logits.value().data(), text_only.logits.value().data(),
                      sizeof(float) * static_cast<size_t>(text_only.logits.numel())) == 0);
}

TEST_CASE("initial loss is close to ln(vocab)") {
    Rng rng(26);
    ModelConfig cfg = tiny_model_config();
    LrrModel<float> model(cfg, rng);
    Rng data_rng(5);
    auto seq = make_seq(random_tokens(data_rng, 10, cfg.vocab), {1}, 1);
    std::vector<Image> imgs = {noise_image(16, 10)};
    auto logits = model.forward(seq, imgs);
    std::vector<int> targets;
    for (int j = 0; j < logits.dim(0); ++j) {
        targets.push_back(data_rng.uniform_int(0, cfg.vocab - 1));
    }
    auto loss = cross_entropy(logits, targets);
    const double want = std::log(static_cast<double>(cfg.vocab));
    CHECK(std::abs(loss.item() - want) < 0.05 * want);
}

TEST_CASE("same seed gives bitwise identical models and logits") {
    ModelConfig cfg = tiny_model_config();
    Rng rng_a(27);
    LrrModel<float> a(cfg, rng_a);
    Rng rng_b(27);
    LrrModel<float> b(cfg, rng_b);
    Rng data_rng(6);
    auto seq = make_seq(random_tokens(data_rng, 5, cfg.vocab), {1}, 1);
    std::vector<Image> imgs = {noise_image(16, 11)};
    auto la = a.forward(seq, imgs);
    auto lb = b.forward(seq, imgs);
    CHECK(la.value() == lb.value());
}

TEST_CASE("forward validates inputs") {
    Rng rng(28);
    ModelConfig cfg = tiny_model_config();
    cfg.max_seq = 8;
    LrrModel<float> model(cfg, rng);
    Rng data_rng(7);
    auto seq = make_seq(random_tokens(data_rng, 4, cfg.vocab), {1}, 1);
    CHECK_THROWS_AS(model.forward(seq, {}), Error);  // 1 anchor, 0 images
    std::vector<Image> two = {noise_image(16, 1), noise_image(16, 2)};
    CHECK_THROWS_AS(model.forward(seq, two), Error);  // 1 anchor, 2 images

    auto long_seq = make_seq(random_tokens(data_rng, 10, cfg.vocab), {}, 0);
    CHECK_THROWS_AS(model.forward(long_seq, {}), Error);  // exceeds max_seq

    InterleavedSequence empty;
    CHECK_THROWS_AS(model.forward(empty, {}), Error);
}

TEST_CASE("gradient check on the full tiny model in double precision") {
    VisionConfig vis;
    vis.image_size = 8;
    vis.channels = {2, 2, 4, 4};
    vis.strides = {2, 2, 2, 1};
    vis.qprime = 4;
    ModelConfig cfg;
    cfg.m = 2;
    cfg.q = 16;
    cfg.heads = 2;
    cfg.vocab = 12;
    cfg.max_seq = 32;
    cfg.vision = vis;

    Rng rng(31);
    LrrModel<double> model(cfg, rng);
    Rng data_rng(8);
    auto tokens = random_tokens(data_rng, 5, cfg.vocab);
    auto seq = make_seq(tokens, {1}, 1);
    Image img8 = Image::filled(8, 8, {0, 0, 0});
    {
        Rng prng(12);
        for (auto& v : img8.data) v = static_cast<float>(prng.uniform());
    }
    std::vector<Image> imgs = {img8};
    std::vector<int> targets;
    for (int j = 0; j < seq.t_s(); ++j) targets.push_back(data_rng.uniform_int(0, cfg.vocab - 1));

    auto loss_value = [&]() {
        auto logits = model.forward(seq, imgs);
        return cross_entropy(logits, targets).item();
    };

    auto loss = cross_entropy(model.forward(seq, imgs), targets);
    backward(loss);

    const double h = 1e-5;
    int checked = 0;
    for (auto& p : model.params()) {
        REQUIRE(p.tensor.has_grad());
        auto& vals = p.tensor.value();
        const auto& grads = p.tensor.grad();
        std::vector<size_t> picks = {0, vals.size() / 2, vals.size() - 1};
        for (size_t idx : picks) {
            const double keep = vals[idx];
            vals[idx] = keep + h;
            const double up = loss_value();
            vals[idx] = keep - h;
            const double down = loss_value();
            vals[idx] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = grads[idx];
            const double rel =
                std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(rel < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 100);
}
