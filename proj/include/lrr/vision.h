// vision.h — small trainable CNN producing spatial grid features, plus fixed
// sinusoidal positional channels over (frame, row, col).
#pragma once

#include <cmath>
#include <vector>

#include "lrr/image.h"
#include "lrr/optim.h"
#include "lrr/rng.h"
#include "lrr/tensor.h"

namespace lrr {

struct VisionConfig {
    int image_size = 64;
    std::vector<int> channels = {16, 32, 64, 64};  // per conv block
    std::vector<int> strides = {2, 2, 2, 1};       // 64 -> 32 -> 16 -> 8 -> 8
    int qprime = 64;                               // == channels.back()
    int pos_dim = 24;                              // 8 channels per coordinate
    int max_frames = 16;

    int grid_side() const {
        int s = image_size;
        for (int st : strides) s /= st;
        return s;
    }
    int grid_cells() const { return grid_side() * grid_side(); }
};

// Sinusoidal channels for one coordinate value: (sin, cos) pairs at
// frequencies pi/2, pi/4, pi/8, pi/16 — injective for values in [0, 32).
inline void coord_channels(int v, std::vector<double>& out) {
    double omega = M_PI / 2.0;
    for (int j = 0; j < 4; ++j) {
        out.push_back(std::sin(omega * v));
        out.push_back(std::cos(omega * v));
        omega *= 0.5;
    }
}

inline std::vector<double> position_channels(int frame, int row, int col) {
    std::vector<double> out;
    out.reserve(24);
    coord_channels(frame, out);
    coord_channels(row, out);
    coord_channels(col, out);
    return out;
}

template <typename T>
struct GridFeatures {
    int rows = 0;
    int cols = 0;
    int frame_index = -1;  // set once positions are attached
    Tensor<T> cells;       // (rows*cols) x channels, row-major over cells
};

template <typename T>
class VisionEncoder {
  public:
    VisionEncoder() = default;

    VisionEncoder(const VisionConfig& cfg, Rng& rng) : cfg_(cfg) {
        check(cfg.channels.size() == cfg.strides.size(), "VisionEncoder: ",
              cfg.channels.size(), " channel specs vs ", cfg.strides.size(), " strides");
        check(cfg.qprime == cfg.channels.back(), "VisionEncoder: qprime ", cfg.qprime,
              " must equal last conv width ", cfg.channels.back());
        check(cfg.pos_dim == 24, "VisionEncoder: pos_dim must be 24, got ", cfg.pos_dim);
        int in_ch = 3;
        for (size_t i = 0; i < cfg.channels.size(); ++i) {
            const int out_ch = cfg.channels[i];
            // He initialization keeps activation scale roughly constant.
            const T stddev = static_cast<T>(std::sqrt(2.0 / (in_ch * 9)));
            w_.push_back(Tensor<T>::randn({out_ch, in_ch, 3, 3}, rng, stddev, true));
            b_.push_back(Tensor<T>::zeros({out_ch}, true));
            in_ch = out_ch;
        }
        std::vector<T> eye(static_cast<size_t>(cfg.qprime) * cfg.qprime, T(0));
        for (int i = 0; i < cfg.qprime; ++i) eye[static_cast<size_t>(i) * cfg.qprime + i] = T(1);
        eye_ = Tensor<T>::from_data({cfg.qprime, cfg.qprime}, std::move(eye));
    }

    const VisionConfig& config() const { return cfg_; }

    void register_params(ParamList<T>& out, const std::string& prefix) {
        for (size_t i = 0; i < w_.size(); ++i) {
            out.push_back({prefix + "conv" + std::to_string(i) + ".w", w_[i]});
            out.push_back({prefix + "conv" + std::to_string(i) + ".b", b_[i]});
        }
    }

    Tensor<T> image_tensor(const Image& img) const {
        check(img.h == cfg_.image_size && img.w == cfg_.image_size, "encode_image: got ",
              img.h, "x", img.w, ", config expects ", cfg_.image_size, "x", cfg_.image_size);
        std::vector<T> data(img.data.begin(), img.data.end());
        return Tensor<T>::from_data({3, img.h, img.w}, std::move(data));
    }

    // (3,H,W) tensor -> grid of q' feature channels per cell.
    GridFeatures<T> encode(const Tensor<T>& image) const {
        check(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == cfg_.image_size &&
                  image.dim(2) == cfg_.image_size,
              "encode_image: input ", shape_str(image.shape()), ", config expects [3x",
              cfg_.image_size, "x", cfg_.image_size, "]");
        Tensor<T> x = image;
        for (size_t i = 0; i < w_.size(); ++i) {
            x = gelu(conv2d(x, w_[i], b_[i], cfg_.strides[i], 1));
        }
        const int side = cfg_.grid_side();
        check(x.dim(1) == side && x.dim(2) == side, "encode_image: grid came out ",
              shape_str(x.shape()), ", expected side ", side);
        GridFeatures<T> feats;
        feats.rows = side;
        feats.cols = side;
        // (q',side,side) -> (g,q'): flatten the spatial dims, then transpose
        // via multiplication with a constant identity.
        Tensor<T> flat = reshape(x, {cfg_.qprime, side * side});
        feats.cells = matmul(flat, eye_, true, false);
        return feats;
    }

    GridFeatures<T> encode(const Image& img) const { return encode(image_tensor(img)); }

    GridFeatures<T> attach_positions(const GridFeatures<T>& feats, int frame_index) const {
        check(frame_index >= 0, "attach_positions: negative frame index ", frame_index);
        check(frame_index < cfg_.max_frames, "attach_positions: frame_index ", frame_index,
              " exceeds max_frames ", cfg_.max_frames);
        const int g = feats.rows * feats.cols;
        std::vector<T> pos;
        pos.reserve(static_cast<size_t>(g) * cfg_.pos_dim);
        for (int r = 0; r < feats.rows; ++r) {
            for (int c = 0; c < feats.cols; ++c) {
                for (double v : position_channels(frame_index, r, c)) {
                    pos.push_back(static_cast<T>(v));
                }
            }
        }
        GridFeatures<T> out;
        out.rows = feats.rows;
        out.cols = feats.cols;
        out.frame_index = frame_index;
        out.cells = concat<T>(
            {feats.cells, Tensor<T>::from_data({g, cfg_.pos_dim}, std::move(pos))}, 1);
        return out;
    }

  private:
    VisionConfig cfg_;
    std::vector<Tensor<T>> w_, b_;
    Tensor<T> eye_;
};

}  // namespace lrr
