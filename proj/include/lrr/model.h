// model.h — decoder-only causal transformer with top-down cross-attention
// over CNN grid features in its upper layers:
//   hhat = SelfAttn(h); vhat = CrossAttn(hhat, visuals);
//   h <- h + hhat + vhat; h <- FFN(h) + h        (pre-norm throughout)
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lrr/optim.h"
#include "lrr/tokenizer.h"
#include "lrr/vision.h"

namespace lrr {

struct ModelConfig {
    int m = 4;       // transformer layers
    int q = 128;     // embedding dim
    int heads = 4;
    int k = 0;       // first cross-attention layer (1-indexed); 0 = ceil(m/2)+1
    int vocab = 0;
    int max_seq = 640;
    VisionConfig vision;

    int cross_start() const { return k > 0 ? k : (m + 1) / 2 + 1; }
    int head_dim() const { return q / heads; }
    int visual_dim() const { return vision.qprime + vision.pos_dim; }

    void validate() const {
        check(m >= 1, "ModelConfig: m must be >= 1, got ", m);
        check(q % heads == 0, "ModelConfig: q ", q, " not divisible by heads ", heads);
        check(vocab > Vocabulary::kNumReserved, "ModelConfig: vocab ", vocab, " too small");
        const int ks = cross_start();
        check(ks >= 1 && ks <= m, "ModelConfig: k ", ks, " outside [1, ", m, "]");
    }
};

template <typename T>
struct LayerParams {
    Tensor<T> ln1_g, ln1_b;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_g, ln2_b;
    Tensor<T> f1_w, f1_b, f2_w, f2_b;
    bool has_cross = false;
    Tensor<T> lnc_g, lnc_b;
    Tensor<T> cq_w, cq_b, ck_w, ck_b, cv_w, cv_b, co_w, co_b;
    Tensor<T> mlp1_w, mlp1_b, mlp2_w, mlp2_b;  // per-layer grid projection
};

template <typename T>
struct StreamForward {
    Tensor<T> logits;                 // t x vocab, next-item logits per stream position
    std::vector<int> text_positions;  // stream position of each text item
};

template <typename T>
class LrrModel {
  public:
    LrrModel() = default;

    LrrModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        vision_ = VisionEncoder<T>(cfg_.vision, rng);
        const T std_w = T(0.02);
        tok_emb_ = Tensor<T>::randn({cfg_.vocab, cfg_.q}, rng, std_w, true);
        pos_emb_ = Tensor<T>::randn({cfg_.max_seq, cfg_.q}, rng, std_w, true);
        lnf_g_ = Tensor<T>::filled({cfg_.q}, T(1), true);
        lnf_b_ = Tensor<T>::zeros({cfg_.q}, true);
        auto lin = [&](int out, int in) { return Tensor<T>::randn({out, in}, rng, std_w, true); };
        auto he = [&](int out, int in) {
            return Tensor<T>::randn({out, in}, rng, static_cast<T>(std::sqrt(2.0 / in)), true);
        };
        auto zeros = [&](int n) { return Tensor<T>::zeros({n}, true); };
        auto ones = [&](int n) { return Tensor<T>::filled({n}, T(1), true); };
        const int q = cfg_.q;
        for (int li = 0; li < cfg_.m; ++li) {
            LayerParams<T> lp;
            lp.ln1_g = ones(q);
            lp.ln1_b = zeros(q);
            lp.wq = lin(q, q);
            lp.bq = zeros(q);
            lp.wk = lin(q, q);
            lp.bk = zeros(q);
            lp.wv = lin(q, q);
            lp.bv = zeros(q);
            lp.wo = lin(q, q);
            lp.bo = zeros(q);
            lp.ln2_g = ones(q);
            lp.ln2_b = zeros(q);
            lp.f1_w = lin(4 * q, q);
            lp.f1_b = zeros(4 * q);
            lp.f2_w = lin(q, 4 * q);
            lp.f2_b = zeros(q);
            lp.has_cross = (li + 1) >= cfg_.cross_start();
            if (lp.has_cross) {
                lp.lnc_g = ones(q);
                lp.lnc_b = zeros(q);
                lp.cq_w = lin(q, q);
                lp.cq_b = zeros(q);
                lp.ck_w = lin(q, q);
                lp.ck_b = zeros(q);
                lp.cv_w = lin(q, q);
                lp.cv_b = zeros(q);
                lp.co_w = lin(q, q);
                lp.co_b = zeros(q);
                lp.mlp1_w = he(q, cfg_.visual_dim());
                lp.mlp1_b = zeros(q);
                lp.mlp2_w = he(q, q);
                lp.mlp2_b = zeros(q);
            }
            layers_.push_back(std::move(lp));
        }
        register_all();
    }

    const ModelConfig& config() const { return cfg_; }
    const VisionEncoder<T>& vision() const { return vision_; }
    ParamList<T>& params() { return params_; }
    const ParamList<T>& params() const { return params_; }
    const std::vector<LayerParams<T>>& layers() const { return layers_; }
    const Tensor<T>& tok_emb() const { return tok_emb_; }
    const Tensor<T>& pos_emb() const { return pos_emb_; }
    const Tensor<T>& lnf_g() const { return lnf_g_; }
    const Tensor<T>& lnf_b() const { return lnf_b_; }

    Tensor<T>& param(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p.tensor;
        }
        fail("model has no parameter named '", name, "'");
    }

    // Lower-triangular self-attention visibility.
    static std::shared_ptr<const std::vector<uint8_t>> causal_mask(int t) {
        auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(t) * t, 0);
        for (int s = 0; s < t; ++s) {
            for (int j = 0; j <= s; ++j) (*mask)[static_cast<size_t>(s) * t + j] = 1;
        }
        return mask;
    }

    // Cell (of a given image) visible to a stream position iff the image's
    // anchor is at or before that position.
    static std::shared_ptr<const std::vector<uint8_t>> visibility_mask(
        int t, const std::vector<int>& anchor_positions, int cells_per_image) {
        const int g_total = static_cast<int>(anchor_positions.size()) * cells_per_image;
        auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(t) * g_total, 0);
        for (int s = 0; s < t; ++s) {
            for (size_t i = 0; i < anchor_positions.size(); ++i) {
                if (anchor_positions[i] > s) continue;
                uint8_t* row = mask->data() + static_cast<size_t>(s) * g_total;
                std::fill(row + i * cells_per_image, row + (i + 1) * cells_per_image,
                          uint8_t(1));
            }
        }
        return mask;
    }

    // Per-layer 2-layer MLP from (q'+p) visual channels to model dim.
    Tensor<T> project_grid_features(const GridFeatures<T>& feats, int layer) const {
        check(layer >= cfg_.cross_start() && layer <= cfg_.m, "project_grid_features: layer ",
              layer, " outside cross-attention range [", cfg_.cross_start(), ", ", cfg_.m, "]");
        check(feats.frame_index >= 0,
              "project_grid_features: positional channels not attached");
        const LayerParams<T>& lp = layers_[static_cast<size_t>(layer - 1)];
        return linear(gelu(linear(feats.cells, lp.mlp1_w, lp.mlp1_b)), lp.mlp2_w, lp.mlp2_b);
    }

    // Multi-head causal self-attention (pre-norm); returns the residual delta.
    Tensor<T> self_attention_block(const Tensor<T>& h, int layer,
                                   std::shared_ptr<const std::vector<uint8_t>> mask = nullptr) const {
        check(layer >= 1 && layer <= cfg_.m, "self_attention_block: layer ", layer,
              " outside [1, ", cfg_.m, "]");
        const int t = h.dim(0);
        if (!mask) mask = causal_mask(t);
        check(static_cast<int64_t>(mask->size()) == static_cast<int64_t>(t) * t,
              "self_attention_block: mask size ", mask->size(), " vs t=", t);
        const LayerParams<T>& lp = layers_[static_cast<size_t>(layer - 1)];
        auto x = layer_norm(h, lp.ln1_g, lp.ln1_b);
        auto qh = linear(x, lp.wq, lp.bq);
        auto kh = linear(x, lp.wk, lp.bk);
        auto vh = linear(x, lp.wv, lp.bv);
        return linear(attend(qh, kh, vh, t, mask), lp.wo, lp.bo);
    }

    // Top-down cross-attention: queries from hhat, keys/values from projected
    // grid cells of the visible images; returns the residual delta.
    Tensor<T> cross_attention_block(const Tensor<T>& hhat, int layer, const Tensor<T>& visuals,
                                    std::shared_ptr<const std::vector<uint8_t>> mask) const {
        check(layer >= cfg_.cross_start() && layer <= cfg_.m, "cross_attention_block: layer ",
              layer, " outside cross range");
        const int t = hhat.dim(0);
        const LayerParams<T>& lp = layers_[static_cast<size_t>(layer - 1)];
        auto x = layer_norm(hhat, lp.lnc_g, lp.lnc_b);
        auto qc = linear(x, lp.cq_w, lp.cq_b);
        auto kc = linear(visuals, lp.ck_w, lp.ck_b);
        auto vc = linear(visuals, lp.cv_w, lp.cv_b);
        return linear(attend(qc, kc, vc, t, mask), lp.co_w, lp.co_b);
    }

    StreamForward<T> forward_stream(const InterleavedSequence& seq,
                                    const std::vector<Image>& images) const {
        check(static_cast<int>(images.size()) == seq.t_v(), "forward: ", seq.t_v(),
              " anchors but ", images.size(), " images");
        return run_stream(seq, &images);
    }

    // Ablation comparator: anchors stay in the stream as <img> tokens, but no
    // grid features are attached and cross-attention blocks are skipped.
    StreamForward<T> forward_stream_text_only(const InterleavedSequence& seq) const {
        return run_stream(seq, nullptr);
    }

    // Spec-level view: next-item logits at each text token's stream position.
    Tensor<T> forward(const InterleavedSequence& seq, const std::vector<Image>& images) const {
        StreamForward<T> sf = forward_stream(seq, images);
        const int v = cfg_.vocab;
        if (static_cast<int>(out_rows(sf)) == sf.logits.dim(0)) return sf.logits;
        std::vector<Tensor<T>> rows;
        rows.reserve(sf.text_positions.size());
        for (int p : sf.text_positions) rows.push_back(slice(sf.logits, {p, 0}, {1, v}));
        return rows.size() == 1 ? rows[0] : concat(rows, 0);
    }

  private:
    static size_t out_rows(const StreamForward<T>& sf) { return sf.text_positions.size(); }

    StreamForward<T> run_stream(const InterleavedSequence& seq,
                                const std::vector<Image>* images) const {
        const int t = seq.size();
        check(t >= 1, "forward: empty sequence");
        check(t <= cfg_.max_seq, "forward: sequence length ", t, " exceeds max_seq ",
              cfg_.max_seq);

        std::vector<int> ids(static_cast<size_t>(t));
        std::vector<int> pos_ids(static_cast<size_t>(t));
        std::vector<int> anchor_positions;
        StreamForward<T> out;
        for (int s = 0; s < t; ++s) {
            const auto& item = seq.items[static_cast<size_t>(s)];
            ids[static_cast<size_t>(s)] = item.is_image ? Vocabulary::kImg : item.value;
            pos_ids[static_cast<size_t>(s)] = s;
            if (item.is_image) {
                anchor_positions.push_back(s);
            } else {
                out.text_positions.push_back(s);
            }
        }

        Tensor<T> h = add(embedding_lookup(tok_emb_, ids), embedding_lookup(pos_emb_, pos_ids));
        auto causal = causal_mask(t);

        std::vector<GridFeatures<T>> grids;
        std::shared_ptr<const std::vector<uint8_t>> vis_mask;
        if (images != nullptr && !images->empty()) {
            for (size_t i = 0; i < images->size(); ++i) {
                grids.push_back(vision_.attach_positions(
                    vision_.encode((*images)[i]), static_cast<int>(i)));
            }
            vis_mask = visibility_mask(t, anchor_positions, cfg_.vision.grid_cells());
        }

        for (int li = 0; li < cfg_.m; ++li) {
            const int layer = li + 1;
            Tensor<T> hhat = self_attention_block(h, layer, causal);
            if (layers_[static_cast<size_t>(li)].has_cross && !grids.empty()) {
                std::vector<Tensor<T>> projected;
                projected.reserve(grids.size());
                for (const auto& gf : grids) {
                    projected.push_back(project_grid_features(gf, layer));
                }
                Tensor<T> visuals =
                    projected.size() == 1 ? projected[0] : concat(projected, 0);
                Tensor<T> vhat = cross_attention_block(hhat, layer, visuals, vis_mask);
                h = add(add(h, hhat), vhat);
            } else {
                h = add(h, hhat);
            }
            const LayerParams<T>& lp = layers_[static_cast<size_t>(li)];
            auto ffn = linear(gelu(linear(layer_norm(h, lp.ln2_g, lp.ln2_b), lp.f1_w, lp.f1_b)),
                              lp.f2_w, lp.f2_b);
            h = add(h, ffn);
        }
        h = layer_norm(h, lnf_g_, lnf_b_);
        out.logits = matmul(h, tok_emb_, false, true);
        return out;
    }

    Tensor<T> attend(const Tensor<T>& qh, const Tensor<T>& kh, const Tensor<T>& vh, int t,
                     std::shared_ptr<const std::vector<uint8_t>> mask) const {
        const int hd = cfg_.head_dim();
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<Tensor<T>> ctxs;
        ctxs.reserve(static_cast<size_t>(cfg_.heads));
        for (int head = 0; head < cfg_.heads; ++head) {
            auto qs = slice(qh, {0, head * hd}, {t, hd});
            auto ks = slice(kh, {0, head * hd}, {kh.dim(0), hd});
            auto vs = slice(vh, {0, head * hd}, {vh.dim(0), hd});
            auto probs = softmax(scale(matmul(qs, ks, false, true), inv_sqrt), mask);
            ctxs.push_back(matmul(probs, vs));
        }
        return cfg_.heads == 1 ? ctxs[0] : concat(ctxs, 1);
    }

    void register_all() {
        params_.clear();
        params_.push_back({"tok_emb", tok_emb_});
        params_.push_back({"pos_emb", pos_emb_});
        vision_.register_params(params_, "vision.");
        for (int li = 0; li < cfg_.m; ++li) {
            LayerParams<T>& lp = layers_[static_cast<size_t>(li)];
            const std::string p = "layer" + std::to_string(li) + ".";
            params_.push_back({p + "ln1.g", lp.ln1_g});
            params_.push_back({p + "ln1.b", lp.ln1_b});
            params_.push_back({p + "attn.wq", lp.wq});
            params_.push_back({p + "attn.bq", lp.bq});
            params_.push_back({p + "attn.wk", lp.wk});
            params_.push_back({p + "attn.bk", lp.bk});
            params_.push_back({p + "attn.wv", lp.wv});
            params_.push_back({p + "attn.bv", lp.bv});
            params_.push_back({p + "attn.wo", lp.wo});
            params_.push_back({p + "attn.bo", lp.bo});
            params_.push_back({p + "ln2.g", lp.ln2_g});
            params_.push_back({p + "ln2.b", lp.ln2_b});
            params_.push_back({p + "ffn.w1", lp.f1_w});
            params_.push_back({p + "ffn.b1", lp.f1_b});
            params_.push_back({p + "ffn.w2", lp.f2_w});
            params_.push_back({p + "ffn.b2", lp.f2_b});
            if (lp.has_cross) {
                params_.push_back({p + "lnc.g", lp.lnc_g});
                params_.push_back({p + "lnc.b", lp.lnc_b});
                params_.push_back({p + "cross.wq", lp.cq_w});
                params_.push_back({p + "cross.bq", lp.cq_b});
                params_.push_back({p + "cross.wk", lp.ck_w});
                params_.push_back({p + "cross.bk", lp.ck_b});
                params_.push_back({p + "cross.wv", lp.cv_w});
                params_.push_back({p + "cross.bv", lp.cv_b});
                params_.push_back({p + "cross.wo", lp.co_w});
                params_.push_back({p + "cross.bo", lp.co_b});
                params_.push_back({p + "mlp.w1", lp.mlp1_w});
                params_.push_back({p + "mlp.b1", lp.mlp1_b});
                params_.push_back({p + "mlp.w2", lp.mlp2_w});
                params_.push_back({p + "mlp.b2", lp.mlp2_b});
            }
        }
        params_.push_back({"lnf.g", lnf_g_});
        params_.push_back({"lnf.b", lnf_b_});
    }

    ModelConfig cfg_;
    VisionEncoder<T> vision_;
    std::vector<LayerParams<T>> layers_;
    Tensor<T> tok_emb_, pos_emb_, lnf_g_, lnf_b_;
    ParamList<T> params_;
};

}  // namespace lrr
