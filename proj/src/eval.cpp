#include "lrr/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lrr/data.h"
#include "lrr/kernels.h"
#include "lrr/parse.h"
#include "lrr/tracking.h"

namespace lrr {

namespace {

// One row of y = x * W^T + b through the same matmul kernel the tape uses.
void row_linear(const float* x, const Tensor<float>& w, const Tensor<float>& b, float* out) {
    const int in = w.dim(1), outf = w.dim(0);
    kernels::matmul(x, w.value().data(), out, 1, in, outf, false, true, false);
    const float* bv = b.value().data();
    for (int j = 0; j < outf; ++j) out[j] += bv[j];
}

void ln_row(const float* x, const Tensor<float>& g, const Tensor<float>& b, float* scratch,
            float* out, int n) {
    float mean, rstd;
    kernels::layer_norm_row(x, g.value().data(), b.value().data(), scratch, out, n,
                            static_cast<float>(1e-5), &mean, &rstd);
}

}  // namespace

struct DecodeSession::Impl {
    const LrrModel<float>* model = nullptr;
    ModelConfig cfg;
    int n_images = 0;
    int cells_per_image = 0;
    int g_total = 0;
    int n_pushed = 0;
    int anchors_seen = 0;
    // Projected visual keys/values per layer (empty when the layer has no
    // cross block), each (g_total x q) row-major.
    std::vector<std::vector<float>> vis_k, vis_v;
    // Self-attention caches per layer, q floats appended per position.
    std::vector<std::vector<float>> k_cache, v_cache;
    std::vector<float> last_logits;
    // Scratch rows.
    std::vector<float> h, ln_scratch, x1, qrow, krow, vrow, ctx, hhat, xc, qc, vhat, a4, ffn, yf,
        scores, probs;
};

DecodeSession::DecodeSession(const LrrModel<float>& model, const std::vector<Image>& images)
    : impl_(std::make_unique<Impl>()) {
    Impl& im = *impl_;
    im.model = &model;
    im.cfg = model.config();
    const int q = im.cfg.q;
    im.n_images = static_cast<int>(images.size());
    im.cells_per_image = im.cfg.vision.grid_cells();
    im.g_total = im.n_images * im.cells_per_image;
    im.k_cache.resize(static_cast<size_t>(im.cfg.m));
    im.v_cache.resize(static_cast<size_t>(im.cfg.m));
    im.vis_k.resize(static_cast<size_t>(im.cfg.m));
    im.vis_v.resize(static_cast<size_t>(im.cfg.m));
    if (im.n_images > 0) {
        std::vector<GridFeatures<float>> grids;
        grids.reserve(images.size());
        for (size_t i = 0; i < images.size(); ++i) {
            grids.push_back(
                model.vision().attach_positions(model.vision().encode(images[i]), static_cast<int>(i)));
        }
        for (int li = 0; li < im.cfg.m; ++li) {
            const LayerParams<float>& lp = model.layers()[static_cast<size_t>(li)];
            if (!lp.has_cross) continue;
            std::vector<Tensor<float>> projected;
            projected.reserve(grids.size());
            for (const auto& gf : grids) projected.push_back(model.project_grid_features(gf, li + 1));
            Tensor<float> visuals = projected.size() == 1 ? projected[0] : concat(projected, 0);
            im.vis_k[static_cast<size_t>(li)] = linear(visuals, lp.ck_w, lp.ck_b).value();
            im.vis_v[static_cast<size_t>(li)] = linear(visuals, lp.cv_w, lp.cv_b).value();
        }
    }
    im.h.resize(static_cast<size_t>(q));
    im.ln_scratch.resize(static_cast<size_t>(q));
    im.x1.resize(static_cast<size_t>(q));
    im.qrow.resize(static_cast<size_t>(q));
    im.krow.resize(static_cast<size_t>(q));
    im.vrow.resize(static_cast<size_t>(q));
    im.ctx.resize(static_cast<size_t>(q));
    im.hhat.resize(static_cast<size_t>(q));
    im.xc.resize(static_cast<size_t>(q));
    im.qc.resize(static_cast<size_t>(q));
    im.vhat.resize(static_cast<size_t>(q));
    im.a4.resize(static_cast<size_t>(4 * q));
    im.ffn.resize(static_cast<size_t>(q));
    im.yf.resize(static_cast<size_t>(q));
    const int score_len = std::max(im.cfg.max_seq, im.g_total);
    im.scores.resize(static_cast<size_t>(score_len));
    im.probs.resize(static_cast<size_t>(score_len));
    im.last_logits.resize(static_cast<size_t>(im.cfg.vocab));
}

DecodeSession::~DecodeSession() = default;
DecodeSession::DecodeSession(DecodeSession&&) noexcept = default;
DecodeSession& DecodeSession::operator=(DecodeSession&&) noexcept = default;

int DecodeSession::size() const { return impl_->n_pushed; }

const std::vector<float>& DecodeSession::logits() const {
    check(impl_->n_pushed > 0, "DecodeSession: no positions pushed");
    return impl_->last_logits;
}

void DecodeSession::push(const InterleavedItem& item) {
    Impl& im = *impl_;
    const ModelConfig& cfg = im.cfg;
    const int q = cfg.q, hd = cfg.head_dim(), heads = cfg.heads;
    const int s = im.n_pushed;
    check(s < cfg.max_seq, "DecodeSession: sequence length ", s + 1, " exceeds max_seq ",
          cfg.max_seq);
    int id;
    if (item.is_image) {
        check(im.anchors_seen < im.n_images, "DecodeSession: anchor ", im.anchors_seen + 1,
              " but only ", im.n_images, " images");
        id = Vocabulary::kImg;
        im.anchors_seen += 1;
    } else {
        id = item.value;
        check(id >= 0 && id < cfg.vocab, "DecodeSession: token id ", id, " outside vocab ",
              cfg.vocab);
    }

    const std::vector<float>& tok = im.model->tok_emb().value();
    const std::vector<float>& pos = im.model->pos_emb().value();
    float* h = im.h.data();
    for (int j = 0; j < q; ++j) {
        h[j] = tok[static_cast<size_t>(id) * q + j] + pos[static_cast<size_t>(s) * q + j];
    }

    const float att_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(hd)));
    const int t = s + 1;

    for (int li = 0; li < cfg.m; ++li) {
        const LayerParams<float>& lp = im.model->layers()[static_cast<size_t>(li)];

        ln_row(h, lp.ln1_g, lp.ln1_b, im.ln_scratch.data(), im.x1.data(), q);
        row_linear(im.x1.data(), lp.wq, lp.bq, im.qrow.data());
        row_linear(im.x1.data(), lp.wk, lp.bk, im.krow.data());
        row_linear(im.x1.data(), lp.wv, lp.bv, im.vrow.data());
        std::vector<float>& kc = im.k_cache[static_cast<size_t>(li)];
        std::vector<float>& vc = im.v_cache[static_cast<size_t>(li)];
        kc.insert(kc.end(), im.krow.begin(), im.krow.end());
        vc.insert(vc.end(), im.vrow.begin(), im.vrow.end());

        for (int head = 0; head < heads; ++head) {
            const float* qh = im.qrow.data() + head * hd;
            for (int j = 0; j < t; ++j) {
                im.scores[static_cast<size_t>(j)] =
                    kernels::dot(qh, kc.data() + static_cast<size_t>(j) * q + head * hd, hd) *
                    att_scale;
            }
            kernels::softmax_row(im.scores.data(), static_cast<const uint8_t*>(nullptr),
                                 im.probs.data(), t);
            float* ctx = im.ctx.data() + head * hd;
            for (int d = 0; d < hd; ++d) ctx[d] = 0;
            for (int j = 0; j < t; ++j) {
                const float pj = im.probs[static_cast<size_t>(j)];
                if (pj == 0.0f) continue;
                const float* vj = vc.data() + static_cast<size_t>(j) * q + head * hd;
                for (int d = 0; d < hd; ++d) ctx[d] += pj * vj[d];
            }
        }
        row_linear(im.ctx.data(), lp.wo, lp.bo, im.hhat.data());

        if (lp.has_cross && im.g_total > 0) {
            ln_row(im.hhat.data(), lp.lnc_g, lp.lnc_b, im.ln_scratch.data(), im.xc.data(), q);
            row_linear(im.xc.data(), lp.cq_w, lp.cq_b, im.qc.data());
            const int vis = im.anchors_seen * im.cells_per_image;
            const std::vector<float>& ck = im.vis_k[static_cast<size_t>(li)];
            const std::vector<float>& cv = im.vis_v[static_cast<size_t>(li)];
            for (int head = 0; head < heads; ++head) {
                const float* qh = im.qc.data() + head * hd;
                float* ctx = im.ctx.data() + head * hd;
                for (int d = 0; d < hd; ++d) ctx[d] = 0;
                if (vis == 0) continue;  // fully masked row: zero context
                for (int j = 0; j < vis; ++j) {
                    im.scores[static_cast<size_t>(j)] =
                        kernels::dot(qh, ck.data() + static_cast<size_t>(j) * q + head * hd, hd) *
                        att_scale;
                }
                kernels::softmax_row(im.scores.data(), static_cast<const uint8_t*>(nullptr),
                                     im.probs.data(), vis);
                for (int j = 0; j < vis; ++j) {
                    const float pj = im.probs[static_cast<size_t>(j)];
                    if (pj == 0.0f) continue;
                    const float* vj = cv.data() + static_cast<size_t>(j) * q + head * hd;
                    for (int d = 0; d < hd; ++d) ctx[d] += pj * vj[d];
                }
            }
            row_linear(im.ctx.data(), lp.co_w, lp.co_b, im.vhat.data());
            for (int j = 0; j < q; ++j) h[j] = (h[j] + im.hhat[static_cast<size_t>(j)]) +
                                               im.vhat[static_cast<size_t>(j)];
        } else {
            for (int j = 0; j < q; ++j) h[j] = h[j] + im.hhat[static_cast<size_t>(j)];
        }

        ln_row(h, lp.ln2_g, lp.ln2_b, im.ln_scratch.data(), im.x1.data(), q);
        row_linear(im.x1.data(), lp.f1_w, lp.f1_b, im.a4.data());
        for (int j = 0; j < 4 * q; ++j) im.a4[static_cast<size_t>(j)] = kernels::gelu(im.a4[static_cast<size_t>(j)]);
        row_linear(im.a4.data(), lp.f2_w, lp.f2_b, im.ffn.data());
        for (int j = 0; j < q; ++j) h[j] = h[j] + im.ffn[static_cast<size_t>(j)];
    }

    ln_row(h, im.model->lnf_g(), im.model->lnf_b(), im.ln_scratch.data(), im.yf.data(), q);
    kernels::matmul(im.yf.data(), tok.data(), im.last_logits.data(), 1, q, cfg.vocab, false, true,
                    false);
    im.n_pushed += 1;
}

GenerateResult generate(const LrrModel<float>& model, const InterleavedSequence& prompt,
                        const std::vector<Image>& images, int max_new_tokens) {
    check(max_new_tokens >= 0, "generate: negative budget ", max_new_tokens);
    check(prompt.size() >= 1, "generate: empty prompt");
    check(static_cast<int>(images.size()) == prompt.t_v(), "generate: ", prompt.t_v(),
          " anchors but ", images.size(), " images");
    DecodeSession ses(model, images);
    for (const auto& item : prompt.items) ses.push(item);

    GenerateResult res;
    for (int i = 0; i < max_new_tokens; ++i) {
        const std::vector<float>& lg = ses.logits();
        int best = 0;
        for (int v = 1; v < static_cast<int>(lg.size()); ++v) {
            if (lg[static_cast<size_t>(v)] > lg[static_cast<size_t>(best)]) best = v;
        }
        res.logits.push_back(lg);
        if (best == Vocabulary::kEos) return res;
        res.tokens.push_back(best);
        if (i + 1 == max_new_tokens) break;
        if (ses.size() >= model.config().max_seq) break;
        ses.push({false, best});
    }
    res.truncated = true;
    return res;
}

namespace {

bool is_punct_token(const std::string& w) {
    return w.size() == 1 && std::string("(),.?:;!").find(w[0]) != std::string::npos;
}

// Index just past the last occurrence of `pat` in `w`, or -1.
int after_last(const std::vector<std::string>& w, const std::vector<std::string>& pat) {
    int found = -1;
    if (w.size() < pat.size()) return -1;
    for (size_t i = 0; i + pat.size() <= w.size(); ++i) {
        bool ok = true;
        for (size_t j = 0; j < pat.size(); ++j) {
            if (w[i + j] != pat[j]) {
                ok = false;
                break;
            }
        }
        if (ok) found = static_cast<int>(i + pat.size());
    }
    return found;
}

int parse_cell_or_neg(const std::string& w) {
    if (!is_integer_token(w) || w.size() > 2) return -1;
    const int v = std::stoi(w);
    return v >= 0 && v < kGridCells ? v : -1;
}

// Index of the answer token inside a tracking word list: the token after the
// answer sentence's comma, else the snitch entry of the final tuple.
int tracking_answer_index(const std::vector<std::string>& w) {
    const int at = after_last(w, {"The", "answer", "is", ","});
    if (at >= 0 && at < static_cast<int>(w.size()) &&
        parse_cell_or_neg(w[static_cast<size_t>(at)]) >= 0) {
        return at;
    }
    for (int i = static_cast<int>(w.size()) - 2; i >= 0; --i) {
        if (w[static_cast<size_t>(i)] == "(" &&
            parse_cell_or_neg(w[static_cast<size_t>(i + 1)]) >= 0) {
            return i + 1;
        }
    }
    return -1;
}

}  // namespace

std::string extract_answer(const std::string& text, const std::string& task) {
    const std::vector<std::string> w = split_words(text);
    if (task == "blicket") {
        const int at = after_last(w, {"activate", "the", "blicket", "?"});
        if (at < 0 || at >= static_cast<int>(w.size())) return "";
        const std::string& tok = w[static_cast<size_t>(at)];
        return is_punct_token(tok) ? "" : tok;
    }
    if (task == "gridworld") {
        const int at = after_last(w, {"The", "answer", "is", ","});
        if (at < 0 || at >= static_cast<int>(w.size())) return "";
        std::string out;
        for (size_t i = static_cast<size_t>(at); i < w.size() && w[i] != "."; ++i) {
            if (!out.empty()) out += ' ';
            out += w[i];
        }
        return out;
    }
    if (task == "tracking") {
        const int at = tracking_answer_index(w);
        return at < 0 ? "" : w[static_cast<size_t>(at)];
    }
    fail("extract_answer: unknown task '", task, "'");
}

GoldRecord gold_of(const TrainExample& ex) { return {ex.id, ex.task, ex.subset, ex.answer}; }

namespace {

std::vector<float> cell_distribution(const Vocabulary& vocab, const std::vector<float>& logits) {
    std::vector<float> out(static_cast<size_t>(kGridCells), 0.0f);
    double mx = -1e300;
    std::vector<double> lg(static_cast<size_t>(kGridCells), -1e300);
    for (int c = 0; c < kGridCells; ++c) {
        const std::string tok = std::to_string(c);
        if (!vocab.contains(tok)) continue;
        lg[static_cast<size_t>(c)] = static_cast<double>(logits[static_cast<size_t>(vocab.id(tok))]);
        mx = std::max(mx, lg[static_cast<size_t>(c)]);
    }
    double denom = 0;
    std::vector<double> ex(static_cast<size_t>(kGridCells), 0.0);
    for (int c = 0; c < kGridCells; ++c) {
        if (lg[static_cast<size_t>(c)] <= -1e299) continue;
        ex[static_cast<size_t>(c)] = std::exp(lg[static_cast<size_t>(c)] - mx);
        denom += ex[static_cast<size_t>(c)];
    }
    check(denom > 0, "cell_distribution: no cell tokens in vocabulary");
    for (int c = 0; c < kGridCells; ++c) {
        out[static_cast<size_t>(c)] = static_cast<float>(ex[static_cast<size_t>(c)] / denom);
    }
    return out;
}

}  // namespace

PredictionRecord evaluate_example(const LrrModel<float>& model, const Vocabulary& vocab,
                                  const TrainExample& ex, int max_new_tokens) {
    std::vector<Segment> segments;
    for (size_t i = 0; i < ex.images.size(); ++i) segments.push_back(image_segment());
    if (!ex.question.empty()) segments.push_back(text_segment(ex.question));
    EncodeStats stats;
    const InterleavedSequence prompt = interleave(vocab, segments, &stats);
    check(stats.unknown == 0, "evaluate_example: question for '", ex.id,
          "' falls outside the vocabulary");

    GenerateResult gen = generate(model, prompt, ex.images, max_new_tokens);

    PredictionRecord rec;
    rec.id = ex.id;
    rec.task = ex.task;
    rec.subset = ex.subset;
    rec.truncated = gen.truncated;
    rec.generated = decode(vocab, gen.tokens);
    rec.answer = extract_answer(rec.generated, ex.task);
    if (ex.task == "tracking" && !gen.tokens.empty()) {
        std::vector<std::string> words;
        words.reserve(gen.tokens.size());
        for (int id : gen.tokens) words.push_back(vocab.token(id));
        const int at = tracking_answer_index(words);
        if (at >= 0 && at < static_cast<int>(gen.logits.size())) {
            rec.cell_probs = cell_distribution(vocab, gen.logits[static_cast<size_t>(at)]);
        }
    }
    return rec;
}

Metrics compute_metrics(const std::vector<PredictionRecord>& preds,
                        const std::vector<GoldRecord>& golds) {
    check(preds.size() == golds.size(), "compute_metrics: ", preds.size(), " predictions vs ",
          golds.size(), " golds");
    check(!preds.empty(), "compute_metrics: empty evaluation set");

    Metrics m;
    m.n = static_cast<int>(preds.size());
    int correct_total = 0, top1_hits = 0, top5_hits = 0;
    double l1_sum = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        const PredictionRecord& p = preds[i];
        const GoldRecord& g = golds[i];
        check(p.id == g.id, "compute_metrics: row ", i, " pairs prediction '", p.id,
              "' with gold '", g.id, "'");
        const bool correct = !p.answer.empty() && p.answer == g.answer;
        correct_total += correct ? 1 : 0;
        m.subset_counts[g.subset] += 1;
        m.subset_accuracy[g.subset] += correct ? 1.0 : 0.0;
        if (g.task == "tracking") {
            m.n_tracking += 1;
            const int gold_cell = parse_cell_or_neg(g.answer);
            check(gold_cell >= 0, "compute_metrics: gold answer '", g.answer, "' for '", g.id,
                  "' is not a grid cell");
            const int pred_cell = p.answer.empty() ? -1 : parse_cell_or_neg(p.answer);
            if (pred_cell >= 0) {
                l1_sum += std::abs(cell_row(pred_cell) - cell_row(gold_cell)) +
                          std::abs(cell_col(pred_cell) - cell_col(gold_cell));
            } else {
                l1_sum += 2 * (kGridSide - 1);  // unparseable: corner-to-corner distance
            }
            if (static_cast<int>(p.cell_probs.size()) == kGridCells) {
                const float gp = p.cell_probs[static_cast<size_t>(gold_cell)];
                int rank = 1;
                for (int c = 0; c < kGridCells; ++c) {
                    if (p.cell_probs[static_cast<size_t>(c)] > gp) ++rank;
                }
                if (rank <= 1) ++top1_hits;
                if (rank <= 5) ++top5_hits;
            }
        }
    }
    m.accuracy = static_cast<double>(correct_total) / m.n;
    for (auto& [subset, acc] : m.subset_accuracy) acc /= m.subset_counts[subset];
    if (m.n_tracking > 0) {
        m.top1 = static_cast<double>(top1_hits) / m.n_tracking;
        m.top5 = static_cast<double>(top5_hits) / m.n_tracking;
        m.l1_grid = l1_sum / m.n_tracking;
    }
    return m;
}

std::string metrics_csv(const Metrics& m) {
    std::ostringstream out;
    out.precision(17);
    out << "metric,value\n";
    out << "n," << m.n << '\n';
    out << "n_tracking," << m.n_tracking << '\n';
    out << "accuracy," << m.accuracy << '\n';
    out << "top1," << m.top1 << '\n';
    out << "top5," << m.top5 << '\n';
    out << "l1_grid," << m.l1_grid << '\n';
    for (const auto& [subset, acc] : m.subset_accuracy) {
        out << "subset_accuracy." << subset << ',' << acc << '\n';
    }
    for (const auto& [subset, count] : m.subset_counts) {
        out << "subset_count." << subset << ',' << count << '\n';
    }
    return out.str();
}

AblationReport run_ablation(const std::vector<PredictionRecord>& full_preds,
                            const std::vector<PredictionRecord>& ablated_preds,
                            const std::vector<GoldRecord>& golds) {
    auto ids_of = [](const std::vector<PredictionRecord>& v) {
        std::vector<std::string> ids;
        ids.reserve(v.size());
        for (const auto& p : v) ids.push_back(p.id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    check(ids_of(full_preds) == ids_of(ablated_preds),
          "run_ablation: the two prediction sets cover different episodes");

    AblationReport rep;
    rep.full = compute_metrics(full_preds, golds);
    rep.ablated = compute_metrics(ablated_preds, golds);
    rep.delta_accuracy = rep.full.accuracy - rep.ablated.accuracy;
    rep.delta_top1 = rep.full.top1 - rep.ablated.top1;
    rep.delta_top5 = rep.full.top5 - rep.ablated.top5;
    rep.delta_l1 = rep.full.l1_grid - rep.ablated.l1_grid;
    for (const auto& [subset, acc] : rep.full.subset_accuracy) {
        const auto it = rep.ablated.subset_accuracy.find(subset);
        check(it != rep.ablated.subset_accuracy.end(),
              "run_ablation: subset '", subset, "' missing from the ablated run");
        rep.delta_subset_accuracy[subset] = acc - it->second;
    }
    return rep;
}

std::string format_ablation(const AblationReport& rep) {
    std::ostringstream out;
    char buf[160];
    auto row = [&](const std::string& name, double full, double ablated, double delta) {
        std::snprintf(buf, sizeof(buf), "%-28s %10.4f %12.4f %+10.4f\n", name.c_str(), full,
                      ablated, delta);
        out << buf;
    };
    std::snprintf(buf, sizeof(buf), "%-28s %10s %12s %10s\n", "metric", "full", "answer_only",
                  "delta");
    out << buf;
    row("accuracy", rep.full.accuracy, rep.ablated.accuracy, rep.delta_accuracy);
    if (rep.full.n_tracking > 0) {
        row("top1", rep.full.top1, rep.ablated.top1, rep.delta_top1);
        row("top5", rep.full.top5, rep.ablated.top5, rep.delta_top5);
        row("l1_grid", rep.full.l1_grid, rep.ablated.l1_grid, rep.delta_l1);
    }
    for (const auto& [subset, delta] : rep.delta_subset_accuracy) {
        row("accuracy." + subset, rep.full.subset_accuracy.at(subset),
            rep.ablated.subset_accuracy.at(subset), delta);
    }
    return out.str();
}

void write_prediction_dump(const std::string& path, const std::vector<PredictionRecord>& preds,
                           const std::vector<GoldRecord>& golds) {
    check(preds.size() == golds.size(), "write_prediction_dump: ", preds.size(),
          " predictions vs ", golds.size(), " golds");
    std::string out;
    for (size_t i = 0; i < preds.size(); ++i) {
        const PredictionRecord& p = preds[i];
        const GoldRecord& g = golds[i];
        check(p.id == g.id, "write_prediction_dump: row ", i, " pairs '", p.id, "' with '", g.id,
              "'");
        nlohmann::json j;
        j["id"] = p.id;
        j["task"] = p.task;
        j["subset"] = p.subset;
        j["generated"] = p.generated;
        j["answer"] = p.answer;
        j["gold"] = g.answer;
        j["correct"] = !p.answer.empty() && p.answer == g.answer;
        j["truncated"] = p.truncated;
        if (!p.cell_probs.empty()) j["cell_probs"] = p.cell_probs;
        out += j.dump();
        out += '\n';
    }
    atomic_write(path, out);
}

std::pair<std::vector<PredictionRecord>, std::vector<GoldRecord>> read_prediction_dump(
    const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "read_prediction_dump: cannot open ", path);
    static const std::vector<std::string> kKeys = {"id",   "task",    "subset",    "generated",
                                                   "answer", "gold",  "correct",   "truncated",
                                                   "cell_probs"};
    std::vector<PredictionRecord> preds;
    std::vector<GoldRecord> golds;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail("read_prediction_dump: line ", lineno, ": ", e.what());
        }
        for (const auto& [key, value] : j.items()) {
            check(std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end(),
                  "read_prediction_dump: line ", lineno, ": unknown key '", key, "'");
            (void)value;
        }
        PredictionRecord p;
        GoldRecord g;
        p.id = g.id = j.at("id").get<std::string>();
        p.task = g.task = j.at("task").get<std::string>();
        p.subset = g.subset = j.at("subset").get<std::string>();
        p.generated = j.at("generated").get<std::string>();
        p.answer = j.at("answer").get<std::string>();
        g.answer = j.at("gold").get<std::string>();
        p.truncated = j.at("truncated").get<bool>();
        if (j.contains("cell_probs")) p.cell_probs = j.at("cell_probs").get<std::vector<float>>();
        preds.push_back(std::move(p));
        golds.push_back(std::move(g));
    }
    return {std::move(preds), std::move(golds)};
}

}  // namespace lrr
