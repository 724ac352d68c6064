#include "lrr/train.h"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace lrr {

const char* rationale_mode_name(RationaleMode mode) {
    switch (mode) {
        case RationaleMode::full: return "full";
        case RationaleMode::answer_only: return "answer_only";
        case RationaleMode::object_list_only: return "object_list_only";
    }
    fail("rationale_mode_name: bad mode");
}

RationaleMode rationale_mode_from_name(const std::string& name) {
    if (name == "full") return RationaleMode::full;
    if (name == "answer_only") return RationaleMode::answer_only;
    if (name == "object_list_only") return RationaleMode::object_list_only;
    fail("unknown rationale mode '", name,
         "' (expected full, answer_only, or object_list_only)");
}

void TrainConfig::validate() const {
    check(lr > 0, "TrainConfig: lr must be positive, got ", lr);
    check(steps > 0, "TrainConfig: steps must be positive, got ", steps);
    check(batch_size == 1, "TrainConfig: only batch_size 1 is implemented, got ", batch_size);
    check(clip_norm > 0, "TrainConfig: clip_norm must be positive, got ", clip_norm);
    check(jitter_p >= 0 && jitter_p <= 1, "TrainConfig: jitter_p ", jitter_p, " outside [0, 1]");
}

TrainExample example_from_blicket(const BlicketEpisode& ep, int query_index, std::string id,
                                  int image_size) {
    check(query_index >= 0 && query_index < static_cast<int>(ep.queries.size()),
          "example_from_blicket: query index ", query_index, " out of range");
    TrainExample ex;
    ex.id = std::move(id);
    ex.task = "blicket";
    ex.subset = ep.queries[static_cast<size_t>(query_index)].type;
    ex.rationale = blicket_rationale(ep, query_index);
    ex.answer = ep.queries[static_cast<size_t>(query_index)].answer;
    ex.images = render_blicket_episode(ep, query_index, image_size);
    return ex;
}

TrainExample example_from_gridworld(const GridworldEpisode& ep, std::string id, int image_size) {
    TrainExample ex;
    ex.id = std::move(id);
    ex.task = "gridworld";
    ex.subset = ep.program.family;
    ex.question = ep.question;
    ex.rationale = ep.rationale;
    ex.answer = ep.answer;
    ex.images.push_back(render_scene(ep.scene, image_size));
    return ex;
}

TrainExample example_from_tracking(const TrackingEpisode& ep, std::string id) {
    TrainExample ex;
    ex.id = std::move(id);
    ex.task = "tracking";
    ex.subset = camera_name(ep.camera);
    ex.rationale = episode_rationale(ep);
    ex.answer = std::to_string(ep.answer);
    ex.images = render_frames(ep);
    return ex;
}

std::string target_text(const TrainExample& ex, RationaleMode mode) {
    switch (mode) {
        case RationaleMode::full:
            return ex.rationale;
        case RationaleMode::answer_only:
            return "The answer is, " + ex.answer + ".";
        case RationaleMode::object_list_only:
            if (ex.task == "blicket") return blicket_object_list_rationale(ex.rationale);
            if (ex.task == "gridworld") return gridworld_object_list_rationale(ex.rationale);
            if (ex.task == "tracking") return tracking_object_list_rationale(ex.rationale);
            fail("target_text: unknown task '", ex.task, "'");
    }
    fail("target_text: bad mode");
}

Batch build_batch(const TrainExample& ex, const Vocabulary& vocab, const TrainConfig& cfg,
                  Rng* jitter_rng, int max_seq) {
    const std::string target = target_text(ex, cfg.rationale_mode);
    std::string input = target;
    if (ex.task == "tracking" && jitter_rng != nullptr && cfg.jitter_p > 0) {
        input = jitter_inputs(target, *jitter_rng, cfg.jitter_p);
    }

    std::vector<Segment> segments;
    for (size_t i = 0; i < ex.images.size(); ++i) segments.push_back(image_segment());
    if (!ex.question.empty()) segments.push_back(text_segment(ex.question));
    segments.push_back(text_segment(input));

    Batch batch;
    batch.id = ex.id;
    batch.task = ex.task;
    batch.images = ex.images;
    EncodeStats stats;
    batch.seq = interleave(vocab, segments, &stats);
    check(stats.unknown == 0, "build_batch: episode '", ex.id, "' produced ", stats.unknown,
          " <unk> tokens; vocabulary does not cover it");
    batch.seq.items.push_back({false, Vocabulary::kEos});

    const std::vector<int> target_ids = encode(vocab, target);
    check(!target_ids.empty(), "build_batch: episode '", ex.id, "' has an empty target");
    const int t = batch.seq.size();
    check(t <= max_seq, "build_batch: episode '", ex.id, "' needs ", t,
          " stream positions, exceeding max length ", max_seq);

    // <bos> + anchors + question tokens, then the input copy of the target
    // and <eos>. Jitter swaps digit runs for digit runs, so the input always
    // tokenizes to the same count as the unjittered target.
    const int first_target = 1 + static_cast<int>(ex.images.size()) +
                             static_cast<int>(encode(vocab, ex.question).size());
    check(t == first_target + static_cast<int>(target_ids.size()) + 1,
          "build_batch: target region misaligned for episode '", ex.id, "'");

    batch.gold.resize(static_cast<size_t>(t));
    batch.mask.assign(static_cast<size_t>(t), 0);
    for (int p = 0; p < t; ++p) {
        const auto& item = batch.seq.items[static_cast<size_t>(p)];
        batch.gold[static_cast<size_t>(p)] = item.is_image ? Vocabulary::kImg : item.value;
    }
    for (int p = first_target; p < t; ++p) {
        batch.mask[static_cast<size_t>(p)] = 1;
        const int off = p - first_target;
        batch.gold[static_cast<size_t>(p)] =
            off < static_cast<int>(target_ids.size()) ? target_ids[static_cast<size_t>(off)]
                                                      : Vocabulary::kEos;
    }
    return batch;
}

Tensor<float> masked_nll(const LrrModel<float>& model, const Batch& batch) {
    const int t = batch.seq.size();
    check(static_cast<int>(batch.gold.size()) == t && static_cast<int>(batch.mask.size()) == t,
          "masked_nll: batch '", batch.id, "' has misaligned gold/mask");
    bool any = false;
    for (uint8_t m : batch.mask) any = any || m != 0;
    check(any, "masked_nll: batch '", batch.id, "' has an empty loss mask");
    check(batch.mask[0] == 0, "masked_nll: batch '", batch.id, "' masks <bos>");

    StreamForward<float> sf = model.forward_stream(batch.seq, batch.images);
    std::vector<int> targets(static_cast<size_t>(t), 0);
    auto rows = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(t), 0);
    for (int p = 1; p < t; ++p) {
        if (!batch.mask[static_cast<size_t>(p)]) continue;
        (*rows)[static_cast<size_t>(p - 1)] = 1;
        targets[static_cast<size_t>(p - 1)] = batch.gold[static_cast<size_t>(p)];
    }
    return cross_entropy(sf.logits, targets, rows);
}

StepStats train_step(LrrModel<float>& model, const Batch& batch, AdamW<float>& opt,
                     const TrainConfig& cfg) {
    zero_grad(model.params());
    double lv = 0;
    try {
        Tensor<float> loss = masked_nll(model, batch);
        lv = static_cast<double>(loss.value()[0]);
        check(std::isfinite(lv), "non-finite loss");
        backward(loss);
    } catch (const Error& e) {
        fail("train_step: batch '", batch.id, "': ", e.what());
    }
    const double gn = clip_global_norm(model.params(), cfg.clip_norm);
    opt.step(model.params());
    return {lv, gn};
}

TrainResult train_loop(LrrModel<float>& model, const std::vector<TrainExample>& examples,
                       const Vocabulary& vocab, const TrainConfig& cfg, std::ostream* log,
                       const std::function<void(int, const StepStats&)>& on_step) {
    check(!examples.empty(), "train_loop: no examples");
    auto provider = [&examples](int i) { return examples[static_cast<size_t>(i)]; };
    return train_loop(model, provider, static_cast<int>(examples.size()), vocab, cfg, log,
                      on_step);
}

TrainResult train_loop(LrrModel<float>& model, const std::function<TrainExample(int)>& provider,
                       int n_examples, const Vocabulary& vocab, const TrainConfig& cfg,
                       std::ostream* log, const std::function<void(int, const StepStats&)>& on_step) {
    cfg.validate();
    check(n_examples > 0, "train_loop: no examples");

    AdamW<float>::Config oc;
    oc.lr = cfg.lr;
    oc.beta1 = cfg.beta1;
    oc.beta2 = cfg.beta2;
    oc.weight_decay = cfg.weight_decay;
    AdamW<float> opt(oc);

    Rng order_rng(mix_seed(cfg.seed, 0x0bdecafu));
    Rng jitter_rng(mix_seed(cfg.seed, 0x71773e2u));
    std::vector<int> order(static_cast<size_t>(n_examples));
    std::iota(order.begin(), order.end(), 0);

    if (log) *log << "step,loss,grad_norm,wallclock_s\n";
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult result;
    result.losses.reserve(static_cast<size_t>(cfg.steps));
    size_t cursor = order.size();
    for (int step = 1; step <= cfg.steps; ++step) {
        if (cursor >= order.size()) {
            order_rng.shuffle(order);
            cursor = 0;
        }
        const TrainExample ex = provider(order[cursor++]);
        Batch batch = build_batch(ex, vocab, cfg, &jitter_rng, model.config().max_seq);
        StepStats stats = train_step(model, batch, opt, cfg);
        result.losses.push_back(stats.loss);
        result.final_loss = stats.loss;
        if (log) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            *log << step << ',' << stats.loss << ',' << stats.grad_norm << ',' << secs << '\n';
        }
        if (on_step) on_step(step, stats);
    }
    return result;
}

Vocabulary build_train_vocabulary(const std::vector<TrainExample>& examples) {
    std::vector<std::string> corpus;
    corpus.reserve(examples.size() * 3 + 1);
    for (const TrainExample& ex : examples) {
        if (!ex.question.empty()) corpus.push_back(ex.question);
        corpus.push_back(ex.rationale);
        corpus.push_back(target_text(ex, RationaleMode::object_list_only));
        corpus.push_back("The answer is, " + ex.answer + ".");
    }
    std::string cells;
    for (int c = 0; c < kGridCells; ++c) {
        cells += std::to_string(c);
        cells += ' ';
    }
    corpus.push_back(cells);
    return build_vocabulary(corpus);
}

}  // namespace lrr
