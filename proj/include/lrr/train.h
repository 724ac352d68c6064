// train.h — teacher-forced training: batch building with loss masks and
// rationale ablation modes, masked NLL over the interleaved stream, and a
// seeded AdamW training loop with CSV logging.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lrr/blicket.h"
#include "lrr/gridworld.h"
#include "lrr/model.h"
#include "lrr/tracking.h"

namespace lrr {

enum class RationaleMode { full, answer_only, object_list_only };

const char* rationale_mode_name(RationaleMode mode);
RationaleMode rationale_mode_from_name(const std::string& name);

struct TrainConfig {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    int steps = 20000;
    int batch_size = 1;  // only 1 is implemented; kept as an explicit knob
    uint64_t seed = 0;
    RationaleMode rationale_mode = RationaleMode::full;
    double jitter_p = 0.25;  // tracking input jitter probability

    void validate() const;
};

// Episode materialized for training or evaluation, task-agnostic.
struct TrainExample {
    std::string id;
    std::string task;       // blicket | gridworld | tracking
    std::string subset;     // per-subset metric label
    std::string question;   // empty when the prompt is frames only
    std::string rationale;  // full gold rationale, ends with the answer sentence
    std::string answer;
    std::vector<Image> images;
};

TrainExample example_from_blicket(const BlicketEpisode& ep, int query_index, std::string id,
                                  int image_size = 64);
TrainExample example_from_gridworld(const GridworldEpisode& ep, std::string id,
                                    int image_size = 64);
TrainExample example_from_tracking(const TrackingEpisode& ep, std::string id);

// One teacher-forced episode. The stream holds <bos>, the prompt (anchors,
// then question text when present), the target text, and <eos>. `gold`
// mirrors the stream with unjittered target ids; `mask` marks positions whose
// token the loss supervises: target text and <eos>, never prompt or anchors.
struct Batch {
    std::string id;
    std::string task;
    InterleavedSequence seq;
    std::vector<int> gold;      // per stream position; kImg at anchors
    std::vector<uint8_t> mask;  // per stream position
    std::vector<Image> images;
};

// Target text for one example under a rationale mode.
std::string target_text(const TrainExample& ex, RationaleMode mode);

// jitter_rng may be null (no jitter); only tracking inputs are jittered, and
// only the input copy — `gold` always carries the unjittered tokens.
Batch build_batch(const TrainExample& ex, const Vocabulary& vocab, const TrainConfig& cfg,
                  Rng* jitter_rng, int max_seq = 640);

// Mean −log p(token | prefix, visible images) over masked positions.
Tensor<float> masked_nll(const LrrModel<float>& model, const Batch& batch);

struct StepStats {
    double loss = 0;       // pre-step loss
    double grad_norm = 0;  // pre-clip global gradient norm
};

// forward, backward, clip_global_norm, adamw step; errors on non-finite loss.
StepStats train_step(LrrModel<float>& model, const Batch& batch, AdamW<float>& opt,
                     const TrainConfig& cfg);

struct TrainResult {
    std::vector<double> losses;  // pre-step loss per step
    double final_loss = 0;       // last step's loss
};

// Sequential loop, one optimizer step per example, examples visited in a
// seeded shuffled order re-drawn each epoch. When log is non-null, writes a
// header and one "step,loss,grad_norm,wallclock_s" row per step. on_step, if
// set, runs after each update with the 1-based step index.
TrainResult train_loop(LrrModel<float>& model, const std::vector<TrainExample>& examples,
                       const Vocabulary& vocab, const TrainConfig& cfg, std::ostream* log,
                       const std::function<void(int, const StepStats&)>& on_step = {});

// Same loop over a dataset too large to hold in memory: provider(i) yields
// example i of n_examples, typically rendering or reloading frames on demand.
TrainResult train_loop(LrrModel<float>& model, const std::function<TrainExample(int)>& provider,
                       int n_examples, const Vocabulary& vocab, const TrainConfig& cfg,
                       std::ostream* log,
                       const std::function<void(int, const StepStats&)>& on_step = {});

// Vocabulary over every text a set of examples can feed the model: questions,
// full rationales, reduced rationales, and the cell tokens jitter can mint.
Vocabulary build_train_vocabulary(const std::vector<TrainExample>& examples);

}  // namespace lrr
