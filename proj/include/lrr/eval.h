// eval.h — greedy decoding through an incremental KV-cache session that
// reproduces forward_stream logits, task answer grammars, accuracy/Top-k/L1
// metrics with per-subset breakdowns, and the surrogate ablation comparison.
#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lrr/model.h"
#include "lrr/train.h"

namespace lrr {

// Inference-only view of the model: visual keys/values are computed once,
// then each pushed stream position costs one pass over the caches. Logits
// match forward_stream at the last pushed position exactly.
class DecodeSession {
  public:
    DecodeSession(const LrrModel<float>& model, const std::vector<Image>& images);
    ~DecodeSession();
    DecodeSession(DecodeSession&&) noexcept;
    DecodeSession& operator=(DecodeSession&&) noexcept;

    void push(const InterleavedItem& item);
    int size() const;  // stream positions pushed so far
    const std::vector<float>& logits() const;  // next-item logits, last position

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

struct GenerateResult {
    std::vector<int> tokens;                 // generated ids, <eos> excluded
    bool truncated = false;                  // budget or window exhausted before <eos>
    std::vector<std::vector<float>> logits;  // decision i chose tokens[i]; one extra row on <eos>
};

// Greedy argmax continuation of `prompt` (ties break to the lower id).
GenerateResult generate(const LrrModel<float>& model, const InterleavedSequence& prompt,
                        const std::vector<Image>& images, int max_new_tokens);

// Final answer per task grammar; empty string is the failure sentinel and is
// always counted as wrong.
std::string extract_answer(const std::string& text, const std::string& task);

struct PredictionRecord {
    std::string id;
    std::string task;
    std::string subset;
    std::string generated;          // decoded model output
    std::string answer;             // extracted; empty = unparseable
    bool truncated = false;
    std::vector<float> cell_probs;  // tracking: P(cell) at the answer position, kGridCells wide
};

struct GoldRecord {
    std::string id;
    std::string task;
    std::string subset;
    std::string answer;
};

GoldRecord gold_of(const TrainExample& ex);

// Prompt = anchors + question; decode, extract, and attach the cell
// distribution at the answer position for tracking episodes.
PredictionRecord evaluate_example(const LrrModel<float>& model, const Vocabulary& vocab,
                                  const TrainExample& ex, int max_new_tokens = 320);

struct Metrics {
    int n = 0;
    int n_tracking = 0;              // records scored for top-k and L1
    double accuracy = 0;
    double top1 = 0, top5 = 0;       // over tracking records
    double l1_grid = 0;              // mean Manhattan distance on the grid
    std::map<std::string, double> subset_accuracy;
    std::map<std::string, int> subset_counts;
};

// Pairs by index; ids must line up. Unparseable answers count as wrong, and
// as L1 = 10 (corner to corner) for tracking.
Metrics compute_metrics(const std::vector<PredictionRecord>& preds,
                        const std::vector<GoldRecord>& golds);

std::string metrics_csv(const Metrics& m);

struct AblationReport {
    Metrics full;
    Metrics ablated;
    double delta_accuracy = 0;  // full minus ablated
    double delta_top1 = 0;
    double delta_top5 = 0;
    double delta_l1 = 0;
    std::map<std::string, double> delta_subset_accuracy;
};

// Errors unless both prediction sets cover the same episode ids.
AblationReport run_ablation(const std::vector<PredictionRecord>& full_preds,
                            const std::vector<PredictionRecord>& ablated_preds,
                            const std::vector<GoldRecord>& golds);

std::string format_ablation(const AblationReport& report);

// Prediction dump: one JSON record per episode, gold fields inlined so the
// metrics CSV can be recomputed from the dump alone.
void write_prediction_dump(const std::string& path, const std::vector<PredictionRecord>& preds,
                           const std::vector<GoldRecord>& golds);
std::pair<std::vector<PredictionRecord>, std::vector<GoldRecord>> read_prediction_dump(
    const std::string& path);

}  // namespace lrr
