// blicket.h — ACRE-style causal induction: context trials on a blicket
// machine, Yes/No/Maybe queries answered by exact enumeration over all
// assignments consistent with the trials.
#pragma once

#include <string>
#include <vector>

#include "lrr/attributes.h"
#include "lrr/image.h"
#include "lrr/rng.h"

namespace lrr {

struct BlicketConfig {
    int n_objects_min = 4;
    int n_objects_max = 8;
    int n_trials = 6;
    int n_queries = 4;
    int max_subset = 4;  // objects per trial or query
    int image_size = 64;
    int max_attempts = 1000;
};

enum class MachineState { off, on, query };

struct BlicketTrial {
    std::vector<int> objects;  // indices into episode objects, presentation order
    bool on = false;
};

struct BlicketQuery {
    std::vector<int> objects;
    std::string answer;  // Yes | No | Maybe
    std::string type;    // direct | indirect | screened_off | backward_blocked
};

struct BlicketEpisode {
    std::vector<ObjectAttrs> objects;  // index i prints as id i+1
    std::vector<uint8_t> is_blicket;   // hidden assignment
    std::vector<BlicketTrial> trials;
    std::vector<BlicketQuery> queries;
};

// On iff the subset contains at least one blicket.
bool machine_state(const std::vector<int>& subset, const std::vector<uint8_t>& is_blicket);

// Enumerates all 2^n assignments consistent with the trials; Yes if every one
// activates the machine for the query, No if none does, Maybe otherwise.
// Errors if no assignment is consistent.
std::string blicket_oracle_answer(const std::vector<int>& query,
                                  const std::vector<BlicketTrial>& trials, int n_objects);

// Post-hoc query classification used for per-subset metrics.
std::string classify_query(const std::vector<int>& query, const std::vector<BlicketTrial>& trials,
                           int n_objects);

BlicketEpisode sample_blicket_episode(Rng& rng, const BlicketConfig& cfg = {});

// Full rationale for one query: preamble, six trial sentences, query sentence
// with the gold answer.
std::string blicket_rationale(const BlicketEpisode& ep, int query_index);

// Rendered frame: objects on a platform whose tint encodes the machine state
// (queries use a neutral tint).
Image render_blicket_frame(const std::vector<ObjectAttrs>& objects, MachineState state,
                           int image_size = 64);

std::vector<Image> render_blicket_episode(const BlicketEpisode& ep, int query_index,
                                          int image_size = 64);

// Parsed-back view of a rationale, used for round-trip checks and for
// reducing a full rationale to ablation variants.
struct ParsedBlicket {
    struct Line {
        std::vector<int> ids;  // printed ids
        std::vector<ObjectAttrs> attrs;
        bool on = false;
    };
    std::vector<Line> trials;
    std::vector<int> query_ids;
    std::vector<ObjectAttrs> query_attrs;
    std::string answer;
};

ParsedBlicket parse_blicket_rationale(const std::string& text);

// Ablation variant: object lists kept, preamble and machine states dropped.
std::string blicket_object_list_rationale(const std::string& full_rationale);

}  // namespace lrr
