// gridworld.h — CLEVR-style scenes, a functional-program interpreter over
// sub-routines, question templates for five families, and step-by-step
// rationale serialization with parse-back.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lrr/attributes.h"
#include "lrr/image.h"
#include "lrr/rng.h"

namespace lrr {

struct GridworldConfig {
    int n_objects_min = 3;
    int n_objects_max = 10;
    int image_size = 64;
    double margin = 0.12;          // keeps glyphs inside the frame
    double min_separation = 0.10;  // continuous center distance
    int min_axis_gap = 2;          // reported-coordinate gap per axis
    int max_attempts = 5000;
};

struct SceneObject {
    ObjectAttrs attrs;
    double x = 0, y = 0;  // in [0,1); left = smaller x, front = larger y

    int rx() const { return static_cast<int>(100 * x); }
    int ry() const { return static_cast<int>(100 * y); }
};

struct Scene {
    std::vector<SceneObject> objects;
};

struct SubRoutine {
    enum class Kind {
        Scene,
        Filter,
        Unique,
        Relate,
        Intersect,
        Union,
        Query,
        Count,
        Exist,
        EqualNumber,
        Less,
        More,
        EqualAttribute
    };
    Kind kind = Kind::Scene;
    int a = -1, b = -1;      // 0-based operand step indices
    std::string attribute;   // Filter key, Query, EqualAttribute
    std::string value;       // Filter value
    std::string direction;   // Relate: front | behind | left | right
};

struct Program {
    std::vector<SubRoutine> steps;
    std::string family;  // count-with-union | exist | compare-numbers |
                         // query-attribute | compare-attribute
};

struct StepRecord {
    std::vector<int> objects;  // set-valued result, ascending scene order
    int object = -1;           // Unique passthrough
    std::string value;         // Query/terminal value
};

struct RationaleTrace {
    std::vector<StepRecord> steps;
    std::string answer;
};

// Data-dependent rejection: a Unique step saw a non-singleton set.
class UniquenessError : public Error {
  public:
    explicit UniquenessError(const std::string& what) : Error(what) {}
};

Scene sample_scene(Rng& rng, const GridworldConfig& cfg = {});
Image render_scene(const Scene& scene, int image_size = 64);

// Throws UniquenessError when a Unique step is violated; hard Error on
// malformed programs.
std::pair<std::string, RationaleTrace> execute(const Program& program, const Scene& scene);

// Samples a program skeleton and its question text; the optional scene biases
// filter values toward attributes that are present.
std::pair<Program, std::string> sample_question(Rng& rng, const GridworldConfig& cfg,
                                                const Scene* bias = nullptr);

std::string serialize_rationale(const Program& program, const Scene& scene,
                                const RationaleTrace& trace);

struct GridworldEpisode {
    Scene scene;
    Program program;
    std::string question;
    std::string rationale;
    std::string answer;
};

GridworldEpisode sample_gridworld_episode(Rng& rng, const GridworldConfig& cfg = {});

// Parse-back of a serialized rationale, sentence by sentence.
struct ParsedStep {
    std::string op;  // scene|filter|unique|relate|setop|query|count|exist|
                     // equal_number|less|more|equal_attribute
    int from_a = -1, from_b = -1;  // printed (1-based) operand steps
    std::vector<std::pair<std::string, std::string>> pairs;  // filter key/value
    std::string direction;                                   // relate
    bool has_ref = false;
    ObjectAttrs ref;  // relate referent
    int ref_x = -1, ref_y = -1;
    std::vector<ObjectAttrs> objects;        // listed phrases
    std::vector<std::pair<int, int>> coords;  // relate result coordinates
    std::string attribute;                    // query/equal_attribute
    std::string value;  // query value, count, exist/comparison yes-or-no
    int cmp_i = -1, cmp_j = -1;  // printed steps in less/more facts
};

struct ParsedGridworld {
    std::vector<ParsedStep> steps;
    std::string answer;
};

ParsedGridworld parse_gridworld_rationale(const std::string& text);

// Ablation variant: the scene listing plus the answer sentence.
std::string gridworld_object_list_rationale(const std::string& full_rationale);

}  // namespace lrr
