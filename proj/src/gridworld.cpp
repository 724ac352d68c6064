#include "lrr/gridworld.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "lrr/parse.h"

namespace lrr {

namespace {

using Kind = SubRoutine::Kind;

bool is_set_kind(Kind k) {
    return k == Kind::Scene || k == Kind::Filter || k == Kind::Relate || k == Kind::Intersect ||
           k == Kind::Union;
}

bool is_terminal_kind(Kind k) {
    return k == Kind::Query || k == Kind::Count || k == Kind::Exist || k == Kind::EqualNumber ||
           k == Kind::Less || k == Kind::More || k == Kind::EqualAttribute;
}

// left = smaller x, right = larger x, behind = smaller y, front = larger y,
// evaluated on reported integer coordinates (scenes keep them distinct per
// axis, so the relations are strict and antisymmetric).
bool related(const SceneObject& o_prime, const SceneObject& o, const std::string& dir) {
    if (dir == "left") return o_prime.rx() < o.rx();
    if (dir == "right") return o_prime.rx() > o.rx();
    if (dir == "behind") return o_prime.ry() < o.ry();
    if (dir == "front") return o_prime.ry() > o.ry();
    fail("execute: unknown direction '", dir, "'");
}

const char* direction_phrase(const std::string& dir) {
    if (dir == "front") return "in front of";
    if (dir == "behind") return "behind";
    if (dir == "left") return "at the left of";
    if (dir == "right") return "at the right of";
    fail("unknown direction '", dir, "'");
}

std::string coords_str(const SceneObject& o) {
    return "(" + std::to_string(o.rx()) + "," + std::to_string(o.ry()) + ")";
}

std::string phrase_list(const std::vector<int>& ids, const Scene& scene, bool with_coords) {
    std::string s;
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto& o = scene.objects[static_cast<size_t>(ids[i])];
        if (i) s += ", ";
        s += attrs_phrase(o.attrs);
        if (with_coords) s += " at " + coords_str(o);
    }
    return s;
}

}  // namespace

Scene sample_scene(Rng& rng, const GridworldConfig& cfg) {
    check(cfg.n_objects_min >= 1 && cfg.n_objects_min <= cfg.n_objects_max,
          "sample_scene: bad object count range");
    const int n = rng.uniform_int(cfg.n_objects_min, cfg.n_objects_max);
    Scene scene;
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        SceneObject o;
        o.attrs = random_attrs(rng);
        o.x = cfg.margin + rng.uniform() * (1.0 - 2 * cfg.margin);
        o.y = cfg.margin + rng.uniform() * (1.0 - 2 * cfg.margin);
        bool ok = true;
        for (const auto& p : scene.objects) {
            const double d = std::hypot(p.x - o.x, p.y - o.y);
            if (d < cfg.min_separation || std::abs(p.rx() - o.rx()) < cfg.min_axis_gap ||
                std::abs(p.ry() - o.ry()) < cfg.min_axis_gap) {
                ok = false;
                break;
            }
        }
        if (ok) scene.objects.push_back(o);
        if (static_cast<int>(scene.objects.size()) == n) {
            // Left-to-right listing order; min_axis_gap keeps rx values
            // distinct, so the scan order is readable off the image.
            std::sort(scene.objects.begin(), scene.objects.end(),
                      [](const SceneObject& a, const SceneObject& b) { return a.rx() < b.rx(); });
            return scene;
        }
    }
    fail("sample_scene: placement failed after ", cfg.max_attempts, " attempts");
}

Image render_scene(const Scene& scene, int image_size) {
    Image img = Image::filled(image_size, image_size, {0.12f, 0.12f, 0.14f});
    for (const auto& o : scene.objects) {
        const int py = static_cast<int>(o.y * image_size);
        const int px = static_cast<int>(o.x * image_size);
        draw_object(img, o.attrs, py, px, image_size / 21);
    }
    return img;
}

std::pair<std::string, RationaleTrace> execute(const Program& program, const Scene& scene) {
    const auto& steps = program.steps;
    check(!steps.empty(), "execute: empty program");
    RationaleTrace trace;
    trace.steps.resize(steps.size());

    auto set_of = [&](int idx, int at) -> const std::vector<int>& {
        check(idx >= 0 && idx < at, "execute: step ", at + 1, " references step ", idx + 1);
        check(is_set_kind(steps[static_cast<size_t>(idx)].kind), "execute: step ", at + 1,
              " expects a set-valued operand, step ", idx + 1, " is not");
        return trace.steps[static_cast<size_t>(idx)].objects;
    };
    auto unique_of = [&](int idx, int at) -> int {
        check(idx >= 0 && idx < at, "execute: step ", at + 1, " references step ", idx + 1);
        check(steps[static_cast<size_t>(idx)].kind == Kind::Unique, "execute: step ", at + 1,
              " expects a Unique operand");
        return trace.steps[static_cast<size_t>(idx)].object;
    };

    for (size_t si = 0; si < steps.size(); ++si) {
        const SubRoutine& node = steps[si];
        StepRecord& rec = trace.steps[si];
        const int at = static_cast<int>(si);
        switch (node.kind) {
            case Kind::Scene: {
                for (size_t i = 0; i < scene.objects.size(); ++i) {
                    rec.objects.push_back(static_cast<int>(i));
                }
                break;
            }
            case Kind::Filter: {
                for (int o : set_of(node.a, at)) {
                    if (attr_matches(scene.objects[static_cast<size_t>(o)].attrs, node.attribute,
                                     node.value)) {
                        rec.objects.push_back(o);
                    }
                }
                break;
            }
            case Kind::Unique: {
                const auto& src = set_of(node.a, at);
                if (src.size() != 1) {
                    throw UniquenessError(msg("execute: Unique at step ", at + 1, " saw ",
                                              src.size(), " objects"));
                }
                rec.object = src[0];
                break;
            }
            case Kind::Relate: {
                const int ref = unique_of(node.a, at);
                for (size_t i = 0; i < scene.objects.size(); ++i) {
                    if (static_cast<int>(i) == ref) continue;
                    if (related(scene.objects[i], scene.objects[static_cast<size_t>(ref)],
                                node.direction)) {
                        rec.objects.push_back(static_cast<int>(i));
                    }
                }
                break;
            }
            case Kind::Intersect:
            case Kind::Union: {
                const auto& a = set_of(node.a, at);
                const auto& b = set_of(node.b, at);
                std::set<int> bs(b.begin(), b.end());
                if (node.kind == Kind::Intersect) {
                    for (int o : a) {
                        if (bs.count(o)) rec.objects.push_back(o);
                    }
                } else {
                    std::set<int> all(a.begin(), a.end());
                    all.insert(b.begin(), b.end());
                    rec.objects.assign(all.begin(), all.end());
                }
                break;
            }
            case Kind::Query: {
                const int obj = unique_of(node.a, at);
                rec.object = obj;
                rec.value = attr_value(scene.objects[static_cast<size_t>(obj)].attrs,
                                       node.attribute);
                break;
            }
            case Kind::Count: {
                rec.value = std::to_string(set_of(node.a, at).size());
                break;
            }
            case Kind::Exist: {
                rec.value = set_of(node.a, at).empty() ? "no" : "yes";
                break;
            }
            case Kind::EqualNumber:
            case Kind::Less:
            case Kind::More: {
                const size_t na = set_of(node.a, at).size();
                const size_t nb = set_of(node.b, at).size();
                const bool truth = node.kind == Kind::EqualNumber ? na == nb
                                   : node.kind == Kind::Less     ? na < nb
                                                                 : na > nb;
                rec.value = truth ? "yes" : "no";
                break;
            }
            case Kind::EqualAttribute: {
                check(node.a >= 0 && node.a < at && node.b >= 0 && node.b < at,
                      "execute: EqualAttribute operands out of range at step ", at + 1);
                const SubRoutine& qa = steps[static_cast<size_t>(node.a)];
                const SubRoutine& qb = steps[static_cast<size_t>(node.b)];
                check(qa.kind == Kind::Query && qb.kind == Kind::Query,
                      "execute: EqualAttribute expects Query operands");
                check(qa.attribute == node.attribute && qb.attribute == node.attribute,
                      "execute: EqualAttribute attribute mismatch");
                rec.value = trace.steps[static_cast<size_t>(node.a)].value ==
                                    trace.steps[static_cast<size_t>(node.b)].value
                                ? "yes"
                                : "no";
                break;
            }
        }
    }
    const SubRoutine& last = steps.back();
    check(is_terminal_kind(last.kind), "execute: final step is not answer-typed");
    trace.answer = trace.steps.back().value;
    return {trace.answer, trace};
}

std::string serialize_rationale(const Program& program, const Scene& scene,
                                const RationaleTrace& trace) {
    check(program.steps.size() == trace.steps.size(),
          "serialize_rationale: trace/program size mismatch");
    std::string s;
    for (size_t si = 0; si < program.steps.size(); ++si) {
        const SubRoutine& node = program.steps[si];
        const StepRecord& rec = trace.steps[si];
        const std::string step_no = std::to_string(si + 1);
        const std::string from_a = std::to_string(node.a + 1);
        const std::string from_b = std::to_string(node.b + 1);
        if (si) s += " ";
        s += "Step " + step_no + ", ";
        switch (node.kind) {
            case Kind::Scene:
                s += "the objects in the scene are " + phrase_list(rec.objects, scene, false) +
                     ".";
                break;
            case Kind::Filter:
                if (rec.objects.empty()) {
                    s += "from step " + from_a + ", there are no objects of " + node.attribute +
                         " " + node.value + ".";
                } else {
                    s += "from step " + from_a + ", the objects of " + node.attribute + " " +
                         node.value + " are " + phrase_list(rec.objects, scene, false) + ".";
                }
                break;
            case Kind::Unique:
                s += "from step " + from_a + ", this object is unique.";
                break;
            case Kind::Relate: {
                const int ref = trace.steps[static_cast<size_t>(node.a)].object;
                const auto& ro = scene.objects[static_cast<size_t>(ref)];
                s += std::string(direction_phrase(node.direction)) + " the " +
                     attrs_phrase(ro.attrs) + " at " + coords_str(ro) + " ";
                if (rec.objects.empty()) {
                    s += "there are no objects in the scene.";
                } else {
                    s += "the objects in the scene are " + phrase_list(rec.objects, scene, true) +
                         ".";
                }
                break;
            }
            case Kind::Intersect:
            case Kind::Union:
                if (rec.objects.empty()) {
                    s += "from steps " + from_a + " and " + from_b +
                         ", there are no common objects.";
                } else {
                    s += "from steps " + from_a + " and " + from_b + ", the common objects are " +
                         phrase_list(rec.objects, scene, false) + ".";
                }
                break;
            case Kind::Query: {
                const auto& o = scene.objects[static_cast<size_t>(rec.object)];
                s += "from step " + from_a + ", the " + node.attribute + " of the " +
                     attrs_phrase(o.attrs) + " is " + rec.value + ".";
                break;
            }
            case Kind::Count:
                s += "from step " + from_a + ", there are " + rec.value + " such objects.";
                break;
            case Kind::Exist:
                s += "from step " + from_a + ", " +
                     (rec.value == "yes" ? "there is such an object."
                                         : "there is no such object.");
                break;
            case Kind::EqualNumber:
            case Kind::Less:
            case Kind::More: {
                // States the factual comparison; the answer then says whether
                // it matches the asked relation.
                const size_t na = trace.steps[static_cast<size_t>(node.a)].objects.size();
                const size_t nb = trace.steps[static_cast<size_t>(node.b)].objects.size();
                s += "from steps " + from_a + " and " + from_b + ", ";
                if (na == nb) {
                    s += "there are an equal number of objects.";
                } else if (na < nb) {
                    s += "there are less objects in step " + from_a + " than " + from_b + ".";
                } else {
                    s += "there are more objects in step " + from_a + " than " + from_b + ".";
                }
                break;
            }
            case Kind::EqualAttribute: {
                const int oa = trace.steps[static_cast<size_t>(node.a)].object;
                const int ob = trace.steps[static_cast<size_t>(node.b)].object;
                s += "from steps " + from_a + " and " + from_b + ", the objects " +
                     attrs_phrase(scene.objects[static_cast<size_t>(oa)].attrs) + " and " +
                     attrs_phrase(scene.objects[static_cast<size_t>(ob)].attrs) + " " +
                     (rec.value == "yes" ? "have" : "do not have") + " the same " +
                     node.attribute + ".";
                break;
            }
        }
    }
    s += " The answer is, " + trace.answer + ".";
    return s;
}

namespace {

struct PairSpec {
    std::vector<std::pair<std::string, std::string>> pairs;  // canonical key order
};

// Filter pairs, optionally anchored to a scene object so the chain is
// guaranteed nonempty for that object.
PairSpec sample_pairs(Rng& rng, const Scene* bias, int n_pairs, const std::string& forbid) {
    std::vector<std::string> keys;
    for (const char* k : kAttributeKeys) {
        if (forbid != k) keys.push_back(k);
    }
    auto chosen = rng.sample_distinct(0, static_cast<int>(keys.size()) - 1, n_pairs);
    std::sort(chosen.begin(), chosen.end());  // canonical attribute order
    const SceneObject* anchor = nullptr;
    if (bias && !bias->objects.empty() && rng.bernoulli(0.7)) {
        anchor = &bias->objects[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(bias->objects.size()) - 1))];
    }
    PairSpec spec;
    for (int ki : chosen) {
        const std::string key = keys[static_cast<size_t>(ki)];
        std::string value;
        if (anchor) {
            value = attr_value(anchor->attrs, key);
        } else if (key == "size") {
            value = kSizeNames[static_cast<size_t>(rng.uniform_int(0, 2))];
        } else if (key == "color") {
            value = kColorNames[static_cast<size_t>(rng.uniform_int(0, 7))];
        } else if (key == "material") {
            value = kMaterialNames[static_cast<size_t>(rng.uniform_int(0, 1))];
        } else {
            value = kShapeNames[static_cast<size_t>(rng.uniform_int(0, 2))];
        }
        spec.pairs.emplace_back(key, value);
    }
    return spec;
}

// "large red cubes" / "large red cube" / "metal objects"
std::string pair_desc(const PairSpec& spec, bool plural) {
    std::string noun = plural ? "objects" : "object";
    std::string mods;
    for (const auto& [key, value] : spec.pairs) {
        if (key == "shape") {
            noun = plural ? value + "s" : value;
        } else {
            mods += value + " ";
        }
    }
    return mods + noun;
}

struct Builder {
    Program program;

    int scene() {
        program.steps.push_back({Kind::Scene, -1, -1, "", "", ""});
        return static_cast<int>(program.steps.size()) - 1;
    }
    int filters(int from, const PairSpec& spec) {
        for (const auto& [key, value] : spec.pairs) {
            program.steps.push_back({Kind::Filter, from, -1, key, value, ""});
            from = static_cast<int>(program.steps.size()) - 1;
        }
        return from;
    }
    int unique(int from) {
        program.steps.push_back({Kind::Unique, from, -1, "", "", ""});
        return static_cast<int>(program.steps.size()) - 1;
    }
    int relate(int from_unique, const std::string& dir) {
        program.steps.push_back({Kind::Relate, from_unique, -1, "", "", dir});
        return static_cast<int>(program.steps.size()) - 1;
    }
    int node(Kind k, int a, int b, const std::string& attribute = "") {
        program.steps.push_back({k, a, b, attribute, "", ""});
        return static_cast<int>(program.steps.size()) - 1;
    }
};

std::string random_direction(Rng& rng) {
    static const char* dirs[4] = {"front", "behind", "left", "right"};
    return dirs[rng.uniform_int(0, 3)];
}

const char* random_attr_key(Rng& rng) { return kAttributeKeys[rng.uniform_int(0, 3)]; }

}  // namespace

std::pair<Program, std::string> sample_question(Rng& rng, const GridworldConfig& cfg,
                                                const Scene* bias) {
    (void)cfg;
    static const char* families[5] = {"count-with-union", "exist", "compare-numbers",
                                      "query-attribute", "compare-attribute"};
    const std::string family = families[rng.uniform_int(0, 4)];
    Builder b;
    b.program.family = family;
    std::string question;

    // Subject chain: scene -> filters, optionally via a relate against a
    // unique referent. Returns the last step and the descriptor clause.
    auto chain = [&](int max_pairs, const std::string& forbid, bool allow_relate, bool plural,
                     std::string* desc) {
        const bool use_relate = allow_relate && rng.bernoulli(0.5);
        int last = b.scene();
        if (use_relate) {
            PairSpec ref = sample_pairs(rng, bias, rng.uniform_int(1, 2), "");
            last = b.filters(last, ref);
            last = b.unique(last);
            const std::string dir = random_direction(rng);
            last = b.relate(last, dir);
            PairSpec subj = sample_pairs(rng, bias, rng.uniform_int(1, max_pairs), forbid);
            last = b.filters(last, subj);
            *desc = pair_desc(subj, plural) + (plural ? " that are " : " ") +
                    direction_phrase(dir) + " the " + pair_desc(ref, false);
        } else {
            PairSpec subj = sample_pairs(rng, bias, rng.uniform_int(1, max_pairs), forbid);
            last = b.filters(last, subj);
            *desc = pair_desc(subj, plural);
        }
        return last;
    };

    if (family == "count-with-union") {
        std::string desc_a, desc_b;
        const int a = chain(2, "", true, true, &desc_a);
        PairSpec pb = sample_pairs(rng, bias, rng.uniform_int(1, 2), "");
        int bstep = b.scene();
        bstep = b.filters(bstep, pb);
        desc_b = pair_desc(pb, true);
        const int u = b.node(Kind::Union, a, bstep);
        b.node(Kind::Count, u, -1);
        question = "How many objects are " + desc_a + " or " + desc_b + "?";
    } else if (family == "exist") {
        std::string desc;
        const int a = chain(3, "", true, false, &desc);
        b.node(Kind::Exist, a, -1);
        question = "Is there a " + desc + "?";
    } else if (family == "compare-numbers") {
        static const Kind ops[3] = {Kind::EqualNumber, Kind::Less, Kind::More};
        const Kind op = ops[rng.uniform_int(0, 2)];
        PairSpec pa = sample_pairs(rng, bias, rng.uniform_int(1, 2), "");
        PairSpec pb = sample_pairs(rng, bias, rng.uniform_int(1, 2), "");
        int a = b.scene();
        a = b.filters(a, pa);
        int bb = b.scene();
        bb = b.filters(bb, pb);
        b.node(op, a, bb);
        const std::string da = pair_desc(pa, true);
        const std::string db = pair_desc(pb, true);
        if (op == Kind::EqualNumber) {
            question = "Are there an equal number of " + da + " and " + db + "?";
        } else if (op == Kind::Less) {
            question = "Are there fewer " + da + " than " + db + "?";
        } else {
            question = "Are there more " + da + " than " + db + "?";
        }
    } else if (family == "query-attribute") {
        const std::string attr = random_attr_key(rng);
        std::string desc;
        const int a = chain(2, attr, true, false, &desc);
        const int u = b.unique(a);
        b.node(Kind::Query, u, -1, attr);
        question = "What is the " + attr + " of the " + desc + "?";
    } else {  // compare-attribute
        const std::string attr = random_attr_key(rng);
        std::string desc_a, desc_b;
        PairSpec pa = sample_pairs(rng, bias, rng.uniform_int(1, 2), attr);
        int a = b.scene();
        a = b.filters(a, pa);
        a = b.unique(a);
        const int qa = b.node(Kind::Query, a, -1, attr);
        desc_a = pair_desc(pa, false);
        const int bb = chain(1, attr, true, false, &desc_b);
        const int ub = b.unique(bb);
        const int qb = b.node(Kind::Query, ub, -1, attr);
        b.node(Kind::EqualAttribute, qa, qb, attr);
        question = "Do the " + desc_a + " and the " + desc_b + " have the same " + attr + "?";
    }

    const int depth = static_cast<int>(b.program.steps.size());
    check(depth >= 3 && depth <= 14, "sample_question: depth ", depth, " outside [3, 14]");
    return {std::move(b.program), question};
}

GridworldEpisode sample_gridworld_episode(Rng& rng, const GridworldConfig& cfg) {
    Scene scene = sample_scene(rng, cfg);
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        auto [program, question] = sample_question(rng, cfg, &scene);
        try {
            auto [answer, trace] = execute(program, scene);
            GridworldEpisode ep;
            ep.scene = scene;
            ep.program = std::move(program);
            ep.question = std::move(question);
            ep.rationale = serialize_rationale(ep.program, scene, trace);
            ep.answer = answer;
            return ep;
        } catch (const UniquenessError&) {
            if (attempt % 50 == 49) scene = sample_scene(rng, cfg);
        }
    }
    fail("sample_gridworld_episode: no valid question after ", cfg.max_attempts, " attempts");
}

namespace {

// Phrase lists: "attrs[, attrs]*" (scene/filter/setop) or
// "attrs at (x,y)[, attrs at (x,y)]*" (relate).
void parse_phrase_list(TokenCursor& c, ParsedStep& step, bool with_coords) {
    while (true) {
        step.objects.push_back(parse_attrs(c));
        if (with_coords) {
            // Coordinates may be omitted; keep the lists aligned regardless.
            if (c.peek() == "at") {
                c.expect("at");
                step.coords.push_back(parse_coords(c));
            } else {
                step.coords.emplace_back(-1, -1);
            }
        }
        if (c.accept(",")) continue;
        break;
    }
}

void parse_filter_pairs(TokenCursor& c, ParsedStep& step, const std::string& stop) {
    while (true) {
        const std::string key = c.next();
        check(std::find(kAttributeKeys.begin(), kAttributeKeys.end(), key) !=
                  kAttributeKeys.end(),
              "parse: unknown attribute key '", key, "'");
        step.pairs.emplace_back(key, c.next());
        if (c.accept(",")) continue;
        break;
    }
    c.expect(stop);
}

}  // namespace

ParsedGridworld parse_gridworld_rationale(const std::string& text) {
    TokenCursor c(text);
    ParsedGridworld out;
    while (!c.done() && c.peek() == "Step") {
        c.expect("Step");
        const int step_no = parse_int(c);
        check(step_no == static_cast<int>(out.steps.size()) + 1, "parse: step ", step_no,
              " out of order");
        c.expect(",");
        ParsedStep step;
        const std::string& head = c.peek();
        if (head == "the") {
            // Scene listing.
            step.op = "scene";
            c.expect_all({"the", "objects", "in", "the", "scene", "are"});
            parse_phrase_list(c, step, false);
            c.expect(".");
        } else if (head == "in" || head == "behind" || head == "at") {
            step.op = "relate";
            if (head == "in") {
                c.expect_all({"in", "front", "of"});
                step.direction = "front";
            } else if (head == "behind") {
                c.expect("behind");
                step.direction = "behind";
            } else {
                c.expect_all({"at", "the"});
                const std::string side = c.next();
                check(side == "left" || side == "right", "parse: bad direction '", side, "'");
                step.direction = side;
                c.expect("of");
            }
            c.expect("the");
            step.has_ref = true;
            step.ref = parse_attrs(c);
            c.expect("at");
            auto [x, y] = parse_coords(c);
            step.ref_x = x;
            step.ref_y = y;
            if (c.peek() == "the" || c.peek() == "The") {
                c.next();
                c.expect_all({"objects", "in", "the", "scene", "are"});
                parse_phrase_list(c, step, true);
            } else {
                c.expect_all({"there", "are", "no", "objects", "in", "the", "scene"});
            }
            c.expect(".");
        } else {
            c.expect("from");
            if (c.peek() == "step") {
                c.expect("step");
                step.from_a = parse_int(c);
                c.expect(",");
                if (c.peek() == "this") {
                    step.op = "unique";
                    c.expect_all({"this", "object", "is", "unique", "."});
                } else if (c.peek() == "the" && c.peek(1) == "objects") {
                    step.op = "filter";
                    c.expect_all({"the", "objects", "of"});
                    parse_filter_pairs(c, step, "are");
                    parse_phrase_list(c, step, false);
                    c.expect(".");
                } else if (c.peek() == "the") {
                    step.op = "query";
                    c.expect("the");
                    step.attribute = c.next();
                    c.expect_all({"of", "the"});
                    step.objects.push_back(parse_attrs(c));
                    c.expect("is");
                    step.value = c.next();
                    c.expect(".");
                } else {
                    c.expect("there");
                    if (c.peek() == "is") {
                        step.op = "exist";
                        c.expect("is");
                        if (c.peek() == "such") {
                            c.expect_all({"such", "an", "object", "."});
                            step.value = "yes";
                        } else {
                            c.expect_all({"no", "such", "object", "."});
                            step.value = "no";
                        }
                    } else {
                        c.expect("are");
                        if (c.peek() == "no") {
                            step.op = "filter";
                            c.expect_all({"no", "objects", "of"});
                            parse_filter_pairs(c, step, ".");
                        } else {
                            step.op = "count";
                            step.value = std::to_string(parse_int(c));
                            c.expect_all({"such", "objects", "."});
                        }
                    }
                }
            } else {
                c.expect("steps");
                step.from_a = parse_int(c);
                c.expect("and");
                step.from_b = parse_int(c);
                c.expect(",");
                if (c.peek() == "the" && c.peek(1) == "common") {
                    step.op = "setop";
                    c.expect_all({"the", "common", "objects", "are"});
                    parse_phrase_list(c, step, false);
                    c.expect(".");
                } else if (c.peek() == "the") {
                    step.op = "equal_attribute";
                    c.expect_all({"the", "objects"});
                    step.objects.push_back(parse_attrs(c));
                    c.expect("and");
                    step.objects.push_back(parse_attrs(c));
                    if (c.peek() == "have") {
                        c.expect("have");
                        step.value = "yes";
                    } else {
                        c.expect_all({"do", "not", "have"});
                        step.value = "no";
                    }
                    c.expect_all({"the", "same"});
                    step.attribute = c.next();
                    c.expect(".");
                } else {
                    c.expect_all({"there", "are"});
                    if (c.peek() == "an") {
                        step.op = "equal_number";
                        c.expect_all({"an", "equal", "number", "of", "objects", "."});
                    } else if (c.peek() == "no") {
                        step.op = "setop";
                        c.expect_all({"no", "common", "objects", "."});
                    } else {
                        const std::string cmp = c.next();
                        check(cmp == "less" || cmp == "more", "parse: bad comparison '", cmp,
                              "'");
                        step.op = cmp;
                        c.expect_all({"objects", "in", "step"});
                        step.cmp_i = parse_int(c);
                        c.expect("than");
                        step.cmp_j = parse_int(c);
                        c.expect(".");
                    }
                }
            }
        }
        out.steps.push_back(std::move(step));
    }
    c.expect_all({"The", "answer", "is", ","});
    out.answer = c.next();
    c.expect(".");
    check(c.done(), "parse: trailing tokens after answer");
    check(!out.steps.empty(), "parse: rationale has no steps");
    return out;
}

std::string gridworld_object_list_rationale(const std::string& full_rationale) {
    ParsedGridworld p = parse_gridworld_rationale(full_rationale);
    check(p.steps[0].op == "scene", "gridworld rationale does not start with a scene step");
    std::string s = "Step 1, the objects in the scene are ";
    for (size_t i = 0; i < p.steps[0].objects.size(); ++i) {
        if (i) s += ", ";
        s += attrs_phrase(p.steps[0].objects[i]);
    }
    s += ". The answer is, " + p.answer + ".";
    return s;
}

}  // namespace lrr
