#include "lrr/blicket.h"

#include <algorithm>
#include <set>

#include "lrr/parse.h"

namespace lrr {

namespace {

constexpr const char* kPreamble =
    "The task is to detect whether the following combination of objects activate the blicket "
    "machine, which activates when we put a blicket on it. Next, we will conduct six trials "
    "where we put a combination of objects on the machine. ";

bool subset_on(const std::vector<int>& subset, uint32_t assignment) {
    for (int o : subset) {
        if (assignment & (1u << o)) return true;
    }
    return false;
}

// All assignments consistent with every trial outcome.
std::vector<uint32_t> consistent_assignments(const std::vector<BlicketTrial>& trials,
                                             int n_objects) {
    check(n_objects >= 1 && n_objects <= 20, "blicket: n_objects ", n_objects,
          " outside enumerable range");
    std::vector<uint32_t> out;
    for (uint32_t a = 0; a < (1u << n_objects); ++a) {
        bool ok = true;
        for (const auto& t : trials) {
            if (subset_on(t.objects, a) != t.on) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(a);
    }
    return out;
}

std::string object_list(const std::vector<int>& subset, const std::vector<ObjectAttrs>& objects) {
    std::string s;
    for (size_t i = 0; i < subset.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(subset[i] + 1) + "(" +
             attrs_phrase(objects[static_cast<size_t>(subset[i])]) + ")";
    }
    return s;
}

}  // namespace

bool machine_state(const std::vector<int>& subset, const std::vector<uint8_t>& is_blicket) {
    for (int o : subset) {
        check(o >= 0 && o < static_cast<int>(is_blicket.size()), "machine_state: object ", o,
              " outside episode");
        if (is_blicket[static_cast<size_t>(o)]) return true;
    }
    return false;
}

std::string blicket_oracle_answer(const std::vector<int>& query,
                                  const std::vector<BlicketTrial>& trials, int n_objects) {
    auto consistent = consistent_assignments(trials, n_objects);
    check(!consistent.empty(), "blicket_oracle_answer: trials are inconsistent");
    size_t on = 0;
    for (uint32_t a : consistent) on += subset_on(query, a) ? 1 : 0;
    if (on == consistent.size()) return "Yes";
    if (on == 0) return "No";
    return "Maybe";
}

std::string classify_query(const std::vector<int>& query, const std::vector<BlicketTrial>& trials,
                           int n_objects) {
    std::set<int> qset(query.begin(), query.end());
    for (const auto& t : trials) {
        if (std::set<int>(t.objects.begin(), t.objects.end()) == qset) return "direct";
    }
    auto consistent = consistent_assignments(trials, n_objects);
    check(!consistent.empty(), "classify_query: trials are inconsistent");
    size_t on = 0;
    for (uint32_t a : consistent) on += subset_on(query, a) ? 1 : 0;
    if (on == 0 || on == consistent.size()) return "indirect";

    // Maybe: per-object status across the consistent assignments.
    auto proven_blicket = [&](int o) {
        for (uint32_t a : consistent) {
            if (!(a & (1u << o))) return false;
        }
        return true;
    };
    auto proven_non_blicket = [&](int o) {
        for (uint32_t a : consistent) {
            if (a & (1u << o)) return false;
        }
        return true;
    };
    // Backward blocking: an undetermined query object whose only positive
    // evidence is an on-trial shared with a proven blicket.
    for (int o : query) {
        if (proven_blicket(o) || proven_non_blicket(o)) continue;
        for (const auto& t : trials) {
            if (!t.on) continue;
            if (std::find(t.objects.begin(), t.objects.end(), o) == t.objects.end()) continue;
            for (int other : t.objects) {
                if (other != o && proven_blicket(other)) return "backward_blocked";
            }
        }
    }
    return "screened_off";
}

BlicketEpisode sample_blicket_episode(Rng& rng, const BlicketConfig& cfg) {
    check(cfg.n_objects_min >= 1 && cfg.n_objects_max <= 8 &&
              cfg.n_objects_min <= cfg.n_objects_max,
          "sample_blicket_episode: n_objects range [", cfg.n_objects_min, ", ", cfg.n_objects_max,
          "] unsupported");
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const int n = rng.uniform_int(cfg.n_objects_min, cfg.n_objects_max);
        BlicketEpisode ep;

        // Distinct attribute tuples for re-identification.
        std::set<std::string> used;
        while (static_cast<int>(ep.objects.size()) < n) {
            ObjectAttrs a = random_attrs(rng);
            if (used.insert(attrs_phrase(a)).second) ep.objects.push_back(a);
        }
        ep.is_blicket.resize(static_cast<size_t>(n));
        for (auto& b : ep.is_blicket) b = rng.bernoulli(0.5) ? 1 : 0;

        // Trials in sampled presentation order; every object must appear so
        // printed ids (order of first appearance) cover all of them.
        std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
        for (int i = 0; i < cfg.n_trials; ++i) {
            const int size = rng.uniform_int(1, std::min(cfg.max_subset, n));
            BlicketTrial t;
            t.objects = rng.sample_distinct(0, n - 1, size);
            rng.shuffle(t.objects);
            t.on = machine_state(t.objects, ep.is_blicket);
            for (int o : t.objects) seen[static_cast<size_t>(o)] = 1;
            ep.trials.push_back(std::move(t));
        }
        if (std::count(seen.begin(), seen.end(), uint8_t(1)) != n) continue;

        // Renumber objects by first appearance so ids print 1, 2, ... in
        // rationale order, as in the templates.
        {
            std::vector<int> order;  // old index in appearance order
            std::vector<int> new_of_old(static_cast<size_t>(n), -1);
            for (const auto& t : ep.trials) {
                for (int o : t.objects) {
                    if (new_of_old[static_cast<size_t>(o)] < 0) {
                        new_of_old[static_cast<size_t>(o)] = static_cast<int>(order.size());
                        order.push_back(o);
                    }
                }
            }
            BlicketEpisode renum;
            for (int old : order) {
                renum.objects.push_back(ep.objects[static_cast<size_t>(old)]);
                renum.is_blicket.push_back(ep.is_blicket[static_cast<size_t>(old)]);
            }
            renum.trials = ep.trials;
            for (auto& t : renum.trials) {
                for (int& o : t.objects) o = new_of_old[static_cast<size_t>(o)];
            }
            ep.objects = std::move(renum.objects);
            ep.is_blicket = std::move(renum.is_blicket);
            ep.trials = std::move(renum.trials);
        }

        // Candidate queries: subsets up to max_subset, classified post hoc,
        // picked to cover as many query types as possible.
        std::vector<BlicketQuery> by_type[4];
        const char* type_names[4] = {"direct", "indirect", "screened_off", "backward_blocked"};
        std::vector<std::vector<int>> candidates;
        for (uint32_t bits = 1; bits < (1u << n); ++bits) {
            if (__builtin_popcount(bits) > cfg.max_subset) continue;
            std::vector<int> subset;
            for (int o = 0; o < n; ++o) {
                if (bits & (1u << o)) subset.push_back(o);
            }
            candidates.push_back(std::move(subset));
        }
        rng.shuffle(candidates);
        for (auto& subset : candidates) {
            rng.shuffle(subset);
            BlicketQuery q;
            q.objects = subset;
            q.answer = blicket_oracle_answer(subset, ep.trials, n);
            q.type = classify_query(subset, ep.trials, n);
            for (int ty = 0; ty < 4; ++ty) {
                if (q.type == type_names[ty] && by_type[ty].size() < 4) {
                    by_type[ty].push_back(q);
                }
            }
        }
        for (int round = 0; static_cast<int>(ep.queries.size()) < cfg.n_queries; ++round) {
            bool added = false;
            for (int ty = 0; ty < 4 && static_cast<int>(ep.queries.size()) < cfg.n_queries;
                 ++ty) {
                if (static_cast<size_t>(round) < by_type[ty].size()) {
                    ep.queries.push_back(by_type[ty][static_cast<size_t>(round)]);
                    added = true;
                }
            }
            if (!added) break;
        }
        if (static_cast<int>(ep.queries.size()) < cfg.n_queries) continue;
        return ep;
    }
    fail("sample_blicket_episode: no valid episode after ", cfg.max_attempts, " attempts");
}

std::string blicket_rationale(const BlicketEpisode& ep, int query_index) {
    check(query_index >= 0 && query_index < static_cast<int>(ep.queries.size()),
          "blicket_rationale: query index ", query_index, " out of range");
    std::string s = kPreamble;
    for (size_t i = 0; i < ep.trials.size(); ++i) {
        const auto& t = ep.trials[i];
        s += "Trial " + std::to_string(i + 1) + " with objects: " +
             object_list(t.objects, ep.objects) +
             " causes the blicket machine to go: " + (t.on ? "on" : "off") + ". ";
    }
    const auto& q = ep.queries[static_cast<size_t>(query_index)];
    s += "Will the query with objects: " + object_list(q.objects, ep.objects) +
         " activate the blicket? " + q.answer + ".";
    return s;
}

Image render_blicket_frame(const std::vector<ObjectAttrs>& objects, MachineState state,
                           int image_size) {
    check(static_cast<int>(objects.size()) <= 4, "render_blicket_frame: at most 4 objects, got ",
          objects.size());
    Image img = Image::filled(image_size, image_size, {0.08f, 0.08f, 0.10f});
    const int platform_top = image_size * 3 / 4;
    Rgb tint{0.35f, 0.35f, 0.38f};  // off
    if (state == MachineState::on) tint = {0.95f, 0.55f, 0.10f};
    if (state == MachineState::query) tint = {0.25f, 0.35f, 0.55f};
    img.fill_rect(platform_top, 0, image_size, image_size, tint);
    const int cy = image_size * 9 / 16;
    for (size_t i = 0; i < objects.size(); ++i) {
        const int cx = image_size * (2 * static_cast<int>(i) + 1) / 8;
        draw_object(img, objects[i], cy, cx, image_size / 21);
    }
    return img;
}

std::vector<Image> render_blicket_episode(const BlicketEpisode& ep, int query_index,
                                          int image_size) {
    check(query_index >= 0 && query_index < static_cast<int>(ep.queries.size()),
          "render_blicket_episode: query index out of range");
    auto attrs_of = [&](const std::vector<int>& subset) {
        std::vector<ObjectAttrs> out;
        for (int o : subset) out.push_back(ep.objects[static_cast<size_t>(o)]);
        return out;
    };
    std::vector<Image> frames;
    for (const auto& t : ep.trials) {
        frames.push_back(render_blicket_frame(attrs_of(t.objects),
                                              t.on ? MachineState::on : MachineState::off,
                                              image_size));
    }
    frames.push_back(render_blicket_frame(
        attrs_of(ep.queries[static_cast<size_t>(query_index)].objects), MachineState::query,
        image_size));
    return frames;
}

namespace {

// id ( attrs ) [, id ( attrs )]*  — stops before a non-integer token.
void parse_object_group(TokenCursor& c, std::vector<int>& ids, std::vector<ObjectAttrs>& attrs) {
    while (true) {
        ids.push_back(parse_int(c));
        c.expect("(");
        attrs.push_back(parse_attrs(c));
        c.expect(")");
        if (!c.done() && c.peek() == ",") {
            c.next();
            continue;
        }
        break;
    }
}

}  // namespace

ParsedBlicket parse_blicket_rationale(const std::string& text) {
    TokenCursor c(text);
    ParsedBlicket out;
    // Skip the preamble: scan forward to the first "Trial".
    while (!c.done() && c.peek() != "Trial") c.next();
    while (!c.done() && c.peek() == "Trial") {
        c.expect("Trial");
        const int trial_no = parse_int(c);
        check(trial_no == static_cast<int>(out.trials.size()) + 1, "parse: trial ", trial_no,
              " out of order");
        c.expect_all({"with", "objects", ":"});
        ParsedBlicket::Line line;
        parse_object_group(c, line.ids, line.attrs);
        c.expect_all({"causes", "the", "blicket", "machine", "to", "go", ":"});
        const std::string state = c.next();
        check(state == "on" || state == "off", "parse: bad machine state '", state, "'");
        line.on = state == "on";
        c.expect(".");
        out.trials.push_back(std::move(line));
    }
    c.expect_all({"Will", "the", "query", "with", "objects", ":"});
    parse_object_group(c, out.query_ids, out.query_attrs);
    c.expect_all({"activate", "the", "blicket", "?"});
    out.answer = c.next();
    check(out.answer == "Yes" || out.answer == "No" || out.answer == "Maybe",
          "parse: bad answer '", out.answer, "'");
    c.expect(".");
    check(c.done(), "parse: trailing tokens after answer");
    return out;
}

std::string blicket_object_list_rationale(const std::string& full_rationale) {
    ParsedBlicket p = parse_blicket_rationale(full_rationale);
    auto group = [](const std::vector<int>& ids, const std::vector<ObjectAttrs>& attrs) {
        std::string s;
        for (size_t i = 0; i < ids.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(ids[i]) + "(" + attrs_phrase(attrs[i]) + ")";
        }
        return s;
    };
    std::string s;
    for (size_t i = 0; i < p.trials.size(); ++i) {
        s += "Trial " + std::to_string(i + 1) + " with objects: " +
             group(p.trials[i].ids, p.trials[i].attrs) + ". ";
    }
    s += "Will the query with objects: " + group(p.query_ids, p.query_attrs) +
         " activate the blicket? " + p.answer + ".";
    return s;
}

}  // namespace lrr
