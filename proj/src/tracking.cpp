#include "lrr/tracking.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "lrr/parse.h"

namespace lrr {

namespace {

int chebyshev(int a, int b) {
    return std::max(std::abs(cell_row(a) - cell_row(b)), std::abs(cell_col(a) - cell_col(b)));
}

// One 8-connected step from `from` toward `to`.
int step_toward(int from, int to) {
    const int dr = std::clamp(cell_row(to) - cell_row(from), -1, 1);
    const int dc = std::clamp(cell_col(to) - cell_col(from), -1, 1);
    return cell_index(cell_row(from) + dr, cell_col(from) + dc);
}

}  // namespace

std::vector<int> cell_neighbors(int cell) {
    check(cell >= 0 && cell < kGridCells, "cell_neighbors: cell ", cell, " out of range");
    std::vector<int> out;
    const int r = cell_row(cell), c = cell_col(cell);
    for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int nr = r + dr, nc = c + dc;
            if (nr < 0 || nr >= kGridSide || nc < 0 || nc >= kGridSide) continue;
            out.push_back(cell_index(nr, nc));
        }
    }
    return out;
}

const char* camera_name(CameraMode m) {
    return m == CameraMode::static_cam ? "static" : "moving";
}

CameraMode camera_from_name(const std::string& name) {
    if (name == "static") return CameraMode::static_cam;
    if (name == "moving") return CameraMode::moving_cam;
    fail("unknown camera mode '", name, "'");
}

int TrackState::root(int e) const {
    check(e >= 0 && e < entities(), "TrackState: entity ", e, " out of range");
    int hops = 0;
    while (parent[static_cast<size_t>(e)] != -1) {
        e = parent[static_cast<size_t>(e)];
        check(++hops <= entities(), "TrackState: containment cycle at entity ", e);
    }
    return e;
}

void apply_action(TrackState& state, const TrackAction& act) {
    const int n = state.entities();
    if (act.uncover >= 0) {
        check(act.uncover >= 1 && act.uncover < n, "apply_action: uncover entity out of range");
        check(state.parent[static_cast<size_t>(act.uncover)] == -1,
              "apply_action: uncovering a contained cone");
        bool had_child = false;
        for (int e = 0; e < n; ++e) {
            if (state.parent[static_cast<size_t>(e)] == act.uncover) {
                state.parent[static_cast<size_t>(e)] = -1;
                state.cell[static_cast<size_t>(e)] = state.cell[static_cast<size_t>(act.uncover)];
                had_child = true;
            }
        }
        check(had_child, "apply_action: uncover on a childless cone");
    }
    for (const auto& [e, dest] : act.moves) {
        check(e >= 0 && e < n, "apply_action: moved entity out of range");
        check(dest >= 0 && dest < kGridCells, "apply_action: destination out of range");
        check(state.parent[static_cast<size_t>(e)] == -1,
              "apply_action: contained entity cannot move itself");
        check(chebyshev(state.cell[static_cast<size_t>(e)], dest) <= 1,
              "apply_action: move is not 8-connected");
        state.cell[static_cast<size_t>(e)] = dest;
    }
    if (act.cover_cone >= 0) {
        const int c = act.cover_cone, t = act.cover_target;
        check(c >= 1 && c < n, "apply_action: cover cone out of range");
        check(t >= 0 && t < n && t != c, "apply_action: cover target out of range");
        check(t < c, "apply_action: cone may contain only strictly smaller entities");
        check(state.parent[static_cast<size_t>(c)] == -1 &&
                  state.parent[static_cast<size_t>(t)] == -1,
              "apply_action: cover requires two free entities");
        check(state.cell[static_cast<size_t>(c)] == state.cell[static_cast<size_t>(t)],
              "apply_action: cover without co-location");
        state.parent[static_cast<size_t>(t)] = c;
    }
}

TrackingEpisode sample_episode(Rng& rng, const TrackingConfig& cfg) {
    check(cfg.n_cones_min >= 1 && cfg.n_cones_min <= cfg.n_cones_max && cfg.n_cones_max <= 3,
          "sample_episode: n_cones must lie in [1,3]");
    check(cfg.t_frames >= 2, "sample_episode: need at least two frames");
    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        TrackingEpisode ep;
        ep.n_cones = rng.uniform_int(cfg.n_cones_min, cfg.n_cones_max);
        ep.camera = cfg.camera;
        const int n = 1 + ep.n_cones;
        ep.initial.cell = rng.sample_distinct(0, kGridCells - 1, n);
        ep.initial.parent.assign(static_cast<size_t>(n), -1);

        const bool require_containment = rng.bernoulli(cfg.p_containment);
        TrackState state = ep.initial;
        ep.states.push_back(state);
        int covers = 0;
        for (int t = 1; t < cfg.t_frames; ++t) {
            TrackAction act;
            std::vector<bool> handled(static_cast<size_t>(n), false);
            auto is_root = [&](int e) { return state.parent[static_cast<size_t>(e)] == -1; };

            std::vector<int> uncoverable;
            for (int c = 1; c < n; ++c) {
                if (!is_root(c)) continue;
                for (int e = 0; e < n; ++e) {
                    if (state.parent[static_cast<size_t>(e)] == c) {
                        uncoverable.push_back(c);
                        break;
                    }
                }
            }
            if (!uncoverable.empty() && rng.bernoulli(cfg.p_uncover)) {
                const int u = rng.pick(uncoverable);
                act.uncover = u;
                auto nbrs = cell_neighbors(state.cell[static_cast<size_t>(u)]);
                act.moves.emplace_back(u, rng.pick(nbrs));
                handled[static_cast<size_t>(u)] = true;
            } else if (rng.bernoulli(cfg.p_cover)) {
                // Candidate (cone, smaller target) pairs among free roots.
                std::vector<std::pair<int, int>> ready, far;
                for (int c = 1; c < n; ++c) {
                    if (!is_root(c)) continue;
                    for (int e = 0; e < c; ++e) {
                        if (!is_root(e)) continue;
                        const int d = chebyshev(state.cell[static_cast<size_t>(c)],
                                                state.cell[static_cast<size_t>(e)]);
                        (d <= 1 ? ready : far).emplace_back(c, e);
                    }
                }
                if (!ready.empty()) {
                    auto [c, e] = rng.pick(ready);
                    act.cover_cone = c;
                    act.cover_target = e;
                    act.moves.emplace_back(c, state.cell[static_cast<size_t>(e)]);
                    handled[static_cast<size_t>(c)] = true;
                    handled[static_cast<size_t>(e)] = true;  // target holds still
                } else if (!far.empty()) {
                    auto [c, e] = rng.pick(far);
                    act.moves.emplace_back(c, step_toward(state.cell[static_cast<size_t>(c)],
                                                          state.cell[static_cast<size_t>(e)]));
                    handled[static_cast<size_t>(c)] = true;
                }
            }
            for (int e = 0; e < n; ++e) {
                if (handled[static_cast<size_t>(e)] || !is_root(e)) continue;
                auto dests = cell_neighbors(state.cell[static_cast<size_t>(e)]);
                dests.push_back(state.cell[static_cast<size_t>(e)]);
                act.moves.emplace_back(e, rng.pick(dests));
            }
            apply_action(state, act);
            if (act.cover_cone >= 0) ++covers;
            ep.script.push_back(std::move(act));
            ep.states.push_back(state);
        }
        if (require_containment && covers == 0) continue;

        const double cell_px = cfg.image_size / static_cast<double>(kGridSide);
        for (int t = 0; t < cfg.t_frames; ++t) {
            CameraTransform cam;
            if (cfg.camera == CameraMode::moving_cam) {
                cam.zoom = rng.uniform(0.9, 1.1);
                cam.pan_x = rng.uniform(-cell_px, cell_px);
                cam.pan_y = rng.uniform(-cell_px, cell_px);
            }
            ep.cams.push_back(cam);
        }
        ep.answer = ep.states.back().effective_cell(0);
        return ep;
    }
    fail("sample_episode: no script with containment after ", cfg.max_attempts, " attempts");
}

std::string episode_rationale(const TrackingEpisode& ep) {
    std::string s;
    for (const auto& state : ep.states) {
        if (!s.empty()) s += " ";
        s += "(";
        for (int e = 0; e < state.entities(); ++e) {
            if (e) s += ",";
            s += std::to_string(state.effective_cell(e));
        }
        s += ")";
    }
    s += " The answer is, " + std::to_string(ep.answer) + ".";
    return s;
}

std::string jitter_inputs(const std::string& text, Rng& rng, double p) {
    check(p >= 0.0 && p <= 1.0, "jitter_inputs: p out of range");
    // Digit runs are rewritten in place so untouched text stays byte-exact.
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    const auto alnum = [&](size_t k) {
        return k < text.size() && (std::isalnum(static_cast<unsigned char>(text[k])) != 0);
    };
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i])) || (i > 0 && alnum(i - 1))) {
            out += text[i++];
            continue;
        }
        size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        std::string run = text.substr(i, j - i);
        if (run.size() <= 2 && !alnum(j)) {
            const int v = std::stoi(run);
            if (v < kGridCells && rng.bernoulli(p)) {
                run = std::to_string(rng.pick(cell_neighbors(v)));
            }
        }
        out += run;
        i = j;
    }
    return out;
}

namespace {

constexpr Rgb kBoardBg{0.10f, 0.10f, 0.12f};
constexpr Rgb kGridLine{0.22f, 0.22f, 0.25f};
constexpr Rgb kSnitchColor{0.95f, 0.80f, 0.20f};
constexpr Rgb kConePalette[3] = {{0.20f, 0.75f, 0.30f}, {0.25f, 0.45f, 0.90f},
                                 {0.90f, 0.25f, 0.20f}};

}  // namespace

Image render_track_frame(const TrackState& state, const CameraTransform& cam, int image_size) {
    Image img = Image::filled(image_size, image_size, kBoardBg);
    const double cell_px = image_size / static_cast<double>(kGridSide);
    for (int k = 0; k <= kGridSide; ++k) {
        const int p = std::min(image_size - 1, static_cast<int>(k * cell_px));
        img.fill_rect(p, 0, p + 1, image_size, kGridLine);
        img.fill_rect(0, p, image_size, p + 1, kGridLine);
    }
    // Roots only: containment hides the contents. Bigger cones first so that
    // co-located smaller glyphs stay visible, snitch on top.
    for (int e = state.entities() - 1; e >= 1; --e) {
        if (state.parent[static_cast<size_t>(e)] != -1) continue;
        const int cell = state.cell[static_cast<size_t>(e)];
        const int cy = static_cast<int>((cell_row(cell) + 0.5) * cell_px);
        const int cx = static_cast<int>((cell_col(cell) + 0.5) * cell_px);
        img.fill_triangle(cy, cx, 2 + e, kConePalette[(e - 1) % 3]);
    }
    if (state.parent[0] == -1) {
        const int cell = state.cell[0];
        const int cy = static_cast<int>((cell_row(cell) + 0.5) * cell_px);
        const int cx = static_cast<int>((cell_col(cell) + 0.5) * cell_px);
        img.fill_circle(cy, cx, 2, kSnitchColor);
    }
    if (!cam.identity()) img = warp_affine(img, cam);
    return img;
}

std::vector<Image> render_frames(const TrackingEpisode& ep) {
    check(ep.states.size() == ep.cams.size(), "render_frames: states/cams size mismatch");
    std::vector<Image> out;
    for (size_t t = 0; t < ep.states.size(); ++t) {
        out.push_back(render_track_frame(ep.states[t], ep.cams[t], 64));
    }
    return out;
}

Image warp_affine(const Image& img, const CameraTransform& cam) {
    check(cam.zoom > 0.0, "warp_affine: zoom must be positive");
    Image out = Image::filled(img.h, img.w, {0, 0, 0});
    const double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
    for (int y = 0; y < img.h; ++y) {
        const double sy =
            std::clamp((y - cy - cam.pan_y) / cam.zoom + cy, 0.0, img.h - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const float fy = static_cast<float>(sy - y0);
        for (int x = 0; x < img.w; ++x) {
            const double sx =
                std::clamp((x - cx - cam.pan_x) / cam.zoom + cx, 0.0, img.w - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const float fx = static_cast<float>(sx - x0);
            for (int c = 0; c < 3; ++c) {
                const float top = img.at(c, y0, x0) * (1 - fx) + img.at(c, y0, x1) * fx;
                const float bot = img.at(c, y1, x0) * (1 - fx) + img.at(c, y1, x1) * fx;
                out.data[static_cast<size_t>((c * img.h + y) * img.w + x)] =
                    top * (1 - fy) + bot * fy;
            }
        }
    }
    return out;
}

int oracle_final_cell(const TrackingEpisode& ep) {
    // Functional fold over the script with map-based state, independent of
    // the simulator's array bookkeeping.
    std::map<int, int> pos, par;
    for (int e = 0; e < ep.initial.entities(); ++e) {
        pos[e] = ep.initial.cell[static_cast<size_t>(e)];
        if (ep.initial.parent[static_cast<size_t>(e)] != -1) {
            par[e] = ep.initial.parent[static_cast<size_t>(e)];
        }
    }
    for (const auto& act : ep.script) {
        if (act.uncover >= 0) {
            std::vector<int> released;
            for (const auto& [e, p] : par) {
                if (p == act.uncover) released.push_back(e);
            }
            for (int e : released) {
                par.erase(e);
                pos[e] = pos.at(act.uncover);
            }
        }
        for (const auto& [e, dest] : act.moves) pos.at(e) = dest;
        if (act.cover_cone >= 0) par[act.cover_target] = act.cover_cone;
    }
    int r = 0;
    int hops = 0;
    while (par.count(r)) {
        r = par.at(r);
        check(++hops <= ep.initial.entities(), "oracle_final_cell: containment cycle");
    }
    return pos.at(r);
}

ParsedTracking parse_tracking_rationale(const std::string& text) {
    TokenCursor c(text);
    ParsedTracking out;
    while (!c.done() && c.peek() == "(") {
        c.expect("(");
        std::vector<int> tup;
        tup.push_back(parse_int(c));
        while (c.accept(",")) tup.push_back(parse_int(c));
        c.expect(")");
        for (int cell : tup) {
            check(cell >= 0 && cell < kGridCells, "parse: cell ", cell, " out of range");
        }
        if (!out.frames.empty()) {
            check(tup.size() == out.frames.front().size(), "parse: tuple arity changed");
        }
        out.frames.push_back(std::move(tup));
    }
    check(!out.frames.empty(), "parse: rationale has no tuples");
    c.expect_all({"The", "answer", "is", ","});
    out.answer = parse_int(c);
    c.expect(".");
    check(c.done(), "parse: trailing tokens after answer");
    check(out.answer >= 0 && out.answer < kGridCells, "parse: answer out of range");
    check(out.answer == out.frames.back()[0], "parse: answer disagrees with final tuple");
    return out;
}

std::string tracking_object_list_rationale(const std::string& full_rationale) {
    ParsedTracking p = parse_tracking_rationale(full_rationale);
    std::string s;
    for (const auto& tup : p.frames) {
        if (!s.empty()) s += " ";
        s += "(" + std::to_string(tup[0]) + ")";
    }
    s += " The answer is, " + std::to_string(p.answer) + ".";
    return s;
}

}  // namespace lrr
