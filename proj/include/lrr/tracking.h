// tracking.h — CATER-style snitch tracking: entities sliding on a 6x6 grid
// with (recursive) containment by cones, scripted motion, frame rendering
// with an optional moving-camera warp, and tuple-per-frame rationales.
#pragma once

#include <string>
#include <vector>

#include "lrr/image.h"
#include "lrr/rng.h"

namespace lrr {

inline constexpr int kGridSide = 6;
inline constexpr int kGridCells = kGridSide * kGridSide;

inline int cell_row(int cell) { return cell / kGridSide; }
inline int cell_col(int cell) { return cell % kGridSide; }
inline int cell_index(int row, int col) { return row * kGridSide + col; }

// Valid 8-neighbors of a cell, clipped at the board border.
std::vector<int> cell_neighbors(int cell);

enum class CameraMode { static_cam, moving_cam };

const char* camera_name(CameraMode m);
CameraMode camera_from_name(const std::string& name);

struct TrackingConfig {
    int n_cones_min = 1;
    int n_cones_max = 3;
    int t_frames = 12;
    int image_size = 64;
    double p_containment = 0.9;  // episode is required to include a cover
    double p_uncover = 0.30;     // per-step event rates
    double p_cover = 0.55;
    CameraMode camera = CameraMode::static_cam;
    int max_attempts = 200;
};

// Entity 0 is the snitch; entities 1..n_cones are cones with size rank equal
// to their index, and a cone may contain only strictly smaller entities.
struct TrackState {
    std::vector<int> cell;    // own cell, stale while contained
    std::vector<int> parent;  // direct container, -1 when free

    int entities() const { return static_cast<int>(cell.size()); }
    int root(int e) const;
    int effective_cell(int e) const { return cell[static_cast<size_t>(root(e))]; }
};

// One frame transition: an optional uncover, explicit destinations for every
// free entity, then an optional cover once the cone sits on its target.
struct TrackAction {
    int uncover = -1;
    int cover_cone = -1, cover_target = -1;
    std::vector<std::pair<int, int>> moves;  // entity -> destination cell
};

struct CameraTransform {
    double zoom = 1.0;
    double pan_x = 0.0, pan_y = 0.0;  // pixels

    bool identity() const { return zoom == 1.0 && pan_x == 0.0 && pan_y == 0.0; }
};

struct TrackingEpisode {
    int n_cones = 0;
    CameraMode camera = CameraMode::static_cam;
    TrackState initial;
    std::vector<TrackAction> script;      // t_frames - 1 transitions
    std::vector<TrackState> states;       // t_frames states
    std::vector<CameraTransform> cams;    // t_frames transforms
    int answer = -1;                      // snitch effective cell, last frame
};

// Applies one scripted transition in place; errors on containment or
// adjacency violations.
void apply_action(TrackState& state, const TrackAction& act);

TrackingEpisode sample_episode(Rng& rng, const TrackingConfig& cfg = {});

// "(snitch,cone1,...,coneN) ... The answer is, <cell>."
std::string episode_rationale(const TrackingEpisode& ep);

// Word-level jitter: every integer token in [0,35] is replaced with
// probability p by a uniformly chosen 8-neighbor cell. All other bytes,
// including whitespace, are preserved as-is.
std::string jitter_inputs(const std::string& text, Rng& rng, double p = 0.25);

// Board raster per frame; contained entities are hidden, the camera warp is
// applied last (identity for the static split).
Image render_track_frame(const TrackState& state, const CameraTransform& cam, int image_size);
std::vector<Image> render_frames(const TrackingEpisode& ep);

// Inverse-mapped bilinear affine warp with edge clamping.
Image warp_affine(const Image& img, const CameraTransform& cam);

// Independent replay of initial state + script, ignoring ep.states.
int oracle_final_cell(const TrackingEpisode& ep);

struct ParsedTracking {
    std::vector<std::vector<int>> frames;  // effective cells per tuple
    int answer = -1;
};

ParsedTracking parse_tracking_rationale(const std::string& text);

// Ablation variant: snitch-only tuples plus the answer sentence.
std::string tracking_object_list_rationale(const std::string& full_rationale);

}  // namespace lrr
