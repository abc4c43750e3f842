#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/grid.hpp"
#include "cobso/pitch_control.hpp"
#include "cobso/scoring.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

/// Probability that the next on-ball event happens at each cell: isotropic
/// Gaussian centered on the ball, renormalized over the visible grid.
struct TransitionSurface {
    Surface surface;
    double sigma = 14.0;
};

inline TransitionSurface transition_surface(Vec2 ball, const PitchSpec& pitch,
                                            double sigma = 14.0) {
    if (sigma <= 0.0) throw ContractError("transition_surface: sigma must be positive");
    TransitionSurface out{Surface(pitch), sigma};
    double total = 0.0;
    for (int iy = 0; iy < pitch.ny; ++iy) {
        for (int ix = 0; ix < pitch.nx; ++ix) {
            const double d2 = (pitch.cell_center(ix, iy) - ball).norm2();
            const double v = std::exp(-0.5 * d2 / (sigma * sigma));
            out.surface.at(ix, iy) = v;
            total += v;
        }
    }
    for (double& v : out.surface.values) v /= total;
    return out;
}

enum class ScoreModel { Simple, Potential };

inline const char* to_string(ScoreModel m) {
    return m == ScoreModel::Simple ? "simple" : "potential";
}

struct ObsoParams {
    ScoreModel score_model = ScoreModel::Potential;
    double transition_sigma = 14.0;
    ScoreModelParams potential;
    SimpleScoreParams simple;
    ControlParams control;
};

/// Off-ball scoring opportunity: per-cell product of score, control and
/// transition surfaces, its total, and the per-attacker credit computed from
/// each attacker's own control contribution.
struct ObsoResult {
    Surface surface;
    double total = 0.0;
    std::vector<int> player_ids;      // attacking players, frame order
    std::vector<double> per_player;   // same order as player_ids
    ScoreModel score_model = ScoreModel::Potential;

    double credit_for(int player_id) const {
        for (size_t i = 0; i < player_ids.size(); ++i)
            if (player_ids[i] == player_id) return per_player[i];
        throw ContractError("ObsoResult: player " + std::to_string(player_id) +
                            " is not an attacking player of this frame");
    }
};

/// Compose the three surfaces for one frame. `control` must come from the
/// same frame and grid.
inline ObsoResult obso_surface(const Frame& frame, const ControlField& control, Team attacking,
                               const PitchSpec& pitch, const ObsoParams& params = {}) {
    require_same_grid(control.pitch, pitch, "obso_surface");
    if (control.per_player.size() != frame.players.size())
        throw ContractError("obso_surface: control field player count does not match frame");

    const Surface score = params.score_model == ScoreModel::Potential
                              ? potential_score_surface(frame, attacking, pitch, params.potential)
                              : simple_score_surface(pitch, params.simple);
    const TransitionSurface transition =
        transition_surface(frame.ball.pos, pitch, params.transition_sigma);

    ObsoResult out;
    out.surface = Surface(pitch);
    out.score_model = params.score_model;
    for (size_t j = 0; j < frame.players.size(); ++j)
        if (frame.players[j].team == attacking) {
            out.player_ids.push_back(frame.players[j].id);
            out.per_player.push_back(0.0);
        }

    for (int iy = 0; iy < pitch.ny; ++iy) {
        for (int ix = 0; ix < pitch.nx; ++ix) {
            const double st = score.at(ix, iy) * transition.surface.at(ix, iy);
            out.surface.at(ix, iy) = st * control.attack.at(ix, iy);
            out.total += out.surface.at(ix, iy);
            size_t slot = 0;
            for (size_t j = 0; j < frame.players.size(); ++j) {
                if (frame.players[j].team != attacking) continue;
                out.per_player[slot++] += st * control.per_player[j].at(ix, iy);
            }
        }
    }
    return out;
}

/// One-call pipeline: control field then OBSO for a single frame.
inline ObsoResult compute_obso(const Frame& frame, Team attacking, const PitchSpec& pitch,
                               const ObsoParams& params = {}) {
    const ControlField control = compute_ppcf(frame, attacking, pitch, params.control);
    return obso_surface(frame, control, attacking, pitch, params);
}

} // namespace cobso
