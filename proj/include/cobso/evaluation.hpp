#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/obso.hpp"
#include "cobso/predictors.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

/// One shot scene: a canonical-orientation 25 Hz sequence ending at the shot
/// instant, the shooter, and the off-ball attacker under evaluation.
struct ShotScene {
    Sequence seq;
    int shooter_id = 0;
    int evaluated_id = 0;
    double burn_in = 2.0;
    double horizon = 4.0;
    std::string match_id;
};

struct Evaluation {
    std::string match_id;
    double shot_time = 0.0;
    int shooter_id = 0;
    int evaluated_id = 0;
    double v_actual = 0.0;         // shooter's modified OBSO, actual final frame
    double v_counterfactual = 0.0; // same on the predicted final frame
    double v_i = 0.0;              // max(0, actual - counterfactual)
    double v_obso_self = 0.0;      // evaluated player's own attributed OBSO
};

struct CobsoOptions {
    ObsoParams obso;
    double model_rate = 10.0;
    int samples = 10;
    bool attribute_total = false; // false: shooter's attributed share of Eq-total
    bool window_mean = false;     // average the horizon window instead of the shot frame
};

using RolloutFn = std::function<Sequence(const PredictionTask&, std::uint64_t)>;

inline RolloutFn model_rollout(PredictorModel& model) {
    return [&model](const PredictionTask& task, std::uint64_t seed) {
        return rollout(model, task, seed);
    };
}

namespace detail {

inline double obso_value(const Frame& frame, Team attacking, const PitchSpec& pitch,
                         const CobsoOptions& opts, int shooter_id) {
    ObsoResult r = compute_obso(frame, attacking, pitch, opts.obso);
    return opts.attribute_total ? r.total : r.credit_for(shooter_id);
}

inline double window_value(const Sequence& seq, size_t first_horizon_frame, Team attacking,
                           const PitchSpec& pitch, const CobsoOptions& opts, int shooter_id) {
    if (!opts.window_mean)
        return obso_value(seq.frames.back(), attacking, pitch, opts, shooter_id);
    double acc = 0.0;
    size_t n = 0;
    for (size_t i = first_horizon_frame; i < seq.frames.size(); ++i, ++n)
        acc += obso_value(seq.frames[i], attacking, pitch, opts, shooter_id);
    return acc / double(n);
}

} // namespace detail

/// C-OBSO for one scene: the shooter's modified OBSO on the actual final
/// frame minus its value on the counterfactual frame where the predicted
/// agents follow the model's trajectory, clamped at zero.
inline Evaluation evaluate_scene(const ShotScene& scene, const RolloutFn& roll,
                                 const PitchSpec& pitch, const CobsoOptions& opts,
                                 std::uint64_t seed) {
    const Sequence& seq = scene.seq;
    if (seq.frames.empty()) throw ContractError("evaluate_scene: empty scene");
    if (scene.evaluated_id == scene.shooter_id)
        throw ContractError("evaluate_scene: evaluated player must differ from the shooter");

    const size_t window25 =
        size_t(std::lround((scene.burn_in + scene.horizon) * seq.rate_hz)) + 1;
    if (seq.frames.size() < window25)
        throw ContractError("evaluate_scene: scene shorter than burn-in + horizon");

    // end-anchored window so the shot instant is the final frame at both rates
    Sequence tail = seq;
    tail.frames.assign(seq.frames.end() - long(window25), seq.frames.end());

    const Frame& shot_frame = tail.frames.back();
    if (shot_frame.index_of(scene.shooter_id) < 0 || shot_frame.index_of(scene.evaluated_id) < 0)
        throw ContractError("evaluate_scene: shooter or evaluated player missing from frame");

    Sequence at_rate = std::abs(tail.rate_hz - opts.model_rate) < 1e-9
                           ? tail
                           : resample(tail, opts.model_rate);

    PredictionTask task;
    task.seq = at_rate;
    task.burn_in = scene.burn_in;
    task.horizon = scene.horizon;
    task.samples = opts.samples;
    task.output_hz = tail.rate_hz;

    // predicted set fixed at the prediction start: the evaluated off-ball
    // attacker, the defender marking it, and the defender nearest the shooter
    const size_t start_idx = size_t(std::lround(scene.burn_in * at_rate.rate_hz));
    const Frame& start = at_rate.frames[start_idx];
    const int eval_idx = start.index_of(scene.evaluated_id);
    const int shooter_idx = start.index_of(scene.shooter_id);
    task.predicted_nodes = {eval_idx,
                            nearest_defender_index(start, seq.attacking, start.players[size_t(eval_idx)].pos),
                            nearest_defender_index(start, seq.attacking, start.players[size_t(shooter_idx)].pos)};
    std::sort(task.predicted_nodes.begin(), task.predicted_nodes.end());
    task.predicted_nodes.erase(
        std::unique(task.predicted_nodes.begin(), task.predicted_nodes.end()),
        task.predicted_nodes.end());
    task.predicted_nodes.erase(
        std::remove(task.predicted_nodes.begin(), task.predicted_nodes.end(), -1),
        task.predicted_nodes.end());

    const Sequence predicted = roll(task, seed);

    const size_t first_horizon25 = size_t(std::lround(scene.burn_in * tail.rate_hz)) + 1;
    Evaluation ev;
    ev.match_id = scene.match_id;
    ev.shot_time = shot_frame.t;
    ev.shooter_id = scene.shooter_id;
    ev.evaluated_id = scene.evaluated_id;
    ev.v_actual = detail::window_value(tail, first_horizon25, seq.attacking, pitch, opts,
                                       scene.shooter_id);
    ev.v_counterfactual = detail::window_value(predicted, first_horizon25, seq.attacking, pitch,
                                               opts, scene.shooter_id);
    ev.v_i = std::max(0.0, ev.v_actual - ev.v_counterfactual);
    {
        ObsoResult r = compute_obso(shot_frame, seq.attacking, pitch, opts.obso);
        ev.v_obso_self = r.credit_for(scene.evaluated_id);
    }
    return ev;
}

inline Evaluation evaluate_scene(const ShotScene& scene, PredictorModel& model,
                                 const PitchSpec& pitch, const CobsoOptions& opts,
                                 std::uint64_t seed) {
    RolloutFn fn = model_rollout(model);
    return evaluate_scene(scene, fn, pitch, opts, seed);
}

/// Shot scenes of a match sequence: one per (shot event, attacking-third
/// off-ball attacker). Scenes that cannot cover burn-in + horizon are skipped.
inline std::vector<ShotScene> enumerate_scenes(const Sequence& match, const PitchSpec& pitch,
                                               const std::string& match_id, double burn_in = 2.0,
                                               double horizon = 4.0) {
    std::vector<ShotScene> scenes;
    const size_t window = size_t(std::lround((burn_in + horizon) * match.rate_hz)) + 1;
    for (const auto& ev : match.events) {
        if (ev.kind != EventKind::Shot || ev.team != match.attacking) continue;
        // frame at the shot instant
        size_t idx = match.frames.size();
        for (size_t i = 0; i < match.frames.size(); ++i)
            if (std::abs(match.frames[i].t - ev.t) < 0.5 / match.rate_hz) {
                idx = i;
                break;
            }
        if (idx == match.frames.size() || idx + 1 < window) continue;
        Sequence seq = match;
        seq.frames.assign(match.frames.begin() + long(idx + 1 - window),
                          match.frames.begin() + long(idx + 1));
        seq.events.clear();
        seq.events.push_back(ev);
        const Frame& shot_frame = seq.frames.back();
        for (int pid : attackers_in_attacking_third(shot_frame, match.attacking, pitch)) {
            if (pid == ev.player_id) continue;
            ShotScene s;
            s.seq = seq;
            s.shooter_id = ev.player_id;
            s.evaluated_id = pid;
            s.burn_in = burn_in;
            s.horizon = horizon;
            s.match_id = match_id;
            scenes.push_back(std::move(s));
        }
    }
    return scenes;
}

enum class Grouping { Player, PlayerMatch };

struct AggregateRow {
    int player_id = 0;
    std::string match_id; // empty for player grouping
    int n = 0;
    double mean_cobso = 0.0;
    double mean_obso = 0.0;
};

/// Mean C-OBSO per group; groups with fewer evaluations than `min_count`
/// are dropped. Rows come back sorted by player (then match).
inline std::vector<AggregateRow> aggregate(const std::vector<Evaluation>& evals,
                                           Grouping grouping, int min_count) {
    if (evals.empty()) throw ContractError("aggregate: no evaluations");
    std::map<std::pair<int, std::string>, AggregateRow> groups;
    for (const auto& e : evals) {
        std::pair<int, std::string> key{e.evaluated_id,
                                        grouping == Grouping::PlayerMatch ? e.match_id : ""};
        AggregateRow& row = groups[key];
        row.player_id = e.evaluated_id;
        row.match_id = key.second;
        row.n += 1;
        row.mean_cobso += e.v_i;
        row.mean_obso += e.v_obso_self;
    }
    std::vector<AggregateRow> out;
    for (auto& [key, row] : groups) {
        if (row.n < min_count) continue;
        row.mean_cobso /= double(row.n);
        row.mean_obso /= double(row.n);
        out.push_back(row);
    }
    return out;
}

} // namespace cobso
