#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/grid.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

/// Parameters of the per-player ball-control process.
struct ControlParams {
    double tti_sigma = 0.45;       // temporal uncertainty of intercept time, s
    double lambda = 4.3;           // rate of control, 1/s
    double lambda_gk = 4.3;        // goalkeeper rate of control (default equal)
    double max_speed = 5.0;        // m/s
    double reaction_time = 0.7;    // s
    double avg_ball_speed = 15.0;  // m/s
    double dt = 0.04;              // integration step, s
    double t_max = 10.0;           // integration horizon, s
    double early_exclusion = 3.0 * 0.45; // s; team zeroed if this far behind

    void validate() const {
        if (tti_sigma <= 0 || lambda <= 0 || lambda_gk <= 0 || max_speed <= 0 ||
            reaction_time <= 0 || avg_ball_speed <= 0 || dt <= 0 || t_max <= 0 ||
            early_exclusion <= 0)
            throw ContractError("ControlParams: all parameters must be strictly positive");
        if (dt > tti_sigma / 3.0)
            throw ContractError("ControlParams: dt must be <= tti_sigma/3 to resolve the "
                                "logistic transition");
    }
};

/// Potential pitch control field: per-cell probability that the attacking
/// team controls the ball if the next on-ball event happens there, plus the
/// per-player breakdown (frame player order).
struct ControlField {
    PitchSpec pitch;
    Surface attack;
    std::vector<Surface> per_player;

    ControlField() = default;
    ControlField(const PitchSpec& spec, size_t n_players)
        : pitch(spec), attack(spec), per_player(n_players, Surface(spec)) {}
};

/// Expected intercept time: the player keeps its current velocity for the
/// reaction time, then runs straight at max speed.
inline double intercept_time(const PlayerState& p, Vec2 target, const ControlParams& params) {
    if (!p.pos.finite() || !p.vel.finite())
        throw ContractError("intercept_time: non-finite player state");
    Vec2 reached = p.pos + p.vel * params.reaction_time;
    return params.reaction_time + distance(reached, target) / params.max_speed;
}

/// Probability that a player with expected intercept time `tau` reaches the
/// target within T. Logistic in T with temporal uncertainty sqrt(3)*s/pi.
inline double arrival_probability(double T, double tau, const ControlParams& params) {
    const double scale = std::sqrt(3.0) * params.tti_sigma / 3.14159265358979323846;
    return 1.0 / (1.0 + std::exp(-(T - tau) / scale));
}

namespace detail {

/// One joint control integration at a single target point.
/// taus are effective arrival times (player vs ball, whichever is later),
/// lambdas the per-player control rates; `include` masks out early-excluded
/// players. Fixed-step explicit Heun with a saturation guard so the total
/// claimed probability never exceeds 1 and each player's share is
/// nondecreasing. Optionally records (T, per-player control) after each step.
struct ControlTrace {
    std::vector<double> times;
    std::vector<std::vector<double>> control; // per step, per player
};

inline void integrate_control(const std::vector<double>& taus, const std::vector<double>& lambdas,
                              const std::vector<char>& include, const ControlParams& params,
                              std::vector<double>& out, ControlTrace* trace = nullptr) {
    const size_t n = taus.size();
    out.assign(n, 0.0);
    const double scale = std::sqrt(3.0) * params.tti_sigma / 3.14159265358979323846;
    const long steps = long(std::ceil(params.t_max / params.dt - 1e-9));
    const double dt = params.t_max / double(steps); // uniform, ends exactly at t_max

    std::vector<double> rate0(n), rate1(n);
    auto rates_at = [&](double T, std::vector<double>& r) {
        for (size_t j = 0; j < n; ++j)
            r[j] = include[j] ? lambdas[j] / (1.0 + std::exp(-(T - taus[j]) / scale)) : 0.0;
    };

    double total = 0.0;
    rates_at(0.0, rate0);
    for (long k = 0; k < steps; ++k) {
        const double T = double(k) * dt;
        rates_at(T + dt, rate1);
        double remaining = 1.0 - total;
        if (remaining < 0.0) remaining = 0.0;

        // Heun: trial Euler step, then average the slopes.
        double rate_sum0 = 0.0;
        for (size_t j = 0; j < n; ++j) rate_sum0 += rate0[j];
        double trial_total = total + dt * remaining * rate_sum0;
        double trial_remaining = 1.0 - trial_total;
        if (trial_remaining < 0.0) trial_remaining = 0.0;

        double inc_sum = 0.0;
        for (size_t j = 0; j < n; ++j) {
            rate0[j] = 0.5 * dt * (remaining * rate0[j] + trial_remaining * rate1[j]);
            inc_sum += rate0[j];
        }
        if (inc_sum > remaining && inc_sum > 0.0) {
            const double s = remaining / inc_sum;
            for (size_t j = 0; j < n; ++j) rate0[j] *= s;
            inc_sum = remaining;
        }
        for (size_t j = 0; j < n; ++j) out[j] += rate0[j];
        total += inc_sum;
        std::swap(rate0, rate1);
        if (trace) {
            trace->times.push_back(T + dt);
            trace->control.push_back(out);
        }
        if (1.0 - total < 1e-9 && !trace) break;
    }
}

} // namespace detail

/// Joint control probabilities for every player of the frame at one target
/// point, with the ball flying from `ball_origin` at the average ball speed
/// (control cannot start before the ball arrives). A team is zeroed when its
/// fastest player would arrive more than `early_exclusion` after the fastest
/// opponent.
inline std::vector<double> compute_ppcf_at(const Frame& frame, Vec2 target, Vec2 ball_origin,
                                           Team attacking, const ControlParams& params,
                                           detail::ControlTrace* trace = nullptr) {
    const size_t n = frame.players.size();
    const double ball_time = distance(ball_origin, target) / params.avg_ball_speed;

    std::vector<double> taus(n), lambdas(n);
    std::vector<char> include(n, 1);
    double min_att = std::numeric_limits<double>::infinity();
    double min_def = min_att;
    for (size_t j = 0; j < n; ++j) {
        const auto& p = frame.players[j];
        double tau = std::max(intercept_time(p, target, params), ball_time);
        taus[j] = tau;
        lambdas[j] = p.role == Role::Goalkeeper ? params.lambda_gk : params.lambda;
        double& team_min = p.team == attacking ? min_att : min_def;
        team_min = std::min(team_min, tau);
    }
    if (min_att > min_def + params.early_exclusion)
        for (size_t j = 0; j < n; ++j)
            if (frame.players[j].team == attacking) include[j] = 0;
    if (min_def > min_att + params.early_exclusion)
        for (size_t j = 0; j < n; ++j)
            if (frame.players[j].team != attacking) include[j] = 0;

    std::vector<double> control;
    detail::integrate_control(taus, lambdas, include, params, control, trace);
    for (size_t j = 0; j < n; ++j)
        if (!std::isfinite(control[j]))
            throw NumericalError("compute_ppcf: non-finite control at cell (" +
                                 std::to_string(target.x) + ", " + std::to_string(target.y) + ")");
    return control;
}

/// Potential pitch control field over the whole grid.
inline ControlField compute_ppcf(const Frame& frame, Vec2 ball_origin, Team attacking,
                                 const PitchSpec& pitch, const ControlParams& params) {
    params.validate();
    ControlField field(pitch, frame.players.size());
    for (int iy = 0; iy < pitch.ny; ++iy) {
        for (int ix = 0; ix < pitch.nx; ++ix) {
            const Vec2 cell = pitch.cell_center(ix, iy);
            auto control = compute_ppcf_at(frame, cell, ball_origin, attacking, params);
            double att = 0.0;
            for (size_t j = 0; j < control.size(); ++j) {
                field.per_player[j].at(ix, iy) = control[j];
                if (frame.players[j].team == attacking) att += control[j];
            }
            field.attack.at(ix, iy) = att;
        }
    }
    return field;
}

/// Convenience overload: ball origin taken from the frame's ball position.
inline ControlField compute_ppcf(const Frame& frame, Team attacking, const PitchSpec& pitch,
                                 const ControlParams& params) {
    return compute_ppcf(frame, frame.ball.pos, attacking, pitch, params);
}

} // namespace cobso
