#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/grid.hpp"
#include "cobso/pitch_control.hpp"
#include "cobso/rng.hpp"
#include "cobso/scoring.hpp"
#include "cobso/tracking.hpp"

namespace cobso::synth {

/// Rule-based match generator configuration. The scoring process is the
/// potential score model itself, so fitted parameters have a known truth.
struct ScenarioConfig {
    std::uint64_t seed = 7;
    int n_sequences = 10;
    double duration = 8.0; // max seconds per sequence; a shot may end it earlier
    double rate_hz = 25.0;
    int attackers = 11; // includes a goalkeeper when >= 2
    int defenders = 11;
    double attacker_goal_gain = 1.2;
    double attacker_space_gain = 2.0;
    double defender_marking_gain = 1.8;
    double defender_lag = 0.4;  // s
    double noise_scale = 0.3;   // m/s^2
    double max_speed = 7.0;     // m/s
    double max_accel = 6.0;     // m/s^2
    double shot_distance = 22.0; // carrier shoots within this distance of goal
    double min_shot_time = 0.0;  // no shot before this time
    ScoreModelParams scoring;    // ground-truth scoring process
    PitchSpec pitch;

    void validate() const {
        if (!(rate_hz == 10.0 || rate_hz == 25.0))
            throw ContractError("ScenarioConfig: rate must be 10 or 25 Hz");
        for (double g : {attacker_goal_gain, attacker_space_gain, defender_marking_gain,
                         defender_lag, noise_scale, max_speed})
            if (!std::isfinite(g)) throw ContractError("ScenarioConfig: non-finite gain");
        if (n_sequences < 0 || attackers < 1 || defenders < 0)
            throw ContractError("ScenarioConfig: bad counts");
    }
};

namespace detail {

inline Vec2 clamp_speed(Vec2 v, double vmax) {
    const double s = v.norm();
    return s > vmax ? v * (vmax / s) : v;
}

inline Vec2 clamp_to_pitch(Vec2 p, const PitchSpec& pitch, double margin = 1.0) {
    p.x = std::clamp(p.x, -0.5 * pitch.length + margin, 0.5 * pitch.length - margin);
    p.y = std::clamp(p.y, -0.5 * pitch.width + margin, 0.5 * pitch.width - margin);
    return p;
}

} // namespace detail

/// One rule-based attack: attackers steer at the goal and away from markers,
/// defenders chase the nearest attacker with first-order lag, the carrier
/// dribbles the ball, and the sequence ends the moment the carrier shoots.
/// The shot outcome is drawn from the potential score model.
inline Sequence generate_sequence(const ScenarioConfig& cfg, Rng& rng) {
    const PitchSpec& pitch = cfg.pitch;
    const Vec2 goal = pitch.goal_center();
    const double dt = 1.0 / cfg.rate_hz;

    struct Agent {
        PlayerState st;
        bool is_carrier = false;
    };
    std::vector<Agent> agents;
    int next_id = 1;
    for (int i = 0; i < cfg.attackers; ++i) {
        Agent a;
        a.st.team = Team::Home;
        a.st.id = next_id++;
        a.st.role = (cfg.attackers >= 2 && i == 0) ? Role::Goalkeeper : Role::Outfield;
        if (a.st.role == Role::Goalkeeper) {
            a.st.pos = {-0.5 * pitch.length + 4.0, rng.uniform(-2.0, 2.0)};
        } else {
            a.st.pos = {rng.uniform(-0.25 * pitch.length, 0.30 * pitch.length),
                        rng.uniform(-0.4 * pitch.width, 0.4 * pitch.width)};
        }
        agents.push_back(a);
    }
    const int def_id0 = next_id;
    for (int i = 0; i < cfg.defenders; ++i) {
        Agent a;
        a.st.team = Team::Away;
        a.st.id = next_id++;
        a.st.role = (cfg.defenders >= 2 && i == 0) ? Role::Goalkeeper : Role::Outfield;
        if (a.st.role == Role::Goalkeeper) {
            a.st.pos = {0.5 * pitch.length - 3.0, rng.uniform(-2.0, 2.0)};
        } else {
            a.st.pos = {rng.uniform(0.05 * pitch.length, 0.42 * pitch.length),
                        rng.uniform(-0.4 * pitch.width, 0.4 * pitch.width)};
        }
        agents.push_back(a);
    }
    (void)def_id0;

    // carrier: the outfield attacker closest to the goal
    int carrier = -1;
    double best = 0.0;
    for (size_t i = 0; i < agents.size(); ++i) {
        const auto& a = agents[i];
        if (a.st.team != Team::Home || a.st.role == Role::Goalkeeper) continue;
        const double d = distance(a.st.pos, goal);
        if (carrier < 0 || d < best) {
            carrier = int(i);
            best = d;
        }
    }
    if (carrier < 0) carrier = 0;
    agents[size_t(carrier)].is_carrier = true;

    Sequence seq;
    seq.rate_hz = cfg.rate_hz;
    seq.attacking = Team::Home;

    const int max_frames = int(std::lround(cfg.duration * cfg.rate_hz)) + 1;
    bool shot_taken = false;

    for (int fidx = 0; fidx < max_frames && !shot_taken; ++fidx) {
        const double t = fidx * dt;
        Frame frame;
        frame.t = t;
        for (const auto& a : agents) frame.players.push_back(a.st);
        const Agent& c = agents[size_t(carrier)];
        frame.ball.pos = detail::clamp_to_pitch(c.st.pos + normalized(goal - c.st.pos) * 0.3, pitch, 0.2);
        frame.ball.vel = c.st.vel;
        seq.frames.push_back(frame);

        // shot decision uses the frame just recorded
        if (t >= cfg.min_shot_time && distance(c.st.pos, goal) <= cfg.shot_distance)
            shot_taken = true;
        if (fidx == max_frames - 1) shot_taken = true;
        if (shot_taken) {
            Event shot;
            shot.t = t;
            shot.kind = EventKind::Shot;
            shot.team = Team::Home;
            shot.player_id = c.st.id;
            shot.ball_pos = frame.ball.pos;
            seq.events.push_back(shot);
            const double p_goal =
                potential_score_model(frame, frame.ball.pos, Team::Home, pitch, cfg.scoring);
            if (rng.bernoulli(p_goal)) {
                Event g = shot;
                g.kind = EventKind::Goal;
                seq.events.push_back(g);
            }
            break;
        }

        // advance the world
        std::vector<Agent> next = agents;
        for (size_t i = 0; i < agents.size(); ++i) {
            const Agent& a = agents[i];
            Agent& nx = next[i];
            Vec2 accel;
            if (a.st.team == Team::Home) {
                if (a.st.role == Role::Goalkeeper) {
                    accel = (Vec2{-0.5 * pitch.length + 4.0, 0.0} - a.st.pos) * 0.5 - a.st.vel * 0.8;
                } else if (distance(a.st.pos, goal) < 0.9 * cfg.shot_distance) {
                    accel = a.st.vel * -2.0; // hold position near the shot radius
                } else {
                    accel = normalized(goal - a.st.pos) * cfg.attacker_goal_gain;
                    // steer away from the nearest opponent
                    double dmin = 1e18;
                    Vec2 away;
                    for (const auto& o : agents)
                        if (o.st.team == Team::Away) {
                            const double d = distance(o.st.pos, a.st.pos);
                            if (d < dmin) {
                                dmin = d;
                                away = a.st.pos - o.st.pos;
                            }
                        }
                    if (dmin < 1e17 && dmin > 1e-6)
                        accel += normalized(away) * (cfg.attacker_space_gain / (1.0 + dmin));
                    // mild separation from teammates
                    for (const auto& o : agents)
                        if (o.st.team == Team::Home && o.st.id != a.st.id) {
                            const double d = distance(o.st.pos, a.st.pos);
                            if (d < 4.0 && d > 1e-6)
                                accel += normalized(a.st.pos - o.st.pos) * (0.5 / (0.5 + d));
                        }
                }
            } else {
                if (a.st.role == Role::Goalkeeper) {
                    const Vec2 target{0.5 * pitch.length - 2.0,
                                      std::clamp(seq.frames.back().ball.pos.y * 0.4, -3.0, 3.0)};
                    accel = (target - a.st.pos) * 1.5 - a.st.vel * 1.0;
                } else {
                    // track the nearest attacker with a first-order response
                    double dmin = 1e18;
                    const Agent* target = nullptr;
                    for (const auto& o : agents)
                        if (o.st.team == Team::Home && o.st.role != Role::Goalkeeper) {
                            const double d = distance(o.st.pos, a.st.pos);
                            if (d < dmin) {
                                dmin = d;
                                target = &o;
                            }
                        }
                    if (target) {
                        const Vec2 aim = target->st.pos + target->st.vel * 0.3;
                        Vec2 desired = (aim - a.st.pos) * cfg.defender_marking_gain;
                        desired = detail::clamp_speed(desired, cfg.max_speed);
                        accel = (desired - a.st.vel) / std::max(cfg.defender_lag, 1e-3);
                    }
                }
            }
            accel = detail::clamp_speed(accel, cfg.max_accel);
            if (cfg.noise_scale > 0.0)
                accel += Vec2{rng.normal(0.0, cfg.noise_scale), rng.normal(0.0, cfg.noise_scale)};
            nx.st.vel = detail::clamp_speed(a.st.vel + accel * dt, cfg.max_speed);
            nx.st.pos = detail::clamp_to_pitch(a.st.pos + nx.st.vel * dt, pitch);
        }
        agents = std::move(next);
    }
    return seq;
}

/// Seed-deterministic batch of attack sequences, each ending with a shot
/// event (per-sequence derived seeds, so generation order is immaterial).
inline std::vector<Sequence> generate_matches(const ScenarioConfig& cfg) {
    cfg.validate();
    std::vector<Sequence> out;
    out.reserve(size_t(cfg.n_sequences));
    for (int i = 0; i < cfg.n_sequences; ++i) {
        Rng rng(derive_seed(cfg.seed, std::uint64_t(i)));
        out.push_back(generate_sequence(cfg, rng));
    }
    return out;
}

/// Constant-velocity agents for predictor sanity worlds: every player and
/// the ball moves in a straight line for the whole window.
inline std::vector<Sequence> generate_constant_velocity_sequences(int n_sequences, int frames,
                                                                  double rate_hz, int players,
                                                                  const PitchSpec& pitch,
                                                                  std::uint64_t seed,
                                                                  double speed = 4.0) {
    std::vector<Sequence> out;
    const double dt = 1.0 / rate_hz;
    const double span = frames * dt * speed;
    for (int s = 0; s < n_sequences; ++s) {
        Rng rng(derive_seed(seed, std::uint64_t(s)));
        Sequence seq;
        seq.rate_hz = rate_hz;
        seq.attacking = Team::Home;
        std::vector<PlayerState> base;
        for (int i = 0; i < players; ++i) {
            PlayerState p;
            p.team = i < players / 2 ? Team::Home : Team::Away;
            p.role = (i == 0 || i == players / 2) ? Role::Goalkeeper : Role::Outfield;
            p.id = i + 1;
            p.pos = {rng.uniform(-0.5 * pitch.length + span, 0.5 * pitch.length - span),
                     rng.uniform(-0.5 * pitch.width + span, 0.5 * pitch.width - span)};
            const double ang = rng.uniform(0.0, 2.0 * kPi);
            const double v = rng.uniform(0.2, 1.0) * speed;
            p.vel = {v * std::cos(ang), v * std::sin(ang)};
            base.push_back(p);
        }
        Vec2 ball_pos{rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0)};
        const double bang = rng.uniform(0.0, 2.0 * kPi);
        Vec2 ball_vel{speed * std::cos(bang), speed * std::sin(bang)};
        for (int f = 0; f < frames; ++f) {
            Frame frame;
            frame.t = f * dt;
            for (const auto& p : base) {
                PlayerState ps = p;
                ps.pos = p.pos + p.vel * (f * dt);
                frame.players.push_back(ps);
            }
            frame.ball.pos = ball_pos + ball_vel * (f * dt);
            frame.ball.vel = ball_vel;
            seq.frames.push_back(std::move(frame));
        }
        out.push_back(std::move(seq));
    }
    return out;
}

// ---- Shot studies ------------------------------------------------------------

/// One standalone shot situation with its Bernoulli outcome and the true
/// generative probability.
struct ShotRecord {
    Frame frame;
    Vec2 origin;
    bool scored = false;
    double p_true = 0.0;
};

/// Random shot situations whose outcomes follow the potential score model
/// with `true_params`: shooters at varied distances/angles, 0-5 goal-side
/// blockers plus a goalkeeper.
inline std::vector<ShotRecord> generate_shots(int n, const PitchSpec& pitch,
                                              const ScoreModelParams& true_params,
                                              std::uint64_t seed) {
    std::vector<ShotRecord> out;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x5807 + std::uint64_t(i)));
        ShotRecord rec;
        rec.origin = {rng.uniform(0.05 * pitch.length, 0.47 * pitch.length),
                      rng.uniform(-0.35 * pitch.width, 0.35 * pitch.width)};

        Frame frame;
        frame.t = 0.0;
        PlayerState shooter;
        shooter.team = Team::Home;
        shooter.id = 1;
        shooter.pos = rec.origin;
        frame.players.push_back(shooter);

        const int blockers = int(rng.below(6));
        const double goal_x = 0.5 * pitch.length;
        for (int d = 0; d < blockers; ++d) {
            PlayerState def;
            def.team = Team::Away;
            def.id = 100 + d;
            const double u = rng.uniform(0.15, 0.9);
            const Vec2 on_line = rec.origin + (pitch.goal_center() - rec.origin) * u;
            def.pos = {std::clamp(on_line.x, rec.origin.x + 0.5, goal_x - 0.5),
                       on_line.y + rng.normal(0.0, 3.0)};
            frame.players.push_back(def);
        }
        if (rng.uniform() < 0.9) {
            PlayerState gk;
            gk.team = Team::Away;
            gk.role = Role::Goalkeeper;
            gk.id = 199;
            gk.pos = {goal_x - rng.uniform(1.0, 4.0), rng.uniform(-3.0, 3.0)};
            frame.players.push_back(gk);
        }
        frame.ball.pos = rec.origin;

        rec.frame = frame;
        rec.p_true = potential_score_model(frame, rec.origin, Team::Home, pitch, true_params);
        rec.scored = rng.bernoulli(rec.p_true);
        out.push_back(std::move(rec));
    }
    return out;
}

inline double potential_model_rmse(const std::vector<ShotRecord>& shots, const PitchSpec& pitch,
                                   const ScoreModelParams& params) {
    if (shots.empty()) throw ContractError("potential_model_rmse: empty set");
    double acc = 0.0;
    for (const auto& s : shots) {
        const double p = potential_score_model(s.frame, s.origin, Team::Home, pitch, params);
        const double d = double(s.scored) - p;
        acc += d * d;
    }
    return std::sqrt(acc / double(shots.size()));
}

inline double simple_model_rmse(const std::vector<ShotRecord>& shots, const PitchSpec& pitch,
                                const SimpleScoreParams& params = {}) {
    if (shots.empty()) throw ContractError("simple_model_rmse: empty set");
    double acc = 0.0;
    for (const auto& s : shots) {
        const double p = simple_score_model(s.origin, pitch, params);
        const double d = double(s.scored) - p;
        acc += d * d;
    }
    return std::sqrt(acc / double(shots.size()));
}

struct FitGrid {
    double c_lo = 0.5, c_hi = 2.0, c_step = 0.02;
    double big_c_lo = 0.002, big_c_hi = 0.02, big_c_step = 0.0002;
};

struct FitResult {
    double c = 0.0;
    double big_c = 0.0;
    double rmse = 0.0;
    bool on_boundary = false;
};

/// Grid-search fit of (c, C) minimizing the RMSE between binary outcomes and
/// the potential scoring probability. The clamps keep V_shot >= 0 and
/// P in [0, 1] at every grid point.
inline FitResult fit_score_params(const std::vector<ShotRecord>& shots, const PitchSpec& pitch,
                                  const ScoreModelParams& base = {}, const FitGrid& grid = {}) {
    if (shots.empty()) throw ContractError("fit_score_params: empty shot set");
    if (shots.size() < 30) throw ContractError("fit_score_params: need at least 30 shots");

    // per-shot, per-vector blocking mass is independent of (c, C)
    std::vector<std::vector<double>> vblocks;
    vblocks.reserve(shots.size());
    for (const auto& s : shots) {
        const ShotGeometry geom = make_shot_geometry(s.origin, pitch);
        const BlockingField blocking = make_blocking_field(s.frame, geom.origin, Team::Home, pitch);
        std::vector<double> vb(size_t(geom.n()));
        for (int i = 0; i < geom.n(); ++i)
            vb[size_t(i)] = block_value(geom.origin, geom.targets[size_t(i)], blocking, base.line_step);
        vblocks.push_back(std::move(vb));
    }

    FitResult bestfit;
    double best = std::numeric_limits<double>::infinity();
    int ci_best = 0, bi_best = 0;
    const int n_c = int(std::floor((grid.c_hi - grid.c_lo) / grid.c_step + 1e-9)) + 1;
    const int n_b = int(std::floor((grid.big_c_hi - grid.big_c_lo) / grid.big_c_step + 1e-9)) + 1;
    std::vector<double> sums(shots.size());
    for (int ci = 0; ci < n_c; ++ci) {
        const double c = grid.c_lo + ci * grid.c_step;
        for (size_t s = 0; s < shots.size(); ++s) {
            double acc = 0.0;
            for (double v : vblocks[s]) acc += std::max(0.0, c - v);
            sums[s] = acc;
        }
        for (int bi = 0; bi < n_b; ++bi) {
            const double big = grid.big_c_lo + bi * grid.big_c_step;
            double sq = 0.0;
            for (size_t s = 0; s < shots.size(); ++s) {
                const double p = std::clamp(big * sums[s], 0.0, 1.0);
                const double d = double(shots[s].scored) - p;
                sq += d * d;
            }
            if (sq < best) {
                best = sq;
                ci_best = ci;
                bi_best = bi;
            }
        }
    }
    bestfit.c = grid.c_lo + ci_best * grid.c_step;
    bestfit.big_c = grid.big_c_lo + bi_best * grid.big_c_step;
    bestfit.rmse = std::sqrt(best / double(shots.size()));
    bestfit.on_boundary =
        ci_best == 0 || ci_best == n_c - 1 || bi_best == 0 || bi_best == n_b - 1;
    return bestfit;
}

// ---- Independent pitch-control oracle ----------------------------------------

/// Fine-step (1 ms) reference integration of the control process, written
/// independently of the production integrator: fixed-step march with
/// midpoint-sampled rates over the active window, with its own intercept and
/// logistic evaluation.
inline ControlField oracle_ppcf(const Frame& frame, Vec2 ball_origin, Team attacking,
                                const PitchSpec& pitch, const ControlParams& params) {
    const double fine_dt = 1e-3;
    const double width = std::sqrt(3.0) * params.tti_sigma / kPi;
    const size_t n = frame.players.size();

    ControlField field(pitch, n);
    std::vector<double> tau(n), lam(n), control(n), f(n);
    std::vector<char> in(n);

    for (int iy = 0; iy < pitch.ny; ++iy) {
        for (int ix = 0; ix < pitch.nx; ++ix) {
            const Vec2 cell = pitch.cell_center(ix, iy);
            const double t_ball = (cell - ball_origin).norm() / params.avg_ball_speed;

            double min_att = 1e18, min_def = 1e18;
            for (size_t j = 0; j < n; ++j) {
                const auto& p = frame.players[j];
                const Vec2 run_from = p.pos + p.vel * params.reaction_time;
                double arrive = params.reaction_time + (cell - run_from).norm() / params.max_speed;
                if (arrive < t_ball) arrive = t_ball;
                tau[j] = arrive;
                lam[j] = p.role == Role::Goalkeeper ? params.lambda_gk : params.lambda;
                if (p.team == attacking)
                    min_att = std::min(min_att, arrive);
                else
                    min_def = std::min(min_def, arrive);
            }
            const bool drop_att = min_att > min_def + params.early_exclusion;
            const bool drop_def = min_def > min_att + params.early_exclusion;
            double first = 1e18;
            for (size_t j = 0; j < n; ++j) {
                const bool is_att = frame.players[j].team == attacking;
                in[j] = char(!(is_att ? drop_att : drop_def));
                if (in[j]) first = std::min(first, tau[j]);
            }

            std::fill(control.begin(), control.end(), 0.0);
            if (first < 1e17) {
                // exponential step: exact in the shared (1 - total) factor for
                // rates frozen at the midpoint, so no endpoint overshoot and
                // conservation holds by construction
                const double start = std::max(0.0, first - 12.0 * width);
                const long nsteps = long(std::ceil((params.t_max - start) / fine_dt - 1e-9));
                const double h = (params.t_max - start) / double(nsteps);
                double total = 0.0;
                for (long k = 0; k < nsteps; ++k) {
                    const double tm = start + (double(k) + 0.5) * h;
                    double g = 0.0;
                    for (size_t j = 0; j < n; ++j) {
                        f[j] = in[j] ? lam[j] / (1.0 + std::exp(-(tm - tau[j]) / width)) : 0.0;
                        g += f[j];
                    }
                    if (g <= 0.0) continue;
                    const double delta = (1.0 - total) * (1.0 - std::exp(-h * g));
                    for (size_t j = 0; j < n; ++j) control[j] += delta * f[j] / g;
                    total += delta;
                    if (1.0 - total < 1e-12) break;
                }
            }

            double att = 0.0;
            for (size_t j = 0; j < n; ++j) {
                field.per_player[j].at(ix, iy) = control[j];
                if (frame.players[j].team == attacking) att += control[j];
            }
            field.attack.at(ix, iy) = att;
        }
    }
    return field;
}

} // namespace cobso::synth
