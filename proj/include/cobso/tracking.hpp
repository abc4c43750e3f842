#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/geometry.hpp"
#include "cobso/grid.hpp"

namespace cobso {

enum class Team : std::uint8_t { Home, Away };
enum class Role : std::uint8_t { Outfield, Goalkeeper };

inline Team opponent(Team t) { return t == Team::Home ? Team::Away : Team::Home; }

inline const char* to_string(Team t) { return t == Team::Home ? "home" : "away"; }
inline const char* to_string(Role r) { return r == Role::Goalkeeper ? "goalkeeper" : "outfield"; }

struct PlayerState {
    Team team = Team::Home;
    Role role = Role::Outfield;
    int id = 0;
    Vec2 pos;
    Vec2 vel;

    bool operator==(const PlayerState&) const = default;
};

struct BallState {
    Vec2 pos;
    Vec2 vel;
    bool operator==(const BallState&) const = default;
};

/// Instantaneous game state: positions/velocities of the players and the
/// ball at one timestamp.
struct Frame {
    double t = 0.0;
    std::vector<PlayerState> players;
    BallState ball;

    bool operator==(const Frame&) const = default;

    const PlayerState* find_player(int id) const {
        for (const auto& p : players)
            if (p.id == id) return &p;
        return nullptr;
    }

    int index_of(int id) const {
        for (size_t i = 0; i < players.size(); ++i)
            if (players[i].id == id) return int(i);
        return -1;
    }
};

/// Full-match contract for frames entering the pipeline: 22 players, one
/// goalkeeper per side, positions on the (padded) pitch, finite velocities.
inline void validate_frame(const Frame& f, const PitchSpec& pitch, double margin = 5.0) {
    if (f.players.size() != 22)
        throw SchemaError("frame t=" + std::to_string(f.t) + ": expected 22 players, got " +
                          std::to_string(f.players.size()));
    int gk_home = 0, gk_away = 0;
    for (const auto& p : f.players) {
        if (!p.pos.finite() || !p.vel.finite())
            throw SchemaError("frame t=" + std::to_string(f.t) + ": non-finite state for player " +
                              std::to_string(p.id));
        if (!pitch.contains(p.pos, margin))
            throw SchemaError("frame t=" + std::to_string(f.t) + ": player " + std::to_string(p.id) +
                              " outside pitch bounds");
        if (p.role == Role::Goalkeeper)
            (p.team == Team::Home ? gk_home : gk_away)++;
    }
    if (gk_home != 1 || gk_away != 1)
        throw SchemaError("frame t=" + std::to_string(f.t) + ": expected one goalkeeper per team");
    if (!f.ball.pos.finite() || !f.ball.vel.finite())
        throw SchemaError("frame t=" + std::to_string(f.t) + ": non-finite ball state");
}

enum class EventKind : std::uint8_t { Pass, Shot, Goal, Other };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::Pass: return "pass";
        case EventKind::Shot: return "shot";
        case EventKind::Goal: return "goal";
        default: return "other";
    }
}

inline std::optional<EventKind> event_kind_from(const std::string& s) {
    if (s == "pass") return EventKind::Pass;
    if (s == "shot") return EventKind::Shot;
    if (s == "goal") return EventKind::Goal;
    if (s == "other") return EventKind::Other;
    return std::nullopt;
}

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::Other;
    Team team = Team::Home;
    int player_id = 0;
    Vec2 ball_pos;

    bool operator==(const Event&) const = default;
};

/// Time-ordered frames at a uniform rate plus the events that happened
/// during them. Shot sequences end at the shot instant.
struct Sequence {
    std::vector<Frame> frames;
    double rate_hz = 25.0;
    std::vector<Event> events;
    Team attacking = Team::Home;

    bool operator==(const Sequence&) const = default;

    double duration() const {
        return frames.size() < 2 ? 0.0 : frames.back().t - frames.front().t;
    }

    void validate_timing(double tol = 1e-6) const {
        const double dt = 1.0 / rate_hz;
        for (size_t i = 1; i < frames.size(); ++i) {
            double gap = frames[i].t - frames[i - 1].t;
            if (gap <= 0.0)
                throw SchemaError("sequence: timestamps not strictly increasing at frame " +
                                  std::to_string(i));
            if (std::abs(gap - dt) > tol)
                throw SchemaError("sequence: non-uniform frame spacing at frame " +
                                  std::to_string(i));
        }
    }
};

/// Velocities from centered finite differences of position, then moving-average
/// smoothed over `window` frames (odd, truncated at the boundaries). Endpoints
/// use one-sided differences. Exact on linear motion for any window.
inline Sequence estimate_velocities(const Sequence& seq, int window = 7) {
    const size_t n = seq.frames.size();
    if (n < 3) throw ContractError("estimate_velocities: need at least 3 frames");
    if (window < 1) throw ContractError("estimate_velocities: window must be >= 1");
    if (size_t(window) > n) throw ContractError("estimate_velocities: sequence shorter than window");

    Sequence out = seq;
    const size_t entities = seq.frames.front().players.size() + 1; // players + ball
    auto pos_of = [&](size_t fi, size_t e) -> Vec2 {
        const Frame& f = seq.frames[fi];
        return e < f.players.size() ? f.players[e].pos : f.ball.pos;
    };
    auto set_vel = [&](size_t fi, size_t e, Vec2 v) {
        Frame& f = out.frames[fi];
        if (e < f.players.size())
            f.players[e].vel = v;
        else
            f.ball.vel = v;
    };

    std::vector<Vec2> raw(n);
    const int half = window / 2;
    for (size_t e = 0; e < entities; ++e) {
        for (size_t i = 0; i < n; ++i) {
            if (i == 0)
                raw[i] = (pos_of(1, e) - pos_of(0, e)) / (seq.frames[1].t - seq.frames[0].t);
            else if (i == n - 1)
                raw[i] = (pos_of(n - 1, e) - pos_of(n - 2, e)) /
                         (seq.frames[n - 1].t - seq.frames[n - 2].t);
            else
                raw[i] = (pos_of(i + 1, e) - pos_of(i - 1, e)) /
                         (seq.frames[i + 1].t - seq.frames[i - 1].t);
        }
        for (size_t i = 0; i < n; ++i) {
            size_t lo = i >= size_t(half) ? i - half : 0;
            size_t hi = std::min(n - 1, i + half);
            Vec2 acc;
            for (size_t j = lo; j <= hi; ++j) acc += raw[j];
            set_vel(i, e, acc / double(hi - lo + 1));
        }
    }
    return out;
}

namespace detail {

/// Rational ratio a/b ~= x with small denominator, or nullopt.
inline std::optional<std::pair<long, long>> as_rational(double x, long max_den = 1000) {
    for (long den = 1; den <= max_den; ++den) {
        double num = x * den;
        double rounded = std::round(num);
        if (std::abs(num - rounded) < 1e-9 * den && rounded > 0)
            return std::make_pair(long(rounded), den);
    }
    return std::nullopt;
}

inline Frame lerp_frame(const Frame& a, const Frame& b, double t) {
    double u = (t - a.t) / (b.t - a.t);
    Frame out = a;
    out.t = t;
    for (size_t i = 0; i < a.players.size(); ++i) {
        out.players[i].pos = a.players[i].pos + (b.players[i].pos - a.players[i].pos) * u;
        out.players[i].vel = a.players[i].vel + (b.players[i].vel - a.players[i].vel) * u;
    }
    out.ball.pos = a.ball.pos + (b.ball.pos - a.ball.pos) * u;
    out.ball.vel = a.ball.vel + (b.ball.vel - a.ball.vel) * u;
    return out;
}

} // namespace detail

/// Resample to `target_hz`. Source and target rates must be commensurable.
/// Target times that coincide with source frames reuse them exactly, so
/// integer-factor downsampling is pure decimation; anything else is linear
/// interpolation of positions and velocities.
inline Sequence resample(const Sequence& seq, double target_hz) {
    if (seq.frames.empty()) throw ContractError("resample: empty sequence");
    if (target_hz <= 0.0) throw ContractError("resample: target rate must be positive");
    auto ratio = detail::as_rational(seq.rate_hz / target_hz);
    if (!ratio)
        throw ContractError("resample: rates " + std::to_string(seq.rate_hz) + " -> " +
                            std::to_string(target_hz) + " Hz are not commensurable");

    Sequence out;
    out.rate_hz = target_hz;
    out.events = seq.events;
    out.attacking = seq.attacking;

    const double t0 = seq.frames.front().t;
    const double t_end = seq.frames.back().t;
    const double step = 1.0 / target_hz;
    const double src_dt = 1.0 / seq.rate_hz;
    const size_t count = size_t(std::floor((t_end - t0) / step + 1e-9)) + 1;
    out.frames.reserve(count);

    for (size_t i = 0; i < count; ++i) {
        double t = t0 + double(i) * step;
        double fidx = (t - t0) / src_dt;
        size_t lo = size_t(std::min(double(seq.frames.size() - 1), std::floor(fidx + 1e-9)));
        if (std::abs(fidx - double(lo)) < 1e-6) {
            Frame f = seq.frames[lo];
            f.t = t;
            out.frames.push_back(std::move(f));
        } else {
            out.frames.push_back(detail::lerp_frame(seq.frames[lo], seq.frames[lo + 1], t));
        }
    }
    return out;
}

/// Scene reflected about the pitch midline x = 0 (positions, velocities,
/// events). Involutive.
inline Sequence mirror_x(const Sequence& seq) {
    Sequence out = seq;
    for (auto& f : out.frames) {
        for (auto& p : f.players) {
            p.pos.x = -p.pos.x;
            p.vel.x = -p.vel.x;
        }
        f.ball.pos.x = -f.ball.pos.x;
        f.ball.vel.x = -f.ball.vel.x;
    }
    for (auto& e : out.events) e.ball_pos.x = -e.ball_pos.x;
    return out;
}

/// Mirror about the pitch midline y = 0. Involutive; useful with mirrored_y
/// surfaces for symmetry checks.
inline Sequence mirror_y(const Sequence& seq) {
    Sequence out = seq;
    for (auto& f : out.frames) {
        for (auto& p : f.players) {
            p.pos.y = -p.pos.y;
            p.vel.y = -p.vel.y;
        }
        f.ball.pos.y = -f.ball.pos.y;
        f.ball.vel.y = -f.ball.vel.y;
    }
    for (auto& e : out.events) e.ball_pos.y = -e.ball_pos.y;
    return out;
}

/// True when the attacking team already attacks toward +x: its goalkeeper
/// stands in the -x half (averaged over frames).
inline bool attacks_positive_x(const Sequence& seq) {
    double gk_x = 0.0;
    size_t count = 0;
    for (const auto& f : seq.frames)
        for (const auto& p : f.players)
            if (p.team == seq.attacking && p.role == Role::Goalkeeper) {
                gk_x += p.pos.x;
                ++count;
            }
    if (count == 0)
        throw ContractError("normalize_attack_direction: attacking team has no goalkeeper");
    return gk_x / double(count) <= 0.0;
}

/// Canonical orientation: coordinates reflected so the attacking team
/// attacks toward the +x goal. Idempotent.
inline Sequence normalize_attack_direction(const Sequence& seq) {
    return attacks_positive_x(seq) ? seq : mirror_x(seq);
}

/// Attackers currently in the attacking third (x beyond length/6 in
/// canonical coordinates, i.e. the final third of the pitch).
inline std::vector<int> attackers_in_attacking_third(const Frame& frame, Team attacking,
                                                     const PitchSpec& pitch) {
    std::vector<int> ids;
    const double threshold = pitch.length / 6.0;
    for (const auto& p : frame.players)
        if (p.team == attacking && p.pos.x > threshold) ids.push_back(p.id);
    return ids;
}

/// Index of the defending player nearest to `target` (ties broken by order).
inline int nearest_defender_index(const Frame& frame, Team attacking, Vec2 target) {
    int best = -1;
    double best_d = 0.0;
    for (size_t i = 0; i < frame.players.size(); ++i) {
        const auto& p = frame.players[i];
        if (p.team == attacking) continue;
        double d = distance(p.pos, target);
        if (best < 0 || d < best_d) {
            best = int(i);
            best_d = d;
        }
    }
    return best;
}

} // namespace cobso
