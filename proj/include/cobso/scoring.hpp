#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cobso/errors.hpp"
#include "cobso/grid.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

inline constexpr double kPi = 3.14159265358979323846;

/// Baseline score model: inverse-distance decay from the goal center,
/// P = clamp(scale / (offset + d), floor, 1).
struct SimpleScoreParams {
    double scale = 3.0;
    double offset = 3.0;
    double floor = 0.01;
};

inline double simple_score_model(Vec2 r, const PitchSpec& pitch,
                                 const SimpleScoreParams& params = {}) {
    double d = distance(r, pitch.goal_center());
    double p = params.scale / (params.offset + d);
    return std::clamp(p, params.floor, 1.0);
}

/// Fan of shot vectors from `origin` to the goal mouth: one vector per
/// degree of the angular span between the post bearings, targets at the
/// midpoints of uniform degree marks (sub-degree spans get the bisector).
struct ShotGeometry {
    Vec2 origin;
    std::vector<Vec2> targets;

    int n() const { return int(targets.size()); }
};

inline ShotGeometry make_shot_geometry(Vec2 origin, const PitchSpec& pitch) {
    ShotGeometry geom;
    geom.origin = origin;
    const double goal_x = 0.5 * pitch.length;
    // Nudge on-goal-line origins inside so the fan stays well defined.
    if (geom.origin.x > goal_x - 1e-6) geom.origin.x = goal_x - 1e-6;

    const Vec2 post_a = pitch.goal_post_right(); // y = -goal_width/2
    const Vec2 post_b = pitch.goal_post_left();
    const double theta_a = std::atan2(post_a.y - geom.origin.y, post_a.x - geom.origin.x);
    const double theta_b = std::atan2(post_b.y - geom.origin.y, post_b.x - geom.origin.x);
    double span = theta_b - theta_a;
    while (span > kPi) span -= 2.0 * kPi;
    while (span < -kPi) span += 2.0 * kPi;

    const double span_deg = std::abs(span) * 180.0 / kPi;
    const int n = std::max(1, int(std::floor(span_deg + 1e-9)));
    geom.targets.reserve(n);
    for (int k = 0; k < n; ++k) {
        const double theta = theta_a + span * (k + 0.5) / n;
        const double dx = std::cos(theta);
        const double t = (goal_x - geom.origin.x) / dx;
        geom.targets.push_back({goal_x, geom.origin.y + t * std::sin(theta)});
    }
    return geom;
}

/// One blocking defender: isotropic Gaussian at the defender's position with
/// variance 0.5 + distance-to-shooter; goalkeepers weigh twice.
struct BlockerGaussian {
    Vec2 mean;
    double variance = 0.5;
    double weight = 1.0;
};

/// Mixture of the goal-side defenders' blocking Gaussians. Only defenders
/// whose x lies strictly between the shot origin and the goal line contribute.
struct BlockingField {
    std::vector<BlockerGaussian> blockers;

    double density(Vec2 p) const {
        double acc = 0.0;
        for (const auto& b : blockers) {
            const double d2 = (p - b.mean).norm2();
            acc += b.weight / (2.0 * kPi * b.variance) * std::exp(-0.5 * d2 / b.variance);
        }
        return acc;
    }
};

inline BlockingField make_blocking_field(const Frame& frame, Vec2 origin, Team attacking,
                                         const PitchSpec& pitch) {
    BlockingField field;
    const double goal_x = 0.5 * pitch.length;
    for (const auto& p : frame.players) {
        if (p.team == attacking) continue;
        if (!(p.pos.x > origin.x && p.pos.x < goal_x)) continue;
        BlockerGaussian b;
        b.mean = p.pos;
        b.variance = 0.5 + distance(origin, p.pos);
        b.weight = p.role == Role::Goalkeeper ? 2.0 : 1.0;
        field.blockers.push_back(b);
    }
    return field;
}

struct ScoreModelParams {
    double c = 1.1;        // per-vector shot value before blocking
    double big_c = 1.0 / 150.0; // overall scale C
    double line_step = 0.25;    // m, line-integral discretization

    void validate() const {
        if (c <= 0 || big_c <= 0 || line_step <= 0)
            throw ContractError("ScoreModelParams: c, C and line step must be positive");
    }
};

/// Blocking mass along one shot vector: midpoint-rule line integral of the
/// mixture density from `origin` to `target`, sampled every `step` meters.
inline double block_value(Vec2 origin, Vec2 target, const BlockingField& blocking, double step) {
    if (blocking.blockers.empty()) return 0.0;
    const Vec2 seg = target - origin;
    const double len = seg.norm();
    if (len == 0.0) return 0.0;
    const int m = std::max(1, int(std::ceil(len / step - 1e-12)));
    const double h = len / m;
    const Vec2 dir = seg / len;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) acc += blocking.density(origin + dir * ((j + 0.5) * h));
    return acc * h;
}

inline double block_value(const ShotGeometry& geom, int vector_index,
                          const BlockingField& blocking, double step) {
    if (vector_index < 0 || vector_index >= geom.n())
        throw ContractError("block_value: shot vector index out of range");
    return block_value(geom.origin, geom.targets[size_t(vector_index)], blocking, step);
}

/// Potential score model: scoring probability as the angular sum of
/// per-degree shot values, each reduced by the line-integrated blocking mass
/// of the goal-side defenders. Clamped to [0, 1].
inline double potential_score_model(const Frame& frame, Vec2 r, Team attacking,
                                    const PitchSpec& pitch, const ScoreModelParams& params = {}) {
    const ShotGeometry geom = make_shot_geometry(r, pitch);
    const BlockingField blocking = make_blocking_field(frame, geom.origin, attacking, pitch);
    double p = 0.0;
    for (int i = 0; i < geom.n(); ++i) {
        const double vb = block_value(geom.origin, geom.targets[size_t(i)], blocking, params.line_step);
        p += params.big_c * std::max(0.0, params.c - vb);
    }
    return std::clamp(p, 0.0, 1.0);
}

inline Surface simple_score_surface(const PitchSpec& pitch, const SimpleScoreParams& params = {}) {
    Surface s(pitch);
    for (int iy = 0; iy < pitch.ny; ++iy)
        for (int ix = 0; ix < pitch.nx; ++ix)
            s.at(ix, iy) = simple_score_model(pitch.cell_center(ix, iy), pitch, params);
    return s;
}

inline Surface potential_score_surface(const Frame& frame, Team attacking, const PitchSpec& pitch,
                                       const ScoreModelParams& params = {}) {
    Surface s(pitch);
    for (int iy = 0; iy < pitch.ny; ++iy)
        for (int ix = 0; ix < pitch.nx; ++ix)
            s.at(ix, iy) = potential_score_model(frame, pitch.cell_center(ix, iy), attacking,
                                                 pitch, params);
    return s;
}

} // namespace cobso
