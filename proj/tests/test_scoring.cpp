#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cobso/rng.hpp"
#include "cobso/scoring.hpp"

using namespace cobso;

TEST_CASE("simple score model") {
    PitchSpec pitch;
    SECTION("equal distance gives equal probability") {
        CHECK(simple_score_model({40.0, 8.0}, pitch) == simple_score_model({40.0, -8.0}, pitch));
        const double d = 15.0;
        CHECK(simple_score_model({52.5 - d, 0.0}, pitch) ==
              Catch::Approx(simple_score_model({52.5, d}, pitch)));
    }
    SECTION("maximum at the goal center") {
        const double peak = simple_score_model(pitch.goal_center(), pitch);
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            Vec2 r{rng.uniform(-52.5, 52.5), rng.uniform(-34, 34)};
            CHECK(simple_score_model(r, pitch) <= peak);
        }
    }
    SECTION("monotone in distance") {
        CHECK(simple_score_model({42.5, 0.0}, pitch) >= simple_score_model({32.5, 0.0}, pitch));
    }
}

TEST_CASE("shot geometry") {
    PitchSpec pitch;
    SECTION("n equals the integer angular span between the posts") {
        const Vec2 origin{40.0, 3.0};
        const ShotGeometry geom = make_shot_geometry(origin, pitch);
        const double a1 = std::atan2(pitch.goal_post_right().y - origin.y,
                                     pitch.goal_post_right().x - origin.x);
        const double a2 = std::atan2(pitch.goal_post_left().y - origin.y,
                                     pitch.goal_post_left().x - origin.x);
        const int expected = std::max(1, int(std::floor(std::abs(a2 - a1) * 180.0 / kPi + 1e-9)));
        CHECK(geom.n() == expected);
    }
    SECTION("central origins see a wider fan than wide-angle origins") {
        const double d = 16.0;
        const ShotGeometry central = make_shot_geometry({52.5 - d, 0.0}, pitch);
        const ShotGeometry wide = make_shot_geometry({52.5 - d * 0.3, d * 0.95}, pitch);
        CHECK(central.n() >= wide.n());
    }
    SECTION("sub-degree spans collapse to a single bisector vector") {
        const ShotGeometry geom = make_shot_geometry({-52.0, 0.0}, pitch); // ~4 deg at 104.5 m? no: far corner
        const ShotGeometry tiny = make_shot_geometry({-52.0, 33.0}, pitch);
        CHECK(tiny.n() >= 1);
        const ShotGeometry far_side = make_shot_geometry({51.9, 33.9}, pitch);
        REQUIRE(far_side.n() == 1);
        CHECK(far_side.targets[0].x == Catch::Approx(52.5));
        CHECK(std::abs(far_side.targets[0].y) <= pitch.goal_width / 2 + 1e-9);
        (void)geom;
    }
    SECTION("every target lies on the goal mouth") {
        Rng rng(11);
        for (int i = 0; i < 40; ++i) {
            Vec2 origin{rng.uniform(-52.0, 52.0), rng.uniform(-33.0, 33.0)};
            const ShotGeometry geom = make_shot_geometry(origin, pitch);
            for (const Vec2& t : geom.targets) {
                CHECK(t.x == Catch::Approx(52.5));
                CHECK(std::abs(t.y) <= pitch.goal_width / 2 + 1e-9);
            }
        }
    }
}

TEST_CASE("block value") {
    PitchSpec pitch;
    const double step = 0.25;
    SECTION("no goal-side defenders means zero") {
        Frame f;
        PlayerState shooter;
        shooter.team = Team::Home;
        shooter.id = 1;
        shooter.pos = {40.0, 0.0};
        f.players.push_back(shooter);
        const BlockingField empty = make_blocking_field(f, shooter.pos, Team::Home, pitch);
        CHECK(empty.blockers.empty());
        CHECK(block_value({40, 0}, {52.5, 0}, empty, step) == 0.0);
    }
    SECTION("a defender behind the shooter does not contribute") {
        Frame f;
        PlayerState shooter, behind;
        shooter.team = Team::Home;
        shooter.id = 1;
        shooter.pos = {40.0, 0.0};
        behind.team = Team::Away;
        behind.id = 2;
        behind.pos = {35.0, 0.0};
        f.players = {shooter, behind};
        const BlockingField field = make_blocking_field(f, shooter.pos, Team::Home, pitch);
        CHECK(field.blockers.empty());
    }
    SECTION("single on-ray defender matches an independently coded sum") {
        const Vec2 origin{40.0, 0.0};
        const Vec2 target{52.5, 0.0};
        const double l_d = 2.0;
        BlockingField field;
        field.blockers.push_back({{origin.x + l_d, 0.0}, 0.5 + l_d, 1.0});
        const double got = block_value(origin, target, field, step);

        // independent midpoint sum over the segment
        const double len = distance(origin, target);
        const int m = int(std::ceil(len / step - 1e-12));
        const double h = len / m;
        double expect = 0.0;
        for (int j = 0; j < m; ++j) {
            const double x = origin.x + (j + 0.5) * h;
            const double d2 = (x - (origin.x + l_d)) * (x - (origin.x + l_d));
            expect += std::exp(-0.5 * d2 / (0.5 + l_d)) / (2.0 * kPi * (0.5 + l_d));
        }
        expect *= h;
        CHECK(got == Catch::Approx(expect).margin(1e-12));

        // quadrature refinement stays close (the step choice is adequate)
        const double fine = block_value(origin, target, field, step / 10.0);
        CHECK(std::abs(got - fine) < 5e-3 * std::max(1.0, fine));
    }
    SECTION("goalkeeper weighs twice") {
        BlockingField gk, outfield;
        gk.blockers.push_back({{45.0, 0.0}, 5.5, 2.0});
        outfield.blockers.push_back({{45.0, 0.0}, 5.5, 1.0});
        CHECK(block_value({40, 0}, {52.5, 0}, gk, step) ==
              Catch::Approx(2.0 * block_value({40, 0}, {52.5, 0}, outfield, step)));
    }
}

namespace {

/// Independent recomputation of the potential model: own geometry walk, own
/// per-degree quadrature, defenders filtered and weighted from scratch.
double potential_oracle(const Frame& frame, Vec2 r, Team attacking, const PitchSpec& pitch,
                        const ScoreModelParams& params) {
    const double goal_x = 0.5 * pitch.length;
    const Vec2 origin{std::min(r.x, goal_x - 1e-6), r.y};
    const double b_right = std::atan2(-0.5 * pitch.goal_width - origin.y, goal_x - origin.x);
    const double b_left = std::atan2(0.5 * pitch.goal_width - origin.y, goal_x - origin.x);
    double span = b_left - b_right;
    while (span > kPi) span -= 2 * kPi;
    while (span < -kPi) span += 2 * kPi;
    const int n = std::max(1, int(std::floor(std::abs(span) * 180.0 / kPi + 1e-9)));

    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        const double theta = b_right + span * (k + 0.5) / n;
        const double t = (goal_x - origin.x) / std::cos(theta);
        const Vec2 target{goal_x, origin.y + t * std::sin(theta)};
        const double len = distance(origin, target);
        const int m = std::max(1, int(std::ceil(len / params.line_step - 1e-12)));
        const double h = len / m;
        double vb = 0.0;
        for (int j = 0; j < m; ++j) {
            const Vec2 p = origin + (target - origin) * ((j + 0.5) * h / len);
            for (const auto& d : frame.players) {
                if (d.team == attacking) continue;
                if (!(d.pos.x > origin.x && d.pos.x < goal_x)) continue;
                const double var = 0.5 + distance(origin, d.pos);
                const double w = d.role == Role::Goalkeeper ? 2.0 : 1.0;
                vb += w / (2.0 * kPi * var) * std::exp(-0.5 * (p - d.pos).norm2() / var);
            }
        }
        vb *= h;
        total += params.big_c * std::max(0.0, params.c - vb);
    }
    return std::clamp(total, 0.0, 1.0);
}

Frame shot_frame_with_defenders(Vec2 origin, const std::vector<Vec2>& defenders) {
    Frame f;
    PlayerState shooter;
    shooter.team = Team::Home;
    shooter.id = 1;
    shooter.pos = origin;
    f.players.push_back(shooter);
    int id = 10;
    for (const Vec2& d : defenders) {
        PlayerState p;
        p.team = Team::Away;
        p.id = id++;
        p.pos = d;
        f.players.push_back(p);
    }
    f.ball.pos = origin;
    return f;
}

} // namespace

TEST_CASE("potential score model") {
    PitchSpec pitch;
    ScoreModelParams params;

    SECTION("no defenders gives exactly n * C * c below the clamp") {
        const Vec2 origin{30.0, 10.0};
        Frame f = shot_frame_with_defenders(origin, {});
        const ShotGeometry geom = make_shot_geometry(origin, pitch);
        const double expected = geom.n() * params.big_c * params.c;
        REQUIRE(expected < 1.0);
        CHECK(potential_score_model(f, origin, Team::Home, pitch, params) ==
              Catch::Approx(expected).margin(1e-12));
    }

    SECTION("a crowded cone scores lower than an open one at the same distance") {
        const Vec2 origin{38.0, 0.0};
        Frame open_f = shot_frame_with_defenders(origin, {{40.0, 20.0}}); // defender far outside
        Frame crowded = shot_frame_with_defenders(
            origin, {{43.0, 0.5}, {45.0, -1.0}, {47.0, 1.5}});
        CHECK(potential_score_model(crowded, origin, Team::Home, pitch, params) <
              potential_score_model(open_f, origin, Team::Home, pitch, params));
    }

    SECTION("full computation matches the brute-force per-degree oracle within 1e-6") {
        const Vec2 origin{36.0, -4.0};
        Frame f = shot_frame_with_defenders(origin, {{44.0, -2.0}, {48.0, 0.0}, {50.5, -0.5}});
        f.players.back().role = Role::Goalkeeper;
        const double got = potential_score_model(f, origin, Team::Home, pitch, params);
        const double want = potential_oracle(f, origin, Team::Home, pitch, params);
        CHECK(got == Catch::Approx(want).margin(1e-6));
    }

    SECTION("randomized scenes respect the probability bounds") {
        Rng rng(17);
        for (int i = 0; i < 60; ++i) {
            std::vector<Vec2> defenders;
            for (int d = 0; d < int(rng.below(6)); ++d)
                defenders.push_back({rng.uniform(-52, 52), rng.uniform(-33, 33)});
            const Vec2 origin{rng.uniform(-52, 52), rng.uniform(-33, 33)};
            Frame f = shot_frame_with_defenders(origin, defenders);
            const double p = potential_score_model(f, origin, Team::Home, pitch, params);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    }

    SECTION("pulling a goal-side defender onto the center line never helps the attack") {
        // Holds up to a small residue: the per-ray clamp max(0, c - V_block)
        // can waste concentrated blocking mass, and moving the defender also
        // changes its variance through l_d. Sweeps of ~35k scenes bound the
        // residue below 3e-4, so the assertion allows 1e-3.
        Rng rng(29);
        for (int i = 0; i < 200; ++i) {
            const Vec2 origin{rng.uniform(12.0, 48.0), rng.uniform(-28.0, 28.0)};
            const double dist_goal = distance(origin, pitch.goal_center());
            if (dist_goal < 8.0 || dist_goal > 40.0) continue;
            const Vec2 def{rng.uniform(origin.x + 0.5, 52.0), rng.uniform(-33.0, 33.0)};
            Frame before = shot_frame_with_defenders(origin, {def});
            const Vec2 moved = project_onto_segment(def, origin, pitch.goal_center());
            if (!(moved.x > origin.x && moved.x < 52.5)) continue;
            Frame after = shot_frame_with_defenders(origin, {moved});
            const double p_before = potential_score_model(before, origin, Team::Home, pitch, params);
            const double p_after = potential_score_model(after, origin, Team::Home, pitch, params);
            CHECK(p_after <= p_before + 1e-3);
        }
    }

    SECTION("with no defenders the probability grows with the fan size") {
        Frame f = shot_frame_with_defenders({0, 0}, {});
        double prev = 0.0;
        // approaching the goal along the center line widens the fan
        for (double x : {0.0, 15.0, 30.0, 40.0, 45.0}) {
            f.players[0].pos = {x, 0.0};
            const ShotGeometry geom = make_shot_geometry({x, 0.0}, pitch);
            const double p = potential_score_model(f, {x, 0.0}, Team::Home, pitch, params);
            if (geom.n() * params.big_c * params.c < 1.0) {
                CHECK(p > prev);
                prev = p;
            }
        }
    }
}
