#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cobso/obso.hpp"
#include "cobso/rng.hpp"

using namespace cobso;

namespace {

Frame scene_3v3(Vec2 ball) {
    Frame f;
    const Vec2 attackers[3] = {{20, 0}, {30, 8}, {25, -10}};
    const Vec2 defenders[3] = {{35, 2}, {40, -5}, {48, 0}};
    for (int i = 0; i < 3; ++i) {
        PlayerState a;
        a.team = Team::Home;
        a.id = i + 1;
        a.pos = attackers[i];
        f.players.push_back(a);
    }
    for (int i = 0; i < 3; ++i) {
        PlayerState d;
        d.team = Team::Away;
        d.id = 10 + i;
        d.pos = defenders[i];
        d.role = i == 2 ? Role::Goalkeeper : Role::Outfield;
        f.players.push_back(d);
    }
    f.ball.pos = ball;
    return f;
}

Frame full_frame(Rng& rng, const PitchSpec& pitch) {
    Frame f;
    for (int i = 0; i < 22; ++i) {
        PlayerState p;
        p.team = i < 11 ? Team::Home : Team::Away;
        p.role = (i == 0 || i == 11) ? Role::Goalkeeper : Role::Outfield;
        p.id = i + 1;
        p.pos = {rng.uniform(-0.45 * pitch.length, 0.45 * pitch.length),
                 rng.uniform(-0.45 * pitch.width, 0.45 * pitch.width)};
        f.players.push_back(p);
    }
    f.ball.pos = {rng.uniform(-20, 20), rng.uniform(-15, 15)};
    return f;
}

} // namespace

TEST_CASE("transition surface") {
    SECTION("peaks at the ball cell and sums to one") {
        PitchSpec pitch;
        const Vec2 ball{10.3, -4.2};
        const TransitionSurface tr = transition_surface(ball, pitch);
        CHECK(tr.surface.sum() == Catch::Approx(1.0).margin(1e-9));
        int bx, by;
        pitch.cell_of(ball, bx, by);
        const double peak = tr.surface.max_value();
        CHECK(tr.surface.at(bx, by) == Catch::Approx(peak));
    }
    SECTION("value at 14 m is exp(-1/2) of the peak") {
        PitchSpec pitch;
        pitch.length = 100.0; // dx = 2 m, so 14 m is exactly 7 cells
        pitch.nx = 50;
        const Vec2 ball = pitch.cell_center(10, 16);
        const TransitionSurface tr = transition_surface(ball, pitch, 14.0);
        const double at_ball = tr.surface.at(10, 16);
        const double at_14m = tr.surface.at(17, 16);
        CHECK(distance(pitch.cell_center(17, 16), ball) == Catch::Approx(14.0));
        CHECK(at_14m / at_ball == Catch::Approx(std::exp(-0.5)).margin(1e-12));
    }
    SECTION("rejects non-positive sigma") {
        CHECK_THROWS_AS(transition_surface({0, 0}, PitchSpec{}, 0.0), ContractError);
    }
}

TEST_CASE("obso surface") {
    PitchSpec pitch;
    ObsoParams params;
    params.score_model = ScoreModel::Simple;

    SECTION("zero control annihilates the total") {
        Frame f = scene_3v3({0, 0});
        ControlField control(pitch, f.players.size()); // all zeros
        ObsoResult r = obso_surface(f, control, Team::Home, pitch, params);
        CHECK(r.total == 0.0);
        for (double v : r.per_player) CHECK(v == 0.0);
    }

    SECTION("a sole attacker collects the whole total") {
        Frame f;
        PlayerState a;
        a.team = Team::Home;
        a.id = 7;
        a.pos = {35, 0};
        f.players.push_back(a);
        f.ball.pos = a.pos;
        ObsoResult r = compute_obso(f, Team::Home, pitch, params);
        REQUIRE(r.player_ids.size() == 1);
        CHECK(r.per_player[0] == Catch::Approx(r.total).margin(1e-12));
        CHECK(r.total > 0.0);
        CHECK(r.credit_for(7) == r.per_player[0]);
        CHECK_THROWS_AS(r.credit_for(99), ContractError);
    }

    SECTION("total equals an independent triple-product resummation") {
        Frame f = scene_3v3({22, 1});
        const ControlField control = compute_ppcf(f, Team::Home, pitch, params.control);
        ObsoResult r = obso_surface(f, control, Team::Home, pitch, params);

        const Surface score = simple_score_surface(pitch, params.simple);
        const TransitionSurface tr = transition_surface(f.ball.pos, pitch, params.transition_sigma);
        double total = 0.0;
        std::vector<double> per(3, 0.0);
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix) {
                const double st = score.at(ix, iy) * tr.surface.at(ix, iy);
                total += st * control.attack.at(ix, iy);
                for (int j = 0; j < 3; ++j) per[size_t(j)] += st * control.per_player[size_t(j)].at(ix, iy);
            }
        CHECK(r.total == Catch::Approx(total).margin(1e-12));
        for (int j = 0; j < 3; ++j)
            CHECK(r.per_player[size_t(j)] == Catch::Approx(per[size_t(j)]).margin(1e-12));
    }

    SECTION("grid mismatch is rejected") {
        Frame f = scene_3v3({0, 0});
        PitchSpec other = pitch;
        other.nx = 25;
        ControlField control(other, f.players.size());
        CHECK_THROWS_AS(obso_surface(f, control, Team::Home, pitch, params), ContractError);
    }

    SECTION("total stays within [0, 1] and per-player credits are consistent") {
        Rng rng(101);
        for (int trial = 0; trial < 5; ++trial) {
            Frame f = full_frame(rng, pitch);
            ObsoParams p2;
            p2.score_model = trial % 2 == 0 ? ScoreModel::Simple : ScoreModel::Potential;
            ObsoResult r = compute_obso(f, Team::Home, pitch, p2);
            CHECK(r.total >= 0.0);
            CHECK(r.total <= 1.0);
            double credited = 0.0;
            for (double v : r.per_player) {
                CHECK(v >= 0.0);
                credited += v;
            }
            CHECK(credited <= r.total + 1e-9);
        }
    }

    SECTION("mirroring about the midline and swapping teams preserves the total") {
        Rng rng(202);
        Frame f = full_frame(rng, pitch);
        ObsoResult base = compute_obso(f, Team::Home, pitch, params);

        Frame swapped = f;
        for (auto& p : swapped.players) {
            p.team = opponent(p.team);
            p.pos.y = -p.pos.y;
            p.vel.y = -p.vel.y;
        }
        swapped.ball.pos.y = -swapped.ball.pos.y;
        swapped.ball.vel.y = -swapped.ball.vel.y;
        ObsoResult mirrored = compute_obso(swapped, Team::Away, pitch, params);
        CHECK(mirrored.total == Catch::Approx(base.total).margin(1e-12));
    }

    SECTION("blocking never helps the attack") {
        Rng rng(303);
        Frame f = full_frame(rng, pitch);
        ObsoParams pot;
        pot.score_model = ScoreModel::Potential;
        const ControlField control = compute_ppcf(f, Team::Home, pitch, pot.control);
        ObsoResult with_defenders = obso_surface(f, control, Team::Home, pitch, pot);

        // same control and transition, but the score surface of a defender-free pitch
        Frame attackers_only = f;
        attackers_only.players.clear();
        for (const auto& p : f.players)
            if (p.team == Team::Home) attackers_only.players.push_back(p);
        const Surface free_score =
            potential_score_surface(attackers_only, Team::Home, pitch, pot.potential);
        const TransitionSurface tr = transition_surface(f.ball.pos, pitch, pot.transition_sigma);
        double free_total = 0.0;
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix)
                free_total += free_score.at(ix, iy) * tr.surface.at(ix, iy) * control.attack.at(ix, iy);
        CHECK(with_defenders.total <= free_total + 1e-12);
    }
}
