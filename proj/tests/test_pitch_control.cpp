#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cobso/pitch_control.hpp"
#include "cobso/rng.hpp"
#include "cobso/synth.hpp"

using namespace cobso;

namespace {

Frame full_random_frame(Rng& rng, const PitchSpec& pitch) {
    Frame f;
    for (int i = 0; i < 22; ++i) {
        PlayerState p;
        p.team = i < 11 ? Team::Home : Team::Away;
        p.role = (i == 0 || i == 11) ? Role::Goalkeeper : Role::Outfield;
        p.id = i + 1;
        p.pos = {rng.uniform(-0.48 * pitch.length, 0.48 * pitch.length),
                 rng.uniform(-0.48 * pitch.width, 0.48 * pitch.width)};
        const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979);
        const double sp = rng.uniform(0.0, 6.0);
        p.vel = {sp * std::cos(ang), sp * std::sin(ang)};
        f.players.push_back(p);
    }
    f.ball.pos = {rng.uniform(-30.0, 30.0), rng.uniform(-20.0, 20.0)};
    return f;
}

} // namespace

TEST_CASE("intercept time") {
    ControlParams params;
    SECTION("player already at the target needs only the reaction time") {
        PlayerState p;
        p.pos = {3.0, -2.0};
        CHECK(intercept_time(p, {3.0, -2.0}, params) == Catch::Approx(params.reaction_time));
    }
    SECTION("stationary player five meters out") {
        PlayerState p;
        p.pos = {0.0, 0.0};
        CHECK(intercept_time(p, {5.0, 0.0}, params) == Catch::Approx(1.7));
    }
    SECTION("moving player matches a dense time-grid search") {
        PlayerState p;
        p.pos = {-4.0, 2.0};
        p.vel = {3.0, -1.0};
        const Vec2 target{6.0, 5.0};
        const double tau = intercept_time(p, target, params);
        // brute force: earliest T on a fine grid whose reachable disc covers
        // the target (drift for the reaction time, then run at max speed)
        const double grid = 1e-4;
        double found = -1.0;
        for (double T = params.reaction_time; T < 20.0; T += grid) {
            const Vec2 at = p.pos + p.vel * params.reaction_time;
            if ((T - params.reaction_time) * params.max_speed >= distance(at, target)) {
                found = T;
                break;
            }
        }
        REQUIRE(found > 0.0);
        CHECK(std::abs(found - tau) <= params.dt);
    }
    SECTION("non-finite state is rejected") {
        PlayerState p;
        p.pos = {std::numeric_limits<double>::quiet_NaN(), 0.0};
        CHECK_THROWS_AS(intercept_time(p, {0, 0}, params), ContractError);
    }
}

TEST_CASE("arrival probability") {
    ControlParams params;
    SECTION("logistic midpoint at T = tau") {
        CHECK(arrival_probability(2.0, 2.0, params) == Catch::Approx(0.5));
    }
    SECTION("saturates to one") {
        CHECK(arrival_probability(1e6, 2.0, params) == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("paper spot value at T - tau = s = 0.45") {
        const double expected = 1.0 / (1.0 + std::exp(-3.14159265358979323846 / std::sqrt(3.0)));
        CHECK(arrival_probability(0.45, 0.0, params) == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("monotone nondecreasing in T") {
        double prev = -1.0;
        for (double T = 0.0; T < 6.0; T += 0.05) {
            const double f = arrival_probability(T, 2.7, params);
            CHECK(f >= prev);
            prev = f;
        }
    }
}

TEST_CASE("control params validation") {
    ControlParams params;
    CHECK_NOTHROW(params.validate());
    params.dt = 0.2; // > tti_sigma / 3
    CHECK_THROWS_AS(params.validate(), ContractError);
    params = ControlParams{};
    params.lambda = -1.0;
    CHECK_THROWS_AS(params.validate(), ContractError);
}

TEST_CASE("ppcf field behavior") {
    PitchSpec pitch;
    ControlParams params;

    SECTION("lone attacker saturates to one at reachable cells") {
        Frame f;
        PlayerState a;
        a.team = Team::Home;
        a.id = 1;
        a.pos = {0.0, 0.0};
        f.players.push_back(a);
        f.ball.pos = a.pos;
        auto field = compute_ppcf(f, Team::Home, pitch, params);
        int count = 0;
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix) {
                const Vec2 cell = pitch.cell_center(ix, iy);
                const double tau = std::max(intercept_time(a, cell, params),
                                            distance(f.ball.pos, cell) / params.avg_ball_speed);
                if (tau < params.t_max - 3.0) { // comfortably reachable
                    CHECK(field.attack.at(ix, iy) == Catch::Approx(1.0).margin(1e-3));
                    ++count;
                }
            }
        CHECK(count > 100);
    }

    SECTION("mirror-symmetric duel splits control evenly") {
        Frame f;
        PlayerState a, d;
        a.team = Team::Home;
        a.id = 1;
        a.pos = {-6.0, 0.0};
        d.team = Team::Away;
        d.id = 2;
        d.pos = {6.0, 0.0};
        f.players = {a, d};
        f.ball.pos = {0.0, 0.0};
        auto control = compute_ppcf_at(f, {0.0, 0.0}, f.ball.pos, Team::Home, params);
        CHECK(control[0] == Catch::Approx(0.5).margin(1e-6));
        CHECK(control[1] == Catch::Approx(0.5).margin(1e-6));
    }

    SECTION("2v2 agrees with the fine-step oracle within 1e-3 per cell") {
        Frame f;
        PlayerState p1, p2, p3, p4;
        p1.team = Team::Home; p1.id = 1; p1.pos = {5, 3};  p1.vel = {2, 0};
        p2.team = Team::Home; p2.id = 2; p2.pos = {-8, -5};
        p3.team = Team::Away; p3.id = 3; p3.pos = {10, -2}; p3.vel = {-1, 1};
        p4.team = Team::Away; p4.id = 4; p4.pos = {0, 8};
        f.players = {p1, p2, p3, p4};
        f.ball.pos = {2, 1};
        auto coarse = compute_ppcf(f, Team::Home, pitch, params);
        auto fine = synth::oracle_ppcf(f, f.ball.pos, Team::Home, pitch, params);
        double worst = 0.0;
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix)
                worst = std::max(worst,
                                 std::abs(coarse.attack.at(ix, iy) - fine.attack.at(ix, iy)));
        CHECK(worst < 1e-3);
    }

    SECTION("conservation and monotonicity hold at every intermediate step") {
        Rng rng(21);
        Frame f = full_random_frame(rng, pitch);
        for (int trial = 0; trial < 5; ++trial) {
            const Vec2 target{rng.uniform(-50, 50), rng.uniform(-30, 30)};
            detail::ControlTrace trace;
            auto control = compute_ppcf_at(f, target, f.ball.pos, Team::Home, params, &trace);
            std::vector<double> prev(f.players.size(), 0.0);
            for (const auto& step : trace.control) {
                double total = 0.0;
                for (size_t j = 0; j < step.size(); ++j) {
                    CHECK(step[j] >= prev[j] - 1e-15); // nondecreasing per player
                    total += step[j];
                }
                CHECK(total <= 1.0 + 1e-9);
                prev = step;
            }
            double final_total = 0.0;
            for (double c : control) final_total += c;
            CHECK(final_total <= 1.0 + 1e-9);
        }
    }

    SECTION("per-cell attack control sums the attacking players") {
        Rng rng(33);
        Frame f = full_random_frame(rng, pitch);
        auto field = compute_ppcf(f, Team::Home, pitch, params);
        for (int iy = 0; iy < pitch.ny; iy += 5)
            for (int ix = 0; ix < pitch.nx; ix += 7) {
                double att = 0.0;
                for (size_t j = 0; j < f.players.size(); ++j)
                    if (f.players[j].team == Team::Home) att += field.per_player[j].at(ix, iy);
                CHECK(field.attack.at(ix, iy) == Catch::Approx(att).margin(1e-12));
            }
    }

    SECTION("mirroring the frame mirrors the field exactly") {
        Rng rng(7);
        Frame f = full_random_frame(rng, pitch);
        Frame m = f;
        for (auto& p : m.players) {
            p.pos.y = -p.pos.y;
            p.vel.y = -p.vel.y;
        }
        m.ball.pos.y = -m.ball.pos.y;
        auto field = compute_ppcf(f, Team::Home, pitch, params);
        auto mirrored = compute_ppcf(m, Team::Home, pitch, params);
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix)
                CHECK(field.attack.at(ix, iy) == mirrored.attack.at(ix, pitch.ny - 1 - iy));
    }

    SECTION("a defender backing away never lowers attacking control") {
        Rng rng(55);
        for (int trial = 0; trial < 10; ++trial) {
            Frame f = full_random_frame(rng, pitch);
            const Vec2 target{rng.uniform(-40, 40), rng.uniform(-25, 25)};
            auto before = compute_ppcf_at(f, target, f.ball.pos, Team::Home, params);
            double att_before = 0.0;
            for (size_t j = 0; j < f.players.size(); ++j)
                if (f.players[j].team == Team::Home) att_before += before[j];

            // move one random defender 2 m directly away from the cell
            size_t dj = 11 + rng.below(11);
            Frame moved = f;
            Vec2 away = normalized(moved.players[dj].pos - target);
            if (away.norm() == 0.0) away = {1.0, 0.0};
            moved.players[dj].pos += away * 2.0;
            auto after = compute_ppcf_at(moved, target, f.ball.pos, Team::Home, params);
            double att_after = 0.0;
            for (size_t j = 0; j < moved.players.size(); ++j)
                if (moved.players[j].team == Team::Home) att_after += after[j];
            CHECK(att_after >= att_before - 1e-9);
        }
    }
}
