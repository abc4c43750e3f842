#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "cobso/autodiff.hpp"
#include "cobso/rng.hpp"

using namespace cobso;
using ad::Mat;
using ad::Param;
using ad::Tape;
using ad::Var;

namespace {

void fill_random(Mat& m, Rng& rng, double scale = 1.0) {
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-scale, scale);
}

/// Central finite differences against the analytic gradient; 1e-4 relative.
void gradcheck(std::vector<Param*> params, const std::function<double()>& eval_loss,
               const std::function<void()>& backward_pass) {
    for (Param* p : params) p->zero_grad();
    backward_pass();
    const double eps = 1e-5;
    for (Param* p : params) {
        for (long i = 0; i < p->value.rows(); ++i)
            for (long j = 0; j < p->value.cols(); ++j) {
                const double saved = p->value(i, j);
                p->value(i, j) = saved + eps;
                const double up = eval_loss();
                p->value(i, j) = saved - eps;
                const double down = eval_loss();
                p->value(i, j) = saved;
                const double fd = (up - down) / (2.0 * eps);
                const double an = p->grad(i, j);
                const double rel = std::abs(fd - an) / std::max({1e-6, std::abs(fd), std::abs(an)});
                INFO(p->name << "(" << i << "," << j << "): fd=" << fd << " analytic=" << an);
                CHECK(rel < 1e-4);
            }
    }
}

} // namespace

TEST_CASE("backward computes elementary gradients") {
    SECTION("sum of squares") {
        Param w("w", 3, 2);
        Rng rng(1);
        fill_random(w.value, rng);
        Tape t;
        Var wv = t.leaf(w);
        Var loss = sum(t, square(t, wv));
        t.backward(loss);
        for (long i = 0; i < 3; ++i)
            for (long j = 0; j < 2; ++j)
                CHECK(w.grad(i, j) == Catch::Approx(2.0 * w.value(i, j)).margin(1e-14));
    }
    SECTION("constant loss leaves all gradients zero") {
        Param w("w", 2, 2);
        w.value << 1, 2, 3, 4;
        Tape t;
        t.leaf(w);
        Var c = t.constant(Mat::Ones(1, 1));
        Var loss = scale(t, c, 3.0);
        t.backward(loss);
        CHECK(w.grad.isZero(0.0));
    }
    SECTION("non-scalar loss is rejected") {
        Tape t;
        Var v = t.constant(Mat::Ones(2, 2));
        CHECK_THROWS_AS(t.backward(v), ContractError);
    }
}

TEST_CASE("two-layer network passes the finite-difference check") {
    Rng rng(7);
    Param w1("w1", 4, 5), b1("b1", 1, 5), w2("w2", 5, 3), b2("b2", 1, 3);
    fill_random(w1.value, rng);
    fill_random(b1.value, rng);
    fill_random(w2.value, rng);
    fill_random(b2.value, rng);
    Mat x(6, 4), target(6, 3);
    fill_random(x, rng);
    fill_random(target, rng);

    auto forward = [&](Tape& t) {
        Var h = tanh_(t, add_bias(t, matmul(t, t.constant(x), t.leaf(w1)), t.leaf(b1)));
        Var out = add_bias(t, matmul(t, h, t.leaf(w2)), t.leaf(b2));
        Var diff = sub(t, out, t.constant(target));
        return sum(t, square(t, diff));
    };
    gradcheck({&w1, &b1, &w2, &b2},
              [&]() {
                  Tape t;
                  return t.value(forward(t))(0, 0);
              },
              [&]() {
                  Tape t;
                  t.backward(forward(t));
              });
}

TEST_CASE("structural ops pass the finite-difference check") {
    Rng rng(13);
    Param a("a", 5, 4), b("b", 5, 3);
    fill_random(a.value, rng);
    fill_random(b.value, rng);
    const std::vector<int> gather_idx{0, 2, 2, 4, 1, 0};
    const std::vector<int> scatter_idx{0, 1, 0, 2, 2, 1};
    const std::vector<double> weights{0.5, 0.0, 2.0, 1.0, 0.0, 1.5};
    Mat mixer(7, 1);
    fill_random(mixer, rng);

    auto forward = [&](Tape& t) {
        Var av = t.leaf(a);
        Var bv = t.leaf(b);
        Var cat = concat_cols(t, av, bv);                   // 5 x 7
        Var gathered = gather_rows(t, cat, gather_idx);     // 6 x 7
        Var weighted = scale_rows(t, gathered, weights);    // 6 x 7
        Var scattered = scatter_sum_rows(t, weighted, scatter_idx, 3); // 3 x 7
        Var sliced = slice_cols(t, scattered, 2, 4);        // 3 x 4
        Var act = sigmoid(t, sliced);
        Var e = exp_(t, scale(t, slice_cols(t, scattered, 0, 2), 0.3));
        Var joined = concat_cols(t, act, e);                // 3 x 6
        Var mixed = matmul(t, joined, t.constant(Mat::Ones(6, 1)));
        return sum(t, square(t, mixed));
    };
    gradcheck({&a, &b},
              [&]() {
                  Tape t;
                  return t.value(forward(t))(0, 0);
              },
              [&]() {
                  Tape t;
                  t.backward(forward(t));
              });
}

TEST_CASE("diagonal Gaussian KL") {
    SECTION("identical heads give zero") {
        Tape t;
        Mat mu(2, 3), ls(2, 3);
        mu << 1, -2, 0.5, 0, 3, -1;
        ls << 0.1, -0.3, 0, 0.2, -0.1, 0.4;
        ad::GaussianHead q{t.constant(mu), t.constant(ls)};
        ad::GaussianHead p{t.constant(mu), t.constant(ls)};
        CHECK(t.value(kl_diag_gaussians(t, q, p))(0, 0) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("unit-variance unit-shift gives one half per dimension") {
        Tape t;
        const int dims = 4;
        ad::GaussianHead q{t.constant(Mat::Zero(1, dims)), t.constant(Mat::Zero(1, dims))};
        ad::GaussianHead p{t.constant(Mat::Ones(1, dims)), t.constant(Mat::Zero(1, dims))};
        CHECK(t.value(kl_diag_gaussians(t, q, p))(0, 0) ==
              Catch::Approx(0.5 * dims).margin(1e-12));
    }
    SECTION("matches a Monte Carlo estimate within three standard errors") {
        Rng rng(23);
        Mat mu_q(1, 3), ls_q(1, 3), mu_p(1, 3), ls_p(1, 3);
        fill_random(mu_q, rng);
        fill_random(ls_q, rng, 0.4);
        fill_random(mu_p, rng);
        fill_random(ls_p, rng, 0.4);
        Tape t;
        ad::GaussianHead q{t.constant(mu_q), t.constant(ls_q)};
        ad::GaussianHead p{t.constant(mu_p), t.constant(ls_p)};
        const double closed = t.value(kl_diag_gaussians(t, q, p))(0, 0);

        const int n = 1000000;
        double acc = 0.0, acc2 = 0.0;
        Rng sampler(99);
        for (int i = 0; i < n; ++i) {
            double lq = 0.0, lp = 0.0;
            for (int d = 0; d < 3; ++d) {
                const double sq = std::exp(ls_q(0, d)), sp = std::exp(ls_p(0, d));
                const double z = mu_q(0, d) + sq * sampler.normal();
                lq += -0.5 * ((z - mu_q(0, d)) / sq) * ((z - mu_q(0, d)) / sq) - ls_q(0, d);
                lp += -0.5 * ((z - mu_p(0, d)) / sp) * ((z - mu_p(0, d)) / sp) - ls_p(0, d);
            }
            const double v = lq - lp;
            acc += v;
            acc2 += v * v;
        }
        const double mean = acc / n;
        const double se = std::sqrt((acc2 / n - mean * mean) / n);
        CHECK(std::abs(closed - mean) <= 3.0 * se);
    }
    SECTION("nonnegative on random heads") {
        Rng rng(31);
        for (int i = 0; i < 50; ++i) {
            Mat mq(1, 2), lq(1, 2), mp(1, 2), lp(1, 2);
            fill_random(mq, rng, 2.0);
            fill_random(lq, rng, 0.8);
            fill_random(mp, rng, 2.0);
            fill_random(lp, rng, 0.8);
            Tape t;
            ad::GaussianHead q{t.constant(mq), t.constant(lq)};
            ad::GaussianHead p{t.constant(mp), t.constant(lp)};
            CHECK(t.value(kl_diag_gaussians(t, q, p))(0, 0) >= -1e-12);
        }
    }
}

TEST_CASE("reparameterized sampling") {
    SECTION("vanishing sigma returns the mean") {
        Tape t;
        Mat mu(2, 2);
        mu << 1, 2, 3, 4;
        ad::GaussianHead head{t.constant(mu), t.constant(Mat::Constant(2, 2, -60.0))};
        Rng rng(5);
        Var z = reparam_sample(t, head, rng);
        for (long i = 0; i < 2; ++i)
            for (long j = 0; j < 2; ++j)
                CHECK(t.value(z)(i, j) == Catch::Approx(mu(i, j)).margin(1e-12));
    }
    SECTION("fixed seeds reproduce bit-identical samples") {
        auto draw = [&]() {
            Tape t;
            ad::GaussianHead head{t.constant(Mat::Zero(3, 3)), t.constant(Mat::Zero(3, 3))};
            Rng rng(42);
            return Mat(t.value(reparam_sample(t, head, rng)));
        };
        const Mat a = draw(), b = draw();
        CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("sample mean converges to mu") {
        const double mu = 1.7, sigma = 0.8;
        const int n = 100000;
        Tape t;
        ad::GaussianHead head{t.constant(Mat::Constant(n, 1, mu)),
                              t.constant(Mat::Constant(n, 1, std::log(sigma)))};
        Rng rng(77);
        const Mat samples = t.value(reparam_sample(t, head, rng));
        const double mean = samples.mean();
        CHECK(std::abs(mean - mu) <= 4.0 * sigma / std::sqrt(double(n)));
    }
    SECTION("gradients flow through the sample") {
        Rng init(3);
        Param mu("mu", 2, 3), ls("ls", 2, 3);
        fill_random(mu.value, init);
        fill_random(ls.value, init, 0.5);
        // freeze the noise so the finite-difference loss is deterministic
        Mat eps(2, 3);
        fill_random(eps, init);
        auto forward = [&](Tape& t) {
            Var z = add(t, t.leaf(mu), hadamard(t, exp_(t, t.leaf(ls)), t.constant(eps)));
            return sum(t, square(t, z));
        };
        gradcheck({&mu, &ls},
                  [&]() {
                      Tape t;
                      return t.value(forward(t))(0, 0);
                  },
                  [&]() {
                      Tape t;
                      t.backward(forward(t));
                  });
    }
}

TEST_CASE("gaussian nll matches a hand computation and its gradient checks out") {
    Rng rng(9);
    Param mu("mu", 3, 2), ls("ls", 3, 2);
    fill_random(mu.value, rng);
    fill_random(ls.value, rng, 0.5);
    Mat target(3, 2);
    fill_random(target, rng);

    Tape t;
    ad::GaussianHead head{t.leaf(mu), t.leaf(ls)};
    const double got = t.value(gaussian_nll(t, head, target))(0, 0);
    double want = 0.0;
    for (long i = 0; i < 3; ++i)
        for (long j = 0; j < 2; ++j) {
            const double s = std::exp(ls.value(i, j));
            const double z = (target(i, j) - mu.value(i, j)) / s;
            want += 0.5 * z * z + ls.value(i, j) + 0.5 * std::log(2.0 * 3.14159265358979323846);
        }
    CHECK(got == Catch::Approx(want).margin(1e-10));

    auto forward = [&](Tape& tt) {
        ad::GaussianHead h{tt.leaf(mu), tt.leaf(ls)};
        return gaussian_nll(tt, h, target);
    };
    gradcheck({&mu, &ls},
              [&]() {
                  Tape tt;
                  return tt.value(forward(tt))(0, 0);
              },
              [&]() {
                  Tape tt;
                  tt.backward(forward(tt));
              });
}
