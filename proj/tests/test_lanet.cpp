#include <cmath>
#include <numeric>
#include <vector>

#include "ddl/errors.hpp"
#include "ddl/lanet.hpp"
#include "ddl/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using ddl::Matrix;
using ddl::Rng;
using ddl::Tape;
using ddl::Var;
using namespace ddl::lanet;
using ddl::testutil::rand_mat;

namespace {

LaNetVars random_lanet(Tape& t, Rng& rng, int dim, int heads, int d_h) {
    LaNetVars p;
    const int hd = d_h / heads;
    for (int h = 0; h < heads; ++h) {
        HeadVars hv;
        hv.query = t.parameter(rand_mat(rng, dim, hd, 0.3));
        hv.key = t.parameter(rand_mat(rng, dim, hd, 0.3));
        hv.value = t.parameter(rand_mat(rng, dim, hd, 0.3));
        p.heads.push_back(hv);
    }
    p.out_proj = t.parameter(rand_mat(rng, d_h, dim, 0.3));
    p.ln_gain = t.parameter(Matrix(1, dim, 1.0));
    p.ln_bias = t.parameter(Matrix(1, dim, 0.0));
    return p;
}

}  // namespace

TEST_CASE("locality prior: unit diagonal, symmetry, monotone distance decay") {
    for (double sigma : {6.0, 16.0}) {
        const LocalityPrior p = locality_prior(9, sigma);
        REQUIRE(p.g.rows == 9);
        REQUIRE(p.g.cols == 9);
        for (int i = 0; i < 9; ++i) {
            CHECK(p.g.at(i, i) == 1.0);
            for (int j = 0; j < 9; ++j) {
                CHECK(p.g.at(i, j) == p.g.at(j, i));
                // Independent scalar evaluation of the Gaussian decay.
                const double d = static_cast<double>(i - j);
                CHECK(p.g.at(i, j) ==
                      doctest::Approx(std::exp(-d * d / (2.0 * sigma))).epsilon(1e-15));
            }
        }
        for (int dist = 1; dist < 9; ++dist)
            CHECK(p.g.at(0, dist) < p.g.at(0, dist - 1));
    }
}

TEST_CASE("locality prior: sigma 16 at distance 4 gives exp(-0.5)") {
    const LocalityPrior p = locality_prior(8, 16.0);
    CHECK(p.g.at(0, 4) == doctest::Approx(0.6065306597126334).epsilon(1e-9));
    CHECK(p.g.at(5, 1) == doctest::Approx(0.6065306597126334).epsilon(1e-9));
}

TEST_CASE("locality prior: invalid lengths and widths are rejected") {
    CHECK_THROWS_AS(locality_prior(0, 16.0), ddl::ConfigError);
    CHECK_THROWS_AS(locality_prior(4, 0.0), ddl::ConfigError);
    CHECK_THROWS_AS(locality_prior(4, -1.0), ddl::ConfigError);
}

TEST_CASE("attention head: pre-prior rows are stochastic, post-prior adds G exactly") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const int T = 3 + static_cast<int>(rng.uniform_int(0, 7));
        Tape t;
        Var x = t.constant(rand_mat(rng, T, 6));
        HeadVars head;
        head.query = t.parameter(rand_mat(rng, 6, 4, 0.4));
        head.key = t.parameter(rand_mat(rng, 6, 4, 0.4));
        head.value = t.parameter(rand_mat(rng, 6, 4, 0.4));
        const LocalityPrior prior = locality_prior(T, rep % 2 == 0 ? 16.0 : 6.0);
        AttentionProbe probe;
        (void)attention_head(x, head, prior, &probe);
        REQUIRE(probe.pre_prior.rows == T);
        REQUIRE(probe.post_prior.rows == T);
        for (int i = 0; i < T; ++i) {
            double row = 0.0;
            for (int j = 0; j < T; ++j) {
                row += probe.pre_prior.at(i, j);
                // Recalibration is literal addition, no renormalization: the
                // same double sum the probe stores must reproduce bitwise.
                const double expected = probe.pre_prior.at(i, j) + prior.g.at(i, j);
                CHECK(probe.post_prior.at(i, j) == expected);
            }
            CHECK(std::fabs(row - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("attention head: post-prior row sums equal 1 + sum_j G_ij") {
    Rng rng(32);
    const int T = 7;
    Tape t;
    Var x = t.constant(rand_mat(rng, T, 5));
    HeadVars head;
    head.query = t.parameter(rand_mat(rng, 5, 5, 0.5));
    head.key = t.parameter(rand_mat(rng, 5, 5, 0.5));
    head.value = t.parameter(rand_mat(rng, 5, 5, 0.5));
    const LocalityPrior prior = locality_prior(T, 6.0);
    AttentionProbe probe;
    (void)attention_head(x, head, prior, &probe);
    for (int i = 0; i < T; ++i) {
        double got = 0.0, g_sum = 0.0;
        for (int j = 0; j < T; ++j) {
            got += probe.post_prior.at(i, j);
            g_sum += std::exp(-static_cast<double>((i - j) * (i - j)) / (2.0 * 6.0));
        }
        CHECK(got == doctest::Approx(1.0 + g_sum).epsilon(1e-9));
    }
}

TEST_CASE("attention head: a single snippet attends to itself with doubled weight") {
    // T = 1: softmax of a 1x1 is [[1]], the prior diagonal is 1, so the
    // recalibrated map is [[2]] and the head output is 2 * x * W_v.
    Tape t;
    Var x = t.constant(Matrix::from({{0.5, -1.0, 2.0}}));
    HeadVars head;
    Rng rng(33);
    head.query = t.parameter(rand_mat(rng, 3, 2));
    head.key = t.parameter(rand_mat(rng, 3, 2));
    head.value = t.parameter(rand_mat(rng, 3, 2));
    AttentionProbe probe;
    Var out = attention_head(x, head, locality_prior(1, 16.0), &probe);
    CHECK(probe.pre_prior.at(0, 0) == 1.0);
    CHECK(probe.post_prior.at(0, 0) == 2.0);
    const Matrix expected = ddl::scale(ddl::matmul(t.value(x), t.value(head.value)), 2.0);
    const Matrix& got = t.value(out);
    for (int j = 0; j < 2; ++j)
        CHECK(got.at(0, j) == doctest::Approx(expected.at(0, j)).epsilon(1e-15));
}

TEST_CASE("lanet_forward: zero output projection reduces to layer_norm of the input") {
    Rng rng(34);
    const int T = 5, D = 6;
    Tape t;
    const Matrix xm = rand_mat(rng, T, D);
    Var x = t.constant(xm);
    LaNetVars p = random_lanet(t, rng, D, 2, 4);
    p.out_proj = t.parameter(Matrix(4, D, 0.0));
    const Matrix got = t.value(lanet_forward(x, p, locality_prior(T, 16.0)));
    // Independent row standardization with eps 1e-5.
    for (int i = 0; i < T; ++i) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < D; ++j) mean += xm.at(i, j);
        mean /= D;
        for (int j = 0; j < D; ++j) var += (xm.at(i, j) - mean) * (xm.at(i, j) - mean);
        var /= D;
        for (int j = 0; j < D; ++j) {
            const double expected = (xm.at(i, j) - mean) / std::sqrt(var + 1e-5);
            CHECK(got.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("lanet_forward: equivariant under a shared permutation of rows and prior") {
    Rng rng(35);
    const int T = 6, D = 5;
    const Matrix xm = rand_mat(rng, T, D);
    std::vector<int> perm(T);
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffler(99);
    shuffler.shuffle(perm);

    const LocalityPrior prior = locality_prior(T, 6.0);
    LocalityPrior permuted_prior;
    permuted_prior.sigma = prior.sigma;
    permuted_prior.g = Matrix(T, T);
    Matrix xp(T, D);
    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < D; ++j) xp.at(i, j) = xm.at(perm[i], j);
        for (int j = 0; j < T; ++j) permuted_prior.g.at(i, j) = prior.g.at(perm[i], perm[j]);
    }

    Tape t1, t2;
    Rng w1(40), w2(40);
    LaNetVars p1 = random_lanet(t1, w1, D, 2, 4);
    LaNetVars p2 = random_lanet(t2, w2, D, 2, 4);
    const Matrix y1 = t1.value(lanet_forward(t1.constant(xm), p1, prior));
    const Matrix y2 = t2.value(lanet_forward(t2.constant(xp), p2, permuted_prior));
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < D; ++j)
            CHECK(y2.at(i, j) == doctest::Approx(y1.at(perm[i], j)).epsilon(1e-10));
}

TEST_CASE("lanet_forward: gradients match central differences on T=6 D=8 2-head d_h=8") {
    Rng rng(36);
    const int T = 6, D = 8, heads = 2, d_h = 8, hd = d_h / heads;
    const Matrix xm = rand_mat(rng, T, D, 0.7);
    std::vector<Matrix> inits;
    for (int h = 0; h < heads; ++h) {
        inits.push_back(rand_mat(rng, D, hd, 0.4));  // query
        inits.push_back(rand_mat(rng, D, hd, 0.4));  // key
        inits.push_back(rand_mat(rng, D, hd, 0.4));  // value
    }
    inits.push_back(rand_mat(rng, d_h, D, 0.4));  // out_proj
    inits.push_back(ddl::testutil::rand_mat_uniform(rng, 1, D, 0.5, 1.5));  // gain
    inits.push_back(rand_mat(rng, 1, D, 0.2));                              // bias
    const Matrix readout = rand_mat(rng, T, D);

    const double err = ddl::testutil::fd_max_rel_err(
        inits, [&](Tape& t, const std::vector<Var>& v) {
            LaNetVars p;
            for (int h = 0; h < heads; ++h)
                p.heads.push_back(HeadVars{v[3 * h], v[3 * h + 1], v[3 * h + 2]});
            p.out_proj = v[3 * heads];
            p.ln_gain = v[3 * heads + 1];
            p.ln_bias = v[3 * heads + 2];
            Var y = lanet_forward(t.constant(xm), p, locality_prior(T, 16.0));
            return ddl::sum_all(ddl::mul(y, t.constant(readout)));
        });
    CHECK(err < 1e-5);
}

TEST_CASE("lanet_forward: shape and configuration violations are rejected") {
    Rng rng(37);
    Tape t;
    Var x = t.constant(rand_mat(rng, 5, 6));
    LaNetVars p = random_lanet(t, rng, 6, 2, 4);
    CHECK_THROWS_AS((void)lanet_forward(x, p, locality_prior(4, 16.0)), ddl::ShapeError);
    LaNetVars empty;
    empty.out_proj = p.out_proj;
    empty.ln_gain = p.ln_gain;
    empty.ln_bias = p.ln_bias;
    CHECK_THROWS_AS((void)lanet_forward(x, empty, locality_prior(5, 16.0)), ddl::ConfigError);
}
