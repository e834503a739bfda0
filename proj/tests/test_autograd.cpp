#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "moeprune/autograd.hpp"

using namespace moeprune;
using ag::Mat;
using ag::Var;

namespace {

// Central finite differences on every entry of every input.
void check_grads(std::vector<Var> inputs, const std::function<Var()>& forward,
                 double step = 1e-5, double tol = 1e-6) {
    for (auto& in : inputs) in->grad = Mat();
    Var loss = forward();
    REQUIRE(loss->value.size() == 1);
    ag::backward(loss);
    for (auto& in : inputs) {
        REQUIRE(in->grad.size() == in->value.size());
        for (int r = 0; r < in->value.rows(); ++r) {
            for (int c = 0; c < in->value.cols(); ++c) {
                double saved = in->value(r, c);
                in->value(r, c) = saved + step;
                double up = forward()->value(0, 0);
                in->value(r, c) = saved - step;
                double down = forward()->value(0, 0);
                in->value(r, c) = saved;
                double fd = (up - down) / (2 * step);
                double an = in->grad(r, c);
                double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
                CHECK(std::abs(fd - an) / denom < tol);
            }
        }
    }
}

Mat randn(int r, int c, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    Mat m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

}  // namespace

TEST_CASE("gradients of arithmetic ops") {
    Var a = ag::parameter(randn(3, 4, 1));
    Var b = ag::parameter(randn(3, 4, 2));
    check_grads({a, b}, [&] { return ag::sum_all(ag::cwise_mul(ag::add(a, b), ag::sub(a, b))); });
}

TEST_CASE("gradients of matmul chains") {
    Var a = ag::parameter(randn(2, 3, 3));
    Var b = ag::parameter(randn(3, 4, 4));
    Var c = ag::parameter(randn(2, 4, 5));
    check_grads({a, b, c},
                [&] { return ag::sum_all(ag::cwise_mul(ag::matmul(a, b), c)); });
    Var d = ag::parameter(randn(4, 3, 6));
    check_grads({a, d, c},
                [&] { return ag::sum_all(ag::cwise_mul(ag::matmul_nt(a, d), c)); });
    check_grads({a}, [&] { return ag::sum_all(ag::matmul_nt(a, a)); });
}

TEST_CASE("gradients of relu and division") {
    Var a = ag::parameter(randn(3, 3, 6).array().abs().matrix() + Mat::Constant(3, 3, 0.5));
    Var b = ag::parameter(randn(3, 3, 7).array().abs().matrix() + Mat::Constant(3, 3, 0.5));
    check_grads({a, b}, [&] { return ag::sum_all(ag::cwise_div(ag::relu(a), b)); });
}

TEST_CASE("gradients of softmax and log-softmax") {
    Var a = ag::parameter(randn(4, 5, 8));
    Mat w = randn(4, 5, 9);
    check_grads({a}, [&] { return ag::sum_all(ag::cwise_mul_const(ag::softmax_rows(a), w)); });
    check_grads({a},
                [&] { return ag::sum_all(ag::cwise_mul_const(ag::log_softmax_rows(a), w)); });
}

TEST_CASE("softmax rows sum to one") {
    Var a = ag::constant(randn(6, 7, 10));
    Mat p = ag::softmax_rows(a)->value;
    for (int r = 0; r < p.rows(); ++r) CHECK(p.row(r).sum() == doctest::Approx(1.0));
    CHECK(p.minCoeff() > 0.0);
}

TEST_CASE("gradients of layer norm") {
    Var a = ag::parameter(randn(3, 6, 11));
    Var g = ag::parameter(randn(1, 6, 12));
    Var b = ag::parameter(randn(1, 6, 13));
    Mat w = randn(3, 6, 14);
    check_grads({a, g, b}, [&] {
        return ag::sum_all(ag::cwise_mul_const(ag::layer_norm_rows(a, g, b), w));
    });
}

TEST_CASE("gradients of gather/scatter/slice/concat") {
    Var a = ag::parameter(randn(5, 4, 15));
    std::vector<int> idx = {3, 0, 3};
    Mat w = randn(3, 4, 16);
    check_grads({a}, [&] {
        return ag::sum_all(ag::cwise_mul_const(ag::gather_rows(a, idx), w));
    });
    Mat w5 = randn(5, 4, 17);
    check_grads({a}, [&] {
        return ag::sum_all(
            ag::cwise_mul_const(ag::scatter_rows(ag::gather_rows(a, {1, 2}), {0, 4}, 5), w5));
    });
    check_grads({a}, [&] {
        return ag::sum_all(ag::concat_cols({ag::slice_cols(a, 0, 2), ag::slice_cols(a, 2, 2)}));
    });
    Var b = ag::parameter(randn(2, 4, 18));
    check_grads({a, b}, [&] {
        return ag::sum_all(ag::cwise_mul(ag::concat_rows({a, b}),
                                         ag::concat_rows({a, b})));
    });
}

TEST_CASE("gradients of colwise_scale and gather_cols_per_row") {
    Var a = ag::parameter(randn(4, 3, 19));
    Var s = ag::parameter(randn(4, 1, 20));
    check_grads({a, s}, [&] { return ag::sum_all(ag::colwise_scale(a, s)); });
    std::vector<int> cols = {2, 0, 1, 2};
    check_grads({a}, [&] {
        return ag::sum_all(ag::cwise_mul(ag::gather_cols_per_row(a, cols),
                                         ag::gather_cols_per_row(a, cols)));
    });
}

TEST_CASE("grad accumulates across shared subexpressions") {
    Var a = ag::parameter(Mat::Constant(1, 1, 3.0));
    Var y = ag::cwise_mul(a, a);  // a^2, da = 2a = 6
    ag::backward(ag::sum_all(y));
    CHECK(a->grad(0, 0) == doctest::Approx(6.0));
}

TEST_CASE("NoGradGuard suppresses the tape") {
    Var a = ag::parameter(randn(2, 2, 21));
    {
        ag::NoGradGuard guard;
        CHECK_FALSE(ag::grad_enabled());
        Var y = ag::matmul(a, a);
        CHECK(y->parents.empty());
        CHECK_FALSE(y->requires_grad);
    }
    CHECK(ag::grad_enabled());
}
