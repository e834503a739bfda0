#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

// Minimal reverse-mode autodiff over dense double matrices. Graphs are
// built eagerly; backward() walks the tape once from a scalar loss.

namespace moeprune::ag {

using Mat = Eigen::MatrixXd;

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;  // adds this node's grad into parents

    explicit Node(Mat v) : value(std::move(v)) {}

    void accumulate(const Mat& g) {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
        grad += g;
    }
};

// While a guard is alive, new ops produce plain values without tape entries.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

Var constant(Mat v);
Var parameter(Mat v);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var add_rowvec(const Var& a, const Var& bias);      // a: T x d, bias: 1 x d
Var add_const(const Var& a, const Mat& c);          // no grad through c
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);          // a * b^T
Var cwise_mul(const Var& a, const Var& b);
Var cwise_mul_const(const Var& a, const Mat& c);
Var cwise_div(const Var& a, const Var& b);
Var relu(const Var& a);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-6);
Var gather_rows(const Var& a, const std::vector<int>& idx);
Var scatter_rows(const Var& a, const std::vector<int>& idx, int total_rows);
Var gather_cols_per_row(const Var& a, const std::vector<int>& idx);  // -> T x 1
Var slice_cols(const Var& a, int start, int n);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var colwise_scale(const Var& a, const Var& w);      // row t of a scaled by w(t, 0)
Var sum_all(const Var& a);                          // -> 1 x 1

// Backprop from a 1x1 loss node. Gradients accumulate into .grad fields.
void backward(const Var& loss);

}  // namespace moeprune::ag
