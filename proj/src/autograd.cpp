#include "moeprune/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace moeprune::ag {

namespace {

thread_local int no_grad_depth = 0;

Var make(Mat v) { return std::make_shared<Node>(std::move(v)); }

bool tracked(const Var& v) { return v->requires_grad; }

Var unary(const Var& a, Mat value, std::function<void(Node&)> bp) {
    Var out = make(std::move(value));
    if (grad_enabled() && tracked(a)) {
        out->requires_grad = true;
        out->parents = {a};
        out->backprop = std::move(bp);
    }
    return out;
}

Var binary(const Var& a, const Var& b, Mat value, std::function<void(Node&)> bp) {
    Var out = make(std::move(value));
    if (grad_enabled() && (tracked(a) || tracked(b))) {
        out->requires_grad = true;
        out->parents = {a, b};
        out->backprop = std::move(bp);
    }
    return out;
}

}  // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

Var constant(Mat v) { return make(std::move(v)); }

Var parameter(Mat v) {
    Var p = make(std::move(v));
    p->requires_grad = true;
    return p;
}

Var add(const Var& a, const Var& b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw std::invalid_argument("add: shape mismatch");
    return binary(a, b, a->value + b->value, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw std::invalid_argument("sub: shape mismatch");
    return binary(a, b, a->value - b->value, [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
    });
}

Var add_rowvec(const Var& a, const Var& bias) {
    if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1 x cols(a)");
    Mat v = a->value.rowwise() + bias->value.row(0);
    return binary(a, bias, std::move(v), [](Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad.colwise().sum());
    });
}

Var add_const(const Var& a, const Mat& c) {
    if (a->value.rows() != c.rows() || a->value.cols() != c.cols())
        throw std::invalid_argument("add_const: shape mismatch");
    return unary(a, a->value + c, [](Node& n) { n.parents[0]->accumulate(n.grad); });
}

Var scale(const Var& a, double s) {
    return unary(a, a->value * s, [s](Node& n) { n.parents[0]->accumulate(n.grad * s); });
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    return binary(a, b, a->value * b->value, [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->accumulate(n.grad * n.parents[1]->value.transpose());
        if (n.parents[1]->requires_grad)
            n.parents[1]->accumulate(n.parents[0]->value.transpose() * n.grad);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols())
        throw std::invalid_argument("matmul_nt: inner dimension mismatch");
    return binary(a, b, a->value * b->value.transpose(), [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->accumulate(n.grad * n.parents[1]->value);
        if (n.parents[1]->requires_grad)
            n.parents[1]->accumulate(n.grad.transpose() * n.parents[0]->value);
    });
}

Var cwise_mul(const Var& a, const Var& b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw std::invalid_argument("cwise_mul: shape mismatch");
    return binary(a, b, a->value.cwiseProduct(b->value), [](Node& n) {
        if (n.parents[0]->requires_grad)
            n.parents[0]->accumulate(n.grad.cwiseProduct(n.parents[1]->value));
        if (n.parents[1]->requires_grad)
            n.parents[1]->accumulate(n.grad.cwiseProduct(n.parents[0]->value));
    });
}

Var cwise_mul_const(const Var& a, const Mat& c) {
    if (a->value.rows() != c.rows() || a->value.cols() != c.cols())
        throw std::invalid_argument("cwise_mul_const: shape mismatch");
    Mat cc = c;
    return unary(a, a->value.cwiseProduct(c), [cc](Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(cc));
    });
}

Var cwise_div(const Var& a, const Var& b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
        throw std::invalid_argument("cwise_div: shape mismatch");
    return binary(a, b, a->value.cwiseQuotient(b->value), [](Node& n) {
        const Mat& bv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
            n.parents[0]->accumulate(n.grad.cwiseQuotient(bv));
        if (n.parents[1]->requires_grad)
            n.parents[1]->accumulate(
                -n.grad.cwiseProduct(n.value).cwiseQuotient(bv));
    });
}

Var relu(const Var& a) {
    return unary(a, a->value.cwiseMax(0.0), [](Node& n) {
        Mat mask = (n.parents[0]->value.array() > 0.0).cast<double>();
        n.parents[0]->accumulate(n.grad.cwiseProduct(mask));
    });
}

Var softmax_rows(const Var& a) {
    Mat v = a->value;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        double m = v.row(r).maxCoeff();
        v.row(r) = (v.row(r).array() - m).exp();
        v.row(r) /= v.row(r).sum();
    }
    Var out = unary(a, std::move(v), [](Node& n) {
        const Mat& p = n.value;
        Mat gx(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            double dot = n.grad.row(r).dot(p.row(r));
            gx.row(r) = p.row(r).cwiseProduct((n.grad.row(r).array() - dot).matrix());
        }
        n.parents[0]->accumulate(gx);
    });
    return out;
}

Var log_softmax_rows(const Var& a) {
    Mat v = a->value;
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        double m = v.row(r).maxCoeff();
        double lse = m + std::log((v.row(r).array() - m).exp().sum());
        v.row(r).array() -= lse;
    }
    return unary(a, std::move(v), [](Node& n) {
        Mat p = n.value.array().exp();
        Mat gx(p.rows(), p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            double gsum = n.grad.row(r).sum();
            gx.row(r) = n.grad.row(r) - gsum * p.row(r);
        }
        n.parents[0]->accumulate(gx);
    });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
    const Eigen::Index d = a->value.cols();
    if (gain->value.cols() != d || bias->value.cols() != d)
        throw std::invalid_argument("layer_norm_rows: gain/bias must be 1 x d");
    Mat xhat(a->value.rows(), d);
    Eigen::VectorXd inv_sigma(a->value.rows());
    for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
        double mu = a->value.row(r).mean();
        double var = (a->value.row(r).array() - mu).square().mean();
        double is = 1.0 / std::sqrt(var + eps);
        inv_sigma(r) = is;
        xhat.row(r) = (a->value.row(r).array() - mu) * is;
    }
    Mat y = (xhat.array().rowwise() * gain->value.row(0).array()).rowwise() +
            bias->value.row(0).array();
    Var out = std::make_shared<Node>(std::move(y));
    if (grad_enabled() && (a->requires_grad || gain->requires_grad || bias->requires_grad)) {
        out->requires_grad = true;
        out->parents = {a, gain, bias};
        Mat xh = xhat;
        Eigen::VectorXd is = inv_sigma;
        out->backprop = [xh, is](Node& n) {
            const Eigen::Index d = xh.cols();
            if (n.parents[2]->requires_grad)
                n.parents[2]->accumulate(n.grad.colwise().sum());
            if (n.parents[1]->requires_grad)
                n.parents[1]->accumulate(n.grad.cwiseProduct(xh).colwise().sum());
            if (n.parents[0]->requires_grad) {
                Mat gx(xh.rows(), d);
                const auto g = n.parents[1]->value.row(0);
                for (Eigen::Index r = 0; r < xh.rows(); ++r) {
                    Eigen::RowVectorXd gy = n.grad.row(r).cwiseProduct(g);
                    double m1 = gy.mean();
                    double m2 = gy.cwiseProduct(xh.row(r)).mean();
                    gx.row(r) = (gy.array() - m1 - xh.row(r).array() * m2) * is(r);
                }
                n.parents[0]->accumulate(gx);
            }
        };
    }
    return out;
}

Var gather_rows(const Var& a, const std::vector<int>& idx) {
    Mat v(static_cast<Eigen::Index>(idx.size()), a->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= a->value.rows())
            throw std::out_of_range("gather_rows: index out of range");
        v.row(static_cast<Eigen::Index>(i)) = a->value.row(idx[i]);
    }
    std::vector<int> ix = idx;
    return unary(a, std::move(v), [ix](Node& n) {
        Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        for (size_t i = 0; i < ix.size(); ++i)
            g.row(ix[i]) += n.grad.row(static_cast<Eigen::Index>(i));
        n.parents[0]->accumulate(g);
    });
}

Var scatter_rows(const Var& a, const std::vector<int>& idx, int total_rows) {
    if (static_cast<Eigen::Index>(idx.size()) != a->value.rows())
        throw std::invalid_argument("scatter_rows: index count must match rows");
    Mat v = Mat::Zero(total_rows, a->value.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= total_rows)
            throw std::out_of_range("scatter_rows: index out of range");
        v.row(idx[i]) = a->value.row(static_cast<Eigen::Index>(i));
    }
    std::vector<int> ix = idx;
    return unary(a, std::move(v), [ix](Node& n) {
        Mat g(static_cast<Eigen::Index>(ix.size()), n.value.cols());
        for (size_t i = 0; i < ix.size(); ++i)
            g.row(static_cast<Eigen::Index>(i)) = n.grad.row(ix[i]);
        n.parents[0]->accumulate(g);
    });
}

Var gather_cols_per_row(const Var& a, const std::vector<int>& idx) {
    if (static_cast<Eigen::Index>(idx.size()) != a->value.rows())
        throw std::invalid_argument("gather_cols_per_row: one index per row required");
    Mat v(a->value.rows(), 1);
    for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
        if (idx[r] < 0 || idx[r] >= a->value.cols())
            throw std::out_of_range("gather_cols_per_row: index out of range");
        v(r, 0) = a->value(r, idx[r]);
    }
    std::vector<int> ix = idx;
    return unary(a, std::move(v), [ix](Node& n) {
        Mat g = Mat::Zero(n.parents[0]->value.rows(), n.parents[0]->value.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, ix[r]) = n.grad(r, 0);
        n.parents[0]->accumulate(g);
    });
}

Var slice_cols(const Var& a, int start, int n) {
    if (start < 0 || n < 0 || start + n > a->value.cols())
        throw std::out_of_range("slice_cols: range out of bounds");
    return unary(a, a->value.middleCols(start, n), [start, n](Node& nd) {
        Mat g = Mat::Zero(nd.parents[0]->value.rows(), nd.parents[0]->value.cols());
        g.middleCols(start, n) = nd.grad;
        nd.parents[0]->accumulate(g);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    Eigen::Index rows = parts[0]->value.rows(), cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->value.cols();
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    bool any = false;
    for (const auto& p : parts) {
        v.middleCols(at, p->value.cols()) = p->value;
        at += p->value.cols();
        any = any || p->requires_grad;
    }
    Var out = std::make_shared<Node>(std::move(v));
    if (grad_enabled() && any) {
        out->requires_grad = true;
        out->parents = parts;
        out->backprop = [](Node& n) {
            Eigen::Index at = 0;
            for (auto& p : n.parents) {
                if (p->requires_grad) p->accumulate(n.grad.middleCols(at, p->value.cols()));
                at += p->value.cols();
            }
        };
    }
    return out;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    Eigen::Index cols = parts[0]->value.cols(), rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
        rows += p->value.rows();
    }
    Mat v(rows, cols);
    Eigen::Index at = 0;
    bool any = false;
    for (const auto& p : parts) {
        v.middleRows(at, p->value.rows()) = p->value;
        at += p->value.rows();
        any = any || p->requires_grad;
    }
    Var out = std::make_shared<Node>(std::move(v));
    if (grad_enabled() && any) {
        out->requires_grad = true;
        out->parents = parts;
        out->backprop = [](Node& n) {
            Eigen::Index at = 0;
            for (auto& p : n.parents) {
                if (p->requires_grad) p->accumulate(n.grad.middleRows(at, p->value.rows()));
                at += p->value.rows();
            }
        };
    }
    return out;
}

Var colwise_scale(const Var& a, const Var& w) {
    if (w->value.cols() != 1 || w->value.rows() != a->value.rows())
        throw std::invalid_argument("colwise_scale: w must be rows(a) x 1");
    Mat v = a->value.array().colwise() * w->value.col(0).array();
    return binary(a, w, std::move(v), [](Node& n) {
        const Mat& av = n.parents[0]->value;
        const Mat& wv = n.parents[1]->value;
        if (n.parents[0]->requires_grad)
            n.parents[0]->accumulate(n.grad.array().colwise() * wv.col(0).array());
        if (n.parents[1]->requires_grad)
            n.parents[1]->accumulate(n.grad.cwiseProduct(av).rowwise().sum());
    });
}

Var sum_all(const Var& a) {
    Mat v(1, 1);
    v(0, 0) = a->value.sum();
    return unary(a, std::move(v), [](Node& n) {
        n.parents[0]->accumulate(Mat::Constant(n.parents[0]->value.rows(),
                                               n.parents[0]->value.cols(), n.grad(0, 0)));
    });
}

void backward(const Var& loss) {
    if (loss->value.rows() != 1 || loss->value.cols() != 1)
        throw std::invalid_argument("backward: loss must be scalar");
    if (!loss->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->accumulate(Mat::Constant(1, 1, 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad.size() != 0) n->backprop(*n);
    }
}

}  // namespace moeprune::ag
