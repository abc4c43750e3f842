#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cobso/errors.hpp"
#include "cobso/rng.hpp"

namespace cobso::ad {

using Mat = Eigen::MatrixXd;

/// Persistent trainable tensor: survives tape resets, accumulates gradients
/// across backward passes until zero_grad.
struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param() = default;
    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
};

class Tape;

/// Handle to a node on the tape.
struct Var {
    int id = -1;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, which is already a topological order, so backward is a single
/// reverse sweep.
class Tape {
public:
    struct Node {
        Mat value;
        Mat grad;
        bool needs_grad = false;
        bool grad_alloc = false;
        // receives this node's gradient and its own forward value
        std::function<void(Tape&, const Mat&, const Mat&)> backward;
    };

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    const Mat& value(Var v) const { return nodes_[size_t(v.id)].value; }
    bool needs(Var v) const { return nodes_[size_t(v.id)].needs_grad; }
    const Mat& grad(Var v) const { return nodes_[size_t(v.id)].grad; }
    int rows(Var v) const { return int(nodes_[size_t(v.id)].value.rows()); }
    int cols(Var v) const { return int(nodes_[size_t(v.id)].value.cols()); }

    Var constant(Mat m) {
        return push(std::move(m), false, nullptr);
    }

    Var leaf(Param& p) {
        Param* ptr = &p;
        return push(p.value, true, [ptr](Tape&, const Mat& g, const Mat&) { ptr->grad += g; });
    }

    Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&, const Mat&)> backward) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{int(nodes_.size()) - 1};
    }

    void accumulate(Var v, const Mat& g) {
        Node& n = nodes_[size_t(v.id)];
        if (!n.needs_grad) return;
        if (!n.grad_alloc) {
            n.grad = g;
            n.grad_alloc = true;
        } else {
            n.grad += g;
        }
    }

    /// Backpropagate from a scalar loss node through the whole tape.
    void backward(Var loss) {
        Node& top = nodes_.at(size_t(loss.id));
        if (top.value.rows() != 1 || top.value.cols() != 1)
            throw ContractError("backward: loss must be a 1x1 scalar node");
        accumulate(loss, Mat::Ones(1, 1));
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (!n.needs_grad || !n.grad_alloc || !n.backward) continue;
            n.backward(*this, n.grad, n.value);
        }
    }

private:
    std::vector<Node> nodes_;
};

namespace detail {
inline void check_same_shape(const Tape& t, Var a, Var b, const char* op) {
    if (t.rows(a) != t.rows(b) || t.cols(a) != t.cols(b))
        throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(t.rows(a)) +
                            "x" + std::to_string(t.cols(a)) + " vs " + std::to_string(t.rows(b)) +
                            "x" + std::to_string(t.cols(b)) + ")");
}
} // namespace detail

inline Var matmul(Tape& t, Var a, Var b) {
    if (t.cols(a) != t.rows(b))
        throw ContractError("matmul: inner dimensions differ");
    Mat out = t.value(a) * t.value(b);
    return t.push(std::move(out), t.needs(a) || t.needs(b), [a, b](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g * t.value(b).transpose());
        t.accumulate(b, t.value(a).transpose() * g);
    });
}

inline Var add(Tape& t, Var a, Var b) {
    detail::check_same_shape(t, a, b, "add");
    return t.push(t.value(a) + t.value(b), t.needs(a) || t.needs(b), [a, b](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    detail::check_same_shape(t, a, b, "sub");
    return t.push(t.value(a) - t.value(b), t.needs(a) || t.needs(b), [a, b](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

/// Add a 1xN bias row to every row of a.
inline Var add_bias(Tape& t, Var a, Var bias) {
    if (t.rows(bias) != 1 || t.cols(bias) != t.cols(a))
        throw ContractError("add_bias: bias must be 1x(cols of input)");
    Mat out = t.value(a).rowwise() + t.value(bias).row(0);
    return t.push(std::move(out), t.needs(a) || t.needs(bias), [a, bias](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g);
        t.accumulate(bias, g.colwise().sum());
    });
}

inline Var hadamard(Tape& t, Var a, Var b) {
    detail::check_same_shape(t, a, b, "hadamard");
    return t.push(t.value(a).cwiseProduct(t.value(b)), t.needs(a) || t.needs(b), [a, b](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g.cwiseProduct(t.value(b)));
        t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
}

inline Var scale(Tape& t, Var a, double s) {
    return t.push(t.value(a) * s, t.needs(a),
                  [a, s](Tape& t, const Mat& g, const Mat&) { t.accumulate(a, g * s); });
}

inline Var add_scalar(Tape& t, Var a, double s) {
    Mat out = (t.value(a).array() + s).matrix();
    return t.push(std::move(out), t.needs(a),
                  [a](Tape& t, const Mat& g, const Mat&) { t.accumulate(a, g); });
}

inline Var tanh_(Tape& t, Var a) {
    Mat out = t.value(a).array().tanh().matrix();
    return t.push(std::move(out), t.needs(a), [a](Tape& t, const Mat& g, const Mat& y) {
        t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

inline Var sigmoid(Tape& t, Var a) {
    Mat out = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
    return t.push(std::move(out), t.needs(a), [a](Tape& t, const Mat& g, const Mat& y) {
        t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
    });
}

inline Var exp_(Tape& t, Var a) {
    Mat out = t.value(a).array().exp().matrix();
    return t.push(std::move(out), t.needs(a), [a](Tape& t, const Mat& g, const Mat& y) {
        t.accumulate(a, g.cwiseProduct(y));
    });
}

inline Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

inline Var square(Tape& t, Var a) { return hadamard(t, a, a); }

inline Var concat_cols(Tape& t, Var a, Var b) {
    if (t.rows(a) != t.rows(b))
        throw ContractError("concat_cols: row counts differ");
    Mat out(t.rows(a), t.cols(a) + t.cols(b));
    out << t.value(a), t.value(b);
    int ca = t.cols(a);
    return t.push(std::move(out), t.needs(a) || t.needs(b), [a, b, ca](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, g.leftCols(ca));
        t.accumulate(b, g.rightCols(g.cols() - ca));
    });
}

inline Var slice_cols(Tape& t, Var a, int begin, int len) {
    if (begin < 0 || len < 0 || begin + len > t.cols(a))
        throw ContractError("slice_cols: range out of bounds");
    Mat out = t.value(a).middleCols(begin, len);
    int cols = t.cols(a);
    return t.push(std::move(out), t.needs(a), [a, begin, len, cols](Tape& t, const Mat& g, const Mat&) {
        Mat full = Mat::Zero(g.rows(), cols);
        full.middleCols(begin, len) = g;
        t.accumulate(a, full);
    });
}

/// out.row(i) = a.row(index[i]); backward scatter-adds.
inline Var gather_rows(Tape& t, Var a, const std::vector<int>& index) {
    Mat out(int(index.size()), t.cols(a));
    for (size_t i = 0; i < index.size(); ++i) out.row(int(i)) = t.value(a).row(index[i]);
    int rows = t.rows(a);
    auto idx = index;
    return t.push(std::move(out), t.needs(a), [a, idx, rows](Tape& t, const Mat& g, const Mat&) {
        Mat full = Mat::Zero(rows, g.cols());
        for (size_t i = 0; i < idx.size(); ++i) full.row(idx[i]) += g.row(int(i));
        t.accumulate(a, full);
    });
}

/// out.row(group[i]) += a.row(i); the adjoint of gather_rows.
inline Var scatter_sum_rows(Tape& t, Var a, const std::vector<int>& group, int n_out) {
    Mat out = Mat::Zero(n_out, t.cols(a));
    for (size_t i = 0; i < group.size(); ++i) out.row(group[i]) += t.value(a).row(int(i));
    auto idx = group;
    return t.push(std::move(out), t.needs(a), [a, idx](Tape& t, const Mat& g, const Mat&) {
        Mat full(int(idx.size()), g.cols());
        for (size_t i = 0; i < idx.size(); ++i) full.row(int(i)) = g.row(idx[i]);
        t.accumulate(a, full);
    });
}

/// Row i multiplied by weights[i]; used for masking losses to a subset of rows.
inline Var scale_rows(Tape& t, Var a, const std::vector<double>& weights) {
    if (int(weights.size()) != t.rows(a))
        throw ContractError("scale_rows: weight count must match rows");
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), long(weights.size()));
    Mat out = w.asDiagonal() * t.value(a);
    return t.push(std::move(out), t.needs(a), [a, w](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, w.asDiagonal() * g);
    });
}

inline Var sum(Tape& t, Var a) {
    Mat out(1, 1);
    out(0, 0) = t.value(a).sum();
    return t.push(std::move(out), t.needs(a), [a](Tape& t, const Mat& g, const Mat&) {
        t.accumulate(a, Mat::Constant(t.rows(a), t.cols(a), g(0, 0)));
    });
}

// ---- Gaussian heads -------------------------------------------------------

/// Diagonal Gaussian over each row: mu and log_sigma of identical shape.
struct GaussianHead {
    Var mu;
    Var log_sigma;
};

/// Reparameterized sample mu + exp(log_sigma) * eps with eps ~ N(0, I) drawn
/// from the given generator; differentiable w.r.t. both head tensors.
inline Var reparam_sample(Tape& t, const GaussianHead& head, Rng& rng) {
    detail::check_same_shape(t, head.mu, head.log_sigma, "reparam_sample");
    Mat eps(t.rows(head.mu), t.cols(head.mu));
    for (long i = 0; i < eps.rows(); ++i)
        for (long j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
    Var e = t.constant(std::move(eps));
    return add(t, head.mu, hadamard(t, exp_(t, head.log_sigma), e));
}

/// Closed-form KL(q || p) between diagonal Gaussians, summed over all
/// dimensions (optionally per-row weighted). Always >= 0.
inline Var kl_diag_gaussians(Tape& t, const GaussianHead& q, const GaussianHead& p,
                             const std::vector<double>* row_weights = nullptr) {
    detail::check_same_shape(t, q.mu, p.mu, "kl_diag_gaussians");
    detail::check_same_shape(t, q.log_sigma, p.log_sigma, "kl_diag_gaussians");
    // log sp - log sq + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2
    Var dlog = sub(t, p.log_sigma, q.log_sigma);
    Var var_q = exp_(t, scale(t, q.log_sigma, 2.0));
    Var inv_var_p = exp_(t, scale(t, p.log_sigma, -2.0));
    Var dmu2 = square(t, sub(t, q.mu, p.mu));
    Var frac = scale(t, hadamard(t, add(t, var_q, dmu2), inv_var_p), 0.5);
    Var kl = add_scalar(t, add(t, dlog, frac), -0.5);
    if (row_weights) kl = scale_rows(t, kl, *row_weights);
    return sum(t, kl);
}

/// Negative log-likelihood of `target` under the diagonal Gaussian head,
/// summed over dimensions (optionally per-row weighted).
inline Var gaussian_nll(Tape& t, const GaussianHead& head, const Mat& target,
                        const std::vector<double>* row_weights = nullptr) {
    if (target.rows() != t.rows(head.mu) || target.cols() != t.cols(head.mu))
        throw ContractError("gaussian_nll: target shape mismatch");
    constexpr double half_log_2pi = 0.91893853320467274178;
    Var diff = sub(t, t.constant(target), head.mu);
    Var inv_sigma = exp_(t, neg(t, head.log_sigma));
    Var z2 = scale(t, square(t, hadamard(t, diff, inv_sigma)), 0.5);
    Var nll = add_scalar(t, add(t, z2, head.log_sigma), half_log_2pi);
    if (row_weights) nll = scale_rows(t, nll, *row_weights);
    return sum(t, nll);
}

// ---- Optimizer ------------------------------------------------------------

/// Adam with bias correction. Holds first/second moment state per parameter.
class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Param*>& params) {
        if (m_.empty()) {
            for (Param* p : params) {
                m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
                v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
            }
        }
        if (m_.size() != params.size())
            throw ContractError("Adam: parameter set changed between steps");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, double(t_));
        const double bc2 = 1.0 - std::pow(beta2_, double(t_));
        for (size_t i = 0; i < params.size(); ++i) {
            Param& p = *params[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
            Mat mhat = m_[i] / bc1;
            Mat vhat = v_[i] / bc2;
            p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
        }
    }

    double learning_rate() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

} // namespace cobso::ad
