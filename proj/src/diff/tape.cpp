#include "dawn/diff/tape.hpp"

#include "dawn/errors.hpp"

#include <cmath>
#include <string>

namespace dawn::diff {

const char* op_name(OpTag tag) {
  switch (tag) {
    case OpTag::Constant: return "constant";
    case OpTag::Input: return "input";
    case OpTag::Param: return "param";
    case OpTag::MatMul: return "matmul";
    case OpTag::AddBias: return "add_bias";
    case OpTag::Add: return "add";
    case OpTag::Sub: return "sub";
    case OpTag::Mul: return "mul";
    case OpTag::Scale: return "scale";
    case OpTag::AddScalar: return "add_scalar";
    case OpTag::Relu: return "relu";
    case OpTag::Tanh: return "tanh";
    case OpTag::Exp: return "exp";
    case OpTag::Log: return "log";
    case OpTag::Square: return "square";
    case OpTag::Clamp: return "clamp";
    case OpTag::Minimum: return "minimum";
    case OpTag::ConcatCols: return "concat_cols";
    case OpTag::SliceCols: return "slice_cols";
    case OpTag::SumRows: return "sum_rows";
    case OpTag::MeanRows: return "mean_rows";
    case OpTag::MeanAll: return "mean_all";
    case OpTag::SumAll: return "sum_all";
    case OpTag::LayerNorm: return "layer_norm";
    case OpTag::Hyperspherical: return "hyperspherical";
    case OpTag::Softmax: return "softmax";
    case OpTag::LogSoftmax: return "log_softmax";
    case OpTag::QuantileHuber: return "quantile_huber";
  }
  return "?";
}

const Matrix& Var::value() const { return tape->node(id).value; }
const Matrix& Var::grad() const { return tape->node(id).grad; }
double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("item() on a non-scalar node");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.tag = OpTag::Constant;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.tag = OpTag::Input;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p, bool trainable) {
  Node n;
  n.value = p.value;
  n.tag = OpTag::Param;
  n.requires_grad = trainable;
  n.param = trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, OpTag tag, std::array<int, 3> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.tag = tag;
  n.parents = parents;
  for (int p : parents) {
    if (p >= 0 && node(p).requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var output) {
  if (output.tape != this) throw UsageError("backward: variable belongs to another tape");
  Node& out = node(output.id);
  if (out.value.size() != 1) {
    throw UsageError("backward: output must be scalar, got " + std::to_string(out.value.rows()) + "x" +
                     std::to_string(out.value.cols()));
  }
  if (!out.requires_grad) return;
  out.grad = Matrix::Ones(1, 1);
  for (int id = output.id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.grad.size() != 0) {
      if (n.param->grad.size() == 0) {
        n.param->grad = n.grad;
      } else {
        n.param->grad += n.grad;
      }
    }
  }
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw UsageError("operands live on different tapes");
  return *a.tape;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) {
    throw ConfigError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                      std::to_string(b.rows()) + ")");
  }
  Matrix out;
  out.noalias() = a.value() * b.value();
  return t.push(std::move(out), OpTag::MatMul, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const int ia = n.parents[0];
    const int ib = n.parents[1];
    if (tp.needs_grad(ia)) {
      Matrix g;
      g.noalias() = n.grad * tp.node(ib).value.transpose();
      tp.accumulate(ia, g);
    }
    if (tp.needs_grad(ib)) {
      Matrix g;
      g.noalias() = tp.node(ia).value.transpose() * n.grad;
      tp.accumulate(ib, g);
    }
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ConfigError("add_bias: bias must be 1 x cols(x)");
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  return t.push(std::move(out), OpTag::AddBias, {x.id, bias.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad);
    if (tp.needs_grad(n.parents[1])) tp.accumulate(n.parents[1], n.grad.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  return t.push(a.value() + b.value(), OpTag::Add, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad);
    tp.accumulate(n.parents[1], n.grad);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  return t.push(a.value() - b.value(), OpTag::Sub, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad);
    if (tp.needs_grad(n.parents[1])) tp.accumulate(n.parents[1], -n.grad);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  return t.push(a.value().cwiseProduct(b.value()), OpTag::Mul, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const int ia = n.parents[0];
    const int ib = n.parents[1];
    if (tp.needs_grad(ia)) tp.accumulate(ia, n.grad.cwiseProduct(tp.node(ib).value));
    if (tp.needs_grad(ib)) tp.accumulate(ib, n.grad.cwiseProduct(tp.node(ia).value));
  });
}

Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, OpTag::Scale, {a.id, -1, -1}, [s](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad * s);
  });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape->push(std::move(out), OpTag::AddScalar, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad);
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->push(std::move(out), OpTag::Relu, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    Matrix g = (n.value.array() > 0.0).select(n.grad, 0.0);
    tp.accumulate(n.parents[0], g);
  });
}

Var tanh(Var a) {
  Matrix out = a.value().array().tanh();
  return a.tape->push(std::move(out), OpTag::Tanh, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    Matrix g = n.grad.array() * (1.0 - n.value.array().square());
    tp.accumulate(n.parents[0], g);
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  return a.tape->push(std::move(out), OpTag::Exp, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    tp.accumulate(n.parents[0], n.grad.cwiseProduct(n.value));
  });
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  return a.tape->push(std::move(out), OpTag::Log, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const int ia = n.parents[0];
    tp.accumulate(ia, n.grad.cwiseQuotient(tp.node(ia).value));
  });
}

Var square(Var a) {
  Matrix out = a.value().array().square();
  return a.tape->push(std::move(out), OpTag::Square, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const int ia = n.parents[0];
    tp.accumulate(ia, 2.0 * n.grad.cwiseProduct(tp.node(ia).value));
  });
}

Var clamp(Var a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->push(std::move(out), OpTag::Clamp, {a.id, -1, -1}, [lo, hi](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto& x = tp.node(n.parents[0]).value.array();
    Matrix g = ((x > lo) && (x < hi)).select(n.grad, 0.0);
    tp.accumulate(n.parents[0], g);
  });
}

Var minimum(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "minimum");
  Matrix out = a.value().cwiseMin(b.value());
  return t.push(std::move(out), OpTag::Minimum, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto& av = tp.node(n.parents[0]).value.array();
    const auto& bv = tp.node(n.parents[1]).value.array();
    if (tp.needs_grad(n.parents[0])) tp.accumulate(n.parents[0], (av <= bv).select(n.grad, 0.0));
    if (tp.needs_grad(n.parents[1])) tp.accumulate(n.parents[1], (av <= bv).select(0.0, n.grad));
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw ConfigError("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  return t.push(std::move(out), OpTag::ConcatCols, {a.id, b.id, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto ca = tp.node(n.parents[0]).value.cols();
    const auto cb = tp.node(n.parents[1]).value.cols();
    if (tp.needs_grad(n.parents[0])) tp.accumulate(n.parents[0], n.grad.leftCols(ca));
    if (tp.needs_grad(n.parents[1])) tp.accumulate(n.parents[1], n.grad.rightCols(cb));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ConfigError("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  return a.tape->push(std::move(out), OpTag::SliceCols, {a.id, -1, -1}, [start, count](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto& src = tp.node(n.parents[0]).value;
    Matrix g = Matrix::Zero(src.rows(), src.cols());
    g.middleCols(start, count) = n.grad;
    tp.accumulate(n.parents[0], g);
  });
}

Var sum_rows(Var a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape->push(std::move(out), OpTag::SumRows, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto cols = tp.node(n.parents[0]).value.cols();
    tp.accumulate(n.parents[0], n.grad.replicate(1, cols));
  });
}

Var mean_rows(Var a) {
  Matrix out = a.value().rowwise().mean();
  return a.tape->push(std::move(out), OpTag::MeanRows, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto cols = tp.node(n.parents[0]).value.cols();
    tp.accumulate(n.parents[0], n.grad.replicate(1, cols) / static_cast<double>(cols));
  });
}

Var mean_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().mean();
  return a.tape->push(std::move(out), OpTag::MeanAll, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto& src = tp.node(n.parents[0]).value;
    const double g = n.grad(0, 0) / static_cast<double>(src.size());
    tp.accumulate(n.parents[0], Matrix::Constant(src.rows(), src.cols(), g));
  });
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->push(std::move(out), OpTag::SumAll, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    const auto& src = tp.node(n.parents[0]).value;
    tp.accumulate(n.parents[0], Matrix::Constant(src.rows(), src.cols(), n.grad(0, 0)));
  });
}

Var softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape->push(std::move(out), OpTag::Softmax, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    // dx = p * (g - sum(g * p))
    Vector dots = n.grad.cwiseProduct(n.value).rowwise().sum();
    Matrix g = n.value.array() * (n.grad.colwise() - dots).array();
    tp.accumulate(n.parents[0], g);
  });
}

Var log_softmax_rows(Var a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return a.tape->push(std::move(out), OpTag::LogSoftmax, {a.id, -1, -1}, [](Tape& tp, int self) {
    const auto& n = tp.node(self);
    // dx = g - softmax * sum(g)
    Vector sums = n.grad.rowwise().sum();
    Matrix p = n.value.array().exp();
    Matrix g = n.grad - (p.array().colwise() * sums.array()).matrix();
    tp.accumulate(n.parents[0], g);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x, gamma);
  const auto features = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != features || beta.rows() != 1 || beta.cols() != features) {
    throw ConfigError("layer_norm: gamma/beta must be 1 x features");
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: epsilon must be positive");
  const auto& xv = x.value();
  const Vector mu = xv.rowwise().mean();
  Matrix centered = xv.colwise() - mu;
  const Vector var = centered.array().square().rowwise().mean();
  Vector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  // The backward closure owns the normalized activations and scale factors.
  return t.push(std::move(out), OpTag::LayerNorm, {x.id, gamma.id, beta.id},
                [xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, int self) {
                  const auto& n = tp.node(self);
                  const int ix = n.parents[0];
                  const int ig = n.parents[1];
                  const int ib = n.parents[2];
                  if (tp.needs_grad(ig)) tp.accumulate(ig, n.grad.cwiseProduct(xhat).colwise().sum());
                  if (tp.needs_grad(ib)) tp.accumulate(ib, n.grad.colwise().sum());
                  if (tp.needs_grad(ix)) {
                    const auto& gv = tp.node(ig).value;
                    Matrix dxhat = n.grad.array().rowwise() * gv.row(0).array();
                    const Vector m1 = dxhat.rowwise().mean();
                    const Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
                    Matrix dx = (dxhat.colwise() - m1) - (xhat.array().colwise() * m2.array()).matrix();
                    dx.array().colwise() *= inv_std.array();
                    tp.accumulate(ix, dx);
                  }
                });
}

Var hyperspherical(Var x, Var weight, Var scale_row, double zero_guard) {
  Tape& t = tape_of(x, weight);
  if (weight.cols() != x.cols()) {
    throw ConfigError("hyperspherical: weight rows must have length " + std::to_string(x.cols()));
  }
  if (scale_row.rows() != 1 || scale_row.cols() != weight.rows()) {
    throw ConfigError("hyperspherical: scale must be 1 x out");
  }
  const auto& xv = x.value();
  const auto& wv = weight.value();
  Vector xnorm = xv.rowwise().norm();
  Vector wnorm = wv.rowwise().norm();
  Vector xinv = (xnorm.array() < zero_guard).select(0.0, xnorm.array().inverse());
  Vector winv = (wnorm.array() < zero_guard).select(0.0, wnorm.array().inverse());
  Matrix xhat = xv.array().colwise() * xinv.array();
  Matrix what = wv.array().colwise() * winv.array();
  Matrix cosines;
  cosines.noalias() = xhat * what.transpose();
  Matrix out = cosines.array().rowwise() * scale_row.value().row(0).array();
  return t.push(std::move(out), OpTag::Hyperspherical, {x.id, weight.id, scale_row.id},
                [xhat = std::move(xhat), what = std::move(what), cosines = std::move(cosines),
                 xinv = std::move(xinv), winv = std::move(winv)](Tape& tp, int self) {
                  const auto& n = tp.node(self);
                  const int ix = n.parents[0];
                  const int iw = n.parents[1];
                  const int is = n.parents[2];
                  if (tp.needs_grad(is)) tp.accumulate(is, n.grad.cwiseProduct(cosines).colwise().sum());
                  Matrix dcos = n.grad.array().rowwise() * tp.node(is).value.row(0).array();
                  // d(v/|v|) = (dvhat - vhat (vhat . dvhat)) / |v|
                  if (tp.needs_grad(ix)) {
                    Matrix dxhat;
                    dxhat.noalias() = dcos * what;
                    const Vector proj = dxhat.cwiseProduct(xhat).rowwise().sum();
                    Matrix dx = dxhat - (xhat.array().colwise() * proj.array()).matrix();
                    dx.array().colwise() *= xinv.array();
                    tp.accumulate(ix, dx);
                  }
                  if (tp.needs_grad(iw)) {
                    Matrix dwhat;
                    dwhat.noalias() = dcos.transpose() * xhat;
                    const Vector proj = dwhat.cwiseProduct(what).rowwise().sum();
                    Matrix dw = dwhat - (what.array().colwise() * proj.array()).matrix();
                    dw.array().colwise() *= winv.array();
                    tp.accumulate(iw, dw);
                  }
                });
}

Var quantile_huber(Var theta, const Matrix& targets, const Vector& taus, double kappa) {
  const auto batch = theta.rows();
  const auto n_cur = theta.cols();
  const auto n_tgt = targets.cols();
  if (targets.rows() != batch) throw ConfigError("quantile_huber: batch sizes differ");
  if (taus.size() != n_cur) throw ConfigError("quantile_huber: one fraction per current quantile required");
  if (!(kappa > 0.0)) throw ConfigError("quantile_huber: kappa must be positive");
  const auto& th = theta.value();
  const double norm = 1.0 / static_cast<double>(batch * n_cur * n_tgt);
  double total = 0.0;
  Matrix dtheta = Matrix::Zero(batch, n_cur);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < n_cur; ++i) {
      const double tau = taus(i);
      double g = 0.0;
      for (Eigen::Index j = 0; j < n_tgt; ++j) {
        const double u = targets(b, j) - th(b, i);
        const double au = std::abs(u);
        const double weight = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
        const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
        total += weight * huber;
        const double dhuber_du = au <= kappa ? u : kappa * (u > 0.0 ? 1.0 : -1.0);
        g -= weight * dhuber_du;  // du/dtheta = -1
      }
      dtheta(b, i) = g * norm;
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total * norm;
  return theta.tape->push(std::move(out), OpTag::QuantileHuber, {theta.id, -1, -1},
                          [dtheta = std::move(dtheta)](Tape& tp, int self) {
                            const auto& n = tp.node(self);
                            tp.accumulate(n.parents[0], dtheta * n.grad(0, 0));
                          });
}

}  // namespace dawn::diff
