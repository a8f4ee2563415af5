// Copyright 2026 The sphreg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sphreg/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace sphreg::ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backward fn) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || requires_grad(p);
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(fn) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward fn) {
  bool needs = false;
  for (const auto& p : parents) needs = needs || requires_grad(p);
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(fn) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw std::invalid_argument("backward root must be a scalar, got " +
                                std::to_string(value(root).rows()) + "x" +
                                std::to_string(value(root).cols()));
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // Copy: the closure may append to this node's parents only, never to n.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var ParamBinder::operator()(const Matrix& m) {
  for (const auto& [ptr, var] : bound_)
    if (ptr == &m) return var;
  Var v = trainable_ ? tape_->parameter(m) : tape_->constant(m);
  bound_.emplace_back(&m, v);
  return v;
}

Matrix ParamBinder::grad(const Matrix& m) const {
  for (const auto& [ptr, var] : bound_)
    if (ptr == &m) return tape_->grad(var);
  return Matrix::Zero(m.rows(), m.cols());
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var scale(Var a, double s) {
  return a.tape()->record(a.value() * s, {a},
                          [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var sum(const std::vector<Var>& terms) {
  if (terms.empty()) throw std::invalid_argument("sum of no terms");
  Matrix total = terms.front().value();
  for (std::size_t i = 1; i < terms.size(); ++i) {
    check_same_shape(total, terms[i].value(), "sum");
    total += terms[i].value();
  }
  return terms.front().tape()->record(std::move(total), terms, [terms](Tape& t, const Matrix& g) {
    for (const auto& v : terms) t.accumulate(v, g);
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul(const Matrix& c, Var a) {
  if (c.cols() != a.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return a.tape()->record(c * a.value(), {a}, [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, c.transpose() * g);
  });
}

Var hadamard(Var a, Var b) {
  check_same_shape(a.value(), b.value(), "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                            if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                          });
}

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat of no parts");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("hcat: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Matrix& g) {
    Eigen::Index col = 0;
    for (const auto& p : parts) {
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(col, p.cols()));
      col += p.cols();
    }
  });
}

Var top_rows(Var a, Eigen::Index n) {
  if (n > a.rows()) throw std::invalid_argument("top_rows: not enough rows");
  return a.tape()->record(a.value().topRows(n), {a}, [a, n](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.topRows(n) = g;
    t.accumulate(a, full);
  });
}

Var relu(Var a) {
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var elu(Var a, double alpha) {
  Matrix out = a.value().unaryExpr([alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); });
  return a.tape()->record(std::move(out), {a}, [a, alpha](Tape& t, const Matrix& g) {
    const Matrix d = a.value().unaryExpr([alpha](double x) { return x > 0.0 ? 1.0 : alpha * std::exp(x); });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var softmax_rows(Var a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.value().row(r).maxCoeff();
    out.row(r) = (a.value().row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Matrix saved = out;
  return a.tape()->record(std::move(out), {a}, [a, p = std::move(saved)](Tape& t, const Matrix& g) {
    Matrix d(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double dot = p.row(r).dot(g.row(r));
      d.row(r) = p.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    t.accumulate(a, d);
  });
}

Var sum_all(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var normalize_rows(Var a) {
  Matrix out = a.value();
  Vector norms(a.rows());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    norms[r] = out.row(r).norm();
    out.row(r) /= norms[r];
  }
  Matrix unit = out;
  return a.tape()->record(std::move(out), {a},
                          [a, u = std::move(unit), norms](Tape& t, const Matrix& g) {
                            Matrix d(u.rows(), u.cols());
                            for (Eigen::Index r = 0; r < u.rows(); ++r) {
                              const double along = u.row(r).dot(g.row(r));
                              d.row(r) = (g.row(r) - along * u.row(r)) / norms[r];
                            }
                            t.accumulate(a, d);
                          });
}

}  // namespace sphreg::ad
