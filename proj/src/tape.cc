// src/tape.cc

#include "rnnt/tape.h"

#include <cmath>

#include "rnnt/error.h"

namespace rnnt {

const Array &Var::value() const { return tape->Value(*this); }

Var Tape::Constant(Array value) {
  return Record("constant", std::move(value), {}, nullptr);
}

Var Tape::Param(const Parameter &p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Var{this, it->second};
  Var v = Constant(p.value);
  bound_.emplace(&p, v.id);
  return v;
}

Var Tape::Param(Parameter &p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return Var{this, it->second};
  if (frozen_.count(&p)) return Param(static_cast<const Parameter &>(p));
  Var v = Constant(p.value);
  nodes_[v.id].param = &p;
  nodes_[v.id].needs_grad = true;
  bound_.emplace(&p, v.id);
  return v;
}

void Tape::Freeze(std::span<Parameter *const> params) {
  for (Parameter *p : params) frozen_.insert(p);
}

Var Tape::Record(std::string_view op, Array value, std::vector<int32_t> inputs,
                 BackwardFn backward) {
  if (!value.AllFinite()) {
    throw NumericError(std::string(op) + ": non-finite value of shape " +
                       value.ShapeString());
  }
  Node node;
  node.value = std::move(value);
  for (int32_t in : inputs) node.needs_grad = node.needs_grad || NeedsGrad(in);
  node.inputs = std::move(inputs);
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

Array &Tape::GradRef(int32_t id) {
  Node &n = nodes_[id];
  if (n.grad.size() != n.value.size()) {
    n.grad = Array(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

const Array &Tape::Grad(Var v) { return GradRef(v.id); }

void Tape::Backward(Var loss) {
  if (loss.tape != this) throw ArgumentError("backward: loss is on another tape");
  const Array &lv = Value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + lv.ShapeString());
  }
  GradRef(loss.id)[0] = 1.0;
  for (int32_t i = loss.id; i >= 0; --i) {
    Node &n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad, n.value);
    if (n.param != nullptr) {
      Array &dst = n.param->grad;
      if (!dst.SameShape(n.value)) dst = Array(n.value.rows(), n.value.cols());
      for (size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

namespace {

void AccumulateInto(Tape &tape, int32_t id, const Array &g) {
  if (!tape.NeedsGrad(id)) return;
  Array &dst = tape.GradRef(id);
  for (size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
}

void CheckSameTape(const char *op, Var a, Var b) {
  if (a.tape != b.tape) {
    throw ArgumentError(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

Var MatMul(Var a, Var b) {
  CheckSameTape("matmul", a, b);
  Tape &t = *a.tape;
  return t.Record(
      "matmul", kernels::MatMul(a.value(), b.value()), {a.id, b.id},
      [a, b](Tape &tape, const Array &g, const Array &) {
        if (tape.NeedsGrad(a.id)) {
          AccumulateInto(tape, a.id, kernels::MatMulTransB(g, tape.Value(b)));
        }
        if (tape.NeedsGrad(b.id)) {
          AccumulateInto(tape, b.id, kernels::MatMulTransA(tape.Value(a), g));
        }
      });
}

Var Add(Var a, Var b) {
  CheckSameTape("add", a, b);
  return a.tape->Record("add", kernels::Add(a.value(), b.value()),
                        {a.id, b.id}, [a, b](Tape &tape, const Array &g, const Array &) {
                          AccumulateInto(tape, a.id, g);
                          AccumulateInto(tape, b.id, g);
                        });
}

Var Sub(Var a, Var b) {
  CheckSameTape("sub", a, b);
  const Array &av = a.value();
  const Array &bv = b.value();
  if (!av.SameShape(bv)) {
    throw ShapeError("sub: incompatible shapes " + av.ShapeString() + " and " +
                     bv.ShapeString());
  }
  Array out(av.rows(), av.cols());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape->Record("sub", std::move(out), {a.id, b.id},
                        [a, b](Tape &tape, const Array &g, const Array &) {
                          AccumulateInto(tape, a.id, g);
                          AccumulateInto(tape, b.id, kernels::Scale(g, -1.0));
                        });
}

Var AddRow(Var a, Var bias) {
  CheckSameTape("add-row", a, bias);
  return a.tape->Record(
      "add-row", kernels::AddRow(a.value(), bias.value()), {a.id, bias.id},
      [a, bias](Tape &tape, const Array &g, const Array &) {
        AccumulateInto(tape, a.id, g);
        if (tape.NeedsGrad(bias.id)) {
          AccumulateInto(tape, bias.id,
                         kernels::Scale(kernels::MeanRows(g),
                                        static_cast<double>(g.rows())));
        }
      });
}

Var Mul(Var a, Var b) {
  CheckSameTape("mul", a, b);
  return a.tape->Record("mul", kernels::Mul(a.value(), b.value()),
                        {a.id, b.id}, [a, b](Tape &tape, const Array &g, const Array &) {
                          if (tape.NeedsGrad(a.id)) {
                            AccumulateInto(tape, a.id,
                                           kernels::Mul(g, tape.Value(b)));
                          }
                          if (tape.NeedsGrad(b.id)) {
                            AccumulateInto(tape, b.id,
                                           kernels::Mul(g, tape.Value(a)));
                          }
                        });
}

Var Scale(Var a, double factor) {
  return a.tape->Record("scale", kernels::Scale(a.value(), factor), {a.id},
                        [a, factor](Tape &tape, const Array &g, const Array &) {
                          AccumulateInto(tape, a.id, kernels::Scale(g, factor));
                        });
}

Var Tanh(Var a) {
  return a.tape->Record("tanh", kernels::Tanh(a.value()), {a.id},
                        [a](Tape &tape, const Array &g, const Array &y) {
                          Array d(y.rows(), y.cols());
                          for (size_t k = 0; k < d.size(); ++k) {
                            d[k] = g[k] * (1.0 - y[k] * y[k]);
                          }
                          AccumulateInto(tape, a.id, d);
                        });
}

Var Sigmoid(Var a) {
  return a.tape->Record("sigmoid", kernels::Sigmoid(a.value()), {a.id},
                        [a](Tape &tape, const Array &g, const Array &y) {
                          Array d(y.rows(), y.cols());
                          for (size_t k = 0; k < d.size(); ++k) {
                            d[k] = g[k] * y[k] * (1.0 - y[k]);
                          }
                          AccumulateInto(tape, a.id, d);
                        });
}

Var EmbedLookup(Var table, std::span<const int> ids) {
  const Array &tv = table.value();
  Array out(ids.size(), tv.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= tv.rows()) {
      throw ShapeError("embed-lookup: id " + std::to_string(ids[i]) +
                       " out of table " + tv.ShapeString());
    }
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.tape->Record(
      "embed-lookup", std::move(out), {table.id},
      [table, idv = std::move(idv)](Tape &tape, const Array &g, const Array &) {
        Array &dst = tape.GradRef(table.id);
        for (size_t i = 0; i < idv.size(); ++i) {
          auto grow = g.row(i);
          auto drow = dst.row(idv[i]);
          for (size_t c = 0; c < grow.size(); ++c) drow[c] += grow[c];
        }
      });
}

Var LogSoftmax(Var a) {
  return a.tape->Record(
      "log-softmax", kernels::LogSoftmaxRows(a.value()), {a.id},
      [a](Tape &tape, const Array &g, const Array &y) {
        // d/dx_j = g_j - softmax_j * sum_k g_k, row by row.
        Array d(y.rows(), y.cols());
        for (size_t r = 0; r < y.rows(); ++r) {
          double gsum = 0.0;
          for (size_t c = 0; c < y.cols(); ++c) gsum += g(r, c);
          for (size_t c = 0; c < y.cols(); ++c) {
            d(r, c) = g(r, c) - std::exp(y(r, c)) * gsum;
          }
        }
        AccumulateInto(tape, a.id, d);
      });
}

Var MeanRows(Var a) {
  return a.tape->Record("mean-over-axis", kernels::MeanRows(a.value()), {a.id},
                        [a](Tape &tape, const Array &g, const Array &) {
                          const Array &x = tape.Value(a);
                          const double inv = 1.0 / static_cast<double>(x.rows());
                          Array d(x.rows(), x.cols());
                          for (size_t r = 0; r < x.rows(); ++r) {
                            for (size_t c = 0; c < x.cols(); ++c) {
                              d(r, c) = g[c] * inv;
                            }
                          }
                          AccumulateInto(tape, a.id, d);
                        });
}

Var Gather(Var a, std::span<const std::pair<size_t, size_t>> positions) {
  const Array &av = a.value();
  Array out(1, positions.size());
  for (size_t i = 0; i < positions.size(); ++i) {
    auto [r, c] = positions[i];
    if (r >= av.rows() || c >= av.cols()) {
      throw ShapeError("gather: position (" + std::to_string(r) + "," +
                       std::to_string(c) + ") out of " + av.ShapeString());
    }
    out[i] = av(r, c);
  }
  std::vector<std::pair<size_t, size_t>> pos(positions.begin(), positions.end());
  return a.tape->Record("gather", std::move(out), {a.id},
                        [a, pos = std::move(pos)](Tape &tape, const Array &g, const Array &) {
                          Array &dst = tape.GradRef(a.id);
                          for (size_t i = 0; i < pos.size(); ++i) {
                            dst(pos[i].first, pos[i].second) += g[i];
                          }
                        });
}

Var Sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape->Record("sum", Array(1, 1, acc), {a.id},
                        [a](Tape &tape, const Array &g, const Array &) {
                          Array &dst = tape.GradRef(a.id);
                          for (size_t k = 0; k < dst.size(); ++k) dst[k] += g[0];
                        });
}

Var WeightedSum(Var a, const Array &weights) {
  const Array &av = a.value();
  if (!av.SameShape(weights)) {
    throw ShapeError("weighted-sum: incompatible shapes " + av.ShapeString() +
                     " and " + weights.ShapeString());
  }
  double acc = 0.0;
  for (size_t k = 0; k < av.size(); ++k) acc += weights[k] * av[k];
  return a.tape->Record("weighted-sum", Array(1, 1, acc), {a.id},
                        [a, weights](Tape &tape, const Array &g, const Array &) {
                          Array &dst = tape.GradRef(a.id);
                          for (size_t k = 0; k < dst.size(); ++k) {
                            dst[k] += g[0] * weights[k];
                          }
                        });
}

Var SliceCols(Var a, size_t begin, size_t end) {
  return a.tape->Record("slice-cols", kernels::SliceCols(a.value(), begin, end),
                        {a.id}, [a, begin](Tape &tape, const Array &g, const Array &) {
                          Array &dst = tape.GradRef(a.id);
                          for (size_t r = 0; r < g.rows(); ++r) {
                            for (size_t c = 0; c < g.cols(); ++c) {
                              dst(r, begin + c) += g(r, c);
                            }
                          }
                        });
}

Var TakeRow(Var a, size_t r) {
  return a.tape->Record("row", kernels::TakeRow(a.value(), r), {a.id},
                        [a, r](Tape &tape, const Array &g, const Array &) {
                          auto drow = tape.GradRef(a.id).row(r);
                          for (size_t c = 0; c < g.cols(); ++c) drow[c] += g[c];
                        });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat-rows: no inputs");
  Tape &t = *parts[0].tape;
  const size_t cols = parts[0].cols();
  size_t rows = 0;
  for (const Var &p : parts) {
    if (p.tape != &t) throw ArgumentError("concat-rows: mixed tapes");
    if (p.cols() != cols) {
      throw ShapeError("concat-rows: incompatible shapes " +
                       parts[0].value().ShapeString() + " and " +
                       p.value().ShapeString());
    }
    rows += p.rows();
  }
  Array out(rows, cols);
  std::vector<int32_t> ids;
  size_t offset = 0;
  for (const Var &p : parts) {
    const Array &v = p.value();
    std::copy(v.data().begin(), v.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(offset * cols));
    offset += v.rows();
    ids.push_back(p.id);
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return t.Record("concat-rows", std::move(out), ids,
                  [copy = std::move(copy)](Tape &tape, const Array &g, const Array &) {
                    size_t off = 0;
                    for (const Var &p : copy) {
                      const size_t n = tape.Value(p).size();
                      if (tape.NeedsGrad(p.id)) {
                        Array &dst = tape.GradRef(p.id);
                        for (size_t k = 0; k < n; ++k) dst[k] += g[off + k];
                      }
                      off += n;
                    }
                  });
}

Var PairwiseRowSum(Var a, Var b) {
  CheckSameTape("pairwise-row-sum", a, b);
  return a.tape->Record(
      "pairwise-row-sum", kernels::PairwiseRowSum(a.value(), b.value()),
      {a.id, b.id}, [a, b](Tape &tape, const Array &g, const Array &) {
        const size_t na = tape.Value(a).rows();
        const size_t nb = tape.Value(b).rows();
        const size_t cols = g.cols();
        const bool ga = tape.NeedsGrad(a.id);
        const bool gb = tape.NeedsGrad(b.id);
        for (size_t i = 0; i < na; ++i) {
          for (size_t j = 0; j < nb; ++j) {
            auto grow = g.row(i * nb + j);
            if (ga) {
              auto d = tape.GradRef(a.id).row(i);
              for (size_t c = 0; c < cols; ++c) d[c] += grow[c];
            }
            if (gb) {
              auto d = tape.GradRef(b.id).row(j);
              for (size_t c = 0; c < cols; ++c) d[c] += grow[c];
            }
          }
        }
      });
}

}  // namespace rnnt
