#include "qtg/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace qtg {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

void require_matrix(const Tensor& t, const char* op) {
    if (!t.is_matrix()) {
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape));
    }
}

constexpr double kLayerNormEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ----- Tensor -----

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
    if (shape.empty()) throw ShapeError("Tensor: empty shape");
    for (std::size_t d : shape) {
        if (d == 0) throw ShapeError("Tensor: dimension sizes must be positive");
    }
    if (shape_product(shape) != data.size()) {
        throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = shape_product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) {
    return Tensor({1, 1}, {value});
}

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
    return t;
}

std::size_t Tensor::rows() const {
    require_matrix(*this, "rows");
    return shape[0];
}

std::size_t Tensor::cols() const {
    require_matrix(*this, "cols");
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data[r * cols() + c];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ----- kernels -----

void mm_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void mm_accum_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void mm_accum_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    for (std::size_t p = 0; p < m; ++p) {
        const double* ap = a + p * k;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double av = ap[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * bp[j];
        }
    }
}

void softmax_row_inplace(double* x, std::size_t n) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const double inv = 1.0 / sum;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

std::vector<double> stable_softmax(const std::vector<double>& x) {
    if (x.empty()) throw ShapeError("stable_softmax: empty input");
    std::vector<double> out = x;
    softmax_row_inplace(out.data(), out.size());
    return out;
}

// ----- Tape / Var -----

const Tensor& Var::val() const {
    return tape->value(*this);
}

Var Tape::leaf(const Tensor& t) {
    return leaf(t, t.requires_grad);
}

Var Tape::leaf(const Tensor& t, bool requires_grad) {
    Tensor copy = t;
    copy.requires_grad = requires_grad;
    const int id = emit(std::move(copy), {}, nullptr, "leaf");
    nodes_[static_cast<std::size_t>(id)].needs_grad = requires_grad;
    nodes_[static_cast<std::size_t>(id)].is_grad_leaf = requires_grad;
    return Var{this, id};
}

Var Tape::constant(Tensor t) {
    t.requires_grad = false;
    const int id = emit(std::move(t), {}, nullptr, "constant");
    return Var{this, id};
}

const Tensor& Tape::value(Var v) const {
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    Tensor g = Tensor::zeros(n.value.shape);
    if (!n.adjoint.empty()) g.data = n.adjoint;
    return g;
}

int Tape::emit(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> backward_fn,
               const char* op_name) {
    if (check_finite_ && !value.all_finite()) {
        throw NumericError(std::string("non-finite value produced by op '") + op_name + "'");
    }
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backward = std::move(backward_fn);
    for (int in : n.inputs) {
        if (nodes_[static_cast<std::size_t>(in)].needs_grad) {
            n.needs_grad = true;
            break;
        }
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::adjoint(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.adjoint.empty()) n.adjoint.assign(n.value.size(), 0.0);
    return n.adjoint;
}

void Tape::run_backward(Var loss) {
    const Tensor& l = value(loss);
    if (l.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got " + shape_str(l.shape));
    }
    adjoint(loss.id)[0] += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || n.adjoint.empty() || !n.backward) continue;
        n.backward(*this, id);
    }
    // Mirror leaf adjoints into the stored tensors so grad() on a leaf always
    // reports a filled gradient, even when it never received flow.
    for (Node& n : nodes_) {
        if (n.is_grad_leaf && n.adjoint.empty()) n.adjoint.assign(n.value.size(), 0.0);
    }
}

void backward(Tape& tape, Var loss) {
    tape.run_backward(loss);
}

// ----- op helpers -----

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || b.tape == nullptr || a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands must live on one tape");
    }
    return *a.tape;
}

// Accumulate src into the adjoint of node `id` if it participates in the
// backward pass.
void accum(Tape& t, int id, const double* src, std::size_t n) {
    if (!t.node_needs_grad(id)) return;
    std::vector<double>& adj = t.adjoint(id);
    for (std::size_t i = 0; i < n; ++i) adj[i] += src[i];
}

}  // namespace

// ----- ops -----

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b, "matmul");
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    require_matrix(A, "matmul");
    require_matrix(B, "matmul");
    if (A.cols() != B.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(A.shape) + " x " +
                         shape_str(B.shape));
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros({m, n});
    mm_accum(A.data.data(), B.data.data(), out.data.data(), m, k, n);
    const int ida = a.id, idb = b.id;
    const int id = t.emit(std::move(out), {ida, idb},
                          [ida, idb, m, k, n](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              const Tensor& A2 = tp.node(ida).value;
                              const Tensor& B2 = tp.node(idb).value;
                              if (tp.node_needs_grad(ida)) {
                                  mm_accum_nt(d.data(), B2.data.data(), tp.adjoint(ida).data(), m,
                                              n, k);
                              }
                              if (tp.node_needs_grad(idb)) {
                                  mm_accum_tn(A2.data.data(), d.data(), tp.adjoint(idb).data(), m,
                                              k, n);
                              }
                          },
                          "matmul");
    return Var{&t, id};
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    require_matrix(A, "transpose");
    const std::size_t m = A.rows(), n = A.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = A.data[i * n + j];
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida, m, n](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              if (!tp.node_needs_grad(ida)) return;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < m; ++i)
                                  for (std::size_t j = 0; j < n; ++j)
                                      adj[i * n + j] += d[j * m + i];
                          },
                          "transpose");
    return Var{&t, id};
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b, "add");
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (!A.same_shape(B)) {
        throw ShapeError("add: shape mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += B.data[i];
    const int ida = a.id, idb = b.id;
    const int id = t.emit(std::move(out), {ida, idb},
                          [ida, idb](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              accum(tp, ida, d.data(), d.size());
                              accum(tp, idb, d.data(), d.size());
                          },
                          "add");
    return Var{&t, id};
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b, "sub");
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (!A.same_shape(B)) {
        throw ShapeError("sub: shape mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= B.data[i];
    const int ida = a.id, idb = b.id;
    const int id = t.emit(std::move(out), {ida, idb},
                          [ida, idb](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              accum(tp, ida, d.data(), d.size());
                              if (tp.node_needs_grad(idb)) {
                                  std::vector<double>& adj = tp.adjoint(idb);
                                  for (std::size_t i = 0; i < d.size(); ++i) adj[i] -= d[i];
                              }
                          },
                          "sub");
    return Var{&t, id};
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b, "mul");
    const Tensor& A = a.val();
    const Tensor& B = b.val();
    if (!A.same_shape(B)) {
        throw ShapeError("mul: shape mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
    }
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= B.data[i];
    const int ida = a.id, idb = b.id;
    const int id = t.emit(std::move(out), {ida, idb},
                          [ida, idb](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              const Tensor& A2 = tp.node(ida).value;
                              const Tensor& B2 = tp.node(idb).value;
                              if (tp.node_needs_grad(ida)) {
                                  std::vector<double>& adj = tp.adjoint(ida);
                                  for (std::size_t i = 0; i < d.size(); ++i)
                                      adj[i] += d[i] * B2.data[i];
                              }
                              if (tp.node_needs_grad(idb)) {
                                  std::vector<double>& adj = tp.adjoint(idb);
                                  for (std::size_t i = 0; i < d.size(); ++i)
                                      adj[i] += d[i] * A2.data[i];
                              }
                          },
                          "mul");
    return Var{&t, id};
}

Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = a.val();
    for (double& v : out.data) v *= c;
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida, c](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              if (!tp.node_needs_grad(ida)) return;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < d.size(); ++i) adj[i] += c * d[i];
                          },
                          "scale");
    return Var{&t, id};
}

Var add_rowvec(Var m, Var row) {
    Tape& t = same_tape(m, row, "add_rowvec");
    const Tensor& M = m.val();
    const Tensor& R = row.val();
    require_matrix(M, "add_rowvec");
    if (R.rows() != 1 || R.cols() != M.cols()) {
        throw ShapeError("add_rowvec: row must be [1," + std::to_string(M.cols()) + "], got " +
                         shape_str(R.shape));
    }
    const std::size_t r = M.rows(), c = M.cols();
    Tensor out = M;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += R.data[j];
    const int idm = m.id, idr = row.id;
    const int id = t.emit(std::move(out), {idm, idr},
                          [idm, idr, r, c](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              accum(tp, idm, d.data(), d.size());
                              if (tp.node_needs_grad(idr)) {
                                  std::vector<double>& adj = tp.adjoint(idr);
                                  for (std::size_t i = 0; i < r; ++i)
                                      for (std::size_t j = 0; j < c; ++j) adj[j] += d[i * c + j];
                              }
                          },
                          "add_rowvec");
    return Var{&t, id};
}

Var softmax(Var m) {
    Tape& t = *m.tape;
    const Tensor& M = m.val();
    require_matrix(M, "softmax");
    if (M.cols() == 0) throw ShapeError("softmax: empty axis");
    const std::size_t r = M.rows(), c = M.cols();
    Tensor out = M;
    for (std::size_t i = 0; i < r; ++i) softmax_row_inplace(out.data.data() + i * c, c);
    const int idm = m.id;
    const int id = t.emit(std::move(out), {idm},
                          [idm, r, c](Tape& tp, int self) {
                              if (!tp.node_needs_grad(idm)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              const Tensor& P = tp.node(self).value;
                              std::vector<double>& adj = tp.adjoint(idm);
                              for (std::size_t i = 0; i < r; ++i) {
                                  const double* prow = P.data.data() + i * c;
                                  const double* drow = d.data() + i * c;
                                  double dotv = 0.0;
                                  for (std::size_t j = 0; j < c; ++j) dotv += drow[j] * prow[j];
                                  double* arow = adj.data() + i * c;
                                  for (std::size_t j = 0; j < c; ++j)
                                      arow[j] += prow[j] * (drow[j] - dotv);
                              }
                          },
                          "softmax");
    return Var{&t, id};
}

Var layer_norm(Var m, Var gain, Var bias) {
    Tape& t = same_tape(m, gain, "layer_norm");
    same_tape(m, bias, "layer_norm");
    const Tensor& M = m.val();
    const Tensor& G = gain.val();
    const Tensor& B = bias.val();
    require_matrix(M, "layer_norm");
    const std::size_t r = M.rows(), c = M.cols();
    if (G.rows() != 1 || G.cols() != c || B.rows() != 1 || B.cols() != c) {
        throw ShapeError("layer_norm: gain/bias must be [1," + std::to_string(c) + "]");
    }
    Tensor out = Tensor::zeros({r, c});
    // Keep normalized rows and inverse stddevs for the backward pass.
    std::vector<double> xhat(r * c);
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = M.data.data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += x[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double dv = x[j] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < c; ++j) {
            const double xh = (x[j] - mean) * inv;
            xhat[i * c + j] = xh;
            out.data[i * c + j] = xh * G.data[j] + B.data[j];
        }
    }
    const int idm = m.id, idg = gain.id, idb = bias.id;
    const int id = t.emit(
        std::move(out), {idm, idg, idb},
        [idm, idg, idb, r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                    int self) {
            const std::vector<double>& d = tp.node(self).adjoint;
            const Tensor& G2 = tp.node(idg).value;
            if (tp.node_needs_grad(idm)) {
                std::vector<double>& adj = tp.adjoint(idm);
                for (std::size_t i = 0; i < r; ++i) {
                    const double* drow = d.data() + i * c;
                    const double* xh = xhat.data() + i * c;
                    double mean_gy = 0.0, mean_gyx = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gy = drow[j] * G2.data[j];
                        mean_gy += gy;
                        mean_gyx += gy * xh[j];
                    }
                    mean_gy /= static_cast<double>(c);
                    mean_gyx /= static_cast<double>(c);
                    double* arow = adj.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double gy = drow[j] * G2.data[j];
                        arow[j] += (gy - mean_gy - xh[j] * mean_gyx) * inv_std[i];
                    }
                }
            }
            if (tp.node_needs_grad(idg)) {
                std::vector<double>& adj = tp.adjoint(idg);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        adj[j] += d[i * c + j] * xhat[i * c + j];
            }
            if (tp.node_needs_grad(idb)) {
                std::vector<double>& adj = tp.adjoint(idb);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) adj[j] += d[i * c + j];
            }
        },
        "layer_norm");
    return Var{&t, id};
}

Var gelu(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    Tensor out = A;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              const Tensor& A2 = tp.node(ida).value;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < d.size(); ++i) {
                                  const double x = A2.data[i];
                                  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                                  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                                  adj[i] += d[i] * (cdf + x * pdf);
                              }
                          },
                          "gelu");
    return Var{&t, id};
}

Var relu(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    Tensor out = A;
    for (double& v : out.data) v = std::max(0.0, v);
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              const Tensor& A2 = tp.node(ida).value;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < d.size(); ++i) {
                                  if (A2.data[i] > 0.0) adj[i] += d[i];
                              }
                          },
                          "relu");
    return Var{&t, id};
}

Var sum_all(Var a) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    double s = 0.0;
    for (double v : A.data) s += v;
    const int ida = a.id;
    const int id = t.emit(Tensor::scalar(s), {ida},
                          [ida](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const double d = tp.node(self).adjoint[0];
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (double& v : adj) v += d;
                          },
                          "sum_all");
    return Var{&t, id};
}

Var slice_rows(Var a, std::size_t first, std::size_t count) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    require_matrix(A, "slice_rows");
    if (count == 0 || first + count > A.rows()) {
        throw ShapeError("slice_rows: range [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of " + std::to_string(A.rows()));
    }
    const std::size_t c = A.cols();
    Tensor out = Tensor::zeros({count, c});
    std::copy(A.data.begin() + static_cast<std::ptrdiff_t>(first * c),
              A.data.begin() + static_cast<std::ptrdiff_t>((first + count) * c), out.data.begin());
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida, first, count, c](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < count * c; ++i)
                                  adj[first * c + i] += d[i];
                          },
                          "slice_rows");
    return Var{&t, id};
}

Var slice_cols(Var a, std::size_t first, std::size_t count) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    require_matrix(A, "slice_cols");
    if (count == 0 || first + count > A.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of " + std::to_string(A.cols()));
    }
    const std::size_t r = A.rows(), c = A.cols();
    Tensor out = Tensor::zeros({r, count});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out.data[i * count + j] = A.data[i * c + first + j];
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida, first, count, r, c](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < count; ++j)
                                      adj[i * c + first + j] += d[i * count + j];
                          },
                          "slice_cols");
    return Var{&t, id};
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    Tape& t = *parts[0].tape;
    const std::size_t c = parts[0].val().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        same_tape(parts[0], p, "concat_rows");
        require_matrix(p.val(), "concat_rows");
        if (p.val().cols() != c) throw ShapeError("concat_rows: column counts differ");
        total += p.val().rows();
    }
    Tensor out = Tensor::zeros({total, c});
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& P = p.val();
        std::copy(P.data.begin(), P.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(off));
        ids.push_back(p.id);
        offsets.push_back(off);
        off += P.data.size();
    }
    const int id = t.emit(std::move(out), ids,
                          [ids, offsets](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              for (std::size_t k = 0; k < ids.size(); ++k) {
                                  const int pid = ids[k];
                                  if (!tp.node_needs_grad(pid)) continue;
                                  std::vector<double>& adj = tp.adjoint(pid);
                                  const double* src = d.data() + offsets[k];
                                  for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += src[i];
                              }
                          },
                          "concat_rows");
    return Var{&t, id};
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    Tape& t = *parts[0].tape;
    const std::size_t r = parts[0].val().rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        same_tape(parts[0], p, "concat_cols");
        require_matrix(p.val(), "concat_cols");
        if (p.val().rows() != r) throw ShapeError("concat_cols: row counts differ");
        total += p.val().cols();
    }
    Tensor out = Tensor::zeros({r, total});
    std::vector<int> ids;
    std::vector<std::size_t> col_offsets, col_widths;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& P = p.val();
        const std::size_t w = P.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) out.data[i * total + off + j] = P.data[i * w + j];
        ids.push_back(p.id);
        col_offsets.push_back(off);
        col_widths.push_back(w);
        off += w;
    }
    const int id = t.emit(std::move(out), ids,
                          [ids, col_offsets, col_widths, r, total](Tape& tp, int self) {
                              const std::vector<double>& d = tp.node(self).adjoint;
                              for (std::size_t k = 0; k < ids.size(); ++k) {
                                  const int pid = ids[k];
                                  if (!tp.node_needs_grad(pid)) continue;
                                  std::vector<double>& adj = tp.adjoint(pid);
                                  const std::size_t w = col_widths[k];
                                  for (std::size_t i = 0; i < r; ++i)
                                      for (std::size_t j = 0; j < w; ++j)
                                          adj[i * w + j] += d[i * total + col_offsets[k] + j];
                              }
                          },
                          "concat_cols");
    return Var{&t, id};
}

Var gather_rows(Var a, const std::vector<std::size_t>& indices) {
    Tape& t = *a.tape;
    const Tensor& A = a.val();
    require_matrix(A, "gather_rows");
    if (indices.empty()) throw ShapeError("gather_rows: empty index list");
    const std::size_t c = A.cols();
    Tensor out = Tensor::zeros({indices.size(), c});
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= A.rows()) throw ShapeError("gather_rows: index out of range");
        std::copy(A.data.begin() + static_cast<std::ptrdiff_t>(indices[k] * c),
                  A.data.begin() + static_cast<std::ptrdiff_t>((indices[k] + 1) * c),
                  out.data.begin() + static_cast<std::ptrdiff_t>(k * c));
    }
    const int ida = a.id;
    const int id = t.emit(std::move(out), {ida},
                          [ida, indices, c](Tape& tp, int self) {
                              if (!tp.node_needs_grad(ida)) return;
                              const std::vector<double>& d = tp.node(self).adjoint;
                              std::vector<double>& adj = tp.adjoint(ida);
                              for (std::size_t k = 0; k < indices.size(); ++k)
                                  for (std::size_t j = 0; j < c; ++j)
                                      adj[indices[k] * c + j] += d[k * c + j];
                          },
                          "gather_rows");
    return Var{&t, id};
}

// ----- gradient checking -----

namespace {

double eval_scalar(const MultiGraphBuilder& f, const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.leaf(x, false));
    Var out = f(tape, vars);
    const Tensor& o = out.val();
    if (o.size() != 1) throw ContractError("grad_check: builder must return a scalar");
    return o.data[0];
}

bool bit_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

}  // namespace

double grad_check(const MultiGraphBuilder& f, const std::vector<Tensor>& xs, double h) {
    // Analytic gradients.
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.leaf(x, true));
    Var out = f(tape, vars);
    const Tensor& o = out.val();
    if (o.size() != 1) throw ContractError("grad_check: builder must return a scalar");
    const double y0 = o.data[0];
    if (!bit_equal(y0, eval_scalar(f, xs))) {
        throw ContractError("grad_check: builder is not deterministic");
    }
    backward(tape, out);
    std::vector<Tensor> analytic;
    analytic.reserve(xs.size());
    for (Var v : vars) analytic.push_back(tape.grad(v));

    // Central differences.
    double max_err = 0.0;
    std::vector<Tensor> probe = xs;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        for (std::size_t i = 0; i < probe[t].size(); ++i) {
            const double keep = probe[t].data[i];
            probe[t].data[i] = keep + h;
            const double yp = eval_scalar(f, probe);
            probe[t].data[i] = keep - h;
            const double ym = eval_scalar(f, probe);
            probe[t].data[i] = keep;
            const double central = (yp - ym) / (2.0 * h);
            const double err =
                std::abs(analytic[t].data[i] - central) / std::max(1.0, std::abs(central));
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

double grad_check(const GraphBuilder& f, const Tensor& x, double h) {
    MultiGraphBuilder wrap = [&f](Tape& t, const std::vector<Var>& vs) { return f(t, vs[0]); };
    return grad_check(wrap, std::vector<Tensor>{x}, h);
}

}  // namespace qtg
