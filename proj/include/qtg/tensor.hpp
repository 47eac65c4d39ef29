#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qtg/errors.hpp"

namespace qtg {

/// Dense row-major array of 64-bit floats with explicit shape metadata.
/// Graph ops work on 2-D tensors; vectors are carried as [1, n] rows.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until a backward pass fills it

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);             // [1,1]
    static Tensor row(std::vector<double> values);  // [1,n]
    static Tensor identity(std::size_t n);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_matrix() const { return shape.size() == 2; }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool all_finite() const;
};

class Tape;

/// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
};

/// Define-by-run tape. Operations append nodes in topological order; the
/// backward pass walks the record once in reverse, accumulating adjoints
/// additively across fan-out.
class Tape {
  public:
    explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

    /// Differentiable leaf (copies the tensor in; honors t.requires_grad).
    Var leaf(const Tensor& t);
    Var leaf(const Tensor& t, bool requires_grad);
    /// Non-differentiable input.
    Var constant(Tensor t);

    const Tensor& value(Var v) const;
    /// Adjoint of a node after backward(); zero tensor if it never received one.
    Tensor grad(Var v) const;

    std::size_t node_count() const { return nodes_.size(); }
    bool checks_finite() const { return check_finite_; }

    // --- internals used by the op implementations ---
    struct Node {
        Tensor value;
        std::vector<double> adjoint;  // lazily sized to value.size()
        std::vector<int> inputs;
        std::function<void(Tape&, int)> backward;  // nullptr for leaves/constants
        bool needs_grad = false;
        bool is_grad_leaf = false;
    };

    int emit(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> backward,
             const char* op_name);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::vector<double>& adjoint(int id);
    bool node_needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    void run_backward(Var loss);

  private:
    // Deque keeps node references stable while ops append new nodes.
    std::deque<Node> nodes_;
    bool check_finite_ = false;
};

// ----- graph operations -----

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double c);
Var add_rowvec(Var m, Var row);  // [r,c] + [1,c] broadcast over rows
Var softmax(Var m);              // row-wise, max-subtracted
Var layer_norm(Var m, Var gain, Var bias);  // row-wise; gain/bias [1,c]
Var gelu(Var a);
Var relu(Var a);
Var sum_all(Var a);  // -> [1,1]
Var slice_rows(Var a, std::size_t first, std::size_t count);
Var slice_cols(Var a, std::size_t first, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var a, const std::vector<std::size_t>& indices);

/// Backward from a scalar loss; fills grads of every requires_grad leaf.
void backward(Tape& tape, Var loss);

// ----- plain kernels shared with non-graph callers -----

/// c += a(m,k) * b(k,n)
void mm_accum(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n);
/// c += a(m,k) * b(n,k)^T
void mm_accum_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);
/// c += a(m,k)^T * b(m,n)
void mm_accum_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);

/// In-place numerically stable softmax of one row.
void softmax_row_inplace(double* x, std::size_t n);
std::vector<double> stable_softmax(const std::vector<double>& x);

// ----- gradient checking -----

using GraphBuilder = std::function<Var(Tape&, Var)>;
using MultiGraphBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |central|).
/// Evaluates the builder twice and raises ContractError if it is not
/// deterministic.
double grad_check(const GraphBuilder& f, const Tensor& x, double h = 1e-5);
double grad_check(const MultiGraphBuilder& f, const std::vector<Tensor>& xs, double h = 1e-5);

}  // namespace qtg
