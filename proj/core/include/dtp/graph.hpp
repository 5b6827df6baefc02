#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtp/tensor.hpp"

namespace dtp {

class Graph;

// Named trainable tensors. Gradient buffers live with the optimizer or a
// per-graph sink, never here, so one ParameterSet can serve concurrent graphs
// read-only. add() must not be called while graphs referencing it are alive
// (leaf nodes borrow value storage).
class ParameterSet {
 public:
  int add(const std::string& name, Tensor init);
  int find(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(values_.size()); }
  const std::string& name(int id) const { return names_[static_cast<size_t>(id)]; }
  Tensor& value(int id) { return values_[static_cast<size_t>(id)]; }
  const Tensor& value(int id) const { return values_[static_cast<size_t>(id)]; }
  int64_t total_elements() const;
  std::vector<Tensor> zero_like_grads() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, int> index_;
};

struct Node {
  const Tensor* val = nullptr;  // points at owned for ops, elsewhere for leaves
  Tensor owned;
  Tensor grad;  // lazily allocated on first accumulation
  bool requires_grad = false;
  int param_id = -1;
  std::function<void()> backward;

  const Tensor& v() const { return *val; }
  bool has_grad() const { return !grad.empty(); }
};

// Reverse-mode tape. Ops evaluate eagerly at construction; creation order is
// a topological order, so backward() is a single reverse sweep. One graph per
// thread; distinct graphs over one ParameterSet may run concurrently.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  size_t node_count() const { return nodes_.size(); }

  Node* input(Tensor t);
  Node* input_borrow(const Tensor* t);  // caller keeps *t alive and unchanged
  Node* param(ParameterSet& ps, int param_id);

  // Elementwise; shapes must match exactly.
  Node* add(Node* a, Node* b);
  Node* sub(Node* a, Node* b);
  Node* mul(Node* a, Node* b);
  Node* scale(Node* a, double s);

  // a:[n,d] plus row vector b:[1,d] broadcast over rows.
  Node* add_rowvec(Node* a, Node* b);

  Node* matmul(Node* a, Node* b);
  Node* transpose(Node* a);

  Node* slice_rows(Node* a, int64_t r0, int64_t n);
  Node* slice_cols(Node* a, int64_t c0, int64_t n);
  Node* concat_rows(const std::vector<Node*>& parts);
  Node* concat_cols(const std::vector<Node*>& parts);

  Node* softmax_rows(Node* a);
  // gain is [d] or a [1] scalar broadcast across the row.
  Node* rms_norm(Node* x, Node* gain, double eps);
  Node* layer_norm(Node* x, Node* gain, Node* bias, double eps);
  Node* gelu(Node* a);

  Node* gather_rows(Node* table, std::vector<int64_t> ids);

  Node* sum_all(Node* a);
  Node* mean_all(Node* a);
  // Mean of (pred-target)^2 over elements where mask is nonzero.
  Node* mse_masked(Node* pred, Tensor target, Tensor mask);

  void backward(Node* root);
  // Adds each parameter leaf's gradient into grads[param_id], in creation
  // order, so accumulation across a batch is order-deterministic.
  void add_param_grads(std::vector<Tensor>& grads) const;

 private:
  Node* make(Tensor value, std::vector<Node*> parents);
  static void ensure_grad(Node* n);

  std::deque<Node> nodes_;
  std::vector<Node*> param_leaves_;
  bool grad_enabled_;
};

}  // namespace dtp
