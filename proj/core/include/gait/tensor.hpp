#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gait/common.hpp"

namespace gait {

class Tape;

/// Dense rank-1..4 tensor of doubles, row-major (batch, channel, height,
/// width). Values are immutable once an op has produced the tensor; copies
/// share storage. A tensor may reference a node on the active GradientTape,
/// in which case backward() will deliver a gradient for it.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  int64_t dim(size_t i) const;

  std::span<const double> values() const;
  /// Mutable view of the storage. Only valid for leaf tensors between
  /// optimization steps (parameter updates); op results are immutable.
  std::span<double> mutable_values();

  double item() const;  // requires numel()==1
  /// Element access for rank-4 tensors.
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on);

  /// Node id on the tape that produced this tensor, or -1.
  int node() const { return node_; }
  uint64_t tape_id() const { return tape_id_; }

  /// Same storage, detached from any tape and with requires_grad off.
  Tensor detach() const;

  /// Identity of the underlying storage (used to key leaf gradients).
  const void* storage_key() const { return data_.get(); }

 private:
  friend class Tape;
  std::shared_ptr<std::vector<double>> data_;
  Shape shape_;
  bool requires_grad_ = false;
  int node_ = -1;
  uint64_t tape_id_ = 0;
};

bool same_values(const Tensor& a, const Tensor& b);  // bit-exact compare

/// Reverse-mode gradient tape. Construction pushes the tape as the active
/// one for the current thread; ops record themselves while it is active.
/// Nodes are appended in topological order, so a single reverse sweep in
/// backward() is sufficient. A tape belongs to one thread.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  using BackwardFn = std::function<void(std::span<const double> grad_out, Tape&)>;

  /// Record an op node; returns its id. `inputs` may contain -1 entries for
  /// untracked inputs (the backward fn must skip those).
  int record(std::string op_name, Shape out_shape, std::vector<int> inputs,
             BackwardFn backward);

  /// Node id for `t` on this tape. Registers a leaf node for tensors with
  /// requires_grad set that are not yet known here; returns -1 for
  /// untracked tensors.
  int node_of(const Tensor& t);
  bool tracked(const Tensor& t) const;

  /// Mark an op result as produced by node `id` on this tape.
  void bind(Tensor& t, int id);

  /// Reverse sweep from a scalar loss. Single use; a second call throws.
  void backward(const Tensor& loss);

  /// Gradient of the loss w.r.t. `t` (dense, same shape). Tensors with
  /// requires_grad that the loss never touched get zeros. Throws for
  /// untracked tensors without requires_grad.
  Tensor grad_of(const Tensor& t) const;

  /// Accumulation buffer for a node's gradient, zero-initialized on first
  /// access. Backward fns add into it directly.
  double* grad_buffer(int node);
  void accumulate(int node, std::span<const double> g);
  bool has_grad(int node) const;

  size_t size() const { return nodes_.size(); }
  uint64_t id() const { return id_; }
  bool consumed() const { return consumed_; }

 private:
  struct NodeRec {
    std::string op;
    Shape shape;
    int64_t numel = 0;
    std::vector<int> inputs;
    BackwardFn backward;  // empty for leaves
  };

  std::vector<NodeRec> nodes_;
  std::vector<std::vector<double>> grads_;
  std::unordered_map<const void*, int> leaf_ids_;
  bool consumed_ = false;
  uint64_t id_ = 0;
  Tape* prev_active_ = nullptr;
};

}  // namespace gait
