#pragma once

#include <bit>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bifc/diffcore/tensor.hpp"

namespace bifc {

/// A named learnable tensor owned by a module.
struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered, non-owning view of a model's parameters. Order is the
/// checkpoint order and the optimizer order.
class ParameterSet {
 public:
  void add(Parameter& p) { items_.push_back(&p); }
  void append(const ParameterSet& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }

  std::size_t size() const noexcept { return items_.size(); }
  Parameter& operator[](std::size_t i) const { return *items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const Parameter* p : items_) n += p->value.size();
    return n;
  }

  std::vector<Tensor> snapshot() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const Parameter* p : items_) out.push_back(p->value);
    return out;
  }

  void restore(const std::vector<Tensor>& values) const {
    if (values.size() != items_.size()) {
      throw Error("parameters: snapshot has " + std::to_string(values.size()) +
                  " entries, expected " + std::to_string(items_.size()));
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
      require_same_shape(items_[i]->value, values[i], "parameters");
      items_[i]->value = values[i];
    }
  }

 private:
  std::vector<Parameter*> items_;
};

/// Gradient per parameter, keyed by parameter identity.
class Gradients {
 public:
  Tensor& at(const Parameter& p) {
    auto it = grads_.find(&p);
    if (it == grads_.end()) {
      it = grads_.emplace(&p, Tensor(p.value.shape())).first;
    }
    return it->second;
  }

  const Tensor* find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  void accumulate(const Gradients& other, double scale = 1.0) {
    for (const auto& [param, grad] : other.grads_) {
      Tensor& dst = at(*param);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * grad[i];
    }
  }

  /// Gradients aligned with `params`; parameters absent here get zeros.
  std::vector<Tensor> aligned(const ParameterSet& params) const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params) {
      const Tensor* g = find(*p);
      out.push_back(g ? *g : Tensor(p->value.shape()));
    }
    return out;
  }

  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

/// Differentiable operator recorded on a tape. `forward` must be a pure
/// function of its inputs (and of data fixed at construction) so the tape
/// can be replayed. `backward` accumulates into the non-null entries of
/// `grad_in`.
class Op {
 public:
  virtual ~Op() = default;
  virtual const char* name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> in) = 0;
  virtual void backward(std::span<const Tensor* const> in, const Tensor& out,
                        const Tensor& grad_out,
                        std::span<Tensor* const> grad_in) = 0;
  /// Mixes the op's branch pattern (ReLU masks, floor indices, ...) into
  /// `hash`. Two evaluations with equal signatures lie on the same smooth
  /// piece of the function. Smooth ops leave the hash untouched.
  virtual void signature(std::span<const Tensor* const> /*in*/,
                         std::uint64_t& /*hash*/) const {}
};

inline void mix_hash(std::uint64_t& hash, std::uint64_t v) {
  hash ^= v + 0x9e3779b97f4a7c15ULL + (hash << 6) + (hash >> 2);
}

namespace debug {
// Name of an op whose backward contribution gets negated. Test hook for the
// gradient checker's sabotage detection; empty in normal operation.
inline std::string& sign_flip_fault() {
  static std::string name;
  return name;
}
}  // namespace debug

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const noexcept { return index_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Records operations during a forward pass and runs reverse-mode
/// differentiation over them. One tape belongs to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{nullptr, {}, std::move(value), nullptr, false});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf whose gradient is tracked but that is not a parameter.
  Var variable(Tensor value) {
    nodes_.push_back(Node{nullptr, {}, std::move(value), nullptr, true});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf bound to a parameter. Repeated calls return the same node, so a
  /// parameter used several times receives one summed gradient.
  Var param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    const bool trainable = !frozen_.contains(&p);
    nodes_.push_back(Node{nullptr, {}, p.value, trainable ? &p : nullptr,
                          trainable});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  /// Parameters frozen before first use enter the tape as constants.
  void freeze(const Parameter& p) { frozen_.insert(&p); }
  void freeze(const ParameterSet& params) {
    for (const Parameter* p : params) frozen_.insert(p);
  }

  Var apply(std::unique_ptr<Op> op, std::initializer_list<Var> inputs) {
    return apply(std::move(op), std::vector<Var>(inputs));
  }

  Var apply(std::unique_ptr<Op> op, const std::vector<Var>& inputs) {
    std::vector<std::size_t> ids;
    std::vector<const Tensor*> in;
    bool requires_grad = false;
    ids.reserve(inputs.size());
    in.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw Error("tape: input recorded on another tape");
      ids.push_back(v.index_);
      in.push_back(&nodes_[v.index_].value);
      requires_grad = requires_grad || nodes_[v.index_].requires_grad;
    }
    Tensor out = op->forward(in);
    nodes_.push_back(
        Node{std::move(op), std::move(ids), std::move(out), nullptr, requires_grad});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(const Var& v) const { return nodes_[v.index_].value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse pass from a scalar node. Returns the gradient of every
  /// trainable parameter leaf (zeros for leaves the loss does not reach);
  /// gradients of other nodes are available through grad().
  Gradients backward(const Var& loss) {
    if (loss.tape_ != this) throw Error("backward: loss belongs to another tape");
    const Tensor& lv = nodes_[loss.index_].value;
    if (lv.size() != 1) {
      throw Error("backward: loss must be a scalar, got shape " +
                  shape_str(lv.shape()));
    }
    grads_.assign(nodes_.size(), Tensor());
    grads_[loss.index_] = Tensor(lv.shape(), 1.0);
    const std::string& fault = debug::sign_flip_fault();

    for (std::size_t i = loss.index_ + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.op || grads_[i].empty() || !node.requires_grad) continue;
      std::vector<const Tensor*> in;
      std::vector<Tensor*> gin;
      in.reserve(node.inputs.size());
      gin.reserve(node.inputs.size());
      for (std::size_t id : node.inputs) {
        in.push_back(&nodes_[id].value);
        if (nodes_[id].requires_grad) {
          if (grads_[id].empty()) grads_[id] = Tensor(nodes_[id].value.shape());
          gin.push_back(&grads_[id]);
        } else {
          gin.push_back(nullptr);
        }
      }
      if (!fault.empty() && fault == node.op->name()) {
        // Route through scratch buffers so the op's contribution can be
        // negated before it is accumulated.
        std::vector<Tensor> scratch;
        std::vector<Tensor*> sgin;
        scratch.reserve(gin.size());
        for (Tensor* g : gin) {
          scratch.emplace_back(g ? Tensor(g->shape()) : Tensor());
          sgin.push_back(g ? &scratch.back() : nullptr);
        }
        node.op->backward(in, node.value, grads_[i], sgin);
        for (std::size_t k = 0; k < gin.size(); ++k) {
          if (!gin[k]) continue;
          for (std::size_t e = 0; e < gin[k]->size(); ++e) {
            (*gin[k])[e] -= scratch[k][e];
          }
        }
      } else {
        node.op->backward(in, node.value, grads_[i], gin);
      }
    }

    Gradients result;
    for (const auto& [param, id] : param_nodes_) {
      if (!nodes_[id].param) continue;
      Tensor& dst = result.at(*param);
      if (!grads_[id].empty()) dst = grads_[id];
    }
    return result;
  }

  /// Gradient of the last backward pass w.r.t. a node (zeros if unreached).
  Tensor grad(const Var& v) const {
    if (v.index_ < grads_.size() && !grads_[v.index_].empty()) {
      return grads_[v.index_];
    }
    return Tensor(nodes_[v.index_].value.shape());
  }

  /// Recomputes every recorded op from its recorded inputs and reports
  /// whether each output is reproduced bit for bit.
  bool replay_matches() {
    for (Node& node : nodes_) {
      if (!node.op) continue;
      std::vector<const Tensor*> in;
      for (std::size_t id : node.inputs) in.push_back(&nodes_[id].value);
      const Tensor again = node.op->forward(in);
      if (again.shape() != node.value.shape()) return false;
      for (std::size_t e = 0; e < again.size(); ++e) {
        if (std::bit_cast<std::uint64_t>(again[e]) !=
            std::bit_cast<std::uint64_t>(node.value[e])) {
          return false;
        }
      }
    }
    return true;
  }

  /// Combined branch pattern of every non-smooth op on the tape.
  std::uint64_t branch_signature() const {
    std::uint64_t hash = 0;
    for (const Node& node : nodes_) {
      if (!node.op) continue;
      std::vector<const Tensor*> in;
      for (std::size_t id : node.inputs) in.push_back(&nodes_[id].value);
      node.op->signature(in, hash);
    }
    return hash;
  }

 private:
  struct Node {
    std::unique_ptr<Op> op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Parameter* param;
    bool requires_grad;
  };

  std::deque<Node> nodes_;  // deque keeps value references stable
  std::vector<Tensor> grads_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::unordered_set<const Parameter*> frozen_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

}  // namespace bifc
