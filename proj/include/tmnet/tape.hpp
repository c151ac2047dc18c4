#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tmnet/tensor.hpp"

namespace tmnet {

// One recorded operation. Saved forward values live inside the backward
// closure; the closure returns one gradient per parent (undefined Tensor for
// non-differentiable parents).
struct TapeNode {
    const char* op = "leaf";
    std::vector<int> parents;
    Tensor value;  // keeps the output alive so storage identity stays unique
    Tensor grad;   // lazily allocated accumulator, shape == value.shape()
    std::function<std::vector<Tensor>(const Tensor&)> backward;
};

// Reverse-mode tape. Append-only during forward; backward() walks nodes in
// strict reverse creation order. One tape per training context; ops record on
// the innermost active tape of the current thread.
class Tape {
  public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Innermost active tape of this thread, or nullptr outside any scope.
    static Tape* active();

    // Registers a leaf. No-op if already present; rejects tensors that do not
    // require grad.
    int watch(const Tensor& t);

    // Seeds d(loss)/d(loss)=1 and accumulates into every reachable leaf.
    // Errors: non-scalar loss, loss not recorded here, repeated call without
    // reset().
    void backward(const Tensor& loss);

    // Gradient accumulated for a recorded tensor; zeros of its shape if no
    // gradient flowed.
    Tensor grad(const Tensor& t) const;
    bool has_node(const Tensor& t) const;

    // Clears all nodes; the tape can record a fresh graph afterwards.
    void reset();

    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Recording hook used by ops: looks up inputs (auto-watching requires_grad
    // leaves), returns -1 when nothing differentiable feeds the op.
    int record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
               std::function<std::vector<Tensor>(const Tensor&)> backward_fn);

    int node_of(const Tensor& t) const;  // -1 when absent

    // RAII scope that makes a tape the active one.
    class Scope {
      public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

      private:
        Tape* previous_;
    };

  private:
    std::vector<TapeNode> nodes_;
    std::unordered_map<const void*, int> index_;  // storage id -> node
    bool consumed_ = false;
};

// In-place gradient accumulation used by the backward pass; acc must be owned
// by the tape (never user-visible before backward completes).
void accumulate(Tensor& acc, const Tensor& g);

}  // namespace tmnet
