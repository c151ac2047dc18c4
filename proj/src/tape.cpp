#include "tmnet/tape.hpp"

#include <algorithm>

namespace tmnet {

namespace {
thread_local Tape* g_active_tape = nullptr;

// Backward closures may reuse the public ops; recording is disabled while
// they run so the tape stays append-only during forward.
struct NoRecordGuard {
    Tape* saved = g_active_tape;
    NoRecordGuard() { g_active_tape = nullptr; }
    ~NoRecordGuard() { g_active_tape = saved; }
};
}

Tape::Tape() = default;

Tape::~Tape() = default;

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

Tape::Scope::~Scope() { g_active_tape = previous_; }

int Tape::watch(const Tensor& t) {
    if (!t.defined()) throw ShapeError("watch: undefined tensor");
    if (!t.requires_grad()) throw ConfigError("watch: tensor does not require grad");
    auto it = index_.find(t.storage_id());
    if (it != index_.end()) return it->second;
    int id = static_cast<int>(nodes_.size());
    TapeNode node;
    node.op = "leaf";
    node.value = t;
    nodes_.push_back(std::move(node));
    index_.emplace(t.storage_id(), id);
    return id;
}

int Tape::node_of(const Tensor& t) const {
    auto it = index_.find(t.storage_id());
    return it == index_.end() ? -1 : it->second;
}

bool Tape::has_node(const Tensor& t) const { return node_of(t) >= 0; }

int Tape::record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
                 std::function<std::vector<Tensor>(const Tensor&)> backward_fn) {
    std::vector<int> parents(inputs.size(), -1);
    bool any = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& in = inputs[i];
        if (!in.defined()) continue;
        int id = node_of(in);
        if (id < 0 && in.requires_grad()) id = watch(in);
        parents[i] = id;
        any = any || id >= 0;
    }
    if (!any) return -1;
    int id = static_cast<int>(nodes_.size());
    TapeNode node;
    node.op = op;
    node.parents = std::move(parents);
    node.value = output;
    node.backward = std::move(backward_fn);
    nodes_.push_back(std::move(node));
    index_.emplace(output.storage_id(), id);
    return id;
}

void accumulate(Tensor& acc, const Tensor& g) {
    if (!acc.defined()) {
        acc = g.clone();
        return;
    }
    if (acc.shape() != g.shape() || acc.dtype() != g.dtype())
        throw ShapeError("gradient accumulator mismatch: " + shape_str(acc.shape()) + " vs " +
                         shape_str(g.shape()));
    dispatch_dtype(acc.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* a = acc.raw<T>();
        const T* b = g.data<T>();
        const std::int64_t n = acc.numel();
        for (std::int64_t i = 0; i < n; ++i) a[i] += b[i];
    });
}

void Tape::backward(const Tensor& loss) {
    if (consumed_)
        throw ConfigError("backward: tape already consumed; call reset() to reuse it");
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar tensor");
    int root = node_of(loss);
    if (root < 0)
        throw ConfigError("backward: loss is not recorded on this tape (freed or reset tape?)");
    consumed_ = true;
    NoRecordGuard guard;
    nodes_[static_cast<std::size_t>(root)].grad = Tensor::ones(loss.shape(), loss.dtype());
    for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
        TapeNode& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.grad.defined() || node.parents.empty() || !node.backward) continue;
        std::vector<Tensor> parent_grads = node.backward(node.grad);
        if (parent_grads.size() != node.parents.size())
            throw ConfigError(std::string("backward rule of ") + node.op +
                              " returned wrong gradient count");
        for (std::size_t p = 0; p < node.parents.size(); ++p) {
            int pid = node.parents[p];
            if (pid < 0 || !parent_grads[p].defined()) continue;
            accumulate(nodes_[static_cast<std::size_t>(pid)].grad, parent_grads[p]);
        }
    }
}

Tensor Tape::grad(const Tensor& t) const {
    int id = node_of(t);
    if (id < 0) throw ConfigError("grad: tensor is not recorded on this tape");
    const TapeNode& node = nodes_[static_cast<std::size_t>(id)];
    if (node.grad.defined()) return node.grad;
    return Tensor::zeros(t.shape(), t.dtype());
}

void Tape::reset() {
    nodes_.clear();
    index_.clear();
    consumed_ = false;
}

}  // namespace tmnet
