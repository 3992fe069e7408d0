#pragma once

#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "vmatt/tensor.hpp"

namespace vmatt {

// Reverse-mode tape. Ops append one node per recorded call; backward() walks
// the nodes in strict reverse order and sums gradient contributions per
// tensor identity. A tape belongs to one logical thread; independent tapes
// on different threads do not interact.
template <typename T>
class GradTape {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradTape&)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  static GradTape*& active() {
    thread_local GradTape* current = nullptr;
    return current;
  }

  bool tracks(const Tensor<T>& t) const {
    return t.requires_grad() || tracked_.count(t.id()) > 0;
  }

  template <typename... Ts>
  bool tracks_any(const Tensor<T>& first, const Ts&... rest) const {
    if (tracks(first)) return true;
    if constexpr (sizeof...(rest) > 0) return tracks_any(rest...);
    return false;
  }

  void record(const Tensor<T>& out, BackwardFn fn) {
    tracked_.insert(out.id());
    nodes_.push_back(Node{out.id(), std::move(fn)});
  }

  void accumulate(const Tensor<T>& t, const Tensor<T>& g) {
    if (!tracks(t)) return;
    auto it = grads_.find(t.id());
    if (it == grads_.end()) {
      grads_.emplace(t.id(), g.clone());
    } else {
      it->second.array() += g.array();
    }
  }

  bool has_grad(const Tensor<T>& t) const { return grads_.count(t.id()) > 0; }

  // Gradient accumulated for t, or an undefined tensor if none reached it.
  Tensor<T> grad(const Tensor<T>& t) const {
    auto it = grads_.find(t.id());
    return it == grads_.end() ? Tensor<T>() : it->second;
  }

  size_t size() const { return nodes_.size(); }

  void run_backward(const Tensor<T>& loss) {
    check_shape(loss.numel() == 1,
                "backward requires a scalar loss, got " + loss.shape().str());
    grads_.clear();
    grads_.emplace(loss.id(), ones_like(loss));
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      auto g = grads_.find(it->out_id);
      if (g == grads_.end()) continue;
      const Tensor<T> grad_out = g->second;
      it->fn(grad_out, *this);
    }
  }

 private:
  struct Node {
    std::int64_t out_id;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::unordered_set<std::int64_t> tracked_;
  std::unordered_map<std::int64_t, Tensor<T>> grads_;
};

// RAII activation: ops record onto `tape` while the scope is alive.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(GradTape<T>& tape) : prev_(GradTape<T>::active()) {
    GradTape<T>::active() = &tape;
  }
  ~TapeScope() { GradTape<T>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape<T>* prev_;
};

template <typename T>
void backward(GradTape<T>& tape, const Tensor<T>& loss) {
  tape.run_backward(loss);
}

}  // namespace vmatt
