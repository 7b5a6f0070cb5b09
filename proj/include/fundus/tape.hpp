#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "fundus/tensor.hpp"

namespace fundus {

// A named trainable tensor. Gradients accumulate across backward passes until
// zero_grad(); velocity belongs to the SGD momentum state.
template <typename T>
struct Param {
    std::string path;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> velocity;

    std::int64_t numel() const { return numel_of(shape); }
};

// Ordered registry of parameters. Registration order is the checkpoint and
// update order, so it must be deterministic. With `count_only` the store
// records names and shapes but allocates nothing (parameter accounting).
template <typename T>
class ParamStore {
public:
    explicit ParamStore(bool count_only = false) : count_only_(count_only) {}

    Param<T>& add(const std::string& path, std::vector<int> shape) {
        if (index_.count(path))
            throw std::invalid_argument("param '" + path + "' registered twice");
        auto p = std::make_unique<Param<T>>();
        p->path = path;
        p->shape = std::move(shape);
        if (!count_only_) p->value.assign(static_cast<std::size_t>(p->numel()), T(0));
        index_[path] = static_cast<int>(params_.size());
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Param<T>* find(const std::string& path) {
        auto it = index_.find(path);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::size_t size() const { return params_.size(); }
    Param<T>& at(std::size_t i) { return *params_[i]; }
    const Param<T>& at(std::size_t i) const { return *params_[i]; }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& p : params_) n += p->numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p->grad.assign(static_cast<std::size_t>(p->numel()), T(0));
    }

    bool count_only() const { return count_only_; }

private:
    bool count_only_;
    std::vector<std::unique_ptr<Param<T>>> params_;
    std::unordered_map<std::string, int> index_;
};

// Reverse-mode tape. Nodes are appended in execution order; backward() walks
// them in exact reverse order. A tape and its tensors form one execution
// context and are not shared across threads.
template <typename T>
class Tape {
public:
    using BackFn = std::function<void(Tape&)>;

    int add_node(std::int64_t numel, BackFn fn) {
        nodes_.push_back(Node{numel, std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    void set_back(int node, BackFn fn) { nodes_[node].back = std::move(fn); }

    // Gradient buffer of a node, allocated on first touch during backward.
    std::vector<T>& grad(int node) {
        auto& g = grads_[node];
        if (g.empty()) g.assign(static_cast<std::size_t>(nodes_[node].numel), T(0));
        return g;
    }

    bool has_grad(int node) const { return !grads_[node].empty(); }

    // Binds a parameter onto the tape. The returned tensor shares the
    // parameter's storage; backward adds the node gradient into param.grad.
    Tensor<T> leaf(Param<T>& p) {
        Tensor<T> t = Tensor<T>::view(p.shape, &p.value);
        t.tape = this;
        t.node = add_node(t.numel(), nullptr);
        const int id = t.node;
        Param<T>* pp = &p;
        nodes_[id].back = [pp, id](Tape& tape) {
            const auto& g = tape.grad(id);
            if (pp->grad.size() != g.size()) pp->grad.assign(g.size(), T(0));
            for (std::size_t e = 0; e < g.size(); ++e) pp->grad[e] += g[e];
        };
        return t;
    }

    // Seeds d(loss)/d(loss) = 1 and propagates to every leaf. Internal node
    // gradients are cleared per call; parameter gradients accumulate across
    // calls until ParamStore::zero_grad().
    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape));
        if (loss.tape != this || loss.node < 0)
            throw std::invalid_argument("backward: loss is not recorded on this tape");
        grads_.assign(nodes_.size(), {});
        grad(loss.node)[0] = T(1);
        for (int id = loss.node; id >= 0; --id) {
            if (!has_grad(id)) continue;  // not reachable from the loss
            if (nodes_[id].back) nodes_[id].back(*this);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::int64_t numel;
        BackFn back;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
};

}  // namespace fundus
