#pragma once

// Dense CHW tensors, a named parameter store, and a define-by-run tape with
// reverse-mode differentiation for the layer set used by the segmentation
// networks. Everything is templated on the scalar so training runs in float and
// gradient verification in double.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "skinseg/error.hpp"

namespace skinseg::nn {

template <class T>
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, int height, int width, T fill = T(0))
        : c_(channels), h_(height), w_(width), data_(std::size_t(channels) * std::size_t(height) * std::size_t(width), fill)
    {
        if (channels < 1 || height < 1 || width < 1)
            throw ContractError("tensor dimensions must be positive");
    }
    Tensor(int channels, int height, int width, std::vector<T> data)
        : c_(channels), h_(height), w_(width), data_(std::move(data))
    {
        if (channels < 1 || height < 1 || width < 1)
            throw ContractError("tensor dimensions must be positive");
        if (data_.size() != std::size_t(channels) * std::size_t(height) * std::size_t(width))
            throw ContractError("tensor data length does not match its shape");
    }

    int channels() const noexcept { return c_; }
    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane_size() const noexcept { return std::size_t(h_) * std::size_t(w_); }
    bool same_shape(const Tensor& o) const noexcept { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    T& at(int c, int y, int x) { return data_[(std::size_t(c) * std::size_t(h_) + std::size_t(y)) * std::size_t(w_) + std::size_t(x)]; }
    T at(int c, int y, int x) const { return data_[(std::size_t(c) * std::size_t(h_) + std::size_t(y)) * std::size_t(w_) + std::size_t(x)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T* plane(int c) { return data_.data() + std::size_t(c) * plane_size(); }
    const T* plane(int c) const { return data_.data() + std::size_t(c) * plane_size(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    void release() { std::vector<T>().swap(data_); }

private:
    int c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

/// Named flat parameter slots. Slot order is insertion order and is part of the
/// serialized format.
template <class T>
class ParamStore {
public:
    std::size_t add(std::string name, std::vector<int> shape)
    {
        if (index_.count(name))
            throw ContractError("duplicate parameter slot " + name);
        std::size_t n = 1;
        for (int d : shape) {
            if (d < 1)
                throw ContractError("parameter slot " + name + " has a non-positive dimension");
            n *= std::size_t(d);
        }
        index_.emplace(name, slots_.size());
        slots_.push_back(Slot{std::move(name), std::move(shape), std::vector<T>(n, T(0))});
        return slots_.size() - 1;
    }

    std::size_t slot_count() const noexcept { return slots_.size(); }
    std::size_t total_count() const noexcept
    {
        std::size_t n = 0;
        for (const auto& s : slots_)
            n += s.values.size();
        return n;
    }

    bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
    std::size_t index(std::string_view name) const
    {
        auto it = index_.find(std::string(name));
        if (it == index_.end())
            throw ContractError("unknown parameter slot " + std::string(name));
        return it->second;
    }

    const std::string& name(std::size_t i) const { return slots_.at(i).name; }
    const std::vector<int>& shape(std::size_t i) const { return slots_.at(i).shape; }
    std::span<T> values(std::size_t i) { return slots_.at(i).values; }
    std::span<const T> values(std::size_t i) const { return slots_.at(i).values; }
    std::span<T> values(std::string_view name) { return values(index(name)); }
    std::span<const T> values(std::string_view name) const { return values(index(name)); }

    /// Same slot layout, all zeros.
    ParamStore zeros_like() const
    {
        ParamStore out;
        for (const auto& s : slots_)
            out.add(s.name, s.shape);
        return out;
    }

    template <class U>
    ParamStore<U> cast() const
    {
        ParamStore<U> out;
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            out.add(slots_[i].name, slots_[i].shape);
            auto dst = out.values(i);
            std::transform(slots_[i].values.begin(), slots_[i].values.end(), dst.begin(),
                           [](T v) { return static_cast<U>(v); });
        }
        return out;
    }

    bool same_layout(const ParamStore& o) const
    {
        if (slots_.size() != o.slots_.size())
            return false;
        for (std::size_t i = 0; i < slots_.size(); ++i)
            if (slots_[i].name != o.slots_[i].name || slots_[i].shape != o.slots_[i].shape)
                return false;
        return true;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.slots_ == b.slots_; }

private:
    struct Slot {
        std::string name;
        std::vector<int> shape;
        std::vector<T> values;
        friend bool operator==(const Slot&, const Slot&) = default;
    };
    std::vector<Slot> slots_;
    std::unordered_map<std::string, std::size_t> index_;
};

using NodeId = std::size_t;

/// A scalar-valued node whose forward and backward are supplied by the caller.
/// Losses defined outside this module plug into the tape through it.
template <class T>
class ScalarOp {
public:
    virtual ~ScalarOp() = default;
    virtual double forward(std::span<const Tensor<T>* const> inputs) = 0;
    /// Accumulates d(out)/d(input) * upstream into `grads`.
    virtual void backward(std::span<const Tensor<T>* const> inputs, double upstream,
                          std::span<Tensor<T>* const> grads) = 0;
};

enum class OpKind { Input, Param, Conv2d, Relu, Sigmoid, MaxPool2, Upsample2, Concat, Sum, WeightedSum, ParamSum, Custom };

template <class T>
class Graph {
public:
    explicit Graph(const ParamStore<T>& params) : params_(&params) {}

    NodeId input(Tensor<T> value)
    {
        if (!value.all_finite())
            throw ContractError("graph input contains NaN or Inf");
        Node n;
        n.kind = OpKind::Input;
        n.value = std::move(value);
        return push(std::move(n));
    }

    /// Exposes parameter slot `slot` as a C x H x W tensor node.
    NodeId param(std::size_t slot, int channels, int height, int width)
    {
        auto vals = params_->values(slot);
        if (vals.size() != std::size_t(channels) * std::size_t(height) * std::size_t(width))
            throw ContractError("param node shape does not match slot " + params_->name(slot));
        Node n;
        n.kind = OpKind::Param;
        n.slot_w = slot;
        n.value = Tensor<T>(channels, height, width, std::vector<T>(vals.begin(), vals.end()));
        return push(std::move(n));
    }

    /// Zero-padded "same" cross-correlation, stride 1. The weight slot has shape
    /// {out, in, k, k} with k odd; the bias slot has {out}.
    NodeId conv2d(NodeId x, std::size_t weight_slot, std::size_t bias_slot)
    {
        const auto& in = value(x);
        const auto& ws = params_->shape(weight_slot);
        if (ws.size() != 4 || ws[2] != ws[3] || ws[2] % 2 == 0)
            throw ContractError("conv weight slot " + params_->name(weight_slot) + " must be {out,in,k,k} with odd k");
        if (ws[1] != in.channels())
            throw ContractError("conv " + params_->name(weight_slot) + ": expected " + std::to_string(ws[1]) +
                                " input channels, got " + std::to_string(in.channels()));
        if (params_->values(bias_slot).size() != std::size_t(ws[0]))
            throw ContractError("conv bias slot size does not match output channels");

        Node n;
        n.kind = OpKind::Conv2d;
        n.inputs = {x};
        n.slot_w = weight_slot;
        n.slot_b = bias_slot;
        n.value = Tensor<T>(ws[0], in.height(), in.width());
        conv_forward(in, params_->values(weight_slot), params_->values(bias_slot), ws[2], n.value);
        return push(std::move(n));
    }

    NodeId relu(NodeId x)
    {
        Node n = unary(OpKind::Relu, x);
        for (auto& v : n.value.data())
            v = v > T(0) ? v : T(0);
        return push(std::move(n));
    }

    NodeId sigmoid(NodeId x)
    {
        Node n = unary(OpKind::Sigmoid, x);
        for (auto& v : n.value.data()) {
            if (v >= T(0)) {
                v = T(1) / (T(1) + std::exp(-v));
            } else {
                const T e = std::exp(v);
                v = e / (T(1) + e);
            }
        }
        return push(std::move(n));
    }

    /// 2x2 non-overlapping max; ties resolve to the first cell in row-major order.
    NodeId maxpool2(NodeId x)
    {
        const auto& in = value(x);
        if (in.height() % 2 || in.width() % 2)
            throw ContractError("maxpool2 needs even height and width");
        Node n;
        n.kind = OpKind::MaxPool2;
        n.inputs = {x};
        const int oh = in.height() / 2, ow = in.width() / 2;
        n.value = Tensor<T>(in.channels(), oh, ow);
        n.argmax.resize(n.value.size());
        for (int c = 0; c < in.channels(); ++c)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    std::uint32_t best = std::uint32_t((2 * y) * in.width() + 2 * xx);
                    T bv = in.plane(c)[best];
                    const std::uint32_t cand[3] = {best + 1, best + std::uint32_t(in.width()),
                                                   best + std::uint32_t(in.width()) + 1};
                    for (auto k : cand)
                        if (in.plane(c)[k] > bv) {
                            bv = in.plane(c)[k];
                            best = k;
                        }
                    const std::size_t o = (std::size_t(c) * oh + y) * ow + xx;
                    n.value[o] = bv;
                    n.argmax[o] = best;
                }
        return push(std::move(n));
    }

    /// Nearest-neighbour 2x upsampling.
    NodeId upsample2(NodeId x)
    {
        const auto& in = value(x);
        Node n;
        n.kind = OpKind::Upsample2;
        n.inputs = {x};
        n.value = Tensor<T>(in.channels(), in.height() * 2, in.width() * 2);
        for (int c = 0; c < in.channels(); ++c)
            for (int y = 0; y < n.value.height(); ++y)
                for (int xx = 0; xx < n.value.width(); ++xx)
                    n.value.at(c, y, xx) = in.at(c, y / 2, xx / 2);
        return push(std::move(n));
    }

    /// Channel concatenation in argument order.
    NodeId concat(std::span<const NodeId> parts)
    {
        if (parts.empty())
            throw ContractError("concat needs at least one input");
        const auto& first = value(parts[0]);
        int channels = 0;
        for (auto p : parts) {
            const auto& t = value(p);
            if (t.height() != first.height() || t.width() != first.width())
                throw ContractError("concat inputs differ in spatial size");
            channels += t.channels();
        }
        Node n;
        n.kind = OpKind::Concat;
        n.inputs.assign(parts.begin(), parts.end());
        n.value = Tensor<T>(channels, first.height(), first.width());
        auto dst = n.value.data().begin();
        for (auto p : parts)
            dst = std::copy(value(p).data().begin(), value(p).data().end(), dst);
        return push(std::move(n));
    }
    NodeId concat(NodeId a, NodeId b)
    {
        const NodeId parts[2] = {a, b};
        return concat(std::span<const NodeId>(parts));
    }

    NodeId sum(NodeId x)
    {
        Node n;
        n.kind = OpKind::Sum;
        n.inputs = {x};
        double s = 0;
        for (T v : value(x).data())
            s += double(v);
        n.value = Tensor<T>(1, 1, 1, T(s));
        return push(std::move(n));
    }

    /// Scalar sum(weights * x); a random projection that turns any tensor into a checkable loss.
    NodeId weighted_sum(NodeId x, Tensor<T> weights)
    {
        if (!weights.same_shape(value(x)))
            throw ContractError("weighted_sum weights must match the input shape");
        Node n;
        n.kind = OpKind::WeightedSum;
        n.inputs = {x};
        double s = 0;
        const auto& in = value(x);
        for (std::size_t i = 0; i < in.size(); ++i)
            s += double(weights[i]) * double(in[i]);
        n.aux = std::move(weights);
        n.value = Tensor<T>(1, 1, 1, T(s));
        return push(std::move(n));
    }

    /// Sum of every parameter in the store.
    NodeId param_sum()
    {
        Node n;
        n.kind = OpKind::ParamSum;
        double s = 0;
        for (std::size_t i = 0; i < params_->slot_count(); ++i)
            for (T v : params_->values(i))
                s += double(v);
        n.value = Tensor<T>(1, 1, 1, T(s));
        return push(std::move(n));
    }

    NodeId custom(std::vector<NodeId> inputs, std::shared_ptr<ScalarOp<T>> op)
    {
        Node n;
        n.kind = OpKind::Custom;
        n.inputs = std::move(inputs);
        std::vector<const Tensor<T>*> ins;
        for (auto i : n.inputs)
            ins.push_back(&value(i));
        const double v = op->forward(ins);
        n.value = Tensor<T>(1, 1, 1, T(v));
        n.op = std::move(op);
        return push(std::move(n));
    }

    const Tensor<T>& value(NodeId id) const
    {
        if (id >= nodes_.size())
            throw ContractError("unknown graph node");
        if (nodes_[id].value.size() == 0)
            throw ContractError("graph node has no cached forward value");
        return nodes_[id].value;
    }

    /// Gradient of the sink with respect to node `id`; valid after backward().
    const Tensor<T>& grad(NodeId id) const
    {
        if (!backward_done_)
            throw ContractError("gradients are available only after backward()");
        return nodes_.at(id).grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    const ParamStore<T>& params() const noexcept { return *params_; }
    OpKind kind(NodeId id) const { return nodes_.at(id).kind; }

    /// Reverse-mode pass from the last node, which must be a scalar. Each forward
    /// tape supports exactly one backward pass.
    ParamStore<T> backward()
    {
        if (nodes_.empty())
            throw ContractError("backward on an empty graph");
        if (backward_done_)
            throw ContractError("backward already ran on this graph; rebuild the forward pass first");
        const NodeId sink = nodes_.size() - 1;
        if (nodes_[sink].value.size() != 1)
            throw ContractError("backward needs a scalar sink");

        ParamStore<T> pgrad = params_->zeros_like();
        for (auto& n : nodes_)
            n.grad = Tensor<T>(n.value.channels(), n.value.height(), n.value.width());
        nodes_[sink].grad[0] = T(1);

        for (NodeId id = sink + 1; id-- > 0;) {
            Node& n = nodes_[id];
            const Tensor<T>& g = n.grad;
            switch (n.kind) {
            case OpKind::Input:
                break;
            case OpKind::Param: {
                auto dst = pgrad.values(n.slot_w);
                for (std::size_t i = 0; i < g.size(); ++i)
                    dst[i] += g[i];
                break;
            }
            case OpKind::Conv2d: {
                const auto& ws = params_->shape(n.slot_w);
                conv_backward(nodes_[n.inputs[0]].value, params_->values(n.slot_w), ws[2], g,
                              nodes_[n.inputs[0]].grad, pgrad.values(n.slot_w), pgrad.values(n.slot_b));
                break;
            }
            case OpKind::Relu: {
                const auto& in = nodes_[n.inputs[0]].value;
                auto& gi = nodes_[n.inputs[0]].grad;
                for (std::size_t i = 0; i < g.size(); ++i)
                    if (in[i] > T(0))
                        gi[i] += g[i];
                break;
            }
            case OpKind::Sigmoid: {
                auto& gi = nodes_[n.inputs[0]].grad;
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T y = n.value[i];
                    gi[i] += g[i] * y * (T(1) - y);
                }
                break;
            }
            case OpKind::MaxPool2: {
                auto& gi = nodes_[n.inputs[0]].grad;
                const std::size_t op = n.value.plane_size();
                for (int c = 0; c < n.value.channels(); ++c)
                    for (std::size_t k = 0; k < op; ++k)
                        gi.plane(c)[n.argmax[std::size_t(c) * op + k]] += g[std::size_t(c) * op + k];
                break;
            }
            case OpKind::Upsample2: {
                auto& gi = nodes_[n.inputs[0]].grad;
                for (int c = 0; c < g.channels(); ++c)
                    for (int y = 0; y < g.height(); ++y)
                        for (int x = 0; x < g.width(); ++x)
                            gi.at(c, y / 2, x / 2) += g.at(c, y, x);
                break;
            }
            case OpKind::Concat: {
                std::size_t offset = 0;
                for (auto in : n.inputs) {
                    auto& gi = nodes_[in].grad;
                    for (std::size_t i = 0; i < gi.size(); ++i)
                        gi[i] += g[offset + i];
                    offset += gi.size();
                }
                break;
            }
            case OpKind::Sum: {
                auto& gi = nodes_[n.inputs[0]].grad;
                for (auto& v : gi.data())
                    v += g[0];
                break;
            }
            case OpKind::WeightedSum: {
                auto& gi = nodes_[n.inputs[0]].grad;
                for (std::size_t i = 0; i < gi.size(); ++i)
                    gi[i] += g[0] * n.aux[i];
                break;
            }
            case OpKind::ParamSum: {
                for (std::size_t s = 0; s < pgrad.slot_count(); ++s)
                    for (auto& v : pgrad.values(s))
                        v += g[0];
                break;
            }
            case OpKind::Custom: {
                std::vector<const Tensor<T>*> ins;
                std::vector<Tensor<T>*> gs;
                for (auto i : n.inputs) {
                    ins.push_back(&nodes_[i].value);
                    gs.push_back(&nodes_[i].grad);
                }
                n.op->backward(ins, double(g[0]), gs);
                break;
            }
            }
        }
        backward_done_ = true;
        return pgrad;
    }

private:
    struct Node {
        OpKind kind = OpKind::Input;
        std::vector<NodeId> inputs;
        std::size_t slot_w = 0, slot_b = 0;
        Tensor<T> value;
        Tensor<T> grad;
        Tensor<T> aux;
        std::vector<std::uint32_t> argmax;
        std::shared_ptr<ScalarOp<T>> op;
    };

    NodeId push(Node n)
    {
        if (backward_done_)
            throw ContractError("cannot extend a graph after backward()");
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    Node unary(OpKind kind, NodeId x)
    {
        Node n;
        n.kind = kind;
        n.inputs = {x};
        n.value = value(x);
        return n;
    }

    static void conv_forward(const Tensor<T>& in, std::span<const T> w, std::span<const T> b, int k, Tensor<T>& out)
    {
        const int cin = in.channels(), cout = out.channels(), H = in.height(), W = in.width(), p = k / 2;
        for (int o = 0; o < cout; ++o) {
            T* dst = out.plane(o);
            std::fill(dst, dst + out.plane_size(), b[std::size_t(o)]);
            for (int i = 0; i < cin; ++i) {
                const T* src = in.plane(i);
                const T* wk = w.data() + (std::size_t(o) * cin + i) * std::size_t(k * k);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = wk[ky * k + kx];
                        const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
                        for (int y = std::max(0, p - ky); y < std::min(H, H + p - ky); ++y) {
                            T* drow = dst + std::size_t(y) * W;
                            const T* srow = src + std::size_t(y + ky - p) * W;
                            const int dx = kx - p;
                            for (int x = x0; x < x1; ++x)
                                drow[x] += wv * srow[x + dx];
                        }
                    }
                }
            }
        }
    }

    static void conv_backward(const Tensor<T>& in, std::span<const T> w, int k, const Tensor<T>& gout,
                              Tensor<T>& gin, std::span<T> gw, std::span<T> gb)
    {
        const int cin = in.channels(), cout = gout.channels(), H = in.height(), W = in.width(), p = k / 2;
        for (int o = 0; o < cout; ++o) {
            const T* go = gout.plane(o);
            T sb = 0;
            for (std::size_t i = 0; i < gout.plane_size(); ++i)
                sb += go[i];
            gb[std::size_t(o)] += sb;
            for (int i = 0; i < cin; ++i) {
                const T* src = in.plane(i);
                T* gsrc = gin.plane(i);
                const std::size_t wbase = (std::size_t(o) * cin + i) * std::size_t(k * k);
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const T wv = w[wbase + std::size_t(ky * k + kx)];
                        const int x0 = std::max(0, p - kx), x1 = std::min(W, W + p - kx);
                        T acc = 0;
                        for (int y = std::max(0, p - ky); y < std::min(H, H + p - ky); ++y) {
                            const T* grow = go + std::size_t(y) * W;
                            const std::size_t off = std::size_t(y + ky - p) * W;
                            const T* srow = src + off;
                            T* gsrow = gsrc + off;
                            const int dx = kx - p;
                            for (int x = x0; x < x1; ++x) {
                                acc += grow[x] * srow[x + dx];
                                gsrow[x + dx] += wv * grow[x];
                            }
                        }
                        gw[wbase + std::size_t(ky * k + kx)] += acc;
                    }
                }
            }
        }
    }

    const ParamStore<T>* params_;
    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
struct AdamState {
    ParamStore<T> m;
    ParamStore<T> v;
};

template <class T>
AdamState<T> make_adam_state(const ParamStore<T>& params)
{
    return AdamState<T>{params.zeros_like(), params.zeros_like()};
}

/// One bias-corrected Adam update at step t (1-based).
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, const AdamConfig& cfg,
               std::int64_t t)
{
    if (t < 1)
        throw ContractError("Adam step index must be >= 1");
    if (!params.same_layout(grads) || !params.same_layout(state.m) || !params.same_layout(state.v))
        throw ContractError("Adam parameter, gradient and state layouts differ");
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t s = 0; s < params.slot_count(); ++s) {
        auto p = params.values(s);
        auto g = grads.values(s);
        auto m = state.m.values(s);
        auto v = state.v.values(s);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = double(g[i]);
            const double mi = cfg.beta1 * double(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * double(v[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = T(mi);
            v[i] = T(vi);
            p[i] = T(double(p[i]) - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
        }
    }
}

struct GradCheckOptions {
    std::size_t coordinates = 200;
    std::uint64_t seed = 1;
    /// Central-difference step is step_scale * (1 + |theta|).
    double step_scale = 1e-5;
    /// Denominator floor for the relative error, so near-zero gradients compare absolutely.
    double abs_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates_checked = 0;
    bool passed = false;
    std::string worst_slot;
    std::size_t worst_index = 0;
};

/// Compares `analytic` against double-precision central differences of the scalar
/// produced by `build(Graph<double>&)`, over a seeded sample of coordinates.
template <class Builder>
GradCheckReport compare_gradients(const ParamStore<double>& analytic, Builder&& build, const ParamStore<double>& params,
                                  double tolerance, const GradCheckOptions& opts = {})
{
    if (!analytic.same_layout(params))
        throw ContractError("analytic gradient layout differs from the parameters");
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t s = 0; s < params.slot_count(); ++s)
        for (std::size_t i = 0; i < params.values(s).size(); ++i)
            coords.emplace_back(s, i);
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    if (coords.size() > opts.coordinates)
        coords.resize(opts.coordinates);

    GradCheckReport rep;
    ParamStore<double> probe = params;
    auto eval = [&]() {
        Graph<double> g(probe);
        build(g);
        return g.value(g.size() - 1)[0];
    };
    for (auto [s, i] : coords) {
        const double theta = probe.values(s)[i];
        const double h = opts.step_scale * (1.0 + std::abs(theta));
        probe.values(s)[i] = theta + h;
        const double fp = eval();
        probe.values(s)[i] = theta - h;
        const double fm = eval();
        probe.values(s)[i] = theta;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic.values(s)[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
        if (rel > rep.max_rel_error || rep.coordinates_checked == 0) {
            rep.max_rel_error = std::max(rep.max_rel_error, rel);
            rep.worst_slot = params.name(s);
            rep.worst_index = i;
        }
        ++rep.coordinates_checked;
    }
    rep.passed = rep.max_rel_error < tolerance;
    return rep;
}

/// Analytic gradients in precision T, checked against double central differences.
/// `build` is invoked as build(Graph<T>&) and build(Graph<double>&) and must end the
/// tape with a scalar node.
template <class T, class Builder>
GradCheckReport grad_check(Builder&& build, const ParamStore<double>& params, double tolerance,
                           const GradCheckOptions& opts = {})
{
    const ParamStore<T> cast = params.template cast<T>();
    Graph<T> g(cast);
    build(g);
    const ParamStore<double> analytic = g.backward().template cast<double>();
    return compare_gradients(analytic, build, params, tolerance, opts);
}

}  // namespace skinseg::nn
