#pragma once

// Minimal dense feed-forward nets with explicit backprop and Adam.
// Parameters are float32 (4 bytes each on disk); all arithmetic runs in
// double except the batched inference path used by the density estimator,
// which runs in float for speed.

#include <cstring>

#include "adc/common.hpp"
#include "adc/quasirandom.hpp"

namespace adc {

enum class Activation { Tanh, Relu };

struct Mlp {
    std::vector<int> widths;                   // layer widths, in -> out
    std::vector<Activation> acts;              // one per hidden layer
    std::vector<std::vector<float>> weights;   // per layer, row-major out x in
    std::vector<std::vector<float>> biases;    // per layer, out

    int layers() const { return int(widths.size()) - 1; }
    int in_dim() const { return widths.front(); }
    int out_dim() const { return widths.back(); }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (int l = 0; l + 1 < int(widths.size()); ++l)
            n += std::int64_t(widths[l]) * widths[l + 1] + widths[l + 1];
        return n;
    }
    std::int64_t byte_size() const { return 4 * param_count(); }
};

// He-style init; final layer optionally damped so training starts near the
// zero function.
inline Mlp make_mlp(std::vector<int> widths, Activation act, std::uint64_t seed,
                    double final_layer_scale = 1.0) {
    if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least 2 widths");
    Mlp net;
    net.widths = std::move(widths);
    net.acts.assign(net.widths.size() - 2, act);
    CounterRng rng(seed, 0x6d6c70);
    for (int l = 0; l + 1 < int(net.widths.size()); ++l) {
        int fan_in = net.widths[l], fan_out = net.widths[l + 1];
        double s = std::sqrt(2.0 / fan_in);
        if (l + 2 == int(net.widths.size())) s *= final_layer_scale;
        std::vector<float> w(std::size_t(fan_out) * fan_in);
        for (auto& v : w) v = float(s * rng.next_normal());
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0f);
    }
    return net;
}

namespace detail {
inline double apply_act(Activation a, double z) {
    return a == Activation::Tanh ? std::tanh(z) : (z > 0 ? z : 0.0);
}
inline double act_grad_from_out(Activation a, double y) {
    return a == Activation::Tanh ? 1.0 - y * y : (y > 0 ? 1.0 : 0.0);
}
}  // namespace detail

// Activations kept for backprop. outputs[l] is the post-activation output of
// layer l (outputs[0] = input copy).
struct MlpTrace {
    std::vector<Vec> outputs;
};

inline void forward_traced(const Mlp& net, std::span<const double> input, MlpTrace& tr) {
    if (int(input.size()) != net.in_dim()) throw std::invalid_argument("forward: input size mismatch");
    tr.outputs.resize(net.layers() + 1);
    tr.outputs[0].assign(input.begin(), input.end());
    for (int l = 0; l < net.layers(); ++l) {
        const int in = net.widths[l], out = net.widths[l + 1];
        const float* W = net.weights[l].data();
        tr.outputs[l + 1].resize(out);
        const double* x = tr.outputs[l].data();
        for (int o = 0; o < out; ++o) {
            double z = net.biases[l][o];
            const float* row = W + std::size_t(o) * in;
            for (int i = 0; i < in; ++i) z += double(row[i]) * x[i];
            tr.outputs[l + 1][o] =
                l + 1 < net.layers() ? detail::apply_act(net.acts[l], z) : z;
        }
    }
}

inline Vec forward(const Mlp& net, std::span<const double> input) {
    MlpTrace tr;
    forward_traced(net, input, tr);
    return tr.outputs.back();
}

struct Gradients {
    std::vector<Vec> w, b;

    explicit Gradients(const Mlp& net) {
        for (int l = 0; l < net.layers(); ++l) {
            w.emplace_back(net.weights[l].size(), 0.0);
            b.emplace_back(net.biases[l].size(), 0.0);
        }
    }
    void clear() {
        for (auto& g : w) std::fill(g.begin(), g.end(), 0.0);
        for (auto& g : b) std::fill(g.begin(), g.end(), 0.0);
    }
    void add(const Gradients& o) {
        for (std::size_t l = 0; l < w.size(); ++l) {
            for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] += o.w[l][i];
            for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += o.b[l][i];
        }
    }
    double norm() const {
        double s = 0;
        for (auto& g : w) s += norm2sq(g);
        for (auto& g : b) s += norm2sq(g);
        return std::sqrt(s);
    }
    void scale(double c) {
        for (auto& g : w)
            for (auto& v : g) v *= c;
        for (auto& g : b)
            for (auto& v : g) v *= c;
    }
};

// Accumulates dLoss/dparams into grads given dLoss/doutput. Uses the trace
// from forward_traced on the same input.
inline void backward_accumulate(const Mlp& net, const MlpTrace& tr,
                                std::span<const double> output_grad, Gradients& grads) {
    Vec delta(output_grad.begin(), output_grad.end());
    for (int l = net.layers() - 1; l >= 0; --l) {
        const int in = net.widths[l], out = net.widths[l + 1];
        const double* x = tr.outputs[l].data();
        for (int o = 0; o < out; ++o) {
            double d = delta[o];
            grads.b[l][o] += d;
            double* gw = grads.w[l].data() + std::size_t(o) * in;
            for (int i = 0; i < in; ++i) gw[i] += d * x[i];
        }
        if (l == 0) break;
        Vec prev(in, 0.0);
        const float* W = net.weights[l].data();
        for (int o = 0; o < out; ++o) {
            double d = delta[o];
            const float* row = W + std::size_t(o) * in;
            for (int i = 0; i < in; ++i) prev[i] += d * double(row[i]);
        }
        for (int i = 0; i < in; ++i)
            prev[i] *= detail::act_grad_from_out(net.acts[l - 1], tr.outputs[l][i]);
        delta = std::move(prev);
    }
}

inline Gradients backward(const Mlp& net, std::span<const double> input,
                          std::span<const double> output_grad) {
    MlpTrace tr;
    forward_traced(net, input, tr);
    Gradients g(net);
    backward_accumulate(net, tr, output_grad, g);
    return g;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Vec> mw, vw, mb, vb;

    explicit AdamState(const Mlp& net, double lr_ = 1e-3) : lr(lr_) {
        for (int l = 0; l < net.layers(); ++l) {
            mw.emplace_back(net.weights[l].size(), 0.0);
            vw.emplace_back(net.weights[l].size(), 0.0);
            mb.emplace_back(net.biases[l].size(), 0.0);
            vb.emplace_back(net.biases[l].size(), 0.0);
        }
    }
};

inline void adam_step(Mlp& net, const Gradients& grads, AdamState& st) {
    st.step += 1;
    const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (int l = 0; l < net.layers(); ++l) {
        auto upd = [&](std::vector<float>& p, const Vec& g, Vec& m, Vec& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = st.beta1 * m[i] + (1 - st.beta1) * g[i];
                v[i] = st.beta2 * v[i] + (1 - st.beta2) * g[i] * g[i];
                p[i] = float(double(p[i]) - st.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + st.eps));
            }
        };
        upd(net.weights[l], grads.w[l], st.mw[l], st.vw[l]);
        upd(net.biases[l], grads.b[l], st.mb[l], st.vb[l]);
    }
}

// ---------------------------------------------------------------------------
// Batched float32 inference. Points live in columns (stride = batch width)
// so the inner loops vectorize; used by the density estimator where each
// timestep evaluates a whole QMC block at once.
// ---------------------------------------------------------------------------

struct BatchWorkspace {
    std::vector<float> a, b;
};

// in: [in_dim][n] column-block layout; out: [out_dim][n]
inline void forward_batch(const Mlp& net, const float* in, int n, float* out,
                          BatchWorkspace& ws) {
    const std::size_t cap = std::size_t(n) * std::size_t(*std::max_element(
                                                net.widths.begin(), net.widths.end()));
    ws.a.resize(cap);
    ws.b.resize(cap);
    std::memcpy(ws.a.data(), in, sizeof(float) * std::size_t(n) * net.in_dim());
    float* cur = ws.a.data();
    float* nxt = ws.b.data();
    for (int l = 0; l < net.layers(); ++l) {
        const int ind = net.widths[l], outd = net.widths[l + 1];
        const float* W = net.weights[l].data();
        const bool last = l + 1 == net.layers();
        float* dst = last ? out : nxt;
        for (int o = 0; o < outd; ++o) {
            float* drow = dst + std::size_t(o) * n;
            const float bias = net.biases[l][o];
            for (int p = 0; p < n; ++p) drow[p] = bias;
            const float* wrow = W + std::size_t(o) * ind;
            for (int i = 0; i < ind; ++i) {
                const float w = wrow[i];
                const float* srow = cur + std::size_t(i) * n;
                for (int p = 0; p < n; ++p) drow[p] += w * srow[p];
            }
            if (!last && net.acts[l] == Activation::Tanh)
                for (int p = 0; p < n; ++p) drow[p] = std::tanh(drow[p]);
            else if (!last)
                for (int p = 0; p < n; ++p) drow[p] = drow[p] > 0 ? drow[p] : 0.0f;
        }
        if (!last) std::swap(cur, nxt);
    }
}

// ---------------------------------------------------------------------------
// Raw parameter (de)serialization, little-endian float32
// ---------------------------------------------------------------------------

inline void mlp_params_to_bytes(const Mlp& net, std::vector<std::uint8_t>& out) {
    auto put = [&](const std::vector<float>& v) {
        std::size_t off = out.size();
        out.resize(off + v.size() * 4);
        std::memcpy(out.data() + off, v.data(), v.size() * 4);
    };
    for (int l = 0; l < net.layers(); ++l) {
        put(net.weights[l]);
        put(net.biases[l]);
    }
}

inline void mlp_params_from_bytes(Mlp& net, const std::uint8_t* data, std::size_t len) {
    std::size_t need = std::size_t(net.param_count()) * 4;
    if (len != need) throw BundleError("mlp parameter block size mismatch");
    std::size_t off = 0;
    auto get = [&](std::vector<float>& v) {
        std::memcpy(v.data(), data + off, v.size() * 4);
        off += v.size() * 4;
    };
    for (int l = 0; l < net.layers(); ++l) {
        get(net.weights[l]);
        get(net.biases[l]);
    }
}

}  // namespace adc
